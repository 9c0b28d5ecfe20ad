//! KL divergences, group confidence, optimal hypothesis sets, and the explicit
//! concentration-rate constants.

use crate::error::{Error, Result};
use crate::graphs::{mixing_bound_lambda, AcceleratedOperator, GraphSchedule};
use crate::types::{AgentSpec, BeliefState};

/// Relative tie band used when deciding which hypotheses are optimal.
pub const DEFAULT_OPTIMAL_TOL: f64 = 1e-12;

/// `sum_s p(s) ln(p(s) / q(s))`, with `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "KL of vectors with lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (s, (&a, &b)) in p.iter().zip(q).enumerate() {
        if a <= 0.0 {
            continue;
        }
        if b <= 0.0 {
            return Err(Error::invalid(format!("q({s}) = 0 where p({s}) = {a} > 0")));
        }
        total += a * (a / b).ln();
    }
    // rounding can leave a tiny negative value for p == q
    Ok(total.max(0.0))
}

fn check_hypothesis_counts(agents: &[AgentSpec]) -> Result<usize> {
    let m = agents
        .first()
        .ok_or_else(|| Error::invalid("at least one agent is required"))?
        .hypotheses();
    if let Some(i) = agents.iter().position(|a| a.hypotheses() != m) {
        return Err(Error::invalid(format!(
            "agent {i} has {} hypotheses, agent 0 has {m}",
            agents[i].hypotheses()
        )));
    }
    Ok(m)
}

fn agent_kl(agent: &AgentSpec, theta: usize) -> Result<f64> {
    kl_divergence(agent.likelihood.truth(), agent.likelihood.row(theta))
}

/// `sum_i KL(f_i || l_i(. | theta))`, unweighted by observation rates.
pub fn objective(theta: usize, agents: &[AgentSpec]) -> Result<f64> {
    let m = check_hypothesis_counts(agents)?;
    if theta >= m {
        return Err(Error::invalid(format!("hypothesis {theta} out of range for m = {m}")));
    }
    agents.iter().map(|a| agent_kl(a, theta)).sum()
}

/// `C(theta) = -sum_{i in W} q_i KL(f_i || l_i(. | theta))` for a subset `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceProfile {
    pub values: Vec<f64>,
    pub subset: Vec<usize>,
    pub rates: Vec<f64>,
}

impl ConfidenceProfile {
    pub fn best(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Hypotheses within `tol * max(1, |C*|)` of the best value.
    pub fn maximizers(&self, tol: f64) -> Vec<usize> {
        let best = self.best();
        let band = tol * best.abs().max(1.0);
        (0..self.values.len())
            .filter(|&t| self.values[t] >= best - band)
            .collect()
    }
}

pub fn group_confidence(subset: &[usize], agents: &[AgentSpec]) -> Result<ConfidenceProfile> {
    if subset.is_empty() {
        return Err(Error::invalid("group confidence needs a non-empty agent subset"));
    }
    let m = check_hypothesis_counts(agents)?;
    if let Some(&i) = subset.iter().find(|&&i| i >= agents.len()) {
        return Err(Error::invalid(format!(
            "agent {i} out of range for {} agents",
            agents.len()
        )));
    }
    let mut values = vec![0.0; m];
    for &i in subset {
        let q = agents[i].observation_rate;
        if q == 0.0 {
            continue;
        }
        for (theta, v) in values.iter_mut().enumerate() {
            *v -= q * agent_kl(&agents[i], theta)?;
        }
    }
    let rates = subset.iter().map(|&i| agents[i].observation_rate).collect();
    Ok(ConfidenceProfile {
        values,
        subset: subset.to_vec(),
        rates,
    })
}

/// Group confidence of the whole network.
pub fn network_confidence(agents: &[AgentSpec]) -> Result<ConfidenceProfile> {
    group_confidence(&(0..agents.len()).collect::<Vec<_>>(), agents)
}

/// Hypotheses maximizing the network confidence, up to a relative tie band
/// `tol * max(1, |C*|)`.
pub fn optimal_set(agents: &[AgentSpec], tol: f64) -> Result<Vec<usize>> {
    if !(tol >= 0.0) {
        return Err(Error::invalid(format!("tolerance {tol} must be non-negative")));
    }
    Ok(network_confidence(agents)?.maximizers(tol))
}

/// `|C^W(a) - C^W(b)| <= tol`.
pub fn observationally_equivalent(
    subset: &[usize],
    theta_a: usize,
    theta_b: usize,
    agents: &[AgentSpec],
    tol: f64,
) -> Result<bool> {
    let c = group_confidence(subset, agents)?;
    let m = c.values.len();
    if theta_a >= m || theta_b >= m {
        return Err(Error::invalid("hypothesis out of range"));
    }
    Ok((c.values[theta_a] - c.values[theta_b]).abs() <= tol)
}

/// Which concentration result the constants instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateTheorem {
    /// Geometric pooling on a `B`-strongly-connected schedule.
    GeometricPool,
    /// The momentum rule on a static graph with uniform priors.
    Accelerated,
}

/// Where the mixing rate comes from.
#[derive(Debug, Clone, Copy)]
pub enum MixingSource<'a> {
    /// `eta` is the smallest positive weight realized over `0..horizon`.
    Schedule {
        schedule: &'a GraphSchedule,
        horizon: u64,
    },
    Accelerated(&'a AcceleratedOperator),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateConstants {
    pub theorem: RateTheorem,
    pub alpha: f64,
    pub eta: f64,
    pub window: usize,
    pub lambda: f64,
    /// Per-agent transient constant; identical across agents.
    pub gamma1: Vec<f64>,
    pub gamma2: f64,
    pub rho: f64,
    pub n_rho: u64,
    pub bound: Option<usize>,
    pub sigma: Option<f64>,
    /// The optimal set the constants were computed against.
    pub optimal: Vec<usize>,
}

impl RateConstants {
    /// Step after which the bound first drops below one for `agent`.
    pub fn transient(&self, agent: usize) -> f64 {
        2.0 * self.gamma1[agent] / self.gamma2
    }
}

/// Evaluates `alpha, lambda, gamma1, gamma2, N(rho)` for the chosen result.
pub fn rate_constants(
    agents: &[AgentSpec],
    source: MixingSource<'_>,
    rho: f64,
    theorem: RateTheorem,
) -> Result<RateConstants> {
    let m = check_hypothesis_counts(agents)?;
    let n = agents.len();
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("rho = {rho} outside (0, 1)")));
    }
    let alpha = agents
        .iter()
        .map(|a| a.likelihood.support_floor())
        .fold(f64::INFINITY, f64::min);
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("support floor alpha = {alpha} outside (0, 1]")));
    }

    let confidence = network_confidence(agents)?;
    let optimal = confidence.maximizers(DEFAULT_OPTIMAL_TOL);
    if optimal.len() == m {
        return Err(Error::NoSuboptimalHypothesis);
    }
    let best = confidence.best();
    let gap = (0..m)
        .filter(|t| !optimal.contains(t))
        .map(|t| best - confidence.values[t])
        .fold(f64::INFINITY, f64::min);
    let gamma2 = gap / n as f64;

    let ln_n = (n as f64).ln();
    let log_inv_alpha = (1.0 / alpha).ln();
    let ln_alpha_sq = alpha.ln().powi(2);
    let log_inv_rho = (1.0 / rho).ln();

    let (eta, window, lambda, bound, sigma, gamma1, n_rho) = match (theorem, source) {
        (RateTheorem::GeometricPool, MixingSource::Schedule { schedule, horizon }) => {
            if schedule.n() != n {
                return Err(Error::invalid(format!(
                    "schedule has {} nodes, {n} agents given",
                    schedule.n()
                )));
            }
            let eta = schedule.realized_eta(0, horizon);
            let window = schedule.window();
            let lambda = mixing_bound_lambda(n, eta, window, false)?;
            let prior_term = prior_transient(agents, &optimal)?;
            let g1 = prior_term + 12.0 * ln_n / (1.0 - lambda) * log_inv_alpha;
            let n_rho = (8.0 * ln_alpha_sq * log_inv_rho / (gamma2 * gamma2)).ceil() as u64;
            (eta, window, lambda, None, None, g1, n_rho)
        }
        (RateTheorem::Accelerated, MixingSource::Accelerated(op)) => {
            if op.n() != n {
                return Err(Error::invalid(format!(
                    "operator has {} nodes, {n} agents given",
                    op.n()
                )));
            }
            let uniform = -(m as f64).ln();
            let non_uniform = agents
                .iter()
                .any(|a| a.prior.log_probs().iter().any(|&l| (l - uniform).abs() > 1e-12));
            if non_uniform {
                return Err(Error::invalid("the accelerated rate needs uniform priors"));
            }
            let lambda = op.lambda();
            let g1 = 4.0 * ln_n / (1.0 - lambda) * log_inv_alpha;
            let n_rho = (48.0 * ln_alpha_sq * log_inv_rho / (gamma2 * gamma2)).ceil() as u64;
            (
                op.base().min_positive_entry(),
                1,
                lambda,
                Some(op.bound()),
                Some(op.sigma()),
                g1,
                n_rho,
            )
        }
        _ => return Err(Error::invalid("mixing source does not match the chosen rate result")),
    };

    Ok(RateConstants {
        theorem,
        alpha,
        eta,
        window,
        lambda,
        gamma1: vec![gamma1; n],
        gamma2,
        rho,
        n_rho,
        bound,
        sigma,
        optimal,
    })
}

/// `max over theta_w in optimal-with-positive-priors, theta_v not optimal, and
/// agents i of ln(mu_0^i(theta_v) / mu_0^i(theta_w))`.
fn prior_transient(agents: &[AgentSpec], optimal: &[usize]) -> Result<f64> {
    let m = agents[0].hypotheses();
    let supported: Vec<usize> = optimal
        .iter()
        .copied()
        .filter(|&t| agents.iter().all(|a| a.prior.log_prob(t) > f64::NEG_INFINITY))
        .collect();
    if supported.is_empty() {
        return Err(Error::invalid(
            "no optimal hypothesis has positive prior belief at every agent",
        ));
    }
    let mut best = f64::NEG_INFINITY;
    for v in (0..m).filter(|t| !optimal.contains(t)) {
        for &w in &supported {
            for a in agents {
                best = best.max(a.prior.log_prob(v) - a.prior.log_prob(w));
            }
        }
    }
    Ok(best)
}

/// `-k gamma2 / 2 + gamma1_i`.
pub fn log_bound(consts: &RateConstants, k: u64, agent: usize) -> f64 {
    -(k as f64) * consts.gamma2 / 2.0 + consts.gamma1[agent]
}

/// The bound `exp(-k gamma2 / 2 + gamma1_i)`; `clamped` is capped at 1 for display.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundValue {
    pub raw: f64,
    pub clamped: f64,
}

pub fn bound_curve(consts: &RateConstants, k: u64, agent: usize) -> BoundValue {
    let raw = log_bound(consts, k, agent).exp();
    BoundValue {
        raw,
        clamped: raw.min(1.0),
    }
}

/// `ln(mu^i(theta_v) / mu^i(theta_w))` for every agent. `-∞` when the belief on
/// `theta_v` is zero; an error when the belief on `theta_w` is.
pub fn log_belief_ratio(beliefs: &[BeliefState], theta_v: usize, theta_w: usize) -> Result<Vec<f64>> {
    beliefs
        .iter()
        .enumerate()
        .map(|(i, b)| {
            if theta_v >= b.len() || theta_w >= b.len() {
                return Err(Error::invalid("hypothesis out of range"));
            }
            let w = b.log_prob(theta_w);
            if w == f64::NEG_INFINITY {
                return Err(Error::invalid(format!(
                    "agent {i} has zero belief on the reference hypothesis"
                )));
            }
            Ok(b.log_prob(theta_v) - w)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{Graph, WeightRule};
    use crate::rng::Stream;
    use crate::rules::bayes_update;
    use crate::types::{uniform_prior, LikelihoodModel, SignalAlphabet};
    use proptest::prelude::*;

    fn agent(rows: Vec<Vec<f64>>, truth: Vec<f64>, q: f64) -> AgentSpec {
        let width = truth.len();
        let md = LikelihoodModel::with_realized_floor(SignalAlphabet::indexed(width).unwrap(), rows, truth).unwrap();
        AgentSpec::uniform(md, q).unwrap()
    }

    /// Binary-signal agent with the given per-hypothesis probability of signal 0.
    fn coin_agent(p0: &[f64], truth0: f64, q: f64) -> AgentSpec {
        agent(
            p0.iter().map(|&p| vec![p, 1.0 - p]).collect(),
            vec![truth0, 1.0 - truth0],
            q,
        )
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.25; 4], &[0.25; 4]).unwrap(), 0.0);
        assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - 2f64.ln()).abs() < 1e-15);
        let expected = 0.7 * 1.4f64.ln() + 0.3 * 0.6f64.ln();
        assert!((kl_divergence(&[0.7, 0.3], &[0.5, 0.5]).unwrap() - expected).abs() < 1e-15);
        assert!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).is_err());
        assert!(kl_divergence(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn objective_examples() {
        let a = coin_agent(&[0.3, 0.6], 0.3, 1.0);
        let b = coin_agent(&[0.3, 0.5], 0.3, 1.0);
        assert_eq!(objective(0, &[a.clone(), b.clone()]).unwrap(), 0.0);
        let single = coin_agent(&[0.6], 0.3, 1.0);
        let direct = kl_divergence(&[0.3, 0.7], &[0.6, 0.4]).unwrap();
        assert_eq!(objective(0, &[single]).unwrap(), direct);
        assert!(objective(2, &[a, b]).is_err());
    }

    #[test]
    fn confidence_examples() {
        let a = coin_agent(&[0.3, 0.6, 0.9], 0.3, 0.0);
        let b = coin_agent(&[0.8, 0.2, 0.5], 0.5, 0.0);
        let silent = group_confidence(&[0, 1], &[a.clone(), b.clone()]).unwrap();
        assert_eq!(silent.values, vec![0.0; 3]);

        let a1 = coin_agent(&[0.3, 0.6, 0.9], 0.3, 1.0);
        let b1 = coin_agent(&[0.8, 0.2, 0.5], 0.5, 1.0);
        let full = group_confidence(&[0, 1], &[a1.clone(), b1.clone()]).unwrap();
        for t in 0..3 {
            let f = objective(t, &[a1.clone(), b1.clone()]).unwrap();
            assert!((full.values[t] + f).abs() < 1e-15);
        }

        // q = (1, 1/2): C(t) = -KL(f_a || l_a(t)) - KL(f_b || l_b(t)) / 2
        let bh = coin_agent(&[0.8, 0.2, 0.5], 0.5, 0.5);
        let c = group_confidence(&[0, 1], &[a1, bh]).unwrap();
        let kl = |p: f64, q: f64| p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
        let expected = [
            -kl(0.3, 0.3) - 0.5 * kl(0.5, 0.8),
            -kl(0.3, 0.6) - 0.5 * kl(0.5, 0.2),
            -kl(0.3, 0.9) - 0.5 * kl(0.5, 0.5),
        ];
        for (got, want) in c.values.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(c.rates, vec![1.0, 0.5]);
        assert!(group_confidence(&[], &[c_agent()]).is_err());
    }

    fn c_agent() -> AgentSpec {
        coin_agent(&[0.5, 0.5], 0.5, 1.0)
    }

    #[test]
    fn optimal_set_examples() {
        let a = coin_agent(&[0.2, 0.7, 0.4], 0.7, 1.0);
        let b = coin_agent(&[0.9, 0.6, 0.1], 0.6, 1.0);
        assert_eq!(optimal_set(&[a, b], 0.0).unwrap(), vec![1]);
        let flat = coin_agent(&[0.4, 0.4, 0.4], 0.7, 1.0);
        assert_eq!(
            optimal_set(&[flat.clone(), flat], DEFAULT_OPTIMAL_TOL).unwrap(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn observational_equivalence_examples() {
        let a = coin_agent(&[0.2, 0.7, 0.2], 0.7, 1.0);
        assert!(observationally_equivalent(&[0], 1, 1, std::slice::from_ref(&a), 0.0).unwrap());
        assert!(observationally_equivalent(&[0], 0, 2, std::slice::from_ref(&a), 0.0).unwrap());
        assert!(!observationally_equivalent(&[0], 0, 1, &[a], 1e-9).unwrap());
    }

    #[test]
    fn confidence_is_additive_over_disjoint_subsets() {
        let mut rng = Stream::new(3);
        for _ in 0..50 {
            let agents: Vec<_> = (0..5)
                .map(|_| {
                    let p: Vec<f64> = (0..4).map(|_| 0.05 + 0.9 * rng.next_f64()).collect();
                    coin_agent(&p, 0.05 + 0.9 * rng.next_f64(), rng.next_f64())
                })
                .collect();
            let whole = group_confidence(&[0, 1, 2, 3, 4], &agents).unwrap();
            let left = group_confidence(&[0, 3], &agents).unwrap();
            let right = group_confidence(&[1, 2, 4], &agents).unwrap();
            for t in 0..4 {
                assert!((whole.values[t] - left.values[t] - right.values[t]).abs() < 1e-13);
            }
            let mut shuffled = agents.clone();
            rng.shuffle(&mut shuffled);
            assert_eq!(
                optimal_set(&agents, DEFAULT_OPTIMAL_TOL).unwrap(),
                optimal_set(&shuffled, DEFAULT_OPTIMAL_TOL).unwrap()
            );
        }
    }

    fn three_agent_case() -> Vec<AgentSpec> {
        vec![
            coin_agent(&[0.9, 0.1, 0.5], 0.9, 1.0),
            coin_agent(&[0.1, 0.9, 0.5], 0.5, 1.0),
            coin_agent(&[0.5, 0.5, 0.5], 0.5, 1.0),
        ]
    }

    #[test]
    fn geometric_rate_constants_by_hand() {
        let agents = three_agent_case();
        let s = GraphSchedule::from_rule(Graph::cycle(3), WeightRule::LazyMetropolis);
        let c = rate_constants(
            &agents,
            MixingSource::Schedule {
                schedule: &s,
                horizon: 10,
            },
            0.1,
            RateTheorem::GeometricPool,
        )
        .unwrap();
        let kl = |p: f64, q: f64| p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
        // C(t) per hypothesis, then the gap to the runner-up
        let conf = [
            -kl(0.9, 0.9) - kl(0.5, 0.1),
            -kl(0.9, 0.1) - kl(0.5, 0.9),
            -kl(0.9, 0.5) - kl(0.5, 0.5),
        ];
        assert_eq!(c.optimal, vec![2]);
        let gamma2 = (conf[2] - conf[0].max(conf[1])) / 3.0;
        assert!((c.gamma2 - gamma2).abs() < 1e-15);
        assert!((c.alpha - 0.1).abs() < 1e-15);
        // lazy Metropolis on a triangle: off-diagonal 1/6
        assert!((c.eta - 1.0 / 6.0).abs() < 1e-15);
        let lambda = 1.0 - (1.0 / 6.0) / 36.0;
        assert!((c.lambda - lambda).abs() < 1e-15);
        let gamma1 = 12.0 * 3f64.ln() / (1.0 - lambda) * 10f64.ln();
        assert!((c.gamma1[1] - gamma1).abs() < 1e-9 * gamma1);
        let n_rho = (8.0 * 0.1f64.ln().powi(2) * 10f64.ln() / (gamma2 * gamma2)).ceil() as u64;
        assert_eq!(c.n_rho, n_rho);
        assert_eq!(c.bound, None);
    }

    #[test]
    fn accelerated_rate_constants_by_hand() {
        let agents = three_agent_case()[..2].to_vec();
        let op = AcceleratedOperator::new(Graph::path(2), 2).unwrap();
        let c = rate_constants(&agents, MixingSource::Accelerated(&op), 0.1, RateTheorem::Accelerated).unwrap();
        assert!((c.sigma.unwrap() - 17.0 / 19.0).abs() < 1e-15);
        assert!((c.lambda - (1.0 - 1.0 / 36.0)).abs() < 1e-15);
        let gamma1 = 4.0 * 2f64.ln() * 36.0 * 10f64.ln();
        assert!((c.gamma1[0] - gamma1).abs() < 1e-9 * gamma1);
        let n_rho = (48.0 * 0.1f64.ln().powi(2) * 10f64.ln() / (c.gamma2 * c.gamma2)).ceil() as u64;
        assert_eq!(c.n_rho, n_rho);
    }

    #[test]
    fn informative_priors_shift_the_transient() {
        let mut agents = three_agent_case();
        let s = GraphSchedule::from_rule(Graph::cycle(3), WeightRule::LazyMetropolis);
        let src = MixingSource::Schedule {
            schedule: &s,
            horizon: 1,
        };
        let base = rate_constants(&agents, src, 0.1, RateTheorem::GeometricPool).unwrap();
        agents[0].prior = BeliefState::from_probabilities(&[0.25, 0.25, 0.5]).unwrap();
        let shifted = rate_constants(&agents, src, 0.1, RateTheorem::GeometricPool).unwrap();
        // max over v, w = 2, i of ln(mu_0(v) / mu_0(w)) is 0 (agents 1, 2 are uniform)
        assert!((shifted.gamma1[0] - base.gamma1[0]).abs() < 1e-9);
        for a in agents.iter_mut() {
            a.prior = BeliefState::from_probabilities(&[0.25, 0.25, 0.5]).unwrap();
        }
        let all = rate_constants(&agents, src, 0.1, RateTheorem::GeometricPool).unwrap();
        assert!((all.gamma1[0] - base.gamma1[0] - 0.5f64.ln()).abs() < 1e-9);
        let op = AcceleratedOperator::new(Graph::cycle(3), 3).unwrap();
        assert!(rate_constants(&agents, MixingSource::Accelerated(&op), 0.1, RateTheorem::Accelerated).is_err());
    }

    #[test]
    fn rate_constants_need_a_suboptimal_hypothesis() {
        let flat = vec![c_agent(), c_agent()];
        let s = GraphSchedule::from_rule(Graph::path(2), WeightRule::Metropolis);
        let err = rate_constants(
            &flat,
            MixingSource::Schedule {
                schedule: &s,
                horizon: 1,
            },
            0.1,
            RateTheorem::GeometricPool,
        )
        .unwrap_err();
        assert_eq!(err, Error::NoSuboptimalHypothesis);
        let agents = three_agent_case();
        let op = AcceleratedOperator::new(Graph::cycle(3), 3).unwrap();
        assert!(rate_constants(&agents, MixingSource::Accelerated(&op), 0.1, RateTheorem::GeometricPool).is_err());
        assert!(rate_constants(&agents, MixingSource::Accelerated(&op), 1.0, RateTheorem::Accelerated).is_err());
    }

    #[test]
    fn bound_curve_shape() {
        let agents = three_agent_case();
        let s = GraphSchedule::from_rule(Graph::cycle(3), WeightRule::LazyMetropolis);
        let c = rate_constants(
            &agents,
            MixingSource::Schedule {
                schedule: &s,
                horizon: 1,
            },
            0.1,
            RateTheorem::GeometricPool,
        )
        .unwrap();
        assert!((log_bound(&c, 0, 0) - c.gamma1[0]).abs() < 1e-12);
        assert_eq!(bound_curve(&c, 0, 0).clamped, 1.0);
        let k = (2.0 * c.gamma1[0] / c.gamma2) as u64;
        assert!(log_bound(&c, k, 0).abs() <= c.gamma2);
        let mut prev = f64::INFINITY;
        for k in (0..4 * k).step_by(97) {
            let b = log_bound(&c, k, 0);
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn log_belief_ratio_examples() {
        let u = uniform_prior(3).unwrap();
        assert_eq!(log_belief_ratio(&[u.clone(), u.clone()], 0, 2).unwrap(), vec![0.0, 0.0]);
        let md = LikelihoodModel::with_realized_floor(
            SignalAlphabet::indexed(2).unwrap(),
            vec![vec![0.8, 0.2], vec![0.3, 0.7], vec![0.5, 0.5]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let post = bayes_update(&u, &md, 0).unwrap();
        let r = log_belief_ratio(&[post], 0, 1).unwrap();
        assert!((r[0] - (0.8f64 / 0.3).ln()).abs() < 1e-14);
        let point = BeliefState::point_mass(3, 0).unwrap();
        assert_eq!(
            log_belief_ratio(std::slice::from_ref(&point), 1, 0).unwrap(),
            vec![f64::NEG_INFINITY]
        );
        assert!(log_belief_ratio(&[point], 0, 1).is_err());
    }

    fn arb_simplex(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.001f64..1.0, len).prop_map(|v| {
            let t: f64 = v.iter().sum();
            v.into_iter().map(|x| x / t).collect()
        })
    }

    proptest! {
        #[test]
        fn kl_is_non_negative_and_zero_on_the_diagonal(
            (p, q) in (2usize..8).prop_flat_map(|n| (arb_simplex(n), arb_simplex(n)))
        ) {
            let d = kl_divergence(&p, &q).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert!(kl_divergence(&p, &p).unwrap() <= 1e-12);
            let gap = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if gap > 1e-3 {
                prop_assert!(d > 0.0);
            }
        }
    }
}
