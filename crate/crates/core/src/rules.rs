//! Belief-update protocols.
//!
//! Every rule works on log-beliefs. Neighbor terms with zero weight are
//! skipped so that `0 * log 0` never produces NaN, and a hypothesis that every
//! positively-weighted neighbor rules out stays ruled out.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::types::{normalize_log_in_place, BeliefState, LikelihoodModel};

/// Selectable update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateRuleKind {
    /// Weighted geometric mean of neighbor beliefs times the local likelihood.
    GeometricPool,
    /// Geometric pooling with one step of momentum; static graphs only.
    AcceleratedGeometric,
    LinearPoolThenBayes,
    BayesThenLinearPool,
    LikelihoodSharing,
    /// One shared belief updated with every agent's observation.
    CentralizedBayes,
}

impl UpdateRuleKind {
    pub const ALL: [UpdateRuleKind; 6] = [
        Self::GeometricPool,
        Self::AcceleratedGeometric,
        Self::LinearPoolThenBayes,
        Self::BayesThenLinearPool,
        Self::LikelihoodSharing,
        Self::CentralizedBayes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::GeometricPool => "geometric",
            Self::AcceleratedGeometric => "accelerated",
            Self::LinearPoolThenBayes => "linear_pool_then_bayes",
            Self::BayesThenLinearPool => "bayes_then_linear_pool",
            Self::LikelihoodSharing => "likelihood_sharing",
            Self::CentralizedBayes => "centralized_bayes",
        }
    }

    pub fn requires_static_graph(self) -> bool {
        self == Self::AcceleratedGeometric
    }
}

impl fmt::Display for UpdateRuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UpdateRuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|r| r.name()).collect();
            Error::invalid(format!("unknown rule `{s}`, expected one of {}", names.join(", ")))
        })
    }
}

/// What an agent keeps between steps. `previous` and `prev_loglik_term` only
/// matter for the accelerated rule; both start as "no history": the prior and
/// a zero likelihood contribution.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentMemory {
    pub current: BeliefState,
    pub previous: BeliefState,
    /// `beta * log l(s | theta)` applied in the update that produced `current`.
    pub prev_loglik_term: Vec<f64>,
}

impl AgentMemory {
    pub fn new(prior: BeliefState) -> Self {
        let m = prior.len();
        Self {
            previous: prior.clone(),
            current: prior,
            prev_loglik_term: vec![0.0; m],
        }
    }

    /// Shift `current` into `previous` and record the likelihood term that produced `next`.
    pub fn advance(&mut self, next: BeliefState, loglik_term: Vec<f64>) {
        self.previous = std::mem::replace(&mut self.current, next);
        self.prev_loglik_term = loglik_term;
    }
}

/// `beta * log l(s | theta)` for every hypothesis; zeros when no signal arrived.
pub fn loglik_term(model: &LikelihoodModel, signal: Option<usize>) -> Vec<f64> {
    match signal {
        Some(s) => model.log_likelihoods(s).to_vec(),
        None => vec![0.0; model.hypotheses()],
    }
}

fn check_signal(model: &LikelihoodModel, signal: usize) -> Result<()> {
    if signal >= model.signals() {
        return Err(Error::invalid(format!(
            "signal {signal} outside an alphabet of {} symbols",
            model.signals()
        )));
    }
    Ok(())
}

fn check_len(expected: usize, got: usize, what: &str) -> Result<()> {
    if expected != got {
        return Err(Error::invalid(format!(
            "{what} has {got} hypotheses, expected {expected}"
        )));
    }
    Ok(())
}

fn check_weights(weights: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::invalid(format!(
                "weight {w} is not a finite non-negative number"
            )));
        }
        total += w;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// `out[theta] = sum_j w_j log mu_j(theta)` over positive weights.
#[inline]
pub(crate) fn geometric_sum_into<'a>(out: &mut [f64], terms: impl Iterator<Item = (f64, &'a [f64])>) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (w, log_mu) in terms {
        if w == 0.0 {
            continue;
        }
        for (o, &l) in out.iter_mut().zip(log_mu) {
            *o += w * l;
        }
    }
}

#[inline]
pub(crate) fn add_loglik(out: &mut [f64], loglik: Option<&[f64]>) {
    if let Some(ll) = loglik {
        for (o, &l) in out.iter_mut().zip(ll) {
            *o += l;
        }
    }
}

/// Accelerated rule in log-space, normalized in place.
///
/// `out` receives the positive part `(1 + sigma) sum A log mu_k + beta log l`;
/// `scratch` the momentum part `sigma sum A (log mu_{k-1} + previous term)`.
pub(crate) fn accelerated_into<'a>(
    out: &mut [f64],
    scratch: &mut [f64],
    sigma: f64,
    current: impl Iterator<Item = (f64, &'a [f64])>,
    previous: impl Iterator<Item = (f64, &'a [f64], &'a [f64])>,
    loglik: Option<&[f64]>,
) -> Result<()> {
    geometric_sum_into(out, current);
    out.iter_mut().for_each(|v| *v *= 1.0 + sigma);
    add_loglik(out, loglik);
    scratch.iter_mut().for_each(|v| *v = 0.0);
    for (w, log_mu, term) in previous {
        if w == 0.0 {
            continue;
        }
        for ((s, &l), &t) in scratch.iter_mut().zip(log_mu).zip(term) {
            *s += w * (l + t);
        }
    }
    for (theta, (o, &s)) in out.iter_mut().zip(scratch.iter()).enumerate() {
        if *o == f64::NEG_INFINITY {
            continue;
        }
        if s == f64::NEG_INFINITY {
            return Err(Error::degenerate(format!(
                "hypothesis {theta} has zero mass in the momentum term but not in the pooled term"
            )));
        }
        *o -= sigma * s;
    }
    normalize_log_in_place(out)
}

/// `posterior ∝ prior * l(s | theta)`.
pub fn bayes_update(prior: &BeliefState, model: &LikelihoodModel, signal: usize) -> Result<BeliefState> {
    check_signal(model, signal)?;
    check_len(model.hypotheses(), prior.len(), "prior")?;
    let mut out: Vec<f64> = prior.log_probs().to_vec();
    add_loglik(&mut out, Some(model.log_likelihoods(signal)));
    normalize_log_in_place(&mut out)?;
    Ok(BeliefState::from_normalized_log(out))
}

/// Weighted geometric pool of neighbor beliefs, times `l(s | theta)` when a
/// signal is present.
pub fn geometric_pool_update(
    neighbors: &[(f64, &BeliefState)],
    model: &LikelihoodModel,
    signal: Option<usize>,
) -> Result<BeliefState> {
    let m = model.hypotheses();
    check_weights(neighbors.iter().map(|n| n.0))?;
    for (_, b) in neighbors {
        check_len(m, b.len(), "neighbor belief")?;
    }
    if let Some(s) = signal {
        check_signal(model, s)?;
    }
    let mut out = vec![0.0; m];
    geometric_sum_into(&mut out, neighbors.iter().map(|(w, b)| (*w, b.log_probs())));
    add_loglik(&mut out, signal.map(|s| model.log_likelihoods(s)));
    normalize_log_in_place(&mut out)?;
    Ok(BeliefState::from_normalized_log(out))
}

/// One neighbor's state as seen by the accelerated rule at step `k`.
#[derive(Debug, Clone, Copy)]
pub struct MomentumNeighbor<'a> {
    pub weight: f64,
    pub current: &'a BeliefState,
    pub previous: &'a BeliefState,
    /// `beta_{k-1} log l(s_k | theta)` of that neighbor.
    pub prev_loglik_term: &'a [f64],
}

/// Geometric pooling with momentum `sigma`:
/// `(1 + sigma) sum_j A_ij log mu_k^j - sigma sum_j A_ij (log mu_{k-1}^j + prev term_j) + beta log l`.
///
/// A hypothesis with zero pooled mass stays at zero; one whose momentum term is
/// zero while the pooled term is not would be pushed to `+∞` and is reported
/// as degenerate.
pub fn accelerated_update(
    neighbors: &[MomentumNeighbor<'_>],
    sigma: f64,
    model: &LikelihoodModel,
    signal: Option<usize>,
) -> Result<BeliefState> {
    let m = model.hypotheses();
    check_weights(neighbors.iter().map(|n| n.weight))?;
    if !(0.0..1.0).contains(&sigma) {
        return Err(Error::invalid(format!("momentum {sigma} outside [0, 1)")));
    }
    for n in neighbors {
        check_len(m, n.current.len(), "neighbor belief")?;
        check_len(m, n.previous.len(), "neighbor previous belief")?;
        check_len(m, n.prev_loglik_term.len(), "neighbor likelihood term")?;
    }
    if let Some(s) = signal {
        check_signal(model, s)?;
    }
    let mut out = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    accelerated_into(
        &mut out,
        &mut scratch,
        sigma,
        neighbors.iter().map(|n| (n.weight, n.current.log_probs())),
        neighbors
            .iter()
            .map(|n| (n.weight, n.previous.log_probs(), n.prev_loglik_term)),
        signal.map(|s| model.log_likelihoods(s)),
    )?;
    Ok(BeliefState::from_normalized_log(out))
}

/// Opinion pool family: arithmetic or geometric weighted mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Linear,
    Logarithmic,
}

/// `out[theta] = log sum_j w_j mu_j(theta)`, unnormalized.
pub(crate) fn linear_sum_into<'a>(out: &mut [f64], terms: impl Iterator<Item = (f64, &'a [f64])> + Clone) {
    for (theta, o) in out.iter_mut().enumerate() {
        let max = terms
            .clone()
            .filter(|(w, _)| *w > 0.0)
            .map(|(_, l)| l[theta])
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            *o = f64::NEG_INFINITY;
            continue;
        }
        let sum: f64 = terms
            .clone()
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, l)| w * (l[theta] - max).exp())
            .sum();
        *o = max + sum.ln();
    }
}

/// Weighted pool of beliefs, renormalized.
pub fn qlop_pool(kind: PoolKind, weights: &[f64], beliefs: &[BeliefState]) -> Result<BeliefState> {
    if weights.len() != beliefs.len() || beliefs.is_empty() {
        return Err(Error::invalid(
            "pool needs one weight per belief and at least one belief",
        ));
    }
    check_weights(weights.iter().copied())?;
    let m = beliefs[0].len();
    for b in beliefs {
        check_len(m, b.len(), "pooled belief")?;
    }
    let terms = weights.iter().copied().zip(beliefs.iter().map(|b| b.log_probs()));
    let mut out = vec![0.0; m];
    match kind {
        PoolKind::Linear => linear_sum_into(&mut out, terms),
        PoolKind::Logarithmic => geometric_sum_into(&mut out, terms),
    }
    normalize_log_in_place(&mut out)?;
    Ok(BeliefState::from_normalized_log(out))
}

/// Order of pooling and Bayes update in the linear-pool rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearOrder {
    /// Arithmetic pool, then Bayes with the agent's own likelihood.
    PoolThenBayes,
    /// Each neighbor Bayes-updates with its own signal, then arithmetic pool.
    BayesThenPool,
}

/// A neighbor's belief together with its own model and latest signal.
#[derive(Debug, Clone, Copy)]
pub struct LinearNeighbor<'a> {
    pub weight: f64,
    pub belief: &'a BeliefState,
    pub model: &'a LikelihoodModel,
    pub signal: Option<usize>,
}

/// Linear-pool rules. `own_model` and `own_signal` are the updating agent's.
pub fn linear_rule_update(
    order: LinearOrder,
    neighbors: &[LinearNeighbor<'_>],
    own_model: &LikelihoodModel,
    own_signal: Option<usize>,
) -> Result<BeliefState> {
    let m = own_model.hypotheses();
    check_weights(neighbors.iter().map(|n| n.weight))?;
    for n in neighbors {
        check_len(m, n.belief.len(), "neighbor belief")?;
    }
    let mut out = vec![0.0; m];
    match order {
        LinearOrder::PoolThenBayes => {
            linear_sum_into(&mut out, neighbors.iter().map(|n| (n.weight, n.belief.log_probs())));
            if let Some(s) = own_signal {
                check_signal(own_model, s)?;
                add_loglik(&mut out, Some(own_model.log_likelihoods(s)));
            }
        }
        LinearOrder::BayesThenPool => {
            let posteriors = neighbors
                .iter()
                .map(|n| match n.signal {
                    Some(s) => bayes_update(n.belief, n.model, s),
                    None => Ok(n.belief.clone()),
                })
                .collect::<Result<Vec<_>>>()?;
            linear_sum_into(
                &mut out,
                neighbors
                    .iter()
                    .zip(&posteriors)
                    .map(|(n, p)| (n.weight, p.log_probs())),
            );
        }
    }
    normalize_log_in_place(&mut out)?;
    Ok(BeliefState::from_normalized_log(out))
}

/// `mu(theta) * prod_j l_j(theta)^{w_j}`, with `l_j` the likelihood values each
/// neighbor shared for its current observation.
pub fn likelihood_sharing_update(
    belief: &BeliefState,
    weights: &[f64],
    shared_likelihoods: &[&[f64]],
) -> Result<BeliefState> {
    if weights.len() != shared_likelihoods.len() {
        return Err(Error::invalid("one weight per shared likelihood row is required"));
    }
    check_weights(weights.iter().copied())?;
    let m = belief.len();
    for row in shared_likelihoods {
        check_len(m, row.len(), "shared likelihood row")?;
        if let Some(v) = row.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!(
                "likelihood value {v} is not finite and non-negative"
            )));
        }
    }
    let mut out = belief.log_probs().to_vec();
    for (&w, row) in weights.iter().zip(shared_likelihoods) {
        if w == 0.0 {
            continue;
        }
        for (o, &l) in out.iter_mut().zip(row.iter()) {
            *o += w * l.ln();
        }
    }
    normalize_log_in_place(&mut out)?;
    Ok(BeliefState::from_normalized_log(out))
}

/// One belief updated with every agent's observation (agents without a
/// signal contribute nothing).
pub fn centralized_bayes_update(
    belief: &BeliefState,
    observations: &[(&LikelihoodModel, Option<usize>)],
) -> Result<BeliefState> {
    let mut out = belief.log_probs().to_vec();
    for (model, signal) in observations {
        check_len(out.len(), model.hypotheses(), "model")?;
        if let Some(s) = signal {
            check_signal(model, *s)?;
            add_loglik(&mut out, Some(model.log_likelihoods(*s)));
        }
    }
    normalize_log_in_place(&mut out)?;
    Ok(BeliefState::from_normalized_log(out))
}

/// Largest entrywise gap between "geometric pool, then Bayes" and "Bayes on
/// every neighbor, then geometric pool", both using `model` and `signal`.
///
/// Returns 0 when both orders are degenerate and `+∞` when exactly one is.
pub fn externally_bayesian_check(
    weights: &[f64],
    beliefs: &[BeliefState],
    model: &LikelihoodModel,
    signal: usize,
) -> f64 {
    let pool_first = qlop_pool(PoolKind::Logarithmic, weights, beliefs).and_then(|p| bayes_update(&p, model, signal));
    let bayes_first = beliefs
        .iter()
        .map(|b| bayes_update(b, model, signal))
        .collect::<Result<Vec<_>>>()
        .and_then(|posts| qlop_pool(PoolKind::Logarithmic, weights, &posts));
    match (pool_first, bayes_first) {
        (Ok(a), Ok(b)) => a.max_abs_diff(&b),
        (Err(_), Err(_)) => 0.0,
        _ => f64::INFINITY,
    }
}
