//! Synchronous-round simulation, trajectories, and Monte Carlo ensembles.
//!
//! Every agent at step `k` reads the frozen step-`k` state. Observation
//! availability `beta` and the signal itself are counter-based draws keyed by
//! `(seed, k, agent)`, so all rules consume the same observations under the
//! same seed and thread count never changes a result.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::analysis::{self, log_bound, MixingSource, RateConstants, RateTheorem};
use crate::error::{Error, Result};
use crate::graphs::{AcceleratedOperator, GraphSchedule, WeightMatrix};
use crate::rng;
use crate::rules::{accelerated_into, add_loglik, geometric_sum_into, linear_sum_into, UpdateRuleKind};
use crate::types::{normalize_log_in_place, uniform_prior, AgentSpec, BeliefState};

const STREAM_BETA: u64 = 0;
const STREAM_SIGNAL: u64 = 1;

/// Communication structure of a simulation.
#[derive(Debug, Clone)]
pub enum Network {
    Schedule(GraphSchedule),
    /// Static graph with lazy Metropolis weights and momentum parameters.
    Accelerated(AcceleratedOperator),
}

impl Network {
    pub fn n(&self) -> usize {
        match self {
            Network::Schedule(s) => s.n(),
            Network::Accelerated(op) => op.n(),
        }
    }

    pub fn weights_at(&self, k: u64) -> &WeightMatrix {
        match self {
            Network::Schedule(s) => s.matrix(k),
            Network::Accelerated(op) => op.base(),
        }
    }

    pub fn is_static(&self) -> bool {
        match self {
            Network::Schedule(s) => s.is_static(),
            Network::Accelerated(_) => true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub agents: Vec<AgentSpec>,
    pub network: Network,
    pub rule: UpdateRuleKind,
    pub horizon: u64,
    pub seed: u64,
    /// Convergence threshold on every off-optimal belief.
    pub epsilon: f64,
    /// Steps between recorded snapshots (and convergence checks).
    pub record_stride: u64,
    pub stop_on_convergence: bool,
    /// Target set for convergence; defaults to the computed optimal set.
    pub optimal: Option<Vec<usize>>,
}

impl SimulationConfig {
    pub fn new(agents: Vec<AgentSpec>, network: Network, rule: UpdateRuleKind, horizon: u64, seed: u64) -> Self {
        Self {
            agents,
            network,
            rule,
            horizon,
            seed,
            epsilon: 0.01,
            record_stride: 1,
            stop_on_convergence: false,
            optimal: None,
        }
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn hypotheses(&self) -> usize {
        self.agents.first().map_or(0, |a| a.hypotheses())
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::invalid("simulation needs at least one agent"));
        }
        let m = self.hypotheses();
        if let Some(i) = self.agents.iter().position(|a| a.hypotheses() != m) {
            return Err(Error::invalid(format!(
                "agent {i} disagrees on the number of hypotheses"
            )));
        }
        if self.network.n() != self.n() {
            return Err(Error::invalid(format!(
                "network has {} nodes but {} agents are configured",
                self.network.n(),
                self.n()
            )));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon = {} outside (0, 1)", self.epsilon)));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("record stride must be at least 1"));
        }
        if let Some(opt) = &self.optimal {
            if opt.is_empty() || opt.iter().any(|&t| t >= m) {
                return Err(Error::invalid("target optimal set must be non-empty and in range"));
            }
        }
        match self.rule {
            UpdateRuleKind::AcceleratedGeometric => {
                if !matches!(self.network, Network::Accelerated(_)) {
                    return Err(Error::invalid(
                        "the accelerated rule needs a static graph with a momentum operator",
                    ));
                }
                let uniform = uniform_prior(m)?;
                if self.agents.iter().any(|a| a.prior.max_abs_diff(&uniform) > 1e-12) {
                    return Err(Error::invalid("the accelerated rule needs uniform priors"));
                }
            }
            UpdateRuleKind::CentralizedBayes => {
                let p0 = &self.agents[0].prior;
                if self.agents.iter().any(|a| a.prior.max_abs_diff(p0) > 1e-12) {
                    return Err(Error::invalid("centralized Bayes needs a common prior"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The configured target set, or the computed optimal set.
    pub fn target_set(&self) -> Result<Vec<usize>> {
        match &self.optimal {
            Some(o) => Ok(o.clone()),
            None => analysis::optimal_set(&self.agents, analysis::DEFAULT_OPTIMAL_TOL),
        }
    }

    /// Stable fingerprint of everything except the seed.
    pub fn fingerprint(&self) -> u64 {
        let text = format!(
            "{:?}|{:?}|{}|{}|{}|{}|{:?}",
            self.agents, self.network, self.rule, self.horizon, self.epsilon, self.record_stride, self.optimal
        );
        // FNV-1a
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
        })
    }
}

/// Observation availability and signal for `agent` at step `k`.
pub fn draw_observation(seed: u64, k: u64, agent: usize, spec: &AgentSpec) -> Option<usize> {
    let q = spec.observation_rate;
    let observed = q >= 1.0 || (q > 0.0 && rng::uniform(seed, &[k, agent as u64, STREAM_BETA]) < q);
    observed.then(|| {
        rng::sample_categorical(
            spec.likelihood.truth(),
            rng::uniform(seed, &[k, agent as u64, STREAM_SIGNAL]),
        )
    })
}

#[inline]
fn agent_row(buf: &[f64], m: usize, j: usize) -> &[f64] {
    &buf[j * m..(j + 1) * m]
}

/// Network state stepped in place; all buffers are allocated once.
#[derive(Debug, Clone)]
pub struct Simulator<'c> {
    config: &'c SimulationConfig,
    seed: u64,
    k: u64,
    m: usize,
    sigma: f64,
    log: Vec<f64>,
    prev: Vec<f64>,
    prev_term: Vec<f64>,
    next: Vec<f64>,
    posts: Vec<f64>,
    scratch: Vec<f64>,
    signals: Vec<Option<usize>>,
}

impl<'c> Simulator<'c> {
    /// Validates the configuration; `seed` overrides the configured one.
    pub fn new(config: &'c SimulationConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let n = config.n();
        let m = config.hypotheses();
        let log: Vec<f64> = config
            .agents
            .iter()
            .flat_map(|a| a.prior.log_probs().iter().copied())
            .collect();
        let sigma = match &config.network {
            Network::Accelerated(op) => op.sigma(),
            Network::Schedule(_) => 0.0,
        };
        Ok(Self {
            config,
            seed,
            k: 0,
            m,
            sigma,
            prev: log.clone(),
            prev_term: vec![0.0; n * m],
            next: vec![0.0; n * m],
            posts: vec![0.0; n * m],
            scratch: vec![0.0; m],
            signals: vec![None; n],
            log,
        })
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &SimulationConfig {
        self.config
    }

    pub fn log_belief(&self, agent: usize, theta: usize) -> f64 {
        self.log[agent * self.m + theta]
    }

    pub fn log_beliefs(&self, agent: usize) -> &[f64] {
        &self.log[agent * self.m..(agent + 1) * self.m]
    }

    pub fn beliefs(&self) -> Vec<BeliefState> {
        (0..self.config.n())
            .map(|i| BeliefState::from_normalized_log(self.log_beliefs(i).to_vec()))
            .collect()
    }

    /// Signals that produced the current state (`None` where `beta = 0` and at `k = 0`).
    pub fn last_signals(&self) -> &[Option<usize>] {
        &self.signals
    }

    /// Largest belief any agent puts on a hypothesis outside `mask`.
    pub fn max_off_target(&self, in_target: &[bool]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for row in self.log.chunks_exact(self.m) {
            for (l, &t) in row.iter().zip(in_target) {
                if !t && *l > worst {
                    worst = *l;
                }
            }
        }
        worst.exp()
    }

    /// Advances from step `k` to `k + 1`.
    pub fn step(&mut self) -> Result<()> {
        let Self {
            config,
            seed,
            k,
            m,
            sigma,
            log,
            prev,
            prev_term,
            next,
            posts,
            scratch,
            signals,
        } = self;
        let (k, m, sigma) = (*k, *m, *sigma);
        let agents = &config.agents;
        let n = agents.len();
        for (i, a) in agents.iter().enumerate() {
            signals[i] = draw_observation(*seed, k, i, a);
        }
        let weights = config.network.weights_at(k);
        let wrap = |agent: usize, e: Error| Error::Step {
            agent,
            step: k,
            source: Box::new(e),
        };
        let loglik = |i: usize| signals[i].map(|s| agents[i].likelihood.log_likelihoods(s));

        match config.rule {
            UpdateRuleKind::GeometricPool => {
                for (i, out) in next.chunks_exact_mut(m).enumerate() {
                    geometric_sum_into(out, weights.row(i).iter().map(|&(j, w)| (w, agent_row(log, m, j))));
                    add_loglik(out, loglik(i));
                    normalize_log_in_place(out).map_err(|e| wrap(i, e))?;
                }
            }
            UpdateRuleKind::AcceleratedGeometric => {
                for (i, out) in next.chunks_exact_mut(m).enumerate() {
                    accelerated_into(
                        out,
                        scratch,
                        sigma,
                        weights.row(i).iter().map(|&(j, w)| (w, agent_row(log, m, j))),
                        weights
                            .row(i)
                            .iter()
                            .map(|&(j, w)| (w, agent_row(prev, m, j), agent_row(prev_term, m, j))),
                        loglik(i),
                    )
                    .map_err(|e| wrap(i, e))?;
                }
                for (i, term) in prev_term.chunks_exact_mut(m).enumerate() {
                    match loglik(i) {
                        Some(ll) => term.copy_from_slice(ll),
                        None => term.iter_mut().for_each(|v| *v = 0.0),
                    }
                }
                prev.copy_from_slice(log);
            }
            UpdateRuleKind::LinearPoolThenBayes => {
                for (i, out) in next.chunks_exact_mut(m).enumerate() {
                    linear_sum_into(out, weights.row(i).iter().map(|&(j, w)| (w, agent_row(log, m, j))));
                    add_loglik(out, loglik(i));
                    normalize_log_in_place(out).map_err(|e| wrap(i, e))?;
                }
            }
            UpdateRuleKind::BayesThenLinearPool => {
                posts.copy_from_slice(log);
                for (j, post) in posts.chunks_exact_mut(m).enumerate() {
                    add_loglik(post, loglik(j));
                    normalize_log_in_place(post).map_err(|e| wrap(j, e))?;
                }
                for (i, out) in next.chunks_exact_mut(m).enumerate() {
                    linear_sum_into(out, weights.row(i).iter().map(|&(j, w)| (w, agent_row(posts, m, j))));
                    normalize_log_in_place(out).map_err(|e| wrap(i, e))?;
                }
            }
            UpdateRuleKind::LikelihoodSharing => {
                for (i, out) in next.chunks_exact_mut(m).enumerate() {
                    out.copy_from_slice(agent_row(log, m, i));
                    for &(j, w) in weights.row(i) {
                        if let (Some(ll), true) = (loglik(j), w > 0.0) {
                            for (o, &l) in out.iter_mut().zip(ll) {
                                *o += w * l;
                            }
                        }
                    }
                    normalize_log_in_place(out).map_err(|e| wrap(i, e))?;
                }
            }
            UpdateRuleKind::CentralizedBayes => {
                let (central, rest) = next.split_at_mut(m);
                central.copy_from_slice(agent_row(log, m, 0));
                for i in 0..n {
                    add_loglik(central, loglik(i));
                }
                normalize_log_in_place(central).map_err(|e| wrap(0, e))?;
                for out in rest.chunks_exact_mut(m) {
                    out.copy_from_slice(central);
                }
            }
        }
        std::mem::swap(log, next);
        self.k += 1;
        Ok(())
    }
}

/// Beliefs of every agent at one recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub k: u64,
    pub beliefs: Vec<BeliefState>,
    /// The availability flags that produced these beliefs (all false at `k = 0`).
    pub betas: Vec<bool>,
    pub signals: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub seed: u64,
    pub config_hash: u64,
    pub rule: UpdateRuleKind,
    pub target: Vec<usize>,
    pub epsilon: f64,
    /// First recorded step where every off-target belief is below `epsilon`.
    pub convergence_time: Option<u64>,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("trajectory always holds the initial state")
    }

    /// Writes `k,agent,theta,belief,beta` rows, beliefs with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "k,agent,theta,belief,beta")?;
        for snap in &self.snapshots {
            for (i, b) in snap.beliefs.iter().enumerate() {
                let beta = u8::from(snap.betas[i]);
                for (t, l) in b.log_probs().iter().enumerate() {
                    writeln!(out, "{},{},{},{:.16e},{}", snap.k, i, t, l.exp(), beta)?;
                }
            }
        }
        Ok(())
    }

    /// Max off-target belief at every recorded step.
    pub fn max_off_target_series(&self) -> Vec<(u64, f64)> {
        let mask = target_mask(self.last().beliefs[0].len(), &self.target);
        self.snapshots
            .iter()
            .map(|s| (s.k, max_off_target(&s.beliefs, &mask)))
            .collect()
    }
}

fn target_mask(m: usize, target: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; m];
    target.iter().for_each(|&t| mask[t] = true);
    mask
}

fn max_off_target(beliefs: &[BeliefState], mask: &[bool]) -> f64 {
    beliefs
        .iter()
        .flat_map(|b| {
            b.log_probs()
                .iter()
                .zip(mask)
                .filter(|(_, &t)| !t)
                .map(|(l, _)| l.exp())
        })
        .fold(0.0, f64::max)
}

/// First recorded `k` where every agent's belief on every hypothesis outside
/// `optimal` is below `epsilon`. `None` if that never happens, or if
/// `optimal` is empty or covers every hypothesis.
pub fn convergence_time(traj: &Trajectory, optimal: &[usize], epsilon: f64) -> Option<u64> {
    let m = traj.snapshots.first()?.beliefs.first()?.len();
    if optimal.is_empty() || optimal.len() >= m || optimal.iter().any(|&t| t >= m) {
        return None;
    }
    let mask = target_mask(m, optimal);
    traj.snapshots
        .iter()
        .find(|s| max_off_target(&s.beliefs, &mask) < epsilon)
        .map(|s| s.k)
}

fn snapshot(sim: &Simulator<'_>) -> Snapshot {
    Snapshot {
        k: sim.k(),
        beliefs: sim.beliefs(),
        betas: sim.last_signals().iter().map(Option::is_some).collect(),
        signals: sim.last_signals().to_vec(),
    }
}

/// Runs with the configured seed.
pub fn run(config: &SimulationConfig) -> Result<Trajectory> {
    run_observed(config, config.seed, |_| {})
}

/// Runs with an explicit seed, calling `observer` on the initial state and
/// after every step.
pub fn run_observed(
    config: &SimulationConfig,
    seed: u64,
    mut observer: impl FnMut(&Simulator<'_>),
) -> Result<Trajectory> {
    let mut sim = Simulator::new(config, seed)?;
    let target = config.target_set()?;
    let m = config.hypotheses();
    let mask = target_mask(m, &target);
    let trivial = target.len() == m;
    let mut traj = Trajectory {
        snapshots: vec![snapshot(&sim)],
        seed,
        config_hash: config.fingerprint(),
        rule: config.rule,
        target,
        epsilon: config.epsilon,
        convergence_time: None,
    };
    observer(&sim);
    let check = |sim: &Simulator<'_>, traj: &mut Trajectory| {
        if !trivial && traj.convergence_time.is_none() && sim.max_off_target(&mask) < config.epsilon {
            traj.convergence_time = Some(sim.k());
        }
    };
    check(&sim, &mut traj);
    while sim.k() < config.horizon {
        if config.stop_on_convergence && traj.convergence_time.is_some() {
            break;
        }
        sim.step()?;
        observer(&sim);
        if sim.k() % config.record_stride == 0 {
            traj.snapshots.push(snapshot(&sim));
            check(&sim, &mut traj);
        }
    }
    if traj.last().k != sim.k() {
        traj.snapshots.push(snapshot(&sim));
    }
    Ok(traj)
}

/// A run that aborted with a degenerate posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub run: usize,
    pub seed: u64,
    pub error: String,
}

/// Distribution of the max off-target belief across runs at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileRow {
    pub k: u64,
    pub min: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub runs: usize,
    pub seeds: Vec<u64>,
    /// `None` for runs that did not converge (or failed).
    pub convergence_times: Vec<Option<u64>>,
    /// `None` when the rule has no rate result, every hypothesis is optimal,
    /// or the run failed.
    pub bound_violations: Vec<Option<bool>>,
    pub failures: Vec<RunFailure>,
    pub rate_constants: Option<RateConstants>,
    pub target: Vec<usize>,
    pub quantiles: Vec<QuantileRow>,
    /// Max off-target belief per run at the end of the horizon.
    pub final_off_target: Vec<f64>,
}

impl MonteCarloSummary {
    /// Fraction of completed runs with a bound violation, if applicable.
    pub fn violation_fraction(&self) -> Option<f64> {
        let flags: Vec<bool> = self.bound_violations.iter().filter_map(|v| *v).collect();
        if flags.is_empty() {
            return None;
        }
        Some(flags.iter().filter(|&&v| v).count() as f64 / flags.len() as f64)
    }

    /// Median convergence time with non-converged runs ranked last; `None`
    /// when the median run did not converge.
    pub fn median_convergence(&self) -> Option<f64> {
        let mut times: Vec<f64> = self
            .convergence_times
            .iter()
            .map(|t| t.map_or(f64::INFINITY, |v| v as f64))
            .collect();
        times.sort_by(f64::total_cmp);
        let med = quantile_sorted(&times, 0.5);
        med.is_finite().then_some(med)
    }

    /// Mean over converged runs, with their count.
    pub fn mean_convergence(&self) -> Option<(f64, usize)> {
        let done: Vec<u64> = self.convergence_times.iter().filter_map(|t| *t).collect();
        (!done.is_empty()).then(|| (done.iter().sum::<u64>() as f64 / done.len() as f64, done.len()))
    }
}

/// Linear interpolation between order statistics; `p` in `[0, 1]`.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || sorted[lo] == sorted[hi] {
        return sorted[lo];
    }
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Rate constants for the configured rule, when a rate result covers it.
pub fn rate_constants_for(config: &SimulationConfig, rho: f64) -> Result<Option<RateConstants>> {
    let result = match (config.rule, &config.network) {
        (UpdateRuleKind::GeometricPool, Network::Schedule(s)) => analysis::rate_constants(
            &config.agents,
            MixingSource::Schedule {
                schedule: s,
                horizon: config.horizon,
            },
            rho,
            RateTheorem::GeometricPool,
        ),
        (UpdateRuleKind::AcceleratedGeometric, Network::Accelerated(op)) => analysis::rate_constants(
            &config.agents,
            MixingSource::Accelerated(op),
            rho,
            RateTheorem::Accelerated,
        ),
        _ => return Ok(None),
    };
    match result {
        Ok(c) => Ok(Some(c)),
        Err(Error::NoSuboptimalHypothesis) => Ok(None),
        Err(e) => Err(e),
    }
}

struct RunOutcome {
    convergence: Option<u64>,
    violation: Option<bool>,
    failure: Option<String>,
    series: Vec<f64>,
    final_off: f64,
}

/// `runs` independent runs with seeds derived from the master seed, in
/// parallel on the current rayon pool, merged by run index.
pub fn monte_carlo(config: &SimulationConfig, runs: usize, rho: f64) -> Result<MonteCarloSummary> {
    if runs == 0 {
        return Err(Error::invalid("Monte Carlo needs at least one run"));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("rho = {rho} outside (0, 1)")));
    }
    config.validate()?;
    let target = config.target_set()?;
    let m = config.hypotheses();
    let consts = rate_constants_for(config, rho)?;
    let seeds: Vec<u64> = (0..runs as u64).map(|r| rng::derive_seed(config.seed, r)).collect();
    let recorded: Vec<u64> = (0..=config.horizon).filter(|k| k % config.record_stride == 0).collect();
    let mask = target_mask(m, &target);
    let off_target: Vec<usize> = (0..m).filter(|t| !mask[*t]).collect();

    let outcomes: Vec<RunOutcome> = seeds
        .par_iter()
        .map(|&seed| {
            let mut violated = false;
            let mut series = Vec::with_capacity(recorded.len());
            let mut last_off = 0.0;
            let result = run_observed(config, seed, |sim| {
                let k = sim.k();
                if let Some(c) = &consts {
                    if k >= c.n_rho && !violated {
                        'agents: for i in 0..config.n() {
                            let limit = log_bound(c, k, i);
                            for &t in &off_target {
                                if sim.log_belief(i, t) > limit {
                                    violated = true;
                                    break 'agents;
                                }
                            }
                        }
                    }
                }
                if k % config.record_stride == 0 {
                    last_off = sim.max_off_target(&mask);
                    series.push(last_off);
                } else if k == config.horizon {
                    last_off = sim.max_off_target(&mask);
                }
            });
            match result {
                Ok(traj) => {
                    // runs stopped early keep their last value
                    while series.len() < recorded.len() {
                        series.push(last_off);
                    }
                    RunOutcome {
                        convergence: traj.convergence_time,
                        violation: consts.as_ref().map(|_| violated),
                        failure: None,
                        series,
                        final_off: last_off,
                    }
                }
                Err(e) => RunOutcome {
                    convergence: None,
                    violation: None,
                    failure: Some(e.to_string()),
                    series: Vec::new(),
                    final_off: f64::NAN,
                },
            }
        })
        .collect();

    let completed: Vec<&RunOutcome> = outcomes.iter().filter(|o| o.failure.is_none()).collect();
    let mut quantiles = Vec::with_capacity(recorded.len());
    if !completed.is_empty() {
        let mut column = vec![0.0; completed.len()];
        for (idx, &k) in recorded.iter().enumerate() {
            for (c, o) in column.iter_mut().zip(&completed) {
                *c = o.series[idx];
            }
            column.sort_by(f64::total_cmp);
            quantiles.push(QuantileRow {
                k,
                min: column[0],
                q10: quantile_sorted(&column, 0.1),
                median: quantile_sorted(&column, 0.5),
                q90: quantile_sorted(&column, 0.9),
                max: column[column.len() - 1],
                mean: column.iter().sum::<f64>() / column.len() as f64,
            });
        }
    }

    Ok(MonteCarloSummary {
        runs,
        convergence_times: outcomes.iter().map(|o| o.convergence).collect(),
        bound_violations: outcomes.iter().map(|o| o.violation).collect(),
        failures: outcomes
            .iter()
            .zip(&seeds)
            .enumerate()
            .filter_map(|(run, (o, &seed))| o.failure.clone().map(|error| RunFailure { run, seed, error }))
            .collect(),
        final_off_target: outcomes.iter().map(|o| o.final_off).collect(),
        seeds,
        rate_constants: consts,
        target,
        quantiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{Graph, WeightRule};
    use crate::rules::bayes_update;
    use crate::types::{LikelihoodModel, SignalAlphabet};

    fn coin(p0: &[f64], truth0: f64, q: f64) -> AgentSpec {
        let md = LikelihoodModel::with_realized_floor(
            SignalAlphabet::indexed(2).unwrap(),
            p0.iter().map(|&p| vec![p, 1.0 - p]).collect(),
            vec![truth0, 1.0 - truth0],
        )
        .unwrap();
        AgentSpec::uniform(md, q).unwrap()
    }

    fn ring_config(rule: UpdateRuleKind, q: f64, horizon: u64) -> SimulationConfig {
        let n = 5;
        let agents: Vec<_> = (0..n)
            .map(|i| coin(&[0.8, 0.4, 0.6], 0.8 - 0.01 * i as f64, q))
            .collect();
        let network = if rule == UpdateRuleKind::AcceleratedGeometric {
            Network::Accelerated(AcceleratedOperator::new(Graph::cycle(n), n).unwrap())
        } else {
            Network::Schedule(GraphSchedule::from_rule(Graph::cycle(n), WeightRule::Metropolis))
        };
        SimulationConfig::new(agents, network, rule, horizon, 99)
    }

    #[test]
    fn silent_agents_at_consensus_stay_put() {
        for rule in [UpdateRuleKind::GeometricPool, UpdateRuleKind::AcceleratedGeometric] {
            let cfg = ring_config(rule, 0.0, 20);
            let traj = run(&cfg).unwrap();
            let first = &traj.snapshots[0].beliefs;
            for b in &traj.last().beliefs {
                assert!(b.max_abs_diff(&first[0]) < 1e-15);
            }
            assert!(traj.last().betas.iter().all(|b| !b));
        }
    }

    #[test]
    fn single_agent_is_sequential_bayes() {
        let a = coin(&[0.7, 0.4], 0.6, 1.0);
        let cfg = SimulationConfig::new(
            vec![a.clone()],
            Network::Schedule(GraphSchedule::from_rule(Graph::path(1), WeightRule::Metropolis)),
            UpdateRuleKind::GeometricPool,
            50,
            3,
        );
        let traj = run(&cfg).unwrap();
        let mut b = a.prior.clone();
        for snap in &traj.snapshots[1..] {
            b = bayes_update(&b, &a.likelihood, snap.signals[0].unwrap()).unwrap();
            assert!(snap.beliefs[0].max_abs_diff(&b) < 1e-13);
        }
    }

    #[test]
    fn horizon_one_has_two_snapshots() {
        let cfg = ring_config(UpdateRuleKind::GeometricPool, 1.0, 1);
        let traj = run(&cfg).unwrap();
        assert_eq!(traj.snapshots.len(), 2);
        assert_eq!(traj.snapshots[1].k, 1);
        let mut bad = cfg.clone();
        bad.horizon = 0;
        assert!(run(&bad).is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        for rule in UpdateRuleKind::ALL {
            let cfg = ring_config(rule, 0.7, 60);
            let (a, b) = (run(&cfg).unwrap(), run(&cfg).unwrap());
            let (mut x, mut y) = (Vec::new(), Vec::new());
            a.write_csv(&mut x).unwrap();
            b.write_csv(&mut y).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn rules_share_observations() {
        let a = run(&ring_config(UpdateRuleKind::GeometricPool, 0.6, 40)).unwrap();
        let b = run(&ring_config(UpdateRuleKind::BayesThenLinearPool, 0.6, 40)).unwrap();
        for (s, t) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(s.signals, t.signals);
        }
    }

    #[test]
    fn accelerated_rule_needs_static_uniform_setup() {
        let mut cfg = ring_config(UpdateRuleKind::GeometricPool, 1.0, 10);
        cfg.rule = UpdateRuleKind::AcceleratedGeometric;
        assert!(cfg.validate().is_err());
        let mut cfg = ring_config(UpdateRuleKind::AcceleratedGeometric, 1.0, 10);
        cfg.agents[0].prior = BeliefState::from_probabilities(&[0.5, 0.25, 0.25]).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn every_rule_concentrates_on_the_optimum() {
        for rule in UpdateRuleKind::ALL {
            let cfg = ring_config(rule, 1.0, 2000);
            let traj = run(&cfg).unwrap();
            assert_eq!(traj.target, vec![0]);
            assert!(traj.convergence_time.is_some(), "{rule}");
            // linear pooling mixes in stale mass every step, so it only has to lead
            let floor = match rule {
                UpdateRuleKind::LinearPoolThenBayes | UpdateRuleKind::BayesThenLinearPool => 0.9,
                _ => 0.99,
            };
            for b in &traj.last().beliefs {
                assert!(b.is_normalized());
                assert_eq!(b.argmax(), 0);
                assert!(b.prob(0) > floor, "{rule}: {:?}", b.probabilities());
            }
        }
    }

    #[test]
    fn convergence_time_cases() {
        let cfg = ring_config(UpdateRuleKind::GeometricPool, 1.0, 300);
        let traj = run(&cfg).unwrap();
        let t = convergence_time(&traj, &[0], 0.01).unwrap();
        assert_eq!(Some(t), traj.convergence_time);
        assert!(convergence_time(&traj, &[0], 0.9).unwrap() <= t);
        // everything optimal: never converges
        assert_eq!(convergence_time(&traj, &[0, 1, 2], 0.01), None);
        // already converged at the start
        let mut c2 = cfg.clone();
        c2.agents
            .iter_mut()
            .for_each(|a| a.prior = BeliefState::from_probabilities(&[0.999, 0.0005, 0.0005]).unwrap());
        assert_eq!(run(&c2).unwrap().convergence_time, Some(0));
    }

    #[test]
    fn stride_and_early_stop() {
        let mut cfg = ring_config(UpdateRuleKind::GeometricPool, 1.0, 1000);
        cfg.record_stride = 7;
        cfg.stop_on_convergence = true;
        let traj = run(&cfg).unwrap();
        let t = traj.convergence_time.unwrap();
        assert_eq!(t % 7, 0);
        assert_eq!(traj.last().k, t);
    }

    #[test]
    fn csv_layout() {
        let cfg = ring_config(UpdateRuleKind::GeometricPool, 1.0, 2);
        let mut buf = Vec::new();
        run(&cfg).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "k,agent,theta,belief,beta");
        assert_eq!(lines.len(), 1 + 3 * 5 * 3);
        assert_eq!(lines[1], "0,0,0,3.3333333333333331e-1,0");
        assert!(lines[16].starts_with("1,0,0,") && lines[16].ends_with(",1"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn monte_carlo_single_and_trivial() {
        let cfg = ring_config(UpdateRuleKind::GeometricPool, 1.0, 50);
        let one = monte_carlo(&cfg, 1, 0.1).unwrap();
        assert_eq!(one.runs, 1);
        assert_eq!(one.convergence_times.len(), 1);
        assert_eq!(one.quantiles.len(), 51);
        assert_eq!(one.quantiles[0].median, one.quantiles[0].max);
        assert!(one.bound_violations[0].is_some());

        let flat: Vec<_> = (0..5).map(|_| coin(&[0.5, 0.5], 0.5, 1.0)).collect();
        let mut trivial = cfg.clone();
        trivial.agents = flat;
        let s = monte_carlo(&trivial, 3, 0.1).unwrap();
        assert_eq!(s.violation_fraction(), None);
        assert!(s.bound_violations.iter().all(Option::is_none));
        assert_eq!(s.median_convergence(), None);
    }

    #[test]
    fn monte_carlo_is_thread_count_independent() {
        let cfg = ring_config(UpdateRuleKind::BayesThenLinearPool, 0.8, 80);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| monte_carlo(&cfg, 12, 0.1).unwrap());
        let b = four.install(|| monte_carlo(&cfg, 12, 0.1).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_runs_are_recorded_with_provenance() {
        let md = LikelihoodModel::new(
            SignalAlphabet::indexed(2).unwrap(),
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.5, 0.5],
            0.0,
        )
        .unwrap();
        let a = AgentSpec::new(md.clone(), 1.0, BeliefState::point_mass(2, 0).unwrap()).unwrap();
        let mut cfg = SimulationConfig::new(
            vec![a],
            Network::Schedule(GraphSchedule::from_rule(Graph::path(1), WeightRule::Metropolis)),
            UpdateRuleKind::BayesThenLinearPool,
            50,
            1,
        );
        cfg.optimal = Some(vec![0]);
        match run(&cfg) {
            Err(Error::Step { agent: 0, source, .. }) => assert!(matches!(*source, Error::DegeneratePosterior(_))),
            other => panic!("expected a step failure, got {other:?}"),
        }
        let s = monte_carlo(&cfg, 4, 0.1).unwrap();
        assert_eq!(s.failures.len(), 4);
        assert!(s.failures[0].error.contains("agent 0"));
    }
}
