//! Builders for the reference experiments: the two-agent Gaussian example,
//! merging conflicting cliques, the topology sweep with a single informative
//! agent, and grid-based source localization.

use std::fmt;
use std::str::FromStr;

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::statistics::Distribution as _;

use crate::analysis::{optimal_set, DEFAULT_OPTIMAL_TOL};
use crate::error::{Error, Result};
use crate::graphs::{AcceleratedOperator, Graph, GraphSchedule, WeightRule};
use crate::rng::{self, Stream};
use crate::rules::UpdateRuleKind;
use crate::simulator::{Network, SimulationConfig};
use crate::types::{AgentSpec, HypothesisSet, LikelihoodModel, SignalAlphabet};

/// Largest probability mass a discretization may drop before renormalizing.
pub const MASS_LOSS_TOL: f64 = 1e-6;

/// Equal-width bins over `[lo, hi]`; each bin's symbol is its midpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscretizationSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl DiscretizationSpec {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidDiscretization(format!(
                "range [{lo}, {hi}] is empty or unbounded"
            )));
        }
        if bins < 2 {
            return Err(Error::InvalidDiscretization(format!("{bins} bins, need at least 2")));
        }
        Ok(Self { lo, hi, bins })
    }

    /// `[-6, 10]` in 64 bins of width 1/4: six standard deviations beyond every
    /// mean in the two-agent example, with every mean and midpoint of means on
    /// a bin edge so mirror-image hypotheses stay exactly tied.
    pub fn two_agent_default() -> Self {
        Self {
            lo: -6.0,
            hi: 10.0,
            bins: 64,
        }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn edge(&self, idx: usize) -> f64 {
        if idx == self.bins {
            self.hi
        } else {
            self.lo + idx as f64 * self.width()
        }
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.bins)
            .map(|b| self.lo + (b as f64 + 0.5) * self.width())
            .collect()
    }

    pub fn alphabet(&self) -> SignalAlphabet {
        SignalAlphabet::new(self.midpoints()).expect("midpoints are distinct")
    }

    /// Bin masses of `N(mean, sd^2)`, renormalized. Fails when more than
    /// [`MASS_LOSS_TOL`] falls outside the range.
    pub fn gaussian(&self, mean: f64, sd: f64) -> Result<Vec<f64>> {
        let dist = normal(mean, sd)?;
        let lost = dist.cdf(self.lo) + dist.sf(self.hi);
        if lost > MASS_LOSS_TOL {
            return Err(Error::InvalidDiscretization(format!(
                "range [{}, {}] drops {lost:.3e} of N({mean}, {sd}^2)",
                self.lo, self.hi
            )));
        }
        Ok(renormalize(self.bin_masses(&dist)))
    }

    /// Mixture of `N(mean, sd^2)` truncated to `mean ± half_width` (weight
    /// `1 - outlier`) and the uniform distribution on the range (weight `outlier`).
    pub fn truncated_gaussian(&self, mean: f64, sd: f64, half_width: f64, outlier: f64) -> Result<Vec<f64>> {
        if !(half_width > 0.0) || !(0.0..1.0).contains(&outlier) {
            return Err(Error::invalid(
                "truncation half-width must be positive and outlier weight in [0, 1)",
            ));
        }
        let dist = normal(mean, sd)?;
        let (a, b) = (mean - half_width, mean + half_width);
        if a < self.lo - 1e-9 || b > self.hi + 1e-9 {
            return Err(Error::InvalidDiscretization(format!(
                "truncated support [{a}, {b}] is not inside [{}, {}]",
                self.lo, self.hi
            )));
        }
        let core = dist.cdf(b) - dist.cdf(a);
        let w = self.width();
        let total = self.hi - self.lo;
        let masses = (0..self.bins)
            .map(|idx| {
                let (l, r) = (self.edge(idx).max(a), self.edge(idx + 1).min(b));
                let inner = if r > l { prob_between(&dist, l, r) / core } else { 0.0 };
                (1.0 - outlier) * inner + outlier * w / total
            })
            .collect();
        Ok(renormalize(masses))
    }

    fn bin_masses(&self, dist: &Normal) -> Vec<f64> {
        (0..self.bins)
            .map(|idx| prob_between(dist, self.edge(idx), self.edge(idx + 1)))
            .collect()
    }
}

fn normal(mean: f64, sd: f64) -> Result<Normal> {
    Normal::new(mean, sd).map_err(|e| Error::invalid(format!("normal({mean}, {sd}): {e}")))
}

/// `P(l < X <= r)`, using the upper tail above the mean to keep precision.
fn prob_between(dist: &Normal, l: f64, r: f64) -> f64 {
    let mean = dist.mean().expect("normal has a mean");
    if l >= mean {
        (dist.sf(l) - dist.sf(r)).max(0.0)
    } else {
        (dist.cdf(r) - dist.cdf(l)).max(0.0)
    }
}

fn renormalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

/// Agents of a built scenario together with the optimal set computed on them.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub hypotheses: HypothesisSet,
    pub agents: Vec<AgentSpec>,
    pub expected_optimal: Vec<usize>,
}

impl BuiltScenario {
    fn new(hypotheses: HypothesisSet, agents: Vec<AgentSpec>) -> Result<Self> {
        let expected_optimal = optimal_set(&agents, DEFAULT_OPTIMAL_TOL)?;
        Ok(Self {
            hypotheses,
            agents,
            expected_optimal,
        })
    }
}

fn gaussian_agent(spec: &DiscretizationSpec, truth_mean: f64, means: &[f64]) -> Result<AgentSpec> {
    let rows = means
        .iter()
        .map(|&mu| spec.gaussian(mu, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let truth = spec.gaussian(truth_mean, 1.0)?;
    AgentSpec::uniform(LikelihoodModel::with_realized_floor(spec.alphabet(), rows, truth)?, 1.0)
}

/// Two agents observing `N(1, 1)` and `N(2, 1)`, with unit-variance Gaussian
/// likelihoods centered at `{0.5, 1.5, 0}` and `{0, 2.5, 1.5}` respectively.
/// Neither agent can single out the middle hypothesis alone; together they can.
pub fn build_two_agent_example(spec: &DiscretizationSpec) -> Result<BuiltScenario> {
    let agents = vec![
        gaussian_agent(spec, 1.0, &[0.5, 1.5, 0.0])?,
        gaussian_agent(spec, 2.0, &[0.0, 2.5, 1.5])?,
    ];
    BuiltScenario::new(HypothesisSet::indexed(3)?, agents)
}

/// Agents that either observe the source, observe nothing, or see
/// observations generated as if the source sat at `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentRole {
    Regular,
    NoMeasurement,
    Conflicting { target: (f64, f64) },
}

/// Agents measure their distance to a source plus truncated Gaussian noise;
/// hypotheses are the points of a `g x g` lattice over `[lo, hi]^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationScenario {
    pub agent_positions: Vec<(f64, f64)>,
    pub roles: Vec<AgentRole>,
    pub source: (f64, f64),
    pub grid_side: usize,
    pub area: (f64, f64),
    /// Noise scale `c`.
    pub noise_scale: f64,
    /// Noise support half-width, in units of `c`.
    pub truncation: f64,
    /// Weight of the uniform outlier component keeping every likelihood positive.
    pub outlier_weight: f64,
    pub bins: usize,
    /// Communication radius for the geometric graph.
    pub radius: f64,
}

impl LocalizationScenario {
    /// `n` regular agents at seeded uniform positions.
    pub fn random(n: usize, grid_side: usize, source: (f64, f64), seed: u64) -> Self {
        let area = (-10.0, 10.0);
        let mut rng = Stream::new(seed);
        let agent_positions = (0..n)
            .map(|_| {
                let x = area.0 + (area.1 - area.0) * rng.next_f64();
                let y = area.0 + (area.1 - area.0) * rng.next_f64();
                (x, y)
            })
            .collect();
        Self {
            agent_positions,
            roles: vec![AgentRole::Regular; n],
            source,
            grid_side,
            area,
            noise_scale: 1.0,
            truncation: 4.0,
            outlier_weight: 1e-3,
            bins: 64,
            radius: 8.0,
        }
    }

    /// Ten agents on a 10 x 10 grid: four regular, three without measurements,
    /// and three whose observations point at the origin.
    pub fn conflicting_reduced(seed: u64) -> Self {
        let mut sc = Self::random(10, 10, (0.0, 0.0), seed);
        sc.source = sc.hypothesis_points()[7 * 10 + 6];
        for (i, role) in sc.roles.iter_mut().enumerate() {
            *role = match i {
                0..=3 => AgentRole::Regular,
                4..=6 => AgentRole::NoMeasurement,
                _ => AgentRole::Conflicting { target: (0.0, 0.0) },
            };
        }
        sc
    }

    /// Row-major lattice points, `x` varying fastest.
    pub fn hypothesis_points(&self) -> Vec<(f64, f64)> {
        let g = self.grid_side;
        let (lo, hi) = self.area;
        let coord = |i: usize| {
            if g == 1 {
                (lo + hi) / 2.0
            } else {
                lo + (hi - lo) * i as f64 / (g - 1) as f64
            }
        };
        (0..g * g).map(|idx| (coord(idx % g), coord(idx / g))).collect()
    }

    /// Index of the lattice point nearest to `p`.
    pub fn nearest_hypothesis(&self, p: (f64, f64)) -> usize {
        let pts = self.hypothesis_points();
        (0..pts.len())
            .min_by(|&a, &b| dist(pts[a], p).total_cmp(&dist(pts[b], p)))
            .expect("grid is non-empty")
    }

    /// Geometric graph on the agent positions, joined into one component.
    pub fn graph(&self) -> Graph {
        Graph::geometric(&self.agent_positions, self.radius)
    }

    fn validate(&self) -> Result<()> {
        if self.agent_positions.is_empty() || self.agent_positions.len() != self.roles.len() {
            return Err(Error::invalid("need one role per agent and at least one agent"));
        }
        if self.grid_side == 0 {
            return Err(Error::invalid("grid side must be at least 1"));
        }
        if !(self.noise_scale > 0.0 && self.truncation > 0.0) {
            return Err(Error::invalid("noise scale and truncation must be positive"));
        }
        if !(self.outlier_weight > 0.0 && self.outlier_weight < 1.0) {
            return Err(Error::invalid("outlier weight must lie in (0, 1)"));
        }
        Ok(())
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

pub fn build_localization(sc: &LocalizationScenario) -> Result<BuiltScenario> {
    sc.validate()?;
    let points = sc.hypothesis_points();
    let half = sc.truncation * sc.noise_scale;
    let labels = points.iter().map(|(x, y)| format!("({x:.4},{y:.4})")).collect();
    let hypotheses = HypothesisSet::new(labels)?;
    let mut agents = Vec::with_capacity(sc.agent_positions.len());
    for (&pos, role) in sc.agent_positions.iter().zip(&sc.roles) {
        let observed = match role {
            AgentRole::Regular | AgentRole::NoMeasurement => sc.source,
            AgentRole::Conflicting { target } => *target,
        };
        let hyp_d: Vec<f64> = points.iter().map(|&p| dist(p, pos)).collect();
        let true_d = dist(observed, pos);
        let lo = hyp_d.iter().copied().fold(true_d, f64::min) - half;
        let hi = hyp_d.iter().copied().fold(true_d, f64::max) + half;
        let spec = DiscretizationSpec::new(lo, hi, sc.bins)?;
        let agent = match role {
            AgentRole::NoMeasurement => {
                let flat = vec![1.0 / sc.bins as f64; sc.bins];
                let md = LikelihoodModel::with_realized_floor(spec.alphabet(), vec![flat.clone(); points.len()], flat)?;
                AgentSpec::uniform(md, 0.0)?
            }
            _ => {
                let rows = hyp_d
                    .iter()
                    .map(|&d| spec.truncated_gaussian(d, sc.noise_scale, half, sc.outlier_weight))
                    .collect::<Result<Vec<_>>>()?;
                let truth = spec.truncated_gaussian(true_d, sc.noise_scale, half, sc.outlier_weight)?;
                AgentSpec::uniform(LikelihoodModel::with_realized_floor(spec.alphabet(), rows, truth)?, 1.0)?
            }
        };
        agents.push(agent);
    }
    BuiltScenario::new(hypotheses, agents)
}

/// Isolated and merged versions of a network of cliques.
#[derive(Debug, Clone)]
pub struct CliqueMergeScenario {
    pub isolated: SimulationConfig,
    pub merged: SimulationConfig,
    /// Agent indices of each clique.
    pub members: Vec<Vec<usize>>,
    pub clique_optima: Vec<Vec<usize>>,
    /// Maximizers of the summed clique confidences.
    pub merged_optimum: Vec<usize>,
}

/// Complete graph inside each clique; the merged network also links the last
/// agent of each clique to the first agent of the next.
pub fn build_clique_merge(
    per_clique_models: &[Vec<AgentSpec>],
    horizon: u64,
    seed: u64,
) -> Result<CliqueMergeScenario> {
    if per_clique_models.is_empty() || per_clique_models.iter().any(Vec::is_empty) {
        return Err(Error::invalid("every clique needs at least one agent"));
    }
    let mut members = Vec::new();
    let mut offset = 0;
    for c in per_clique_models {
        members.push((offset..offset + c.len()).collect::<Vec<_>>());
        offset += c.len();
    }
    let clique_optima = per_clique_models
        .iter()
        .map(|c| optimal_set(c, DEFAULT_OPTIMAL_TOL))
        .collect::<Result<Vec<_>>>()?;
    let agents: Vec<AgentSpec> = per_clique_models.iter().flatten().cloned().collect();
    let merged_optimum = optimal_set(&agents, DEFAULT_OPTIMAL_TOL)?;

    let isolated_graph = Graph::disjoint_union(
        &per_clique_models
            .iter()
            .map(|c| Graph::complete(c.len()))
            .collect::<Vec<_>>(),
    );
    let bridges = members.windows(2).map(|w| (*w[0].last().expect("non-empty"), w[1][0]));
    let merged_graph = isolated_graph.with_edges(bridges)?;
    let config = |g: Graph| {
        let mut c = SimulationConfig::new(
            agents.clone(),
            Network::Schedule(GraphSchedule::from_rule(g, WeightRule::LazyMetropolis)),
            UpdateRuleKind::GeometricPool,
            horizon,
            seed,
        );
        c.optimal = Some(merged_optimum.clone());
        c
    };
    Ok(CliqueMergeScenario {
        isolated: config(isolated_graph),
        merged: config(merged_graph),
        members,
        clique_optima,
        merged_optimum,
    })
}

fn coin_agent(p0: &[f64], truth0: f64) -> Result<AgentSpec> {
    let rows = p0.iter().map(|&p| vec![p, 1.0 - p]).collect();
    let md = LikelihoodModel::with_realized_floor(SignalAlphabet::indexed(2)?, rows, vec![truth0, 1.0 - truth0])?;
    AgentSpec::uniform(md, 1.0)
}

/// Two cliques observing the same coin: a four-agent clique whose models
/// favor the first hypothesis and a three-agent clique favoring the second.
pub fn two_clique_models() -> Result<Vec<Vec<AgentSpec>>> {
    let a = coin_agent(&[0.6, 0.4, 0.8], 0.6)?;
    let b = coin_agent(&[0.3, 0.6, 0.9], 0.6)?;
    Ok(vec![vec![a; 4], vec![b; 3]])
}

/// Three cliques with individually different favorites.
pub fn three_clique_models() -> Result<Vec<Vec<AgentSpec>>> {
    let a = coin_agent(&[0.6, 0.45, 0.8], 0.6)?;
    let b = coin_agent(&[0.3, 0.6, 0.9], 0.6)?;
    let c = coin_agent(&[0.75, 0.55, 0.6], 0.6)?;
    Ok(vec![vec![a; 3], vec![b; 3], vec![c; 3]])
}

/// Graph families for the convergence-time sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyFamily {
    Path,
    Cycle,
    Grid,
}

impl TopologyFamily {
    pub fn graph(self, n: usize) -> Result<Graph> {
        match self {
            Self::Path => Ok(Graph::path(n)),
            Self::Cycle => Ok(Graph::cycle(n)),
            Self::Grid => {
                let side = (n as f64).sqrt().round() as usize;
                if side * side != n {
                    return Err(Error::invalid(format!("grid size {n} is not a perfect square")));
                }
                Ok(Graph::grid(side))
            }
        }
    }
}

impl fmt::Display for TopologyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Path => "path",
            Self::Cycle => "cycle",
            Self::Grid => "grid",
        })
    }
}

impl FromStr for TopologyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "path" => Ok(Self::Path),
            "cycle" => Ok(Self::Cycle),
            "grid" => Ok(Self::Grid),
            other => Err(Error::invalid(format!("unknown topology family `{other}`"))),
        }
    }
}

/// Rules compared in the sweep: geometric pooling, its accelerated variant,
/// and Bayes-then-linear-pool.
pub const SWEEP_RULES: [UpdateRuleKind; 3] = [
    UpdateRuleKind::GeometricPool,
    UpdateRuleKind::AcceleratedGeometric,
    UpdateRuleKind::BayesThenLinearPool,
];

/// One agent (node 0) tells the two hypotheses apart; for every other agent
/// both hypotheses predict a fair coin.
pub fn single_informative_agents(n: usize, informative: bool) -> Result<Vec<AgentSpec>> {
    (0..n)
        .map(|i| {
            if i == 0 && informative {
                coin_agent(&[0.9, 0.1], 0.9)
            } else {
                coin_agent(&[0.5, 0.5], 0.5)
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub n: usize,
    pub rule: UpdateRuleKind,
    pub config: SimulationConfig,
}

/// One configuration per `(size, rule)`. Lazy Metropolis weights, `U = n`,
/// `epsilon = 0.01`; every rule at a given size shares its seed.
pub fn build_topology_sweep(
    family: TopologyFamily,
    sizes: &[usize],
    rules: &[UpdateRuleKind],
    horizon: u64,
    seed: u64,
    informative: bool,
) -> Result<Vec<SweepEntry>> {
    if sizes.is_empty() || rules.is_empty() {
        return Err(Error::invalid("sweep needs at least one size and one rule"));
    }
    let mut out = Vec::with_capacity(sizes.len() * rules.len());
    for &n in sizes {
        if n == 0 {
            return Err(Error::invalid("sweep sizes must be positive"));
        }
        let graph = family.graph(n)?;
        let agents = single_informative_agents(n, informative)?;
        for &rule in rules {
            let network = match rule {
                UpdateRuleKind::AcceleratedGeometric => {
                    Network::Accelerated(AcceleratedOperator::new(graph.clone(), n)?)
                }
                _ => Network::Schedule(GraphSchedule::from_rule(graph.clone(), WeightRule::LazyMetropolis)),
            };
            let mut config =
                SimulationConfig::new(agents.clone(), network, rule, horizon, rng::derive_seed(seed, n as u64));
            config.stop_on_convergence = true;
            out.push(SweepEntry { n, rule, config });
        }
    }
    Ok(out)
}

/// Every agent sees a coin with `P(0) = 0.9` and entertains `0.9`, `0.1` and
/// `0.5`: the first hypothesis is optimal and the others trail by a strict gap.
pub fn strict_gap_agents(n: usize) -> Result<Vec<AgentSpec>> {
    (0..n).map(|_| coin_agent(&[0.9, 0.1, 0.5], 0.9)).collect()
}
