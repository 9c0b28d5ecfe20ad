//! Experiment configuration: a versioned TOML file with `scenario`, `rule`,
//! `schedule`, `run`, `output`, `sweep` and `verify` tables.

use std::path::{Path, PathBuf};

use beliefnet::graphs::{AcceleratedOperator, Graph, GraphSchedule, WeightMatrix, WeightRule};
use beliefnet::rng::Stream;
use beliefnet::rules::UpdateRuleKind;
use beliefnet::scenarios::{
    build_clique_merge, build_localization, build_two_agent_example, single_informative_agents, strict_gap_agents,
    three_clique_models, two_clique_models, DiscretizationSpec, LocalizationScenario, TopologyFamily, SWEEP_RULES,
};
use beliefnet::simulator::{Network, SimulationConfig};
use beliefnet::{AgentSpec, BeliefState, LikelihoodModel, SignalAlphabet};
use serde::Deserialize;

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub scenario: Option<ScenarioBlock>,
    #[serde(default)]
    pub rule: RuleBlock,
    #[serde(default)]
    pub schedule: ScheduleBlock,
    pub run: RunBlock,
    #[serde(default)]
    pub output: OutputBlock,
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub verify: VerifyBlock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case")]
pub enum ScenarioBlock {
    TwoAgent(TwoAgentParams),
    StrictGap(SizeParams),
    SingleInformative(InformativeParams),
    Localization(LocalizationParams),
    CliqueMerge(CliqueParams),
    Custom(CustomParams),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoAgentParams {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeParams {
    pub agents: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InformativeParams {
    pub agents: usize,
    #[serde(default = "yes")]
    pub informative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalizationPreset {
    ConflictingReduced,
    Random,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationParams {
    #[serde(default = "default_preset")]
    pub preset: LocalizationPreset,
    #[serde(default = "default_layout_seed")]
    pub layout_seed: u64,
    /// Only for the `random` preset.
    pub agents: Option<usize>,
    pub grid_side: Option<usize>,
    pub source: Option<[f64; 2]>,
    pub noise_scale: Option<f64>,
    pub truncation: Option<f64>,
    pub outlier_weight: Option<f64>,
    pub bins: Option<usize>,
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliqueParams {
    pub cliques: usize,
    #[serde(default = "yes")]
    pub merged: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomParams {
    pub agents: Vec<ModelBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// One likelihood row per hypothesis.
    pub rows: Vec<Vec<f64>>,
    pub truth: Vec<f64>,
    #[serde(default = "one")]
    pub observation_rate: f64,
    pub prior: Option<Vec<f64>>,
    /// Defaults to the smallest likelihood on the support of `truth`.
    pub support_floor: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleBlock {
    #[serde(default = "default_rule")]
    pub kind: String,
    /// Agent-count bound `U` for the accelerated rule; defaults to `n`.
    pub bound: Option<usize>,
}

impl Default for RuleBlock {
    fn default() -> Self {
        Self {
            kind: default_rule(),
            bound: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleBlock {
    /// `scenario` (the builder's own graph), `path`, `cycle`, `grid`, `complete` or `custom`.
    #[serde(default = "default_topology")]
    pub topology: String,
    pub edges: Option<Vec<[usize; 2]>>,
    /// `lazy_metropolis` or `metropolis`.
    #[serde(default = "default_weights")]
    pub weights: String,
    /// Explicit weight matrix; replaces `weights`.
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub time_varying: bool,
    /// Window length `B`.
    #[serde(default = "one_usize")]
    pub window: usize,
    /// Number of edge splits cycled through by a time-varying schedule.
    #[serde(default = "default_pool")]
    pub pool: usize,
    pub seed: Option<u64>,
}

impl Default for ScheduleBlock {
    fn default() -> Self {
        Self {
            topology: default_topology(),
            edges: None,
            weights: default_weights(),
            matrix: None,
            time_varying: false,
            window: 1,
            pool: default_pool(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub horizon: u64,
    pub seed: u64,
    #[serde(default = "one_usize")]
    pub runs: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "one_u64")]
    pub stride: u64,
    #[serde(default)]
    pub stop_on_convergence: bool,
    /// Overrides the computed optimal set as the convergence target.
    pub target: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub trajectory: bool,
    #[serde(default = "yes")]
    pub summary: bool,
    #[serde(default = "yes")]
    pub bounds: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: None,
            trajectory: true,
            summary: true,
            bounds: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub family: String,
    pub sizes: Vec<usize>,
    #[serde(default = "default_sweep_rules")]
    pub rules: Vec<String>,
    #[serde(default = "yes")]
    pub informative: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    /// Steps covered by the matrix-product checks.
    #[serde(default = "default_matrix_horizon")]
    pub matrix_horizon: u64,
    /// Steps covered by the momentum-consensus checks.
    #[serde(default = "default_accelerated_horizon")]
    pub accelerated_horizon: u64,
    #[serde(default = "yes")]
    pub matrices: bool,
    #[serde(default = "yes")]
    pub coverage: bool,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        Self {
            matrix_horizon: default_matrix_horizon(),
            accelerated_horizon: default_accelerated_horizon(),
            matrices: true,
            coverage: true,
        }
    }
}

fn yes() -> bool {
    true
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn one_u64() -> u64 {
    1
}
fn default_rule() -> String {
    "geometric".into()
}
fn default_topology() -> String {
    "scenario".into()
}
fn default_weights() -> String {
    "lazy_metropolis".into()
}
fn default_pool() -> usize {
    4
}
fn default_rho() -> f64 {
    0.1
}
fn default_epsilon() -> f64 {
    0.01
}
fn default_preset() -> LocalizationPreset {
    LocalizationPreset::ConflictingReduced
}
fn default_layout_seed() -> u64 {
    11
}
fn default_sweep_rules() -> Vec<String> {
    SWEEP_RULES.iter().map(|r| r.name().to_string()).collect()
}
fn default_matrix_horizon() -> u64 {
    60
}
fn default_accelerated_horizon() -> u64 {
    500
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {msg}"))
}

/// Agents plus the graph a builder comes with.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub agents: Vec<AgentSpec>,
    pub labels: Vec<String>,
    pub graph: Graph,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        if cfg.version != CONFIG_VERSION {
            return Err(invalid(
                "version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", cfg.version),
            ));
        }
        Ok(cfg)
    }

    pub fn rule(&self) -> Result<UpdateRuleKind, CliError> {
        self.rule.kind.parse().map_err(|e| invalid("rule.kind", e))
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let block = self
            .scenario
            .as_ref()
            .ok_or_else(|| invalid("scenario", "missing table"))?;
        let indexed = |m: usize| (0..m).map(|t| format!("theta{}", t + 1)).collect::<Vec<_>>();
        Ok(match block {
            ScenarioBlock::TwoAgent(p) => {
                let d = DiscretizationSpec::two_agent_default();
                let spec = built(
                    "scenario",
                    DiscretizationSpec::new(p.lo.unwrap_or(d.lo), p.hi.unwrap_or(d.hi), p.bins.unwrap_or(d.bins)),
                )?;
                let s = built("scenario", build_two_agent_example(&spec))?;
                Scenario {
                    labels: indexed(3),
                    agents: s.agents,
                    graph: Graph::path(2),
                }
            }
            ScenarioBlock::StrictGap(p) => {
                positive("scenario.agents", p.agents)?;
                Scenario {
                    agents: built("scenario", strict_gap_agents(p.agents))?,
                    labels: indexed(3),
                    graph: Graph::cycle(p.agents),
                }
            }
            ScenarioBlock::SingleInformative(p) => {
                positive("scenario.agents", p.agents)?;
                Scenario {
                    agents: built("scenario", single_informative_agents(p.agents, p.informative))?,
                    labels: indexed(2),
                    graph: Graph::path(p.agents),
                }
            }
            ScenarioBlock::Localization(p) => {
                let sc = localization(p)?;
                let s = built("scenario", build_localization(&sc))?;
                Scenario {
                    labels: s.hypotheses.labels().to_vec(),
                    agents: s.agents,
                    graph: sc.graph(),
                }
            }
            ScenarioBlock::CliqueMerge(p) => {
                let models = match p.cliques {
                    2 => two_clique_models(),
                    3 => three_clique_models(),
                    other => {
                        return Err(invalid(
                            "scenario.cliques",
                            format!("{other} cliques; presets exist for 2 and 3"),
                        ))
                    }
                };
                let models = built("scenario", models)?;
                let sc = built("scenario", build_clique_merge(&models, 1, 0))?;
                let Network::Schedule(s) = (if p.merged {
                    &sc.merged.network
                } else {
                    &sc.isolated.network
                }) else {
                    unreachable!("clique scenarios use weighted schedules")
                };
                Scenario {
                    labels: indexed(3),
                    graph: s.graph(0).clone(),
                    agents: sc.merged.agents,
                }
            }
            ScenarioBlock::Custom(p) => custom(p)?,
        })
    }

    /// Builds the network for `n` agents; weights are left unchecked.
    pub fn network(&self, scenario_graph: &Graph, rule: UpdateRuleKind) -> Result<Network, CliError> {
        let s = &self.schedule;
        let n = scenario_graph.n();
        let graph = match s.topology.as_str() {
            "scenario" => scenario_graph.clone(),
            "custom" => {
                let edges = s
                    .edges
                    .as_ref()
                    .ok_or_else(|| invalid("schedule.edges", "required for a custom topology"))?;
                Graph::new(n, edges.iter().map(|e| (e[0], e[1]))).map_err(|e| invalid("schedule.edges", e))?
            }
            "complete" => Graph::complete(n),
            family => family
                .parse::<TopologyFamily>()
                .and_then(|f| f.graph(n))
                .map_err(|e| invalid("schedule.topology", e))?,
        };
        if s.window == 0 {
            return Err(invalid("schedule.window", "must be at least 1"));
        }
        let weight_rule = match s.weights.as_str() {
            "lazy_metropolis" => WeightRule::LazyMetropolis,
            "metropolis" => WeightRule::Metropolis,
            other => return Err(invalid("schedule.weights", format!("unknown weight rule `{other}`"))),
        };
        if rule == UpdateRuleKind::AcceleratedGeometric {
            if s.time_varying {
                return Err(invalid(
                    "schedule.time_varying",
                    "the accelerated rule needs a static graph",
                ));
            }
            if s.matrix.is_some() || weight_rule != WeightRule::LazyMetropolis {
                return Err(invalid(
                    "schedule.weights",
                    "the accelerated rule uses lazy Metropolis weights",
                ));
            }
            let bound = self.rule.bound.unwrap_or(n);
            let op = AcceleratedOperator::new(graph, bound).map_err(|e| invalid("rule.bound", e))?;
            return Ok(Network::Accelerated(op));
        }
        if let Some(rows) = &s.matrix {
            if s.time_varying {
                return Err(invalid("schedule.matrix", "an explicit matrix cannot be time-varying"));
            }
            let w = WeightMatrix::from_rows(rows).map_err(|e| invalid("schedule.matrix", e))?;
            let schedule = GraphSchedule::fixed(graph, w).map_err(|e| invalid("schedule.matrix", e))?;
            return schedule
                .with_window(s.window)
                .map(Network::Schedule)
                .map_err(|e| invalid("schedule.window", e));
        }
        if !s.time_varying {
            let schedule = GraphSchedule::from_rule(graph, weight_rule);
            return schedule
                .with_window(s.window)
                .map(Network::Schedule)
                .map_err(|e| invalid("schedule.window", e));
        }
        let seed = s
            .seed
            .ok_or_else(|| invalid("schedule.seed", "required for a time-varying schedule"))?;
        if s.pool == 0 {
            return Err(invalid("schedule.pool", "must be at least 1"));
        }
        // each template scatters the topology's edges over the window
        let mut rng = Stream::new(seed);
        let edges: Vec<(usize, usize)> = graph.edges().collect();
        let mut templates = Vec::with_capacity(s.pool);
        for _ in 0..s.pool {
            let mut parts = vec![Vec::new(); s.window];
            for &e in &edges {
                parts[rng.below(s.window)].push(e);
            }
            let graphs = parts
                .into_iter()
                .map(|p| Graph::new(n, p))
                .collect::<beliefnet::Result<Vec<_>>>()
                .map_err(|e| invalid("schedule", e))?;
            templates.push(graphs);
        }
        GraphSchedule::pooled(templates, weight_rule, rng.next_u64())
            .map(Network::Schedule)
            .map_err(|e| invalid("schedule", e))
    }

    /// Scenario, network and run parameters assembled into a simulation.
    pub fn simulation(&self) -> Result<(SimulationConfig, Vec<String>), CliError> {
        let rule = self.rule()?;
        let scenario = self.scenario()?;
        let network = self.network(&scenario.graph, rule)?;
        let config = self.simulation_for(scenario.agents, network, rule)?;
        Ok((config, scenario.labels))
    }

    pub fn simulation_for(
        &self,
        agents: Vec<AgentSpec>,
        network: Network,
        rule: UpdateRuleKind,
    ) -> Result<SimulationConfig, CliError> {
        let r = &self.run;
        if r.runs == 0 {
            return Err(invalid("run.runs", "must be at least 1"));
        }
        if !(r.rho > 0.0 && r.rho < 1.0) {
            return Err(invalid("run.rho", "must lie in (0, 1)"));
        }
        let mut config = SimulationConfig::new(agents, network, rule, r.horizon, r.seed);
        config.epsilon = r.epsilon;
        config.record_stride = r.stride;
        config.stop_on_convergence = r.stop_on_convergence;
        config.optimal = r.target.clone();
        config.validate().map_err(|e| invalid("run", e))?;
        Ok(config)
    }

    pub fn sweep(&self) -> Result<(&SweepBlock, TopologyFamily, Vec<UpdateRuleKind>), CliError> {
        let s = self.sweep.as_ref().ok_or_else(|| invalid("sweep", "missing table"))?;
        let family = s.family.parse().map_err(|e| invalid("sweep.family", e))?;
        if s.sizes.is_empty() {
            return Err(invalid("sweep.sizes", "empty size list"));
        }
        if s.rules.is_empty() {
            return Err(invalid("sweep.rules", "empty rule list"));
        }
        let rules = s
            .rules
            .iter()
            .map(|r| r.parse::<UpdateRuleKind>())
            .collect::<beliefnet::Result<Vec<_>>>()
            .map_err(|e| invalid("sweep.rules", e))?;
        Ok((s, family, rules))
    }
}

fn built<T>(field: &str, r: beliefnet::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| invalid(field, e))
}

fn positive(field: &str, v: usize) -> Result<(), CliError> {
    if v == 0 {
        Err(invalid(field, "must be at least 1"))
    } else {
        Ok(())
    }
}

fn localization(p: &LocalizationParams) -> Result<LocalizationScenario, CliError> {
    let mut sc = match p.preset {
        LocalizationPreset::ConflictingReduced => {
            if p.agents.is_some() {
                return Err(invalid(
                    "scenario.agents",
                    "fixed at 10 by the conflicting_reduced preset",
                ));
            }
            if p.grid_side.is_some() {
                return Err(invalid(
                    "scenario.grid_side",
                    "fixed at 10 by the conflicting_reduced preset",
                ));
            }
            LocalizationScenario::conflicting_reduced(p.layout_seed)
        }
        LocalizationPreset::Random => {
            let n = p
                .agents
                .ok_or_else(|| invalid("scenario.agents", "required for the random preset"))?;
            positive("scenario.agents", n)?;
            let g = p.grid_side.unwrap_or(10);
            positive("scenario.grid_side", g)?;
            let mut sc = LocalizationScenario::random(n, g, (0.0, 0.0), p.layout_seed);
            sc.source = sc.hypothesis_points()[sc.hypothesis_points().len() / 3];
            sc
        }
    };
    if let Some([x, y]) = p.source {
        sc.source = (x, y);
    }
    if let Some(c) = p.noise_scale {
        sc.noise_scale = c;
    }
    if let Some(t) = p.truncation {
        sc.truncation = t;
    }
    if let Some(o) = p.outlier_weight {
        sc.outlier_weight = o;
    }
    if let Some(b) = p.bins {
        sc.bins = b;
    }
    if let Some(r) = p.radius {
        sc.radius = r;
    }
    Ok(sc)
}

fn custom(p: &CustomParams) -> Result<Scenario, CliError> {
    if p.agents.is_empty() {
        return Err(invalid("scenario.agents", "need at least one agent"));
    }
    let m = p.agents[0].rows.len();
    let mut agents = Vec::with_capacity(p.agents.len());
    for (i, a) in p.agents.iter().enumerate() {
        let field = format!("scenario.agents[{i}]");
        let signals = a.truth.len();
        let alphabet = SignalAlphabet::indexed(signals).map_err(|e| invalid(&field, e))?;
        let model = match a.support_floor {
            Some(floor) => LikelihoodModel::new(alphabet, a.rows.clone(), a.truth.clone(), floor),
            None => LikelihoodModel::with_realized_floor(alphabet, a.rows.clone(), a.truth.clone()),
        }
        .map_err(|e| invalid(&field, e))?;
        let prior = match &a.prior {
            Some(p) => BeliefState::from_probabilities(p).map_err(|e| invalid(&format!("{field}.prior"), e))?,
            None => beliefnet::types::uniform_prior(m).map_err(|e| invalid(&field, e))?,
        };
        agents.push(AgentSpec::new(model, a.observation_rate, prior).map_err(|e| invalid(&field, e))?);
    }
    let n = agents.len();
    Ok(Scenario {
        agents,
        labels: (0..m).map(|t| format!("theta{}", t + 1)).collect(),
        graph: Graph::complete(n),
    })
}
