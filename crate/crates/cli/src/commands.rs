//! `run`, `sweep` and `verify`. All computation finishes before any file is
//! written, and every file is written from this thread.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use beliefnet::analysis::{log_bound, RateConstants};
use beliefnet::graphs::{
    check_b_strong_connectivity, mixing_bound_lambda, AcceleratedAudit, AcceleratedOperator, GraphSchedule,
    MixingAudit, WeightMatrix, STOCHASTIC_TOL,
};
use beliefnet::rules::UpdateRuleKind;
use beliefnet::scenarios::build_topology_sweep;
use beliefnet::simulator::{monte_carlo, run_observed, MonteCarloSummary, Network, SimulationConfig};

use crate::config::ExperimentConfig;
use crate::CliError;

pub struct Options {
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

fn out_dir(cfg: &ExperimentConfig, opts: &Options) -> Result<PathBuf, CliError> {
    let dir = opts
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("beliefnet-out"));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Largest row-sum, column-sum or sign defect of a weight matrix.
fn stochastic_defect(w: &WeightMatrix) -> f64 {
    let a = w.entries();
    let rows = a.row_iter().map(|r| (r.sum() - 1.0).abs());
    let cols = a.column_iter().map(|c| (c.sum() - 1.0).abs());
    let neg = a.iter().map(|v| -v);
    rows.chain(cols).chain(neg).fold(0.0, f64::max)
}

fn check_weights(config: &SimulationConfig) -> Result<(), CliError> {
    if let Network::Schedule(s) = &config.network {
        for (g, w) in s.distinct_steps() {
            let v = w.violations(Some(g));
            if !v.is_empty() {
                return Err(CliError::Validation(format!(
                    "schedule: weight matrix violates {:?}",
                    v[0]
                )));
            }
        }
    }
    Ok(())
}

fn failures_error(summary: &MonteCarloSummary) -> Result<(), CliError> {
    if summary.failures.is_empty() {
        return Ok(());
    }
    let mut msg = format!("{} of {} runs failed:", summary.failures.len(), summary.runs);
    for f in &summary.failures {
        let _ = write!(msg, "\n  run {} (seed {}): {}", f.run, f.seed, f.error);
    }
    Err(CliError::Runtime(msg))
}

fn constants_csv(c: &RateConstants) -> String {
    let mut s = String::from("key,value\n");
    let _ = writeln!(s, "theorem,{:?}", c.theorem);
    for (k, v) in [
        ("alpha", c.alpha),
        ("eta", c.eta),
        ("lambda", c.lambda),
        ("gamma2", c.gamma2),
        ("rho", c.rho),
    ] {
        let _ = writeln!(s, "{k},{}", num(v));
    }
    let _ = writeln!(s, "window,{}", c.window);
    let _ = writeln!(s, "n_rho,{}", c.n_rho);
    let _ = writeln!(s, "bound,{}", opt(c.bound));
    let _ = writeln!(s, "sigma,{}", opt(c.sigma.map(num)));
    for (i, g) in c.gamma1.iter().enumerate() {
        let _ = writeln!(s, "gamma1_{i},{}", num(*g));
    }
    s
}

pub fn cmd_run(cfg: &ExperimentConfig, opts: &Options) -> Result<(), CliError> {
    let (config, labels) = cfg.simulation()?;
    check_weights(&config)?;
    let dir = out_dir(cfg, opts)?;
    let summary = monte_carlo(&config, cfg.run.runs, cfg.run.rho).map_err(|e| CliError::Runtime(e.to_string()))?;
    let seed0 = summary.seeds[0];
    let traj =
        run_observed(&config, seed0, |_| {}).map_err(|e| CliError::Runtime(format!("run 0 (seed {seed0}): {e}")))?;

    if cfg.output.trajectory {
        let path = dir.join("trajectory.csv");
        let file =
            fs::File::create(&path).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        traj.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    if cfg.output.summary {
        let mut s = String::from("run,seed,convergence_time,bound_violation,final_max_off_target\n");
        for r in 0..summary.runs {
            let _ = writeln!(
                s,
                "{r},{},{},{},{}",
                summary.seeds[r],
                opt(summary.convergence_times[r]),
                opt(summary.bound_violations[r].map(u8::from)),
                num(summary.final_off_target[r])
            );
        }
        write_file(&dir, "summary.csv", &s)?;
        let mut b = String::from("agent,theta,label,belief\n");
        for (i, belief) in traj.last().beliefs.iter().enumerate() {
            for (t, l) in belief.log_probs().iter().enumerate() {
                let _ = writeln!(b, "{i},{t},\"{}\",{}", labels[t], num(l.exp()));
            }
        }
        write_file(&dir, "final_beliefs.csv", &b)?;
        if let Some(c) = &summary.rate_constants {
            write_file(&dir, "rate_constants.csv", &constants_csv(c))?;
        }
    }
    if cfg.output.bounds {
        let mut s = String::from("k,after_n_rho,log_bound,bound,max_off_target,median_off_target\n");
        for q in &summary.quantiles {
            let (after, lb) = match &summary.rate_constants {
                Some(c) => {
                    let lb = (0..config.n())
                        .map(|i| log_bound(c, q.k, i))
                        .fold(f64::NEG_INFINITY, f64::max);
                    (u8::from(q.k >= c.n_rho).to_string(), Some(lb))
                }
                None => (String::new(), None),
            };
            let _ = writeln!(
                s,
                "{},{after},{},{},{},{}",
                q.k,
                opt(lb.map(num)),
                opt(lb.map(|l| num(l.exp().min(1.0)))),
                num(q.max),
                num(q.median)
            );
        }
        write_file(&dir, "bounds.csv", &s)?;
    }

    if !opts.quiet {
        let target: Vec<&str> = summary.target.iter().map(|&t| labels[t].as_str()).collect();
        println!(
            "rule {} | {} agents | optimal set {{{}}}",
            config.rule,
            config.n(),
            target.join(", ")
        );
        match summary.median_convergence() {
            Some(t) => println!("median convergence time {t} over {} run(s)", summary.runs),
            None => println!("median run did not converge within {} steps", config.horizon),
        }
        if let Some(f) = summary.violation_fraction() {
            println!("bound violation fraction {f:.4} (rho = {})", cfg.run.rho);
        }
        println!("artifacts in {}", dir.display());
    }
    failures_error(&summary)
}

pub fn cmd_sweep(cfg: &ExperimentConfig, opts: &Options) -> Result<(), CliError> {
    let (block, family, rules) = cfg.sweep()?;
    let r = &cfg.run;
    if r.runs == 0 {
        return Err(CliError::Validation("run.runs: must be at least 1".into()));
    }
    let entries = build_topology_sweep(family, &block.sizes, &rules, r.horizon, r.seed, block.informative)
        .map_err(|e| CliError::Validation(format!("sweep: {e}")))?;
    let dir = out_dir(cfg, opts)?;
    let mut results = Vec::with_capacity(entries.len());
    for mut e in entries {
        e.config.epsilon = r.epsilon;
        e.config.record_stride = r.stride;
        e.config
            .validate()
            .map_err(|err| CliError::Validation(format!("run: {err}")))?;
        let summary = monte_carlo(&e.config, r.runs, r.rho).map_err(|err| CliError::Runtime(err.to_string()))?;
        if !opts.quiet {
            println!(
                "{family} n={} {}: median {}",
                e.n,
                e.rule,
                opt(summary.median_convergence())
            );
        }
        results.push((e.n, e.rule, summary));
    }

    let mut s = String::from("family,n,rule,runs,converged,median_convergence,mean_convergence\n");
    for (n, rule, m) in &results {
        let mean = m.mean_convergence();
        let _ = writeln!(
            s,
            "{family},{n},{rule},{},{},{},{}",
            m.runs,
            mean.map_or(0, |(_, c)| c),
            opt(m.median_convergence()),
            opt(mean.map(|(v, _)| v))
        );
    }
    write_file(&dir, "sweep_summary.csv", &s)?;

    let mut c = String::from("n");
    for rule in &rules {
        let _ = write!(c, ",{rule}");
    }
    c.push('\n');
    for &n in &block.sizes {
        let _ = write!(c, "{n}");
        for rule in &rules {
            let med = results
                .iter()
                .find(|(m, r2, _)| *m == n && r2 == rule)
                .and_then(|(_, _, s)| s.median_convergence());
            let _ = write!(c, ",{}", opt(med));
        }
        c.push('\n');
    }
    write_file(&dir, "sweep_curves.csv", &c)?;

    for (_, _, m) in &results {
        failures_error(m)?;
    }
    Ok(())
}

struct Check {
    name: String,
    passed: bool,
    margin: f64,
    detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, margin: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            margin,
            detail: detail.into(),
        }
    }
}

fn matrix_checks(schedule: &GraphSchedule, horizon: u64, checks: &mut Vec<Check>) -> Result<(), CliError> {
    let rt = |e: beliefnet::Error| CliError::Runtime(e.to_string());
    let n = schedule.n();
    let mut defect: f64 = 0.0;
    let mut violations = 0;
    for (g, w) in schedule.distinct_steps() {
        defect = defect.max(stochastic_defect(w));
        violations += w.violations(Some(g)).len();
    }
    checks.push(Check::new(
        "weights.doubly_stochastic",
        violations == 0,
        defect - STOCHASTIC_TOL,
        format!("{violations} violation(s), worst defect {defect:.3e}"),
    ));

    let b = schedule.window() as u64;
    let horizon = horizon.max(1).div_ceil(b) * b;
    let connected = check_b_strong_connectivity(schedule, 0, horizon).map_err(rt)?;
    checks.push(Check::new(
        "schedule.b_strong_connectivity",
        connected,
        0.0,
        format!("B = {b}, {horizon} steps"),
    ));

    let eta = schedule.realized_eta(0, horizon);
    if !(eta > 0.0 && eta <= 1.0) {
        checks.push(Check::new(
            "mixing.envelope",
            false,
            f64::INFINITY,
            format!("realized eta {eta} outside (0, 1]"),
        ));
        return Ok(());
    }
    let lambda = mixing_bound_lambda(n, eta, schedule.window(), false).map_err(rt)?;
    let audit = MixingAudit::run(schedule, lambda, horizon);
    checks.push(Check::new(
        "mixing.envelope",
        audit.envelope_violations == 0,
        audit.envelope_margin,
        format!(
            "lambda {lambda:.6}, {} products, {} violation(s)",
            audit.pairs_checked, audit.envelope_violations
        ),
    ));
    checks.push(Check::new(
        "mixing.cumulative",
        audit.cumulative_violations == 0,
        audit.cumulative_margin,
        format!(
            "bound {:.4}, {} violation(s)",
            audit.cumulative_bound, audit.cumulative_violations
        ),
    ));
    Ok(())
}

fn accelerated_checks(op: &AcceleratedOperator, horizon: u64, checks: &mut Vec<Check>) -> Result<(), CliError> {
    let mut start = vec![0.0; op.n()];
    start[0] = 1.0;
    let audit = AcceleratedAudit::run(op, horizon, &start).map_err(|e| CliError::Runtime(e.to_string()))?;
    checks.push(Check::new(
        "accelerated.envelope",
        audit.envelope_violations == 0,
        audit.envelope_margin,
        format!(
            "U = {}, 2 <= k <= {horizon}, {} violation(s)",
            op.bound(),
            audit.envelope_violations
        ),
    ));
    checks.push(Check::new(
        "accelerated.contraction",
        audit.contraction_violations == 0,
        audit.contraction_margin,
        format!("1 <= k <= {horizon}, {} violation(s)", audit.contraction_violations),
    ));
    Ok(())
}

pub fn cmd_verify(cfg: &ExperimentConfig, opts: &Options) -> Result<(), CliError> {
    let rule = cfg.rule()?;
    let scenario = cfg.scenario()?;
    let network = cfg.network(&scenario.graph, rule)?;
    let v = &cfg.verify;
    let mut checks = Vec::new();

    if v.matrices {
        match &network {
            Network::Schedule(s) => {
                matrix_checks(s, v.matrix_horizon, &mut checks)?;
                let graph = s.graph(0);
                if s.is_static() && graph.is_connected() {
                    let bound = cfg.rule.bound.unwrap_or(graph.n()).max(graph.n());
                    let op =
                        AcceleratedOperator::new(graph.clone(), bound).map_err(|e| CliError::Runtime(e.to_string()))?;
                    accelerated_checks(&op, v.accelerated_horizon, &mut checks)?;
                }
            }
            Network::Accelerated(op) => {
                let lazy = GraphSchedule::fixed(op.graph().clone(), op.base().clone())
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                matrix_checks(&lazy, v.matrix_horizon, &mut checks)?;
                accelerated_checks(op, v.accelerated_horizon, &mut checks)?;
            }
        }
    }

    if v.coverage
        && matches!(
            rule,
            UpdateRuleKind::GeometricPool | UpdateRuleKind::AcceleratedGeometric
        )
    {
        let config = cfg.simulation_for(scenario.agents, network, rule)?;
        let name = format!("coverage.{rule}");
        let summary = monte_carlo(&config, cfg.run.runs, cfg.run.rho).map_err(|e| CliError::Runtime(e.to_string()))?;
        failures_error(&summary)?;
        match (&summary.rate_constants, summary.violation_fraction()) {
            (Some(c), Some(frac)) if config.horizon >= c.n_rho => checks.push(Check::new(
                name,
                frac <= cfg.run.rho,
                frac - cfg.run.rho,
                format!(
                    "{} runs, violation fraction {frac:.4}, N(rho) = {}",
                    summary.runs, c.n_rho
                ),
            )),
            (Some(c), _) => checks.push(Check::new(
                name,
                false,
                f64::INFINITY,
                format!(
                    "horizon {} ends before N(rho) = {}; nothing to check",
                    config.horizon, c.n_rho
                ),
            )),
            (None, _) => checks.push(Check::new(
                name,
                false,
                f64::INFINITY,
                "no rate constants: every hypothesis is optimal",
            )),
        }
    }

    let mut report = String::from("check,status,margin,detail\n");
    for c in &checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("{status} {:<32} margin {:+.3e}  {}", c.name, c.margin, c.detail);
        let _ = writeln!(report, "{},{status},{},\"{}\"", c.name, num(c.margin), c.detail);
    }
    let dir = out_dir(cfg, opts)?;
    write_file(&dir, "verify.csv", &report)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if checks.is_empty() {
        return Err(CliError::Validation("verify: no checks requested".into()));
    }
    if failed > 0 {
        return Err(CliError::Verification(format!(
            "{failed} of {} checks failed",
            checks.len()
        )));
    }
    if !opts.quiet {
        println!("all {} checks passed", checks.len());
    }
    Ok(())
}
