use beliefnet::analysis::{optimal_set, DEFAULT_OPTIMAL_TOL};
use beliefnet::graphs::{AcceleratedOperator, Graph, GraphSchedule, WeightRule};
use beliefnet::rules::UpdateRuleKind;
use beliefnet::scenarios::{build_two_agent_example, strict_gap_agents, DiscretizationSpec};
use beliefnet::simulator::{monte_carlo, run, Network, SimulationConfig};

fn strict_gap(rule: UpdateRuleKind, horizon: u64) -> SimulationConfig {
    let graph = Graph::cycle(5);
    let network = match rule {
        UpdateRuleKind::AcceleratedGeometric => Network::Accelerated(AcceleratedOperator::new(graph, 5).unwrap()),
        _ => Network::Schedule(GraphSchedule::from_rule(graph, WeightRule::LazyMetropolis)),
    };
    SimulationConfig::new(strict_gap_agents(5).unwrap(), network, rule, horizon, 42)
}

#[test]
fn ensemble_is_independent_of_thread_count() {
    let cfg = strict_gap(UpdateRuleKind::GeometricPool, 400);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| monte_carlo(&cfg, 16, 0.1).unwrap());
    let b = four.install(|| monte_carlo(&cfg, 16, 0.1).unwrap());
    assert_eq!(a, b);
}

#[test]
fn both_proposed_rules_reach_the_optimum() {
    for rule in [UpdateRuleKind::GeometricPool, UpdateRuleKind::AcceleratedGeometric] {
        let cfg = strict_gap(rule, 1500);
        let optimum = optimal_set(&cfg.agents, DEFAULT_OPTIMAL_TOL).unwrap();
        assert_eq!(optimum, vec![0]);
        let traj = run(&cfg).unwrap();
        assert!(traj.convergence_time.is_some(), "{}", rule.name());
        assert!(traj.last().beliefs.iter().all(|b| b.prob(0) > 0.99));
    }
}

#[test]
fn two_agent_example_needs_both_agents() {
    let built = build_two_agent_example(&DiscretizationSpec::two_agent_default()).unwrap();
    assert_eq!(built.expected_optimal, vec![1]);
    for agent in &built.agents {
        let alone = optimal_set(std::slice::from_ref(agent), DEFAULT_OPTIMAL_TOL).unwrap();
        assert_ne!(alone, vec![1]);
    }
}
