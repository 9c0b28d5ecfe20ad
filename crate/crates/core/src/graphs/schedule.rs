use super::{Graph, WeightMatrix, WeightRule};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Sequence of graphs `G_k` with weights `A_k`.
///
/// Either a single static graph, or windows of `B` consecutive steps whose
/// graphs are copied from a template picked by a seeded hash of the window
/// index. Every template's union graph is connected, so pooled schedules are
/// `B`-strongly connected by construction.
#[derive(Debug, Clone)]
pub struct GraphSchedule {
    n: usize,
    window: usize,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Static {
        graph: Graph,
        weights: WeightMatrix,
    },
    Pooled {
        templates: Vec<Vec<(Graph, WeightMatrix)>>,
        seed: u64,
    },
}

impl GraphSchedule {
    /// A fixed graph and matrix at every step. The matrix is not validated here.
    pub fn fixed(graph: Graph, weights: WeightMatrix) -> Result<Self> {
        if graph.n() != weights.n() {
            return Err(Error::invalid(format!(
                "graph has {} nodes, weight matrix has {}",
                graph.n(),
                weights.n()
            )));
        }
        Ok(Self {
            n: graph.n(),
            window: 1,
            kind: Kind::Static { graph, weights },
        })
    }

    pub fn from_rule(graph: Graph, rule: WeightRule) -> Self {
        let weights = rule.apply(&graph);
        Self::fixed(graph, weights).expect("rule output matches graph")
    }

    /// Declares a different window length; only meaningful for static schedules.
    pub fn with_window(mut self, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::invalid("window B must be at least 1"));
        }
        if let Kind::Pooled { templates, .. } = &self.kind {
            if templates[0].len() != window {
                return Err(Error::invalid("pooled schedule window is fixed by its templates"));
            }
        }
        self.window = window;
        Ok(self)
    }

    /// Pooled schedule: each template is a list of `B` graphs whose union must be connected.
    pub fn pooled(templates: Vec<Vec<Graph>>, rule: WeightRule, seed: u64) -> Result<Self> {
        let first = templates.first().ok_or_else(|| Error::invalid("empty template pool"))?;
        let window = first.len();
        if window == 0 {
            return Err(Error::invalid("template with zero graphs"));
        }
        let n = first[0].n();
        let mut built = Vec::with_capacity(templates.len());
        for (t, template) in templates.into_iter().enumerate() {
            if template.len() != window {
                return Err(Error::invalid(format!(
                    "template {t} has {} graphs, expected {window}",
                    template.len()
                )));
            }
            let mut union = Graph::empty(n);
            for g in &template {
                union = union.union(g)?;
            }
            if !union.is_connected() {
                return Err(Error::invalid(format!("template {t} has a disconnected union graph")));
            }
            built.push(
                template
                    .into_iter()
                    .map(|g| {
                        let w = rule.apply(&g);
                        (g, w)
                    })
                    .collect(),
            );
        }
        Ok(Self {
            n,
            window,
            kind: Kind::Pooled { templates: built, seed },
        })
    }

    /// Random pooled schedule: each template spreads the edges of a random
    /// connected graph over `window` steps.
    pub fn random_pooled(n: usize, window: usize, pool: usize, rule: WeightRule, seed: u64) -> Result<Self> {
        if window == 0 || pool == 0 || n == 0 {
            return Err(Error::invalid("random schedule needs n, window and pool size >= 1"));
        }
        let mut rng = Stream::new(seed);
        let mut templates = Vec::with_capacity(pool);
        for _ in 0..pool {
            let base = Graph::random_connected(n, 0.1, rng.next_u64());
            let mut parts = vec![Vec::new(); window];
            for e in base.edges() {
                parts[rng.below(window)].push(e);
            }
            let graphs = parts
                .into_iter()
                .map(|edges| Graph::new(n, edges))
                .collect::<Result<Vec<_>>>()?;
            templates.push(graphs);
        }
        Self::pooled(templates, rule, rng.next_u64())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn is_static(&self) -> bool {
        matches!(self.kind, Kind::Static { .. })
    }

    pub fn at(&self, k: u64) -> (&Graph, &WeightMatrix) {
        match &self.kind {
            Kind::Static { graph, weights } => (graph, weights),
            Kind::Pooled { templates, seed } => {
                let b = self.window as u64;
                let pick = rng::hash(*seed, &[k / b]);
                let t = ((pick as u128 * templates.len() as u128) >> 64) as usize;
                let (g, w) = &templates[t][(k % b) as usize];
                (g, w)
            }
        }
    }

    pub fn matrix(&self, k: u64) -> &WeightMatrix {
        self.at(k).1
    }

    pub fn graph(&self, k: u64) -> &Graph {
        self.at(k).0
    }

    /// Every distinct (graph, matrix) pair the schedule can emit.
    pub fn distinct_steps(&self) -> Vec<(&Graph, &WeightMatrix)> {
        match &self.kind {
            Kind::Static { graph, weights } => vec![(graph, weights)],
            Kind::Pooled { templates, .. } => templates.iter().flatten().map(|(g, w)| (g, w)).collect(),
        }
    }

    /// Smallest positive weight realized over steps `k0 .. k0 + horizon`.
    pub fn realized_eta(&self, k0: u64, horizon: u64) -> f64 {
        match &self.kind {
            Kind::Static { weights, .. } => weights.min_positive_entry(),
            Kind::Pooled { .. } => (k0..k0 + horizon.max(1))
                .map(|k| self.matrix(k).min_positive_entry())
                .fold(f64::INFINITY, f64::min),
        }
    }
}

/// Whether every aligned window `[wB, (w+1)B - 1]` lying inside
/// `[k0, k0 + horizon)` has a connected union graph.
pub fn check_b_strong_connectivity(schedule: &GraphSchedule, k0: u64, horizon: u64) -> Result<bool> {
    let b = schedule.window() as u64;
    if !horizon.is_multiple_of(b) {
        return Err(Error::invalid(format!(
            "horizon {horizon} is not a multiple of B = {b}"
        )));
    }
    let first = k0.div_ceil(b);
    let end = k0 + horizon;
    let mut w = first;
    while (w + 1) * b <= end {
        let mut union = Graph::empty(schedule.n());
        for k in w * b..(w + 1) * b {
            union = union.union(schedule.graph(k))?;
        }
        if !union.is_connected() {
            return Ok(false);
        }
        w += 1;
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_connected_schedule_passes_for_any_window() {
        for b in 1..5 {
            let s = GraphSchedule::from_rule(Graph::cycle(5), WeightRule::LazyMetropolis)
                .with_window(b)
                .unwrap();
            assert!(check_b_strong_connectivity(&s, 0, 20 * b as u64).unwrap());
        }
    }

    #[test]
    fn alternating_matchings_form_a_cycle() {
        let m1 = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        let m2 = Graph::new(4, [(1, 2), (3, 0)]).unwrap();
        let s = GraphSchedule::pooled(vec![vec![m1.clone(), m2.clone()]], WeightRule::Metropolis, 3).unwrap();
        assert_eq!(s.window(), 2);
        assert!(check_b_strong_connectivity(&s, 0, 40).unwrap());
        assert_eq!(s.graph(0), &m1);
        assert_eq!(s.graph(1), &m2);
        assert_eq!(s.graph(7), &m2);
        // each matching alone is disconnected
        let single = GraphSchedule::from_rule(m1, WeightRule::Metropolis);
        assert!(!check_b_strong_connectivity(&single, 0, 10).unwrap());
    }

    #[test]
    fn empty_graph_forever_fails() {
        for b in 1..4 {
            let s = GraphSchedule::from_rule(Graph::empty(3), WeightRule::Metropolis)
                .with_window(b)
                .unwrap();
            assert!(!check_b_strong_connectivity(&s, 0, 6 * b as u64).unwrap());
        }
    }

    #[test]
    fn horizon_must_be_multiple_of_window() {
        let s = GraphSchedule::from_rule(Graph::cycle(4), WeightRule::Metropolis)
            .with_window(3)
            .unwrap();
        assert!(check_b_strong_connectivity(&s, 0, 10).is_err());
    }

    #[test]
    fn disconnected_template_rejected() {
        let g = Graph::new(4, [(0, 1)]).unwrap();
        assert!(GraphSchedule::pooled(vec![vec![g]], WeightRule::Metropolis, 0).is_err());
    }

    #[test]
    fn random_pooled_schedules_are_b_connected() {
        for seed in 0..20 {
            let b = 1 + seed as usize % 4;
            let s = GraphSchedule::random_pooled(3 + seed as usize, b, 4, WeightRule::LazyMetropolis, seed).unwrap();
            assert!(check_b_strong_connectivity(&s, 0, 50 * b as u64).unwrap());
            for (g, w) in s.distinct_steps() {
                assert!(w.violations(Some(g)).is_empty());
            }
            assert!(s.realized_eta(0, 100) > 0.0);
        }
    }

    #[test]
    fn schedule_is_a_pure_function_of_step() {
        let s = GraphSchedule::random_pooled(6, 2, 5, WeightRule::Metropolis, 11).unwrap();
        let again = GraphSchedule::random_pooled(6, 2, 5, WeightRule::Metropolis, 11).unwrap();
        for k in (0..100).rev() {
            assert_eq!(s.graph(k), again.graph(k));
        }
    }
}
