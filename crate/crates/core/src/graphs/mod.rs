//! Communication graphs, doubly-stochastic weights, schedules, and the
//! matrix-product bounds that govern how fast information mixes.

mod accelerated;
mod mixing;
mod schedule;
mod weights;

pub use accelerated::{
    accelerated_consensus_step, effective_operator_row, AcceleratedAudit, AcceleratedOperator, EffectiveOperators,
};
pub use mixing::{cumulative_mixing_sum, mixing_bound_lambda, product_chain, MixingAudit, ProductChain};
pub use schedule::{check_b_strong_connectivity, GraphSchedule};
pub use weights::{
    lazy_metropolis_weights, metropolis_weights, WeightMatrix, WeightRule, WeightViolation, STOCHASTIC_TOL,
};

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Undirected graph on nodes `0..n`. Self-loops are implicit and never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    /// Edges are unordered; `(a, b)` and `(b, a)` are the same edge.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::invalid(format!("explicit self-loop at node {a}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::invalid(format!("duplicate edge ({a}, {b})")));
            }
        }
        Ok(Self { n, edges: set })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn path(n: usize) -> Self {
        Self {
            n,
            edges: (1..n).map(|i| (i - 1, i)).collect(),
        }
    }

    pub fn cycle(n: usize) -> Self {
        let mut g = Self::path(n);
        if n >= 3 {
            g.edges.insert((0, n - 1));
        }
        g
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        Self { n, edges }
    }

    /// `side x side` lattice with 4-neighborhoods, nodes numbered row-major.
    pub fn grid(side: usize) -> Self {
        let mut edges = BTreeSet::new();
        for r in 0..side {
            for c in 0..side {
                let v = r * side + c;
                if c + 1 < side {
                    edges.insert((v, v + 1));
                }
                if r + 1 < side {
                    edges.insert((v, v + side));
                }
            }
        }
        Self { n: side * side, edges }
    }

    /// Random spanning tree plus each remaining pair with probability `extra`.
    pub fn random_connected(n: usize, extra: f64, seed: u64) -> Self {
        let mut rng = Stream::new(seed);
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let mut edges = BTreeSet::new();
        for i in 1..n {
            let parent = order[rng.below(i)];
            let v = order[i];
            edges.insert((v.min(parent), v.max(parent)));
        }
        for a in 0..n {
            for b in a + 1..n {
                if rng.next_f64() < extra {
                    edges.insert((a, b));
                }
            }
        }
        Self { n, edges }
    }

    /// Links points closer than `radius`, then joins any remaining components
    /// through their closest pair of points.
    pub fn geometric(points: &[(f64, f64)], radius: f64) -> Self {
        let n = points.len();
        let dist = |a: usize, b: usize| {
            let (dx, dy) = (points[a].0 - points[b].0, points[a].1 - points[b].1);
            (dx * dx + dy * dy).sqrt()
        };
        let mut g = Self::empty(n);
        for a in 0..n {
            for b in a + 1..n {
                if dist(a, b) <= radius {
                    g.edges.insert((a, b));
                }
            }
        }
        loop {
            let comp = g.components();
            if comp.iter().all(|&c| c == comp[0]) {
                break;
            }
            let mut best = (f64::INFINITY, 0, 0);
            for a in 0..n {
                for b in 0..n {
                    if comp[a] == comp[0] && comp[b] != comp[0] && dist(a, b) < best.0 {
                        best = (dist(a, b), a, b);
                    }
                }
            }
            g.edges.insert((best.1.min(best.2), best.1.max(best.2)));
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| match (a == node, b == node) {
                (true, _) => Some(b),
                (_, true) => Some(a),
                _ => None,
            })
            .collect()
    }

    /// Graph on the same nodes with the edges of both.
    pub fn union(&self, other: &Graph) -> Result<Graph> {
        if self.n != other.n {
            return Err(Error::invalid(format!(
                "union of graphs with {} and {} nodes",
                self.n, other.n
            )));
        }
        Ok(Self {
            n: self.n,
            edges: self.edges.union(&other.edges).copied().collect(),
        })
    }

    /// Adds edges, ignoring ones already present.
    pub fn with_edges(&self, extra: impl IntoIterator<Item = (usize, usize)>) -> Result<Graph> {
        let mut g = self.clone();
        for (a, b) in extra {
            if a >= self.n || b >= self.n || a == b {
                return Err(Error::invalid(format!("bad edge ({a}, {b})")));
            }
            g.edges.insert((a.min(b), a.max(b)));
        }
        Ok(g)
    }

    /// Nodes of each part renumbered consecutively, no edges between parts.
    pub fn disjoint_union(parts: &[Graph]) -> Graph {
        let mut offset = 0;
        let mut edges = BTreeSet::new();
        for p in parts {
            edges.extend(p.edges.iter().map(|&(a, b)| (a + offset, b + offset)));
            offset += p.n;
        }
        Self { n: offset, edges }
    }

    /// Component label per node (label = smallest node in the component).
    pub fn components(&self) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(a, b) in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        // roots always point to the smaller root, so each root is its component's minimum
        (0..self.n).map(|x| find(&mut parent, x)).collect()
    }

    /// True for `n <= 1`.
    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topologies() {
        assert_eq!(Graph::path(4).edge_count(), 3);
        assert_eq!(Graph::cycle(6).edge_count(), 6);
        assert_eq!(Graph::cycle(2).edge_count(), 1);
        assert_eq!(Graph::complete(5).edge_count(), 10);
        assert_eq!(Graph::grid(3).edge_count(), 12);
        assert_eq!(Graph::grid(3).degrees()[4], 4);
        for g in [
            Graph::path(5),
            Graph::cycle(5),
            Graph::grid(4),
            Graph::complete(3),
            Graph::path(1),
        ] {
            assert!(g.is_connected());
        }
        assert!(!Graph::empty(3).is_connected());
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Graph::new(3, [(0, 3)]).is_err());
        assert!(Graph::new(3, [(1, 1)]).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0)]).is_err());
    }

    #[test]
    fn random_graphs_are_connected() {
        for seed in 0..50 {
            let g = Graph::random_connected(2 + (seed as usize % 30), 0.05, seed);
            assert!(g.is_connected());
        }
    }

    #[test]
    fn geometric_graph_is_connected() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (10.0, 0.0), (11.0, 0.5), (30.0, 30.0)];
        let g = Graph::geometric(&pts, 2.0);
        assert!(g.is_connected());
        assert!(g.has_edge(0, 1));
        assert!(g.has_edge(2, 3));
    }

    #[test]
    fn disjoint_union_keeps_parts_apart() {
        let g = Graph::disjoint_union(&[Graph::complete(3), Graph::path(2)]);
        assert_eq!(g.n(), 5);
        assert!(g.has_edge(3, 4));
        assert_eq!(g.components(), vec![0, 0, 0, 3, 3]);
    }
}
