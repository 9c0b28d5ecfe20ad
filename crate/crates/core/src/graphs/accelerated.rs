use nalgebra::DMatrix;

use super::{lazy_metropolis_weights, Graph, WeightMatrix};
use crate::error::{Error, Result};

/// Momentum consensus on a fixed graph: lazy Metropolis base `A`, momentum
/// `sigma = 1 - 2/(9U + 1)` for a known bound `U >= n`, and the `2n x 2n`
/// block matrix `[[(1+sigma)A, -sigma A], [I, 0]]`.
#[derive(Debug, Clone)]
pub struct AcceleratedOperator {
    graph: Graph,
    base: WeightMatrix,
    sigma: f64,
    bound: usize,
    block: DMatrix<f64>,
}

impl AcceleratedOperator {
    pub fn new(graph: Graph, bound: usize) -> Result<Self> {
        let n = graph.n();
        if n == 0 {
            return Err(Error::invalid("accelerated operator needs at least one node"));
        }
        if bound < n {
            return Err(Error::invalid(format!("U = {bound} must be at least n = {n}")));
        }
        if !graph.is_connected() {
            return Err(Error::invalid("accelerated operator needs a connected graph"));
        }
        let base = lazy_metropolis_weights(&graph);
        let sigma = momentum(bound);
        let a = base.entries();
        let block = DMatrix::from_fn(2 * n, 2 * n, |r, c| match (r < n, c < n) {
            (true, true) => (1.0 + sigma) * a[(r, c)],
            (true, false) => -sigma * a[(r, c - n)],
            (false, true) => f64::from(u8::from(r - n == c)),
            (false, false) => 0.0,
        });
        Ok(Self {
            graph,
            base,
            sigma,
            bound,
            block,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn base(&self) -> &WeightMatrix {
        &self.base
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The agent-count bound `U`.
    pub fn bound(&self) -> usize {
        self.bound
    }

    pub fn block_matrix(&self) -> &DMatrix<f64> {
        &self.block
    }

    /// `1 - 1/(18U)`, the per-step rate of the effective operator.
    pub fn lambda(&self) -> f64 {
        1.0 - 1.0 / (18.0 * self.bound as f64)
    }

    /// `[I 0] B^k [I I]'`, defined for `k >= 2`.
    pub fn effective_operator(&self, k: u64) -> Result<DMatrix<f64>> {
        if k < 2 {
            return Err(Error::invalid(format!(
                "effective operator is defined for k >= 2, got {k}"
            )));
        }
        let mut ops = self.effective_operators();
        let mut last = ops.next_operator();
        for _ in 1..k {
            last = ops.next_operator();
        }
        Ok(last)
    }

    /// Iterator over the effective operators for `k = 1, 2, ...`.
    pub fn effective_operators(&self) -> EffectiveOperators<'_> {
        let n = self.n();
        EffectiveOperators {
            op: self,
            top_left: DMatrix::identity(n, n),
            top_right: DMatrix::zeros(n, n),
        }
    }
}

/// `sigma = 1 - 2/(9U + 1)`.
fn momentum(bound: usize) -> f64 {
    1.0 - 2.0 / (9.0 * bound as f64 + 1.0)
}

/// Tracks the top block row `[P_k Q_k]` of `B^k`; the effective operator is `P_k + Q_k`.
#[derive(Debug, Clone)]
pub struct EffectiveOperators<'a> {
    op: &'a AcceleratedOperator,
    top_left: DMatrix<f64>,
    top_right: DMatrix<f64>,
}

impl EffectiveOperators<'_> {
    pub fn next_operator(&mut self) -> DMatrix<f64> {
        let a = self.op.base.entries();
        let s = self.op.sigma;
        // [P Q] B = [(1+s) P A + Q, -s P A]
        let pa = &self.top_left * a;
        let left = &pa * (1.0 + s) + &self.top_right;
        self.top_right = pa * (-s);
        self.top_left = left;
        &self.top_left + &self.top_right
    }
}

impl Iterator for EffectiveOperators<'_> {
    type Item = DMatrix<f64>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_operator())
    }
}

/// `[I 0] B^k [I I]'` for `k >= 2`; see [`AcceleratedOperator::effective_operator`].
pub fn effective_operator_row(op: &AcceleratedOperator, k: u64) -> Result<DMatrix<f64>> {
    op.effective_operator(k)
}

/// One momentum consensus step: `A (y + sigma (y - y_prev))`.
pub fn accelerated_consensus_step(op: &AcceleratedOperator, current: &[f64], previous: &[f64]) -> Result<Vec<f64>> {
    let n = op.n();
    if current.len() != n || previous.len() != n {
        return Err(Error::invalid(format!("consensus vectors must have length {n}")));
    }
    let s = op.sigma;
    let pushed: Vec<f64> = current.iter().zip(previous).map(|(c, p)| c + s * (c - p)).collect();
    Ok((0..n)
        .map(|i| op.base.row(i).iter().map(|&(j, w)| w * pushed[j]).sum())
        .collect())
}

/// Worst case of the effective operators against `sqrt(2) lambda^k` around
/// `1/n` for `2 <= k <= horizon`, and of the consensus iterate started at
/// `start` against `2 (1 - 1/(9U))^(k-1) |y_1 - mean|^2` for `1 <= k <= horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceleratedAudit {
    pub horizon: u64,
    pub envelope_violations: u64,
    /// `max (|[M_k]_ij - 1/n| - sqrt(2) lambda^k)`; negative means slack.
    pub envelope_margin: f64,
    pub contraction_violations: u64,
    /// `max (dist_k - bound_k)` over steps.
    pub contraction_margin: f64,
}

impl AcceleratedAudit {
    pub fn run(op: &AcceleratedOperator, horizon: u64, start: &[f64]) -> Result<Self> {
        let n = op.n();
        if start.len() != n {
            return Err(Error::invalid(format!("start vector must have length {n}")));
        }
        let inv = 1.0 / n as f64;
        let lambda = op.lambda();
        let mut audit = Self {
            horizon,
            envelope_violations: 0,
            envelope_margin: f64::NEG_INFINITY,
            contraction_violations: 0,
            contraction_margin: f64::NEG_INFINITY,
        };
        let mut ops = op.effective_operators();
        ops.next_operator();
        let mut envelope = std::f64::consts::SQRT_2 * lambda;
        for _ in 2..=horizon {
            envelope *= lambda;
            for v in ops.next_operator().iter() {
                let margin = (v - inv).abs() - envelope;
                audit.envelope_margin = audit.envelope_margin.max(margin);
                if margin > 0.0 {
                    audit.envelope_violations += 1;
                }
            }
        }

        let mean = start.iter().sum::<f64>() / n as f64;
        let dist = |y: &[f64]| y.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        let d1 = dist(start);
        let rate = 1.0 - 1.0 / (9.0 * op.bound() as f64);
        let (mut prev, mut cur) = (start.to_vec(), start.to_vec());
        let mut bound = 2.0 * d1;
        for _ in 1..=horizon {
            let margin = dist(&cur) - bound;
            audit.contraction_margin = audit.contraction_margin.max(margin);
            if margin > 0.0 {
                audit.contraction_violations += 1;
            }
            let next = accelerated_consensus_step(op, &cur, &prev)?;
            prev = std::mem::replace(&mut cur, next);
            bound *= rate;
        }
        Ok(audit)
    }

    pub fn passed(&self) -> bool {
        self.envelope_violations == 0 && self.contraction_violations == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_effective(op: &AcceleratedOperator, k: u32) -> DMatrix<f64> {
        let n = op.n();
        let bk = op.block_matrix().pow(k);
        let mut stack = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            stack[(i, i)] = 1.0;
            stack[(n + i, i)] = 1.0;
        }
        (bk * stack).rows(0, n).into_owned()
    }

    #[test]
    fn sigma_formula() {
        let op = AcceleratedOperator::new(Graph::path(2), 2).unwrap();
        assert!((op.sigma() - 17.0 / 19.0).abs() < 1e-15);
        assert!((op.lambda() - (1.0 - 1.0 / 36.0)).abs() < 1e-15);
        assert!(AcceleratedOperator::new(Graph::path(4), 3).is_err());
        assert!(AcceleratedOperator::new(Graph::empty(3), 3).is_err());
    }

    #[test]
    fn consensus_is_a_fixed_point() {
        let op = AcceleratedOperator::new(Graph::cycle(5), 7).unwrap();
        let c = vec![2.5; 5];
        let out = accelerated_consensus_step(&op, &c, &c).unwrap();
        for v in out {
            assert!((v - 2.5).abs() < 1e-14);
        }
        let single = AcceleratedOperator::new(Graph::path(1), 1).unwrap();
        assert_eq!(accelerated_consensus_step(&single, &[3.0], &[3.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn path_of_eight_contracts() {
        let n = 8;
        let u = 8;
        let op = AcceleratedOperator::new(Graph::path(n), u).unwrap();
        let mut x1 = vec![0.0; n];
        x1[0] = 1.0;
        let mean = 1.0 / n as f64;
        let dist = |y: &[f64]| y.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        let d1 = dist(&x1);
        let (mut prev, mut cur) = (x1.clone(), x1);
        for k in 1..=200 {
            let bound = 2.0 * (1.0 - 1.0 / (9.0 * u as f64)).powi(k - 1) * d1;
            assert!(dist(&cur) <= bound, "k = {k}");
            let next = accelerated_consensus_step(&op, &cur, &prev).unwrap();
            prev = cur;
            cur = next;
        }
    }

    #[test]
    fn incremental_matches_block_power() {
        let op = AcceleratedOperator::new(Graph::cycle(4), 4).unwrap();
        let mut ops = op.effective_operators();
        for k in 1..=12u32 {
            let fast = ops.next_operator();
            assert!((fast - naive_effective(&op, k)).abs().max() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn four_cycle_envelope_at_ten() {
        let op = AcceleratedOperator::new(Graph::cycle(4), 4).unwrap();
        let e = op.effective_operator(10).unwrap();
        let env = 2f64.sqrt() * (1.0 - 1.0 / 72.0f64).powi(10);
        for v in e.iter() {
            assert!((v - 0.25).abs() <= env);
        }
        assert!(op.effective_operator(1).is_err());
    }

    #[test]
    fn audit_on_small_cycles() {
        for (n, u) in [(4, 4), (6, 12)] {
            let op = AcceleratedOperator::new(Graph::cycle(n), u).unwrap();
            let mut start = vec![0.0; n];
            start[0] = 1.0;
            let audit = AcceleratedAudit::run(&op, 150, &start).unwrap();
            assert!(audit.passed(), "{audit:?}");
            assert!(audit.envelope_margin < 0.0 && audit.contraction_margin <= 0.0);
        }
        let op = AcceleratedOperator::new(Graph::path(3), 3).unwrap();
        assert!(AcceleratedAudit::run(&op, 10, &[1.0]).is_err());
    }

    #[test]
    fn effective_operator_limits() {
        let single = AcceleratedOperator::new(Graph::path(1), 1).unwrap();
        for k in 2..20 {
            assert!((single.effective_operator(k).unwrap()[(0, 0)] - 1.0).abs() < 1e-12);
        }
        let op = AcceleratedOperator::new(Graph::path(5), 5).unwrap();
        let e = op.effective_operator(3000).unwrap();
        for v in e.iter() {
            assert!((v - 0.2).abs() < 1e-9);
        }
        let e = op.effective_operator(17).unwrap();
        assert!((&e - e.transpose()).abs().max() < 1e-12);
        for row in e.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-10);
        }
    }
}
