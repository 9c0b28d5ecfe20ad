use nalgebra::DMatrix;

use super::GraphSchedule;
use crate::error::{Error, Result};

/// `A_k * A_{k-1} * ... * A_t`.
pub fn product_chain(schedule: &GraphSchedule, t: u64, k: u64) -> Result<DMatrix<f64>> {
    if k < t {
        return Err(Error::invalid(format!(
            "product chain needs k >= t, got k = {k}, t = {t}"
        )));
    }
    let mut chain = ProductChain::new(schedule, t);
    let mut last = chain.advance();
    while chain.next_step() <= k {
        last = chain.advance();
    }
    Ok(last)
}

/// Forward accumulation of `A_{k:t}` for a fixed start `t`, one left
/// multiplication per step.
#[derive(Debug, Clone)]
pub struct ProductChain<'a> {
    schedule: &'a GraphSchedule,
    product: DMatrix<f64>,
    next: u64,
}

impl<'a> ProductChain<'a> {
    pub fn new(schedule: &'a GraphSchedule, t: u64) -> Self {
        let n = schedule.n();
        Self {
            schedule,
            product: DMatrix::identity(n, n),
            next: t,
        }
    }

    /// Step index the next call to [`ProductChain::advance`] multiplies in.
    pub fn next_step(&self) -> u64 {
        self.next
    }

    /// Multiplies in the next matrix and returns the product.
    pub fn advance(&mut self) -> DMatrix<f64> {
        self.product = self.schedule.matrix(self.next).left_multiply(&self.product);
        self.next += 1;
        self.product.clone()
    }

    pub fn current(&self) -> &DMatrix<f64> {
        &self.product
    }

    fn advance_in_place(&mut self) -> &DMatrix<f64> {
        self.product = self.schedule.matrix(self.next).left_multiply(&self.product);
        self.next += 1;
        &self.product
    }
}

/// `(1 - eta / (4 n^2))^(1 / B)`.
///
/// `lazy` marks lazy-Metropolis schedules; the sharper order-`1/n^2` rate known
/// for that case has no explicit constant, so the general formula is used.
pub fn mixing_bound_lambda(n: usize, eta: f64, window: usize, _lazy: bool) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("lambda needs n >= 1"));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid(format!("eta = {eta} outside (0, 1]")));
    }
    if window == 0 {
        return Err(Error::invalid("lambda needs B >= 1"));
    }
    let nf = n as f64;
    Ok((1.0 - eta / (4.0 * nf * nf)).powf(1.0 / window as f64))
}

/// `sum_{t=1..k} sum_j |[A_{k:t}]_ij - 1/n|`.
pub fn cumulative_mixing_sum(schedule: &GraphSchedule, k: u64, node: usize) -> Result<f64> {
    let n = schedule.n();
    if k < 1 {
        return Err(Error::invalid("cumulative mixing sum needs k >= 1"));
    }
    if node >= n {
        return Err(Error::invalid(format!("node {node} out of range")));
    }
    let inv = 1.0 / n as f64;
    // row `node` of A_{k:t}, built backwards: r_t = r_{t+1} A_t
    let mut row = vec![0.0; n];
    row[node] = 1.0;
    let mut next = vec![0.0; n];
    let mut total = 0.0;
    for t in (1..=k).rev() {
        let a = schedule.matrix(t).entries();
        for (j, out) in next.iter_mut().enumerate() {
            *out = (0..n).map(|l| row[l] * a[(l, j)]).sum();
        }
        std::mem::swap(&mut row, &mut next);
        total += row.iter().map(|v| (v - inv).abs()).sum::<f64>();
    }
    Ok(total)
}

/// Worst-case comparison of a schedule's products against the geometric
/// envelope `sqrt(2) lambda^(k-t)` and the cumulative bound
/// `4 log n / (1 - lambda)`, over `0 <= t <= k < horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingAudit {
    pub lambda: f64,
    pub pairs_checked: u64,
    /// Entries exceeding the envelope.
    pub envelope_violations: u64,
    /// `max (|[A_{k:t}]_ij - 1/n| - sqrt(2) lambda^(k-t))`; negative means slack.
    pub envelope_margin: f64,
    pub cumulative_bound: f64,
    pub cumulative_violations: u64,
    /// `max (sum - bound)` over `k >= 1` and nodes.
    pub cumulative_margin: f64,
}

impl MixingAudit {
    pub fn run(schedule: &GraphSchedule, lambda: f64, horizon: u64) -> Self {
        let n = schedule.n();
        let inv = 1.0 / n as f64;
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut cumulative = vec![vec![0.0; n]; horizon as usize];
        let mut audit = MixingAudit {
            lambda,
            pairs_checked: 0,
            envelope_violations: 0,
            envelope_margin: f64::NEG_INFINITY,
            cumulative_bound: 4.0 * (n as f64).ln() / (1.0 - lambda),
            cumulative_violations: 0,
            cumulative_margin: f64::NEG_INFINITY,
        };
        for t in 0..horizon {
            let mut chain = ProductChain::new(schedule, t);
            let mut envelope = sqrt2;
            for k in t..horizon {
                let p = chain.advance_in_place();
                audit.pairs_checked += 1;
                for i in 0..n {
                    let mut row_dev = 0.0;
                    for j in 0..n {
                        let dev = (p[(i, j)] - inv).abs();
                        row_dev += dev;
                        let margin = dev - envelope;
                        if margin > audit.envelope_margin {
                            audit.envelope_margin = margin;
                        }
                        if margin > 0.0 {
                            audit.envelope_violations += 1;
                        }
                    }
                    if t >= 1 {
                        cumulative[k as usize][i] += row_dev;
                    }
                }
                envelope *= lambda;
            }
        }
        for row in cumulative.iter().skip(1) {
            for &sum in row {
                let margin = sum - audit.cumulative_bound;
                audit.cumulative_margin = audit.cumulative_margin.max(margin);
                if margin > 0.0 {
                    audit.cumulative_violations += 1;
                }
            }
        }
        audit
    }

    pub fn passed(&self) -> bool {
        self.envelope_violations == 0 && self.cumulative_violations == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{Graph, WeightMatrix, WeightRule};

    fn naive_product(schedule: &GraphSchedule, t: u64, k: u64) -> DMatrix<f64> {
        let n = schedule.n();
        let mut p = DMatrix::identity(n, n);
        for s in t..=k {
            p = schedule.matrix(s).entries() * p;
        }
        p
    }

    #[test]
    fn single_factor_is_the_matrix() {
        let s = GraphSchedule::random_pooled(5, 2, 3, WeightRule::Metropolis, 4).unwrap();
        let p = product_chain(&s, 7, 7).unwrap();
        assert_eq!(&p, s.matrix(7).entries());
        assert!(product_chain(&s, 8, 7).is_err());
    }

    #[test]
    fn uniform_matrices_are_idempotent() {
        let n = 4;
        let s = GraphSchedule::fixed(Graph::complete(n), WeightMatrix::uniform(n)).unwrap();
        let p = product_chain(&s, 0, 9).unwrap();
        for v in p.iter() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn incremental_matches_full_recomputation() {
        let s = GraphSchedule::random_pooled(7, 3, 4, WeightRule::LazyMetropolis, 9).unwrap();
        for (t, k) in [(0, 0), (2, 10), (5, 40)] {
            let a = product_chain(&s, t, k).unwrap();
            let b = naive_product(&s, t, k);
            assert!((a - b).abs().max() < 1e-13);
        }
    }

    #[test]
    fn lazy_metropolis_products_meet_the_envelope() {
        // random static lazy-Metropolis chain on a connected 5-node graph, k - t = 49
        let g = Graph::random_connected(5, 0.3, 21);
        let s = GraphSchedule::from_rule(g, WeightRule::LazyMetropolis);
        let lambda = mixing_bound_lambda(5, s.realized_eta(0, 1), 1, true).unwrap();
        let p = naive_product(&s, 0, 49);
        let worst = p.iter().map(|v| (v - 0.2).abs()).fold(0.0, f64::max);
        assert!(worst <= 2f64.sqrt() * lambda.powi(49));
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(mixing_bound_lambda(2, 0.25, 1, false).unwrap(), 0.984375);
        let expected = (1.0f64 - 0.05 / 400.0).sqrt();
        assert!((mixing_bound_lambda(10, 0.05, 2, false).unwrap() - expected).abs() < 1e-15);
        let mut prev = 0.0;
        for b in 1..50 {
            let l = mixing_bound_lambda(3, 0.2, b, false).unwrap();
            assert!(l > prev && l < 1.0);
            prev = l;
        }
        assert!(mixing_bound_lambda(0, 0.1, 1, false).is_err());
        assert!(mixing_bound_lambda(3, 0.0, 1, false).is_err());
        assert!(mixing_bound_lambda(3, 1.5, 1, false).is_err());
        assert!(mixing_bound_lambda(3, 0.5, 0, false).is_err());
    }

    #[test]
    fn cumulative_sum_trivial_cases() {
        let single = GraphSchedule::from_rule(Graph::path(1), WeightRule::Metropolis);
        assert_eq!(cumulative_mixing_sum(&single, 30, 0).unwrap(), 0.0);
        let u = GraphSchedule::fixed(Graph::complete(3), WeightMatrix::uniform(3)).unwrap();
        assert!(cumulative_mixing_sum(&u, 30, 1).unwrap() < 1e-14);
    }

    #[test]
    fn cumulative_sum_on_six_cycle() {
        let s = GraphSchedule::from_rule(Graph::cycle(6), WeightRule::LazyMetropolis);
        let lambda = mixing_bound_lambda(6, s.realized_eta(0, 1), 1, true).unwrap();
        let bound = 4.0 * 6f64.ln() / (1.0 - lambda);
        for i in 0..6 {
            let direct: f64 = (1..=100u64)
                .map(|t| {
                    naive_product(&s, t, 100)
                        .row(i)
                        .iter()
                        .map(|v| (v - 1.0 / 6.0).abs())
                        .sum::<f64>()
                })
                .sum();
            let fast = cumulative_mixing_sum(&s, 100, i).unwrap();
            assert!((direct - fast).abs() < 1e-10);
            assert!(fast <= bound);
        }
    }

    #[test]
    fn audit_agrees_with_cumulative_sum() {
        let s = GraphSchedule::random_pooled(6, 2, 3, WeightRule::Metropolis, 5).unwrap();
        let lambda = mixing_bound_lambda(6, s.realized_eta(0, 40), 2, false).unwrap();
        let audit = MixingAudit::run(&s, lambda, 40);
        assert!(audit.passed());
        assert_eq!(audit.pairs_checked, 40 * 41 / 2);
        let direct = (0..6)
            .map(|i| cumulative_mixing_sum(&s, 39, i).unwrap())
            .fold(0.0, f64::max);
        assert!(direct - audit.cumulative_bound <= audit.cumulative_margin + 1e-12);
    }
}
