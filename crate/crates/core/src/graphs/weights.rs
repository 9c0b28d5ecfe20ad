use std::fmt;

use nalgebra::DMatrix;

use super::Graph;
use crate::error::{Error, Result};

/// Tolerance for row and column sums of weight matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Non-negative `n x n` mixing matrix. Rows also cached in sparse form for
/// the per-agent update loops.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
    sparse_rows: Vec<Vec<(usize, f64)>>,
}

impl WeightMatrix {
    /// Wraps a square matrix without checking any invariant; see [`WeightMatrix::violations`].
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::invalid(format!(
                "weight matrix is {}x{}, expected square",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let sparse_rows = (0..entries.nrows())
            .map(|i| {
                (0..entries.ncols())
                    .filter(|&j| entries[(i, j)] != 0.0)
                    .map(|j| (j, entries[(i, j)]))
                    .collect()
            })
            .collect();
        Ok(Self { entries, sparse_rows })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("weight matrix rows must all have length n"));
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_matrix(DMatrix::identity(n, n)).expect("square")
    }

    pub fn uniform(n: usize) -> Self {
        Self::from_matrix(DMatrix::from_element(n, n, 1.0 / n as f64)).expect("square")
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Non-zero `(column, weight)` pairs of row `i`.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.sparse_rows[i]
    }

    pub fn min_positive_entry(&self) -> f64 {
        self.entries
            .iter()
            .copied()
            .filter(|&v| v > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// `self * rhs` using the sparse rows.
    pub fn left_multiply(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n(), rhs.ncols());
        for (i, row) in self.sparse_rows.iter().enumerate() {
            for &(j, w) in row {
                for c in 0..rhs.ncols() {
                    out[(i, c)] += w * rhs[(j, c)];
                }
            }
        }
        out
    }

    /// Every failed weight-matrix condition. With a graph, also checks that
    /// positive off-diagonal weights sit on edges.
    pub fn violations(&self, graph: Option<&Graph>) -> Vec<WeightViolation> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = self.entries[(i, j)];
                if !(v >= 0.0) || !v.is_finite() {
                    out.push(WeightViolation::Negative {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }
        for i in 0..n {
            let row: f64 = self.entries.row(i).sum();
            if !((row - 1.0).abs() <= STOCHASTIC_TOL) {
                out.push(WeightViolation::RowSum { row: i, sum: row });
            }
            let col: f64 = self.entries.column(i).sum();
            if !((col - 1.0).abs() <= STOCHASTIC_TOL) {
                out.push(WeightViolation::ColumnSum { col: i, sum: col });
            }
            if !(self.entries[(i, i)] > 0.0) {
                out.push(WeightViolation::Diagonal {
                    node: i,
                    value: self.entries[(i, i)],
                });
            }
        }
        if let Some(g) = graph {
            if g.n() != n {
                out.push(WeightViolation::SizeMismatch {
                    matrix: n,
                    graph: g.n(),
                });
            } else {
                for i in 0..n {
                    for j in 0..n {
                        if i != j && self.entries[(i, j)] > 0.0 && !g.has_edge(i, j) {
                            out.push(WeightViolation::OffGraph { row: i, col: j });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        self.violations(None).is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightViolation {
    Negative { row: usize, col: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
    ColumnSum { col: usize, sum: f64 },
    Diagonal { node: usize, value: f64 },
    OffGraph { row: usize, col: usize },
    SizeMismatch { matrix: usize, graph: usize },
}

impl fmt::Display for WeightViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Negative { row, col, value } => write!(f, "entry ({row}, {col}) = {value} is negative"),
            Self::RowSum { row, sum } => write!(f, "row {row} sums to {sum}"),
            Self::ColumnSum { col, sum } => write!(f, "column {col} sums to {sum}"),
            Self::Diagonal { node, value } => write!(f, "diagonal entry {node} = {value} is not positive"),
            Self::OffGraph { row, col } => write!(f, "positive weight on non-edge ({row}, {col})"),
            Self::SizeMismatch { matrix, graph } => {
                write!(f, "matrix has {matrix} nodes but graph has {graph}")
            }
        }
    }
}

/// How a schedule turns each graph into weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightRule {
    Metropolis,
    LazyMetropolis,
}

impl WeightRule {
    pub fn apply(self, graph: &Graph) -> WeightMatrix {
        match self {
            WeightRule::Metropolis => metropolis_weights(graph),
            WeightRule::LazyMetropolis => lazy_metropolis_weights(graph),
        }
    }
}

/// Off-diagonal `1 / max(d_i + 1, d_j + 1)` on edges; the diagonal takes the rest.
pub fn metropolis_weights(graph: &Graph) -> WeightMatrix {
    let n = graph.n();
    let deg = graph.degrees();
    let mut m = DMatrix::zeros(n, n);
    for (a, b) in graph.edges() {
        let w = 1.0 / ((deg[a] + 1).max(deg[b] + 1)) as f64;
        m[(a, b)] = w;
        m[(b, a)] = w;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
        m[(i, i)] = 1.0 - off;
    }
    WeightMatrix::from_matrix(m).expect("square")
}

/// `I/2 + M/2` for the Metropolis matrix `M`.
pub fn lazy_metropolis_weights(graph: &Graph) -> WeightMatrix {
    let base = metropolis_weights(graph);
    let n = graph.n();
    let lazy = DMatrix::from_fn(n, n, |i, j| {
        let half = 0.5 * base.entries[(i, j)];
        if i == j {
            0.5 + half
        } else {
            half
        }
    });
    WeightMatrix::from_matrix(lazy).expect("square")
}
