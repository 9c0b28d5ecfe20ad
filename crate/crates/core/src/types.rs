//! Hypotheses, signals, likelihood models and beliefs.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};

/// Tolerance for probability vectors supplied by callers.
pub const PROBABILITY_TOL: f64 = 1e-12;

/// `log Σ exp(x)`, returning `-∞` when every entry is `-∞`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Normalize log-weights in place so they exponentiate to a probability vector.
///
/// Fails when all weights are `-∞`, or when any weight is `+∞` or NaN.
pub(crate) fn normalize_log_in_place(values: &mut [f64]) -> Result<()> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::degenerate("NaN in log-belief"));
    }
    if values.contains(&f64::INFINITY) {
        return Err(Error::degenerate("unbounded log-belief (+inf)"));
    }
    let z = log_sum_exp(values);
    if z == f64::NEG_INFINITY {
        return Err(Error::degenerate("every hypothesis has zero mass"));
    }
    values.iter_mut().for_each(|v| *v -= z);
    Ok(())
}

/// The finite set of candidate hypotheses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypothesisSet {
    labels: Vec<String>,
}

impl HypothesisSet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("hypothesis set must be non-empty"));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::invalid(format!("duplicate hypothesis label {l:?}")));
            }
        }
        Ok(Self { labels })
    }

    /// Labels `theta1 .. thetam`.
    pub fn indexed(m: usize) -> Result<Self> {
        Self::new((1..=m).map(|i| format!("theta{i}")).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.labels[idx]
    }
}

/// Signal values one agent can observe. Models index signals by position.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalAlphabet {
    symbols: Vec<f64>,
}

impl SignalAlphabet {
    pub fn new(symbols: Vec<f64>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::invalid("signal alphabet must be non-empty"));
        }
        let mut seen = HashSet::new();
        for s in &symbols {
            if s.is_nan() || !seen.insert(s.to_bits()) {
                return Err(Error::invalid(format!("signal symbol {s} is NaN or repeated")));
            }
        }
        Ok(Self { symbols })
    }

    /// Symbols `0, 1, .., len-1`.
    pub fn indexed(len: usize) -> Result<Self> {
        Self::new((0..len).map(|i| i as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[f64] {
        &self.symbols
    }
}

/// Per-agent likelihood table `l(s | theta)` together with the true signal
/// distribution `f` and the declared support floor `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodModel {
    alphabet: SignalAlphabet,
    rows: Vec<Vec<f64>>,
    truth: Vec<f64>,
    support_floor: f64,
    // log l(s | .) laid out signal-major so one observation yields a contiguous row
    log_by_signal: Vec<Vec<f64>>,
}

impl LikelihoodModel {
    /// Checks shapes only; numeric invariants are reported by [`validate_model`].
    pub fn new(alphabet: SignalAlphabet, rows: Vec<Vec<f64>>, truth: Vec<f64>, support_floor: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("likelihood model needs at least one hypothesis row"));
        }
        let width = alphabet.len();
        if let Some((h, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
            return Err(Error::invalid(format!(
                "row for hypothesis {h} has {} entries, alphabet has {width}",
                r.len()
            )));
        }
        if truth.len() != width {
            return Err(Error::invalid(format!(
                "true distribution has {} entries, alphabet has {width}",
                truth.len()
            )));
        }
        let log_by_signal = (0..width).map(|s| rows.iter().map(|r| r[s].ln()).collect()).collect();
        Ok(Self {
            alphabet,
            rows,
            truth,
            support_floor,
            log_by_signal,
        })
    }

    /// Like [`LikelihoodModel::new`] with `alpha` set to the realized floor.
    pub fn with_realized_floor(alphabet: SignalAlphabet, rows: Vec<Vec<f64>>, truth: Vec<f64>) -> Result<Self> {
        let mut model = Self::new(alphabet, rows, truth, 0.0)?;
        model.support_floor = model.realized_floor();
        Ok(model)
    }

    pub fn hypotheses(&self) -> usize {
        self.rows.len()
    }

    pub fn signals(&self) -> usize {
        self.alphabet.len()
    }

    pub fn alphabet(&self) -> &SignalAlphabet {
        &self.alphabet
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, hypothesis: usize) -> &[f64] {
        &self.rows[hypothesis]
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    pub fn support_floor(&self) -> f64 {
        self.support_floor
    }

    pub fn likelihood(&self, signal: usize, hypothesis: usize) -> f64 {
        self.rows[hypothesis][signal]
    }

    /// `log l(signal | theta)` for every hypothesis.
    pub fn log_likelihoods(&self, signal: usize) -> &[f64] {
        &self.log_by_signal[signal]
    }

    /// Minimum of `l(s | theta)` over all hypotheses and all `s` with `f(s) > 0`.
    pub fn realized_floor(&self) -> f64 {
        self.truth
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .flat_map(|(s, _)| self.rows.iter().map(move |r| r[s]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Same tables with a different true distribution.
    pub fn with_truth(&self, truth: Vec<f64>) -> Result<Self> {
        Self::new(self.alphabet.clone(), self.rows.clone(), truth, self.support_floor)
    }
}

/// A failed model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum {
        hypothesis: usize,
        sum: f64,
    },
    RowEntry {
        hypothesis: usize,
        signal: usize,
        value: f64,
    },
    TruthSum {
        sum: f64,
    },
    TruthEntry {
        signal: usize,
        value: f64,
    },
    /// `f(s) > 0` but `l(s | theta)` is below the floor (or zero).
    Support {
        hypothesis: usize,
        signal: usize,
        likelihood: f64,
        floor: f64,
    },
    NonPositiveFloor {
        floor: f64,
    },
    FloorAboveRealized {
        declared: f64,
        realized: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { hypothesis, sum } => {
                write!(f, "row for hypothesis {hypothesis} sums to {sum}, expected 1")
            }
            Violation::RowEntry {
                hypothesis,
                signal,
                value,
            } => write!(f, "entry l({signal} | {hypothesis}) = {value} is outside [0, 1]"),
            Violation::TruthSum { sum } => write!(f, "true distribution sums to {sum}, expected 1"),
            Violation::TruthEntry { signal, value } => {
                write!(f, "true distribution entry {signal} = {value} is outside [0, 1]")
            }
            Violation::Support {
                hypothesis,
                signal,
                likelihood,
                floor,
            } => write!(
                f,
                "support: f({signal}) > 0 but l({signal} | {hypothesis}) = {likelihood} < alpha = {floor}"
            ),
            Violation::NonPositiveFloor { floor } => {
                write!(f, "support floor alpha = {floor} must be positive")
            }
            Violation::FloorAboveRealized { declared, realized } => write!(
                f,
                "declared alpha {declared} exceeds realized minimum likelihood {realized}"
            ),
        }
    }
}

/// Report every violated invariant of `model`. Empty means valid.
pub fn validate_model(model: &LikelihoodModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let in_unit = |v: f64| (0.0..=1.0).contains(&v);
    for (h, row) in model.rows.iter().enumerate() {
        for (s, &v) in row.iter().enumerate() {
            if !in_unit(v) {
                out.push(Violation::RowEntry {
                    hypothesis: h,
                    signal: s,
                    value: v,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        if !((sum - 1.0).abs() <= PROBABILITY_TOL) {
            out.push(Violation::RowSum { hypothesis: h, sum });
        }
    }
    for (s, &v) in model.truth.iter().enumerate() {
        if !in_unit(v) {
            out.push(Violation::TruthEntry { signal: s, value: v });
        }
    }
    let sum: f64 = model.truth.iter().sum();
    if !((sum - 1.0).abs() <= PROBABILITY_TOL) {
        out.push(Violation::TruthSum { sum });
    }
    let alpha = model.support_floor;
    if !(alpha > 0.0) {
        out.push(Violation::NonPositiveFloor { floor: alpha });
    }
    for (s, &p) in model.truth.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        for (h, row) in model.rows.iter().enumerate() {
            if !(row[s] > 0.0 && row[s] >= alpha) {
                out.push(Violation::Support {
                    hypothesis: h,
                    signal: s,
                    likelihood: row[s],
                    floor: alpha,
                });
            }
        }
    }
    let realized = model.realized_floor();
    if alpha > realized {
        out.push(Violation::FloorAboveRealized {
            declared: alpha,
            realized,
        });
    }
    out
}

/// Probability vector over hypotheses, stored as natural-log probabilities.
/// Zero belief is `-∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    log_belief: Vec<f64>,
}

impl BeliefState {
    /// Normalize arbitrary log-weights.
    pub fn from_log_weights(mut log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::invalid("belief over zero hypotheses"));
        }
        normalize_log_in_place(&mut log_weights)?;
        Ok(Self {
            log_belief: log_weights,
        })
    }

    /// Normalize non-negative weights.
    pub fn from_probabilities(weights: &[f64]) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::invalid(format!(
                "belief weight {w} is not a finite non-negative number"
            )));
        }
        Self::from_log_weights(weights.iter().map(|w| w.ln()).collect())
    }

    /// Wrap already-normalized log-probabilities without renormalizing.
    pub(crate) fn from_normalized_log(log_belief: Vec<f64>) -> Self {
        Self { log_belief }
    }

    pub fn point_mass(m: usize, hypothesis: usize) -> Result<Self> {
        if hypothesis >= m {
            return Err(Error::invalid(format!(
                "hypothesis {hypothesis} out of range for m = {m}"
            )));
        }
        let mut v = vec![f64::NEG_INFINITY; m];
        v[hypothesis] = 0.0;
        Ok(Self { log_belief: v })
    }

    pub fn len(&self) -> usize {
        self.log_belief.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_belief.is_empty()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_belief
    }

    pub fn log_prob(&self, hypothesis: usize) -> f64 {
        self.log_belief[hypothesis]
    }

    pub fn prob(&self, hypothesis: usize) -> f64 {
        self.log_belief[hypothesis].exp()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_belief.iter().map(|v| v.exp()).collect()
    }

    /// Index of the largest belief (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.log_belief.iter().enumerate() {
            if v > self.log_belief[best] {
                best = i;
            }
        }
        best
    }

    /// Sum to one within `1e-9` with at least one non-zero entry.
    pub fn is_normalized(&self) -> bool {
        let z = log_sum_exp(&self.log_belief);
        z.is_finite() && z.abs() <= 1e-9 && !self.log_belief.iter().any(|v| v.is_nan())
    }

    /// Largest absolute difference between probability vectors.
    pub fn max_abs_diff(&self, other: &BeliefState) -> f64 {
        self.log_belief
            .iter()
            .zip(&other.log_belief)
            .map(|(a, b)| (a.exp() - b.exp()).abs())
            .fold(0.0, f64::max)
    }
}

/// Uniform belief over `m` hypotheses.
pub fn uniform_prior(m: usize) -> Result<BeliefState> {
    if m == 0 {
        return Err(Error::invalid("uniform prior over zero hypotheses"));
    }
    Ok(BeliefState {
        log_belief: vec![-(m as f64).ln(); m],
    })
}

/// One agent: its model, its observation rate `q`, and its prior.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub likelihood: LikelihoodModel,
    pub observation_rate: f64,
    pub prior: BeliefState,
}

impl AgentSpec {
    pub fn new(likelihood: LikelihoodModel, observation_rate: f64, prior: BeliefState) -> Result<Self> {
        if !(0.0..=1.0).contains(&observation_rate) {
            return Err(Error::invalid(format!(
                "observation rate {observation_rate} outside [0, 1]"
            )));
        }
        if prior.len() != likelihood.hypotheses() {
            return Err(Error::invalid(format!(
                "prior has {} entries, model has {} hypotheses",
                prior.len(),
                likelihood.hypotheses()
            )));
        }
        if !prior.is_normalized() {
            return Err(Error::invalid("prior is not a normalized belief"));
        }
        Ok(Self {
            likelihood,
            observation_rate,
            prior,
        })
    }

    /// Agent with a uniform prior.
    pub fn uniform(likelihood: LikelihoodModel, observation_rate: f64) -> Result<Self> {
        let prior = uniform_prior(likelihood.hypotheses())?;
        Self::new(likelihood, observation_rate, prior)
    }

    pub fn hypotheses(&self) -> usize {
        self.likelihood.hypotheses()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform_model(signals: usize, m: usize) -> LikelihoodModel {
        let p = 1.0 / signals as f64;
        LikelihoodModel::new(
            SignalAlphabet::indexed(signals).unwrap(),
            vec![vec![p; signals]; m],
            vec![p; signals],
            p,
        )
        .unwrap()
    }

    #[test]
    fn uniform_prior_values() {
        let b = uniform_prior(4).unwrap();
        assert_eq!(b.probabilities(), vec![0.25; 4]);
        assert_eq!(uniform_prior(1).unwrap().probabilities(), vec![1.0]);
        let third = uniform_prior(3).unwrap();
        for p in third.probabilities() {
            assert!((p - 1.0 / 3.0).abs() < 1e-16);
        }
        assert!((third.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(matches!(uniform_prior(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn uniform_model_is_valid() {
        assert!(validate_model(&uniform_model(4, 3)).is_empty());
    }

    #[test]
    fn short_row_is_reported() {
        let model = LikelihoodModel::new(
            SignalAlphabet::indexed(2).unwrap(),
            vec![vec![0.5, 0.5], vec![0.6, 0.3]],
            vec![0.5, 0.5],
            0.3,
        )
        .unwrap();
        let v = validate_model(&model);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::RowSum { hypothesis: 1, .. }));
        assert!(v[0].to_string().contains("hypothesis 1"));
    }

    #[test]
    fn zero_likelihood_on_support_is_reported() {
        let model = LikelihoodModel::new(
            SignalAlphabet::indexed(2).unwrap(),
            vec![vec![0.5, 0.5], vec![1.0, 0.0]],
            vec![0.5, 0.5],
            0.1,
        )
        .unwrap();
        let v = validate_model(&model);
        assert!(v.iter().any(|x| matches!(
            x,
            Violation::Support {
                hypothesis: 1,
                signal: 1,
                ..
            }
        )));
    }

    #[test]
    fn zero_likelihood_off_support_is_allowed() {
        let model = LikelihoodModel::with_realized_floor(
            SignalAlphabet::indexed(3).unwrap(),
            vec![vec![0.5, 0.5, 0.0], vec![0.2, 0.3, 0.5]],
            vec![0.5, 0.5, 0.0],
        )
        .unwrap();
        assert!(validate_model(&model).is_empty());
        assert_eq!(model.support_floor(), 0.2);
    }

    #[test]
    fn declared_floor_above_realized_is_reported() {
        let mut model = uniform_model(2, 2);
        model.support_floor = 0.6;
        let v = validate_model(&model);
        assert!(v.iter().any(|x| matches!(x, Violation::FloorAboveRealized { .. })));
    }

    #[test]
    fn shape_errors() {
        let a = SignalAlphabet::indexed(2).unwrap();
        assert!(LikelihoodModel::new(a.clone(), vec![], vec![0.5, 0.5], 0.1).is_err());
        assert!(LikelihoodModel::new(a.clone(), vec![vec![1.0]], vec![0.5, 0.5], 0.1).is_err());
        assert!(LikelihoodModel::new(a, vec![vec![0.5, 0.5]], vec![1.0], 0.1).is_err());
        assert!(SignalAlphabet::new(vec![1.0, 1.0]).is_err());
        assert!(HypothesisSet::new(vec!["a".into(), "a".into()]).is_err());
        assert!(HypothesisSet::new(vec![]).is_err());
    }

    #[test]
    fn zero_beliefs_are_negative_infinity() {
        let b = BeliefState::from_probabilities(&[0.0, 2.0, 2.0]).unwrap();
        assert_eq!(b.log_prob(0), f64::NEG_INFINITY);
        assert_eq!(b.prob(1), 0.5);
        assert!(b.is_normalized());
        assert!(BeliefState::from_probabilities(&[0.0, 0.0]).is_err());
        assert!(BeliefState::from_log_weights(vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn agent_spec_checks() {
        let model = uniform_model(2, 3);
        assert!(AgentSpec::uniform(model.clone(), 1.5).is_err());
        assert!(AgentSpec::new(model.clone(), 0.5, uniform_prior(2).unwrap()).is_err());
        assert!(AgentSpec::uniform(model, 0.5).is_ok());
    }

    proptest! {
        #[test]
        fn normalizing_finite_log_weights_gives_simplex_point(
            v in prop::collection::vec(-700.0f64..700.0, 1..12)
        ) {
            let b = BeliefState::from_log_weights(v).unwrap();
            let p = b.probabilities();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
}
