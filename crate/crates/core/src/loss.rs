//! Focus losses and their recursive bound increments.
//!
//! Every loss is a sum over accumulators of a function of the count. Adding one
//! event to an accumulator holding `I` events changes the loss by an increment
//! that depends only on `I`, which is what makes the bounds recursive: the lower
//! bound feeds the count found at the event's rounded position under the box
//! centre, the upper bound feeds the largest count reachable anywhere in the
//! event's bounding box.

use std::f64::consts::E;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::AccumulatorImage;

/// Counts above this are refused by the exponential losses; `e^700` is close to `f64::MAX`.
pub const EXP_COUNT_LIMIT: u32 = 700;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("shift factor delta must be positive and finite, got {0}")]
    BadDelta(f64),
    #[error("weights must be non-negative and not both zero, got w1={w1}, w2={w2}")]
    BadWeights { w1: f64, w2: f64 },
    #[error("accumulator count must be positive")]
    NoAccumulators,
    #[error("image has {got} accumulators but the loss was built for {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("exponential loss overflow: accumulator count {0} exceeds {EXP_COUNT_LIMIT}")]
    Overflow(u32),
    #[error("unknown loss '{0}' (expected sos, var, soe, sosa, soeas or sosaas)")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Sum of squares.
    SoS,
    /// Variance with a fixed mean.
    Var,
    /// Sum of exponentials.
    SoE,
    /// Sum of suppressed accumulations, `sum exp(-delta * I)`.
    SoSA,
    /// `w1 * SoE + w2 * SoS`.
    SoEaS,
    /// `w1 * SoSA + w2 * SoS`.
    SoSAaS,
}

impl LossKind {
    pub const ALL: [LossKind; 6] =
        [LossKind::SoS, LossKind::Var, LossKind::SoE, LossKind::SoSA, LossKind::SoEaS, LossKind::SoSAaS];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::SoS => "sos",
            LossKind::Var => "var",
            LossKind::SoE => "soe",
            LossKind::SoSA => "sosa",
            LossKind::SoEaS => "soeas",
            LossKind::SoSAaS => "sosaas",
        }
    }

    fn uses_growing_exp(self) -> bool {
        matches!(self, LossKind::SoE | LossKind::SoEaS)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = LossError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| LossError::UnknownKind(s.to_string()))
    }
}

/// Tunable constants shared by the loss family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    /// Shift factor for the suppressed-accumulation losses.
    pub delta: f64,
    pub w1: f64,
    pub w2: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self { delta: 1.0, w1: 1.0, w2: 1.0 }
    }
}

/// A focus loss bound to one (window, grid) pair through `N_p` and the mean count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocusLoss {
    kind: LossKind,
    params: LossParams,
    n_p: usize,
    mean: f64,
}

impl FocusLoss {
    /// `n_events` fixes the mean count `N / N_p`, held constant for the whole solve.
    pub fn new(kind: LossKind, params: LossParams, n_events: usize, n_p: usize) -> Result<Self, LossError> {
        if n_p == 0 {
            return Err(LossError::NoAccumulators);
        }
        if !(params.delta > 0.0 && params.delta.is_finite()) {
            return Err(LossError::BadDelta(params.delta));
        }
        let LossParams { w1, w2, .. } = params;
        if !(w1 >= 0.0 && w2 >= 0.0 && w1.is_finite() && w2.is_finite()) || (w1 == 0.0 && w2 == 0.0) {
            return Err(LossError::BadWeights { w1, w2 });
        }
        Ok(Self { kind, params, n_p, mean: n_events as f64 / n_p as f64 })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn params(&self) -> LossParams {
        self.params
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `L_0`, the loss of the empty image.
    pub fn initial_value(&self) -> f64 {
        let n_p = self.n_p as f64;
        match self.kind {
            LossKind::SoS => 0.0,
            LossKind::Var => self.mean * self.mean,
            LossKind::SoE | LossKind::SoSA => n_p,
            LossKind::SoEaS | LossKind::SoSAaS => self.params.w1 * n_p,
        }
    }

    /// Change in the loss when an accumulator holding `count` events receives one more.
    pub fn increment(&self, count: u32) -> f64 {
        let i = count as f64;
        let LossParams { delta, w1, w2 } = self.params;
        let n_p = self.n_p as f64;
        match self.kind {
            LossKind::SoS => 1.0 + 2.0 * i,
            LossKind::Var => 1.0 / n_p - 2.0 * self.mean / n_p + 2.0 / n_p * i,
            LossKind::SoE => (E - 1.0) * i.exp(),
            LossKind::SoSA => ((-delta).exp() - 1.0) * (-delta * i).exp(),
            LossKind::SoEaS => w1 * (E - 1.0) * i.exp() + w2 + 2.0 * w2 * i,
            LossKind::SoSAaS => w1 * ((-delta).exp() - 1.0) * (-delta * i).exp() + w2 + 2.0 * w2 * i,
        }
    }

    /// Lower-bound increment, fed with the count at the event's accumulator in the centre IWE.
    pub fn lower_increment(&self, count_at_eta: u32) -> f64 {
        self.increment(count_at_eta)
    }

    /// Upper-bound increment, fed with the maximum upper-IWE count inside the event's box.
    pub fn upper_increment(&self, q: u32) -> f64 {
        self.increment(q)
    }

    fn check_count(&self, count: u32) -> Result<(), LossError> {
        if self.kind.uses_growing_exp() && count > EXP_COUNT_LIMIT {
            Err(LossError::Overflow(count))
        } else {
            Ok(())
        }
    }

    /// Per-accumulator term `f(I)` such that the loss is `sum f(I)` (Var carries its `1/N_p`).
    fn cell_value(&self, count: u32) -> f64 {
        self.cell_value_real(count as f64)
    }

    fn cell_value_real(&self, i: f64) -> f64 {
        let LossParams { delta, w1, w2 } = self.params;
        match self.kind {
            LossKind::SoS => i * i,
            LossKind::Var => (i - self.mean) * (i - self.mean) / self.n_p as f64,
            LossKind::SoE => i.exp(),
            LossKind::SoSA => (-delta * i).exp(),
            LossKind::SoEaS => w1 * i.exp() + w2 * i * i,
            LossKind::SoSAaS => w1 * (-delta * i).exp() + w2 * i * i,
        }
    }

    /// Full-image loss.
    pub fn evaluate(&self, iwe: &AccumulatorImage) -> Result<f64, LossError> {
        if iwe.n_p() != self.n_p {
            return Err(LossError::DimensionMismatch { expected: self.n_p, got: iwe.n_p() });
        }
        let mut total = 0.0;
        for &c in iwe.counts() {
            self.check_count(c)?;
            total += self.cell_value(c);
        }
        Ok(total)
    }

    /// Loss of a real-valued (e.g. Gaussian-smoothed) image over the same accumulators.
    pub fn evaluate_field(&self, values: &[f64]) -> Result<f64, LossError> {
        if values.len() != self.n_p {
            return Err(LossError::DimensionMismatch { expected: self.n_p, got: values.len() });
        }
        let mut total = 0.0;
        for &v in values {
            if self.kind.uses_growing_exp() && v > EXP_COUNT_LIMIT as f64 {
                return Err(LossError::Overflow(v.ceil() as u32));
            }
            total += self.cell_value_real(v);
        }
        Ok(total)
    }

    /// Loss of an image given only its non-zero counts; all other accumulators are empty.
    pub fn evaluate_sparse(&self, nonzero: impl IntoIterator<Item = u32>) -> Result<f64, LossError> {
        let empty = self.cell_value(0);
        let mut touched = 0usize;
        let mut total = 0.0;
        for c in nonzero {
            self.check_count(c)?;
            total += self.cell_value(c) - empty;
            touched += 1;
        }
        debug_assert!(touched <= self.n_p);
        Ok(total + empty * self.n_p as f64)
    }
}

/// Running sum of bound increments, kept in a decomposed form.
///
/// The square part (`sum 1 + 2I`) is an exact integer, so two sums that see the same
/// counts compare bit-for-bit equal regardless of event order, and Var stays an exact
/// affine image of SoS.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IncrementSum {
    events: u64,
    squares: u64,
    exps: f64,
}

impl IncrementSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    #[inline]
    pub fn push(&mut self, loss: &FocusLoss, count: u32) -> Result<(), LossError> {
        self.events += 1;
        self.squares += 1 + 2 * count as u64;
        match loss.kind {
            LossKind::SoS | LossKind::Var => {}
            LossKind::SoE | LossKind::SoEaS => {
                loss.check_count(count)?;
                self.exps += (count as f64).exp();
            }
            LossKind::SoSA | LossKind::SoSAaS => {
                self.exps += (-loss.params.delta * count as f64).exp();
            }
        }
        Ok(())
    }

    pub fn value(&self, loss: &FocusLoss) -> f64 {
        let squares = self.squares as f64;
        let n_p = loss.n_p as f64;
        let LossParams { delta, w1, w2 } = loss.params;
        let l0 = loss.initial_value();
        match loss.kind {
            LossKind::SoS => squares,
            LossKind::Var => l0 + (squares - 2.0 * loss.mean * self.events as f64) / n_p,
            LossKind::SoE => l0 + (E - 1.0) * self.exps,
            LossKind::SoSA => l0 + ((-delta).exp() - 1.0) * self.exps,
            LossKind::SoEaS => l0 + w1 * (E - 1.0) * self.exps + w2 * squares,
            LossKind::SoSAaS => l0 + w1 * ((-delta).exp() - 1.0) * self.exps + w2 * squares,
        }
    }
}

/// Lower and upper bound after `k` events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundState {
    pub lower: f64,
    pub upper: f64,
    pub k: usize,
}

impl BoundState {
    pub fn start(loss: &FocusLoss) -> Self {
        let l0 = loss.initial_value();
        Self { lower: l0, upper: l0, k: 0 }
    }

    /// Applies one event's increments using the plain recursion.
    pub fn step(&mut self, loss: &FocusLoss, count_at_eta: u32, q: u32) {
        self.lower += loss.lower_increment(count_at_eta);
        self.upper += loss.upper_increment(q);
        self.k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::ImageGeometry;
    use approx::assert_relative_eq;

    fn loss(kind: LossKind, n_events: usize, n_p: usize) -> FocusLoss {
        FocusLoss::new(kind, LossParams::default(), n_events, n_p).unwrap()
    }

    fn image(counts: &[u32]) -> AccumulatorImage {
        let g = ImageGeometry::new(counts.len(), 1, 0).unwrap();
        let mut img = AccumulatorImage::zeros(g);
        for (x, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                img.increment(x as i64, 0);
            }
        }
        img
    }

    #[test]
    fn initial_values() {
        assert_eq!(loss(LossKind::SoS, 10, 100).initial_value(), 0.0);
        assert_eq!(loss(LossKind::SoE, 10, 100).initial_value(), 100.0);
        assert_eq!(loss(LossKind::Var, 25, 100).initial_value(), 0.0625);
        assert_eq!(loss(LossKind::SoSA, 25, 100).initial_value(), 100.0);
        assert_eq!(loss(LossKind::SoEaS, 25, 100).initial_value(), 100.0);
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(loss(LossKind::SoS, 0, 4).evaluate(&image(&[0, 0, 0, 0])).unwrap(), 0.0);
        assert_eq!(loss(LossKind::SoS, 4, 4).evaluate(&image(&[2, 0, 1, 1])).unwrap(), 6.0);
        assert_relative_eq!(loss(LossKind::Var, 4, 4).evaluate(&image(&[2, 0, 1, 1])).unwrap(), 0.5);
        assert_relative_eq!(loss(LossKind::SoSA, 0, 4).evaluate(&image(&[0, 0, 0, 0])).unwrap(), 4.0);
    }

    #[test]
    fn evaluate_rejects_mismatched_image() {
        let l = loss(LossKind::SoS, 0, 5);
        assert_eq!(
            l.evaluate(&image(&[0, 0, 0, 0])),
            Err(LossError::DimensionMismatch { expected: 5, got: 4 })
        );
    }

    #[test]
    fn increment_examples() {
        assert_eq!(loss(LossKind::SoS, 1, 1).lower_increment(3), 7.0);
        assert_relative_eq!(loss(LossKind::SoE, 1, 1).lower_increment(0), 1.718281828, epsilon = 1e-9);
        assert_relative_eq!(loss(LossKind::SoSA, 1, 1).lower_increment(0), -0.632120559, epsilon = 1e-9);
        assert_eq!(loss(LossKind::SoS, 1, 1).upper_increment(0), 1.0);
        assert_relative_eq!(loss(LossKind::Var, 50, 100).upper_increment(2), 0.04, epsilon = 1e-15);
        assert_relative_eq!(loss(LossKind::SoEaS, 1, 1).upper_increment(1), 7.670774270, epsilon = 1e-8);
    }

    #[test]
    fn constructor_validation() {
        let bad_delta = LossParams { delta: 0.0, ..LossParams::default() };
        assert_eq!(FocusLoss::new(LossKind::SoSA, bad_delta, 1, 1), Err(LossError::BadDelta(0.0)));
        let bad_w = LossParams { w1: 0.0, w2: 0.0, ..LossParams::default() };
        assert!(matches!(FocusLoss::new(LossKind::SoEaS, bad_w, 1, 1), Err(LossError::BadWeights { .. })));
        assert_eq!(FocusLoss::new(LossKind::SoS, LossParams::default(), 1, 0), Err(LossError::NoAccumulators));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
        }
        assert!("nope".parse::<LossKind>().is_err());
    }

    #[test]
    fn exponential_overflow_fails_loudly() {
        let l = loss(LossKind::SoE, 1000, 10);
        let mut s = IncrementSum::new();
        assert_eq!(s.push(&l, 701), Err(LossError::Overflow(701)));
        assert_eq!(l.evaluate(&image(&[701, 0])), Err(LossError::DimensionMismatch { expected: 10, got: 2 }));
        let l2 = loss(LossKind::SoE, 1000, 2);
        assert_eq!(l2.evaluate(&image(&[701, 0])), Err(LossError::Overflow(701)));
    }

    #[test]
    fn n_events_into_one_accumulator_gives_n_squared() {
        let l = loss(LossKind::SoS, 9, 100);
        let mut s = IncrementSum::new();
        for k in 0..9 {
            s.push(&l, k).unwrap();
        }
        assert_eq!(s.value(&l), 81.0);
    }

    #[test]
    fn decomposed_sum_matches_plain_recursion() {
        let counts = [0u32, 1, 0, 2, 3, 1, 0, 4];
        for kind in LossKind::ALL {
            let l = FocusLoss::new(kind, LossParams { delta: 0.7, w1: 0.3, w2: 1.9 }, 8, 50).unwrap();
            let mut state = BoundState::start(&l);
            let mut sum = IncrementSum::new();
            for &c in &counts {
                state.step(&l, c, c);
                sum.push(&l, c).unwrap();
            }
            assert_relative_eq!(state.lower, sum.value(&l), max_relative = 1e-12);
            assert_eq!(state.k, counts.len());
        }
    }

    #[test]
    fn sparse_and_dense_evaluation_agree() {
        let counts = [0u32, 3, 0, 1, 5, 0, 0, 2];
        let img = image(&counts);
        for kind in LossKind::ALL {
            let l = FocusLoss::new(kind, LossParams { delta: 0.5, w1: 2.0, w2: 0.5 }, 11, counts.len()).unwrap();
            let dense = l.evaluate(&img).unwrap();
            let sparse = l.evaluate_sparse(counts.iter().copied().filter(|&c| c > 0)).unwrap();
            assert_relative_eq!(dense, sparse, max_relative = 1e-12);
        }
    }
}
