//! Robustness semantics: the classical min/max quantitative semantics and the
//! smooth weighted semantics that replaces min/max with a normalized softmin
//! aggregate.
//!
//! The aggregate for weights `w` and child robustness values `r` is
//!
//! ```text
//!   out = sum_i(wbar_i * s_i * r_i) / sum_i(wbar_i * s_i)
//!   wbar_i = w_i / sum_j(w_j)
//!   s_i    = exp(-r_i / sigma) / sum_j exp(-r_j / sigma)
//! ```
//!
//! which is a convex combination of the `r_i` concentrating mass on weighted,
//! low-robustness inputs. Disjunction and `eventually` are evaluated as the
//! dual `-aggregate(w, -r)`. Both normalizations cancel in the ratio, so the
//! implementation works with raw weights and a max-shifted softmin; entries
//! with weight exactly 0 are skipped outright, which keeps them bit-exactly
//! without influence and avoids overflow of their softmin factors.

use crate::formula::{Expr, Formula};
use thiserror::Error;

/// An `l x T` discrete-time signal: `l` features observed at `T` time steps.
/// Stored time-major so one sample `s(k)` is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    data: Vec<f64>,
    dim: usize,
    len: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("signal must have at least one feature and one sample")]
    Empty,
    #[error("data length {got} does not equal dim {dim} * len {len}")]
    ShapeMismatch { got: usize, dim: usize, len: usize },
    #[error("non-finite signal entry at feature {feature}, time {time}")]
    NonFinite { feature: usize, time: usize },
}

impl SignalMatrix {
    /// Builds from time-major data: `data[k * dim + j]` is feature `j` at time `k`.
    pub fn new(dim: usize, len: usize, data: Vec<f64>) -> Result<Self, SignalError> {
        if dim == 0 || len == 0 {
            return Err(SignalError::Empty);
        }
        if data.len() != dim * len {
            return Err(SignalError::ShapeMismatch {
                got: data.len(),
                dim,
                len,
            });
        }
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(SignalError::NonFinite {
                    feature: i % dim,
                    time: i / dim,
                });
            }
        }
        Ok(SignalMatrix { data, dim, len })
    }

    /// Builds from rows, each row one time step of `dim` features.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, SignalError> {
        let len = rows.len();
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(SignalError::ShapeMismatch { got: 0, dim, len });
        }
        SignalMatrix::new(dim, len, rows.iter().flatten().copied().collect())
    }

    /// Convenience constructor for one-dimensional signals.
    pub fn scalar(values: &[f64]) -> Result<Self, SignalError> {
        SignalMatrix::new(1, values.len(), values.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The sample `s(k)` as a feature slice.
    pub fn sample(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn value(&self, feature: usize, k: usize) -> f64 {
        self.data[k * self.dim + feature]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn map_features(&self, f: impl Fn(usize, f64) -> f64) -> SignalMatrix {
        let mut data = self.data.clone();
        for (i, v) in data.iter_mut().enumerate() {
            *v = f(i % self.dim, *v);
        }
        SignalMatrix {
            data,
            dim: self.dim,
            len: self.len,
        }
    }
}

/// Softmin temperature; must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sigma(f64);

#[derive(Debug, Error, PartialEq)]
#[error("sigma must be strictly positive, got {0}")]
pub struct InvalidSigma(pub f64);

impl Sigma {
    pub fn new(value: f64) -> Result<Self, InvalidSigma> {
        if value > 0.0 && value.is_finite() {
            Ok(Sigma(value))
        } else {
            Err(InvalidSigma(value))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error(
        "insufficient signal length: evaluation at k={k} needs {needed} samples, signal has {have}"
    )]
    InsufficientLength {
        k: usize,
        needed: usize,
        have: usize,
    },
    #[error("aggregate input is non-finite")]
    NonFiniteInput,
    #[error("all aggregate weights are zero")]
    AllWeightsZero,
    #[error("aggregate weight and value lengths differ: {weights} vs {values}")]
    LengthMismatch { weights: usize, values: usize },
    #[error("empty aggregate")]
    EmptyAggregate,
    #[error("predicate dimension {pred} does not match signal dimension {signal}")]
    DimensionMismatch { pred: usize, signal: usize },
}

/// Forward quantities of one softmin aggregate, kept for differentiation.
/// `shifted[i] = exp(-(r_i - r_min) / sigma)` over active (nonzero-weight)
/// entries, `denom = sum_i w_i * shifted[i]`.
#[derive(Debug, Clone)]
pub(crate) struct SoftminLocals {
    pub value: f64,
    pub shifted: Vec<f64>,
    pub denom: f64,
    pub shift: f64,
}

/// Core of the weighted aggregate: returns the value together with the
/// locals needed for exact partial derivatives. Entries with `w[i] == 0` are
/// skipped entirely so they cannot influence the result, not even through
/// the numerically shared softmin shift.
pub(crate) fn softmin_core(w: &[f64], r: &[f64], sigma: Sigma) -> Result<SoftminLocals, EvalError> {
    if w.len() != r.len() {
        return Err(EvalError::LengthMismatch {
            weights: w.len(),
            values: r.len(),
        });
    }
    if w.is_empty() {
        return Err(EvalError::EmptyAggregate);
    }
    let mut shift = f64::INFINITY;
    for i in 0..w.len() {
        if !w[i].is_finite() || !r[i].is_finite() {
            return Err(EvalError::NonFiniteInput);
        }
        if w[i] != 0.0 && r[i] < shift {
            shift = r[i];
        }
    }
    if !shift.is_finite() {
        return Err(EvalError::AllWeightsZero);
    }
    let inv_sigma = 1.0 / sigma.value();
    let mut shifted = vec![0.0; w.len()];
    let mut denom = 0.0;
    let mut numer = 0.0;
    for i in 0..w.len() {
        if w[i] == 0.0 {
            continue;
        }
        let e = (-(r[i] - shift) * inv_sigma).exp();
        shifted[i] = e;
        let u = w[i] * e;
        denom += u;
        numer += u * r[i];
    }
    Ok(SoftminLocals {
        value: numer / denom,
        shifted,
        denom,
        shift,
    })
}

/// Weighted softmin aggregate of robustness values `r` under raw positive
/// weights `w` (zeros allowed only for sparsified operators).
pub fn softmin_aggregate(w: &[f64], r: &[f64], sigma: Sigma) -> Result<f64, EvalError> {
    softmin_core(w, r, sigma).map(|l| l.value)
}

fn check_horizon(signal: &SignalMatrix, formula: &Formula, k: usize) -> Result<(), EvalError> {
    let needed = k + formula.horizon();
    if needed > signal.len() {
        return Err(EvalError::InsufficientLength {
            k,
            needed,
            have: signal.len(),
        });
    }
    Ok(())
}

pub(crate) fn pred_value(coeffs: &[f64], offset: f64, sample: &[f64]) -> Result<f64, EvalError> {
    if coeffs.len() != sample.len() {
        return Err(EvalError::DimensionMismatch {
            pred: coeffs.len(),
            signal: sample.len(),
        });
    }
    let mut dot = 0.0;
    for (a, s) in coeffs.iter().zip(sample) {
        dot += a * s;
    }
    Ok(offset - dot)
}

/// Classical quantitative semantics: plain min/max recursion, operator
/// weights are ignored. `True` evaluates to +infinity.
pub fn robustness_classical(
    signal: &SignalMatrix,
    formula: &Formula,
    k: usize,
) -> Result<f64, EvalError> {
    check_horizon(signal, formula, k)?;
    classical_expr(signal, formula.root(), k)
}

fn classical_expr(signal: &SignalMatrix, expr: &Expr, k: usize) -> Result<f64, EvalError> {
    match expr {
        Expr::True => Ok(f64::INFINITY),
        Expr::Pred(p) => pred_value(&p.coeffs, p.offset, signal.sample(k)),
        Expr::Not(child) => Ok(-classical_expr(signal, child, k)?),
        Expr::And(b) => {
            Ok(classical_expr(signal, &b.left, k)?.min(classical_expr(signal, &b.right, k)?))
        }
        Expr::Or(b) => {
            Ok(classical_expr(signal, &b.left, k)?.max(classical_expr(signal, &b.right, k)?))
        }
        Expr::Always(t) => t
            .interval
            .points()
            .map(|dt| classical_expr(signal, &t.child, k + dt))
            .try_fold(f64::INFINITY, |acc, v| v.map(|v| acc.min(v))),
        Expr::Eventually(t) => t
            .interval
            .points()
            .map(|dt| classical_expr(signal, &t.child, k + dt))
            .try_fold(f64::NEG_INFINITY, |acc, v| v.map(|v| acc.max(v))),
    }
}

/// Weighted quantitative semantics via the softmin aggregate. `And`/`Always`
/// aggregate child values directly; `Or`/`Eventually` are their DeMorgan
/// duals (negate inputs, negate the aggregate).
pub fn robustness_weighted(
    signal: &SignalMatrix,
    formula: &Formula,
    k: usize,
    sigma: Sigma,
) -> Result<f64, EvalError> {
    check_horizon(signal, formula, k)?;
    weighted_expr(signal, formula.root(), k, sigma)
}

fn weighted_expr(
    signal: &SignalMatrix,
    expr: &Expr,
    k: usize,
    sigma: Sigma,
) -> Result<f64, EvalError> {
    match expr {
        Expr::True => Ok(f64::INFINITY),
        Expr::Pred(p) => pred_value(&p.coeffs, p.offset, signal.sample(k)),
        Expr::Not(child) => Ok(-weighted_expr(signal, child, k, sigma)?),
        Expr::And(b) => {
            let r = [
                weighted_expr(signal, &b.left, k, sigma)?,
                weighted_expr(signal, &b.right, k, sigma)?,
            ];
            softmin_aggregate(&b.weights, &r, sigma)
        }
        Expr::Or(b) => {
            let r = [
                -weighted_expr(signal, &b.left, k, sigma)?,
                -weighted_expr(signal, &b.right, k, sigma)?,
            ];
            Ok(-softmin_aggregate(&b.weights, &r, sigma)?)
        }
        Expr::Always(t) => {
            let r: Vec<f64> = t
                .interval
                .points()
                .map(|dt| weighted_expr(signal, &t.child, k + dt, sigma))
                .collect::<Result<_, _>>()?;
            softmin_aggregate(&t.weights, &r, sigma)
        }
        Expr::Eventually(t) => {
            let r: Vec<f64> = t
                .interval
                .points()
                .map(|dt| weighted_expr(signal, &t.child, k + dt, sigma).map(|v| -v))
                .collect::<Result<_, _>>()?;
            Ok(-softmin_aggregate(&t.weights, &r, sigma)?)
        }
    }
}

/// Boolean satisfaction verdict of the classical semantics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sat {
    Satisfied,
    Violated,
}

impl Sat {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, Sat::Satisfied)
    }
}

/// Satisfied iff classical robustness is >= 0; the boundary counts as
/// satisfied so the verdict is total.
pub fn boolean_sat(signal: &SignalMatrix, formula: &Formula, k: usize) -> Result<Sat, EvalError> {
    let r = robustness_classical(signal, formula, k)?;
    Ok(if r >= 0.0 {
        Sat::Satisfied
    } else {
        Sat::Violated
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Interval;

    fn sig(values: &[f64]) -> SignalMatrix {
        SignalMatrix::scalar(values).unwrap()
    }

    fn sigma(v: f64) -> Sigma {
        Sigma::new(v).unwrap()
    }

    #[test]
    fn aggregate_of_equal_values_is_that_value() {
        for s in [0.01, 1.0, 10.0] {
            let out = softmin_aggregate(&[1.0, 1.0], &[5.0, 5.0], sigma(s)).unwrap();
            assert_eq!(out, 5.0);
        }
    }

    #[test]
    fn zero_weight_has_no_influence() {
        let out = softmin_aggregate(&[0.0, 1.0], &[-100.0, 2.0], sigma(1.0)).unwrap();
        assert_eq!(out, 2.0);
    }

    #[test]
    fn hand_evaluated_two_point_aggregate() {
        // w=[1,1], r=[0,1], sigma=1: s=(0.731059, 0.268941),
        // numerator 0.134471, denominator 0.5 -> 0.268941.
        let out = softmin_aggregate(&[1.0, 1.0], &[0.0, 1.0], sigma(1.0)).unwrap();
        let expected = (-1.0f64).exp() / (1.0 + (-1.0f64).exp());
        assert!((out - 0.268_941_421_369_995_1).abs() < 1e-12);
        assert!((out - expected).abs() < 1e-15);
    }

    #[test]
    fn aggregate_rejects_degenerate_inputs() {
        assert_eq!(
            softmin_aggregate(&[0.0, 0.0], &[1.0, 2.0], sigma(1.0)),
            Err(EvalError::AllWeightsZero)
        );
        assert_eq!(
            softmin_aggregate(&[1.0], &[f64::NAN], sigma(1.0)),
            Err(EvalError::NonFiniteInput)
        );
        assert_eq!(
            softmin_aggregate(&[1.0, 1.0], &[1.0], sigma(1.0)),
            Err(EvalError::LengthMismatch {
                weights: 2,
                values: 1
            })
        );
        assert_eq!(
            softmin_aggregate(&[], &[], sigma(1.0)),
            Err(EvalError::EmptyAggregate)
        );
    }

    #[test]
    fn aggregate_survives_large_magnitudes() {
        // Raw exp(-r/sigma) would overflow near |r|/sigma ~ 700.
        let out = softmin_aggregate(&[1.0, 1.0], &[-2000.0, 2000.0], sigma(1.0)).unwrap();
        assert!((out - -2000.0).abs() < 1e-9);
    }

    #[test]
    fn classical_predicate_and_negation() {
        let p = Formula::pred(vec![1.0], 5.0);
        assert_eq!(robustness_classical(&sig(&[3.0]), &p, 0).unwrap(), 2.0);
        assert_eq!(
            robustness_classical(&sig(&[3.0]), &Formula::not(p), 0).unwrap(),
            -2.0
        );
    }

    #[test]
    fn classical_always_takes_min_over_window() {
        let f = Formula::always(
            Interval::new(0, 2).unwrap(),
            vec![1.0; 3],
            Formula::pred(vec![1.0], 5.0),
        );
        assert_eq!(
            robustness_classical(&sig(&[3.0, 4.0, 6.0]), &f, 0).unwrap(),
            -1.0
        );
    }

    #[test]
    fn classical_checks_signal_length() {
        let f = Formula::always(
            Interval::new(0, 2).unwrap(),
            vec![1.0; 3],
            Formula::pred(vec![1.0], 5.0),
        );
        assert_eq!(
            robustness_classical(&sig(&[3.0, 4.0]), &f, 0),
            Err(EvalError::InsufficientLength {
                k: 0,
                needed: 3,
                have: 2
            })
        );
        assert!(robustness_classical(&sig(&[3.0, 4.0, 6.0]), &f, 1).is_err());
    }

    #[test]
    fn weighted_or_is_demorgan_dual() {
        // Children evaluate to (0, 1): Or = -aggregate([1,1], [0,-1]) = 0.731059.
        let f = Formula::or(
            1.0,
            Formula::pred(vec![1.0], 0.0),
            1.0,
            Formula::pred(vec![1.0], 1.0),
        );
        let out = robustness_weighted(&sig(&[0.0]), &f, 0, sigma(1.0)).unwrap();
        assert!((out - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn weighted_always_equal_children() {
        let f = Formula::always(
            Interval::new(0, 1).unwrap(),
            vec![1.0, 1.0],
            Formula::pred(vec![1.0], 5.0),
        );
        let out = robustness_weighted(&sig(&[0.0, 0.0]), &f, 0, sigma(1.0)).unwrap();
        assert_eq!(out, 5.0);
    }

    #[test]
    fn weighted_eventually_ignores_zero_weight_branch() {
        let mut f = Formula::eventually(
            Interval::new(0, 1).unwrap(),
            vec![0.0, 1.0],
            Formula::pred(vec![1.0], 0.0),
        );
        f.mark_sparsified();
        // Child values are (10, -3): the masked 10 must not leak in.
        let out = robustness_weighted(&sig(&[-10.0, 3.0]), &f, 0, sigma(1.0)).unwrap();
        assert_eq!(out, -3.0);
    }

    #[test]
    fn boolean_sat_boundary_counts_as_satisfied() {
        let p = Formula::pred(vec![1.0], 5.0);
        assert_eq!(boolean_sat(&sig(&[3.0]), &p, 0).unwrap(), Sat::Satisfied);
        assert_eq!(boolean_sat(&sig(&[7.0]), &p, 0).unwrap(), Sat::Violated);
        assert_eq!(boolean_sat(&sig(&[5.0]), &p, 0).unwrap(), Sat::Satisfied);
    }

    #[test]
    fn signal_matrix_shape_checks() {
        assert!(SignalMatrix::new(0, 1, vec![]).is_err());
        assert!(SignalMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(SignalMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        let m = SignalMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.sample(1), &[3.0, 4.0]);
        assert_eq!(m.value(0, 2), 5.0);
    }

    #[test]
    fn true_evaluates_to_infinity_classically() {
        assert_eq!(
            robustness_classical(&sig(&[0.0]), &Formula::truth(), 0).unwrap(),
            f64::INFINITY
        );
        // min(inf, r) = r
        let f = Formula::and(1.0, Formula::truth(), 1.0, Formula::pred(vec![1.0], 5.0));
        assert_eq!(robustness_classical(&sig(&[3.0]), &f, 0).unwrap(), 2.0);
        // The weighted aggregate cannot absorb an infinite input.
        assert_eq!(
            robustness_weighted(&sig(&[3.0]), &f, 0, sigma(1.0)),
            Err(EvalError::NonFiniteInput)
        );
    }
}
