//! Weight sparsification: post-hoc pruning of normalized operator weights by
//! threshold or by keeping the top `s_bar`, the prunable-mass analysis for
//! `always` operators, and in-training sparsification with Bernoulli gate
//! variables under a bi-modal + L1 regularizer.

use crate::dataset::DataSplit;
use crate::formula::{Expr, Formula};
use crate::learn::{train_impl, EpochStats, GateOptions, TrainConfig, TrainError};
use crate::semantics::{robustness_weighted, EvalError, Sigma, SignalMatrix};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparsifyError {
    #[error("operator {path} fully pruned: no weight survives")]
    OperatorFullyPruned { path: String },
    #[error("top-{sbar} is out of range for operator {path} with {len} weights")]
    SbarOutOfRange {
        sbar: usize,
        path: String,
        len: usize,
    },
    #[error("threshold {0} must lie in [0, 1)")]
    BadThreshold(f64),
    #[error("prunable-fraction analysis requires an `always` root")]
    NotAlwaysRoot,
    #[error("robustness is exactly zero; the sign analysis is undefined")]
    ZeroRobustness,
    #[error("{0} undefined: no child robustness on that side of zero")]
    SideUndefined(&'static str),
    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Pruning outcome for one operator.
#[derive(Debug, Clone)]
pub struct OperatorReport {
    /// Dotted child-index path from the root ("root" for the root itself).
    pub path: String,
    /// Short operator description such as `G[0,15]` or `&`.
    pub op: String,
    pub kept: Vec<usize>,
    pub zeroed: Vec<usize>,
    pub pre_normalized: Vec<f64>,
    pub post_normalized: Vec<f64>,
}

/// Pruning outcome for a whole formula.
#[derive(Debug, Clone)]
pub struct PruneReport {
    pub operators: Vec<OperatorReport>,
}

impl PruneReport {
    pub fn total_weights(&self) -> usize {
        self.operators
            .iter()
            .map(|o| o.kept.len() + o.zeroed.len())
            .sum()
    }

    pub fn total_zeroed(&self) -> usize {
        self.operators.iter().map(|o| o.zeroed.len()).sum()
    }

    pub fn fraction_pruned(&self) -> f64 {
        let total = self.total_weights();
        if total == 0 {
            0.0
        } else {
            self.total_zeroed() as f64 / total as f64
        }
    }

    /// Human-readable summary, one operator per block.
    pub fn format_text(&self) -> String {
        let mut out = String::new();
        for o in &self.operators {
            out.push_str(&format!(
                "operator {} at {}: kept {:?}, zeroed {:?}\n",
                o.op, o.path, o.kept, o.zeroed
            ));
            for (i, (pre, post)) in o.pre_normalized.iter().zip(&o.post_normalized).enumerate() {
                out.push_str(&format!("  [{i}] {pre:.6} -> {post:.6}\n"));
            }
        }
        out.push_str(&format!(
            "pruned {}/{} weights ({:.1}%)\n",
            self.total_zeroed(),
            self.total_weights(),
            100.0 * self.fraction_pruned()
        ));
        out
    }

    /// Machine-readable rows: operator_path,index,pre_weight,post_weight.
    pub fn format_csv(&self) -> String {
        let mut out = String::from("operator_path,index,pre_weight,post_weight\n");
        for o in &self.operators {
            for (i, (pre, post)) in o.pre_normalized.iter().zip(&o.post_normalized).enumerate() {
                out.push_str(&format!("{},{},{},{}\n", o.path, i, pre, post));
            }
        }
        out
    }
}

fn op_label(expr: &Expr) -> String {
    match expr {
        Expr::And(_) => "&".to_string(),
        Expr::Or(_) => "|".to_string(),
        Expr::Always(t) => format!("G[{},{}]", t.interval.start, t.interval.end),
        Expr::Eventually(t) => format!("F[{},{}]", t.interval.start, t.interval.end),
        _ => unreachable!("not an operator"),
    }
}

fn path_string(path: &[u8]) -> String {
    if path.is_empty() {
        "root".to_string()
    } else {
        path.iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(".")
    }
}

/// Applies `rule` to every weighted operator (pre-order). The rule receives
/// the normalized weights and returns the post-pruning weight vector.
fn prune_operators(
    formula: &Formula,
    mut rule: impl FnMut(&str, &str, &[f64]) -> Result<Vec<f64>, SparsifyError>,
) -> Result<(Formula, PruneReport), SparsifyError> {
    let mut pruned = formula.clone();
    let mut report = PruneReport {
        operators: Vec::new(),
    };

    fn walk(
        expr: &mut Expr,
        path: &mut Vec<u8>,
        report: &mut PruneReport,
        rule: &mut impl FnMut(&str, &str, &[f64]) -> Result<Vec<f64>, SparsifyError>,
    ) -> Result<(), SparsifyError> {
        let label = match expr {
            Expr::And(_) | Expr::Or(_) | Expr::Always(_) | Expr::Eventually(_) => op_label(expr),
            _ => String::new(),
        };
        match expr {
            Expr::True | Expr::Pred(_) => {}
            Expr::Not(c) => {
                path.push(0);
                walk(c, path, report, rule)?;
                path.pop();
            }
            Expr::And(b) | Expr::Or(b) => {
                let total: f64 = b.weights.iter().sum();
                let normalized: Vec<f64> = b.weights.iter().map(|w| w / total).collect();
                let post = rule(&path_string(path), &label, &normalized)?;
                push_report(report, path, &label, &normalized, &post);
                b.weights.copy_from_slice(&post);
                path.push(0);
                walk(&mut b.left, path, report, rule)?;
                path.pop();
                path.push(1);
                walk(&mut b.right, path, report, rule)?;
                path.pop();
            }
            Expr::Always(t) | Expr::Eventually(t) => {
                let total: f64 = t.weights.iter().sum();
                let normalized: Vec<f64> = t.weights.iter().map(|w| w / total).collect();
                let post = rule(&path_string(path), &label, &normalized)?;
                push_report(report, path, &label, &normalized, &post);
                t.weights.copy_from_slice(&post);
                path.push(0);
                walk(&mut t.child, path, report, rule)?;
                path.pop();
            }
        }
        Ok(())
    }

    fn push_report(report: &mut PruneReport, path: &[u8], op: &str, pre: &[f64], post: &[f64]) {
        report.operators.push(OperatorReport {
            path: path_string(path),
            op: op.to_string(),
            kept: (0..post.len()).filter(|&i| post[i] != 0.0).collect(),
            zeroed: (0..post.len()).filter(|&i| post[i] == 0.0).collect(),
            pre_normalized: pre.to_vec(),
            post_normalized: post.to_vec(),
        });
    }

    let mut path = Vec::new();
    walk(pruned.root_mut(), &mut path, &mut report, &mut rule)?;
    pruned.mark_sparsified();
    Ok((pruned, report))
}

/// Threshold pruning: per operator, a normalized weight at or below `tau` is
/// zeroed, survivors keep their normalized values. At least one weight per
/// operator must survive.
pub fn prune_tau(formula: &Formula, tau: f64) -> Result<(Formula, PruneReport), SparsifyError> {
    if !(0.0..1.0).contains(&tau) {
        return Err(SparsifyError::BadThreshold(tau));
    }
    prune_operators(formula, |path, _op, normalized| {
        let post: Vec<f64> = normalized
            .iter()
            .map(|&w| if w <= tau { 0.0 } else { w })
            .collect();
        if post.iter().all(|&w| w == 0.0) {
            return Err(SparsifyError::OperatorFullyPruned {
                path: path.to_string(),
            });
        }
        Ok(post)
    })
}

/// Top-`s_bar` pruning: per operator keep the `s_bar` largest normalized
/// weights (ties keep the lower index), zero the rest.
pub fn prune_top_sbar(
    formula: &Formula,
    sbar: usize,
) -> Result<(Formula, PruneReport), SparsifyError> {
    prune_operators(formula, |path, _op, normalized| {
        if sbar < 1 || sbar > normalized.len() {
            return Err(SparsifyError::SbarOutOfRange {
                sbar,
                path: path.to_string(),
                len: normalized.len(),
            });
        }
        let mut order: Vec<usize> = (0..normalized.len()).collect();
        order.sort_by(|&a, &b| {
            normalized[b]
                .partial_cmp(&normalized[a])
                .expect("weights are finite")
                .then(a.cmp(&b))
        });
        let mut post = vec![0.0; normalized.len()];
        for &i in order.iter().take(sbar) {
            post[i] = normalized[i];
        }
        Ok(post)
    })
}

/// Record of the weight-thresholding analysis for one `always` operator.
#[derive(Debug, Clone)]
pub struct PrunableReport {
    /// Weighted robustness of the formula at `(k, sigma)`.
    pub robustness: f64,
    /// Per-time-point contributions `z_i` with positive child robustness.
    pub z_pos: Vec<(usize, f64)>,
    /// Contributions with negative child robustness.
    pub z_neg: Vec<(usize, f64)>,
    /// `min` of the negative contributions.
    pub delta: f64,
    /// `max` of the positive contributions.
    pub gamma_a: f64,
    /// Normalized weight mass on positive / negative child values.
    pub w_pos_mass: f64,
    pub w_neg_mass: f64,
    /// Prunable fraction of the dominant-side mass: raw solution of the
    /// sign-boundary equation, and the value clamped into [0, 1].
    pub f_raw: f64,
    pub f_clamped: f64,
}

/// The sign-boundary fraction itself. With positive robustness the analysis
/// asks how much of the positive mass `w_s` may be zeroed before
/// `gamma_a * (1 - f) * w_s + delta * (1 - w_s)` reaches zero; with negative
/// robustness the roles of `delta` and `gamma_a` swap.
pub fn prunable_fraction_formula(delta: f64, gamma_a: f64, mass: f64, positive: bool) -> f64 {
    if positive {
        1.0 + delta * (1.0 - mass) / (gamma_a * mass)
    } else {
        1.0 + gamma_a * (1.0 - mass) / (delta * mass)
    }
}

/// Weight-thresholding analysis of an `always`-rooted formula: how much
/// normalized weight mass can be zeroed without flipping the robustness
/// sign. Requires child robustness values on both sides of zero.
pub fn prunable_fraction(
    signal: &SignalMatrix,
    formula: &Formula,
    k: usize,
    sigma: Sigma,
) -> Result<PrunableReport, SparsifyError> {
    let t = match formula.root() {
        Expr::Always(t) => t,
        _ => return Err(SparsifyError::NotAlwaysRoot),
    };
    let robustness = robustness_weighted(signal, formula, k, sigma)?;
    if robustness == 0.0 {
        return Err(SparsifyError::ZeroRobustness);
    }

    let child = Formula::from_parts((*t.child).clone(), formula.is_sparsified());
    let mut r = Vec::with_capacity(t.interval.len());
    for dt in t.interval.points() {
        r.push(robustness_weighted(signal, &child, k + dt, sigma)?);
    }

    let inv_sigma = 1.0 / sigma.value();
    let denom: f64 = r.iter().map(|&ri| (-ri * inv_sigma).exp()).sum();
    let w_total: f64 = t.weights.iter().sum();

    let mut z_pos = Vec::new();
    let mut z_neg = Vec::new();
    let mut w_pos_mass = 0.0;
    let mut w_neg_mass = 0.0;
    for (i, &ri) in r.iter().enumerate() {
        let z = (-ri * inv_sigma).exp() * ri / denom;
        let wbar = t.weights[i] / w_total;
        if ri > 0.0 {
            z_pos.push((i, z));
            w_pos_mass += wbar;
        } else if ri < 0.0 {
            z_neg.push((i, z));
            w_neg_mass += wbar;
        }
    }
    if z_pos.is_empty() {
        return Err(SparsifyError::SideUndefined("gamma"));
    }
    if z_neg.is_empty() {
        return Err(SparsifyError::SideUndefined("delta"));
    }
    let gamma_a = z_pos
        .iter()
        .map(|&(_, z)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    let delta = z_neg.iter().map(|&(_, z)| z).fold(f64::INFINITY, f64::min);

    let positive = robustness > 0.0;
    let mass = if positive { w_pos_mass } else { w_neg_mass };
    if mass >= 1.0 - 1e-15 {
        return Err(SparsifyError::Inconsistent(format!(
            "weight mass {mass} on one sign with child values on both sides"
        )));
    }
    if mass <= 0.0 {
        return Err(SparsifyError::Inconsistent(
            "dominant side carries no weight mass".to_string(),
        ));
    }
    let f_raw = prunable_fraction_formula(delta, gamma_a, mass, positive);
    Ok(PrunableReport {
        robustness,
        z_pos,
        z_neg,
        delta,
        gamma_a,
        w_pos_mass,
        w_neg_mass,
        f_raw,
        f_clamped: f_raw.clamp(0.0, 1.0),
    })
}

/// Gate state after a gated training run.
#[derive(Debug, Clone)]
pub struct GateSet {
    /// Learned gate probabilities, one per operator weight in parameter
    /// order.
    pub g: Vec<f64>,
    /// Final hard mask after rounding at 0.5.
    pub g_s: Vec<u8>,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl GateSet {
    pub fn open_count(&self) -> usize {
        self.g_s.iter().filter(|&&b| b == 1).count()
    }
}

/// Gate-training settings; `resample: false` pins every gate sample to 1
/// (the loop then degenerates to plain training, used for verification).
#[derive(Debug, Clone, Copy)]
pub struct GateConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub resample: bool,
}

impl GateConfig {
    pub fn new(lambda1: f64, lambda2: f64) -> Self {
        GateConfig {
            lambda1,
            lambda2,
            resample: true,
        }
    }
}

/// Trains `structure` with one Bernoulli gate per operator weight. Every
/// mini-batch resamples the gate mask; the data loss reaches gate
/// probabilities through the straight-through convention and the
/// regularizers `lambda1 * sum g(1-g) + lambda2 * sum g` push gates toward
/// a sparse binary pattern. Finalization keeps weights whose gate is at
/// least 0.5 and zeroes the rest (guarding against fully-pruned operators).
pub fn train_gated(
    data: &DataSplit,
    structure: &Formula,
    cfg: &TrainConfig,
    gate_cfg: &GateConfig,
) -> Result<(Formula, GateSet, Vec<EpochStats>), SparsifyError> {
    let out = train_impl(
        data,
        structure,
        cfg,
        Some(GateOptions {
            lambda1: gate_cfg.lambda1,
            lambda2: gate_cfg.lambda2,
            resample: gate_cfg.resample,
        }),
    )?;
    let mut formula = out.formula;
    let gates = out.gates;
    let hard: Vec<u8> = gates.iter().map(|&g| u8::from(g >= 0.5)).collect();

    // Zero gated-off weights, operator by operator in gate order.
    let mut ordinal = 0usize;
    fn finalize(
        expr: &mut Expr,
        path: &mut Vec<u8>,
        ordinal: &mut usize,
        hard: &[u8],
    ) -> Result<(), SparsifyError> {
        match expr {
            Expr::True | Expr::Pred(_) => {}
            Expr::Not(c) => {
                path.push(0);
                finalize(c, path, ordinal, hard)?;
                path.pop();
            }
            Expr::And(b) | Expr::Or(b) => {
                apply_mask(&mut b.weights, *ordinal, hard, path)?;
                *ordinal += 2;
                path.push(0);
                finalize(&mut b.left, path, ordinal, hard)?;
                path.pop();
                path.push(1);
                finalize(&mut b.right, path, ordinal, hard)?;
                path.pop();
            }
            Expr::Always(t) | Expr::Eventually(t) => {
                apply_mask(&mut t.weights, *ordinal, hard, path)?;
                *ordinal += t.weights.len();
                path.push(0);
                finalize(&mut t.child, path, ordinal, hard)?;
                path.pop();
            }
        }
        Ok(())
    }
    fn apply_mask(
        weights: &mut [f64],
        start: usize,
        hard: &[u8],
        path: &[u8],
    ) -> Result<(), SparsifyError> {
        if (0..weights.len()).all(|i| hard[start + i] == 0) {
            return Err(SparsifyError::OperatorFullyPruned {
                path: path_string(path),
            });
        }
        for (i, w) in weights.iter_mut().enumerate() {
            if hard[start + i] == 0 {
                *w = 0.0;
            }
        }
        Ok(())
    }
    let mut path = Vec::new();
    finalize(formula.root_mut(), &mut path, &mut ordinal, &hard)?;
    formula.mark_sparsified();

    let gate_set = GateSet {
        g: gates,
        g_s: hard,
        lambda1: gate_cfg.lambda1,
        lambda2: gate_cfg.lambda2,
    };
    Ok((formula, gate_set, out.history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split, synth_generate};
    use crate::formula::Interval;
    use crate::learn::train;
    use crate::semantics::softmin_aggregate;

    fn sigma(v: f64) -> Sigma {
        Sigma::new(v).unwrap()
    }

    fn always_with_weights(weights: Vec<f64>) -> Formula {
        let n = weights.len();
        Formula::always(
            Interval::new(0, n - 1).unwrap(),
            weights,
            Formula::pred(vec![1.0], 0.0),
        )
    }

    #[test]
    fn tau_pruning_zeroes_small_normalized_weights() {
        let f = always_with_weights(vec![0.1, 0.4, 0.2, 0.3]);
        let (pruned, report) = prune_tau(&f, 0.15).unwrap();
        match pruned.root() {
            Expr::Always(t) => assert_eq!(t.weights, vec![0.0, 0.4, 0.2, 0.3]),
            _ => unreachable!(),
        }
        assert!(pruned.is_sparsified());
        assert_eq!(report.operators[0].zeroed, vec![0]);
        assert_eq!(report.total_zeroed(), 1);
    }

    #[test]
    fn tau_zero_prunes_nothing() {
        let f = always_with_weights(vec![0.1, 0.4, 0.2, 0.3]);
        let (pruned, report) = prune_tau(&f, 0.0).unwrap();
        match pruned.root() {
            Expr::Always(t) => assert_eq!(t.weights, vec![0.1, 0.4, 0.2, 0.3]),
            _ => unreachable!(),
        }
        assert_eq!(report.total_zeroed(), 0);
    }

    #[test]
    fn tau_guards_against_full_prune() {
        let f = always_with_weights(vec![0.5, 0.5]);
        match prune_tau(&f, 0.6) {
            Err(SparsifyError::OperatorFullyPruned { .. }) => {}
            other => panic!("expected full-prune error, got {other:?}"),
        }
    }

    #[test]
    fn top_sbar_keeps_largest_with_index_ties() {
        let f = always_with_weights(vec![0.1, 0.4, 0.2, 0.3]);
        let (pruned, _) = prune_top_sbar(&f, 2).unwrap();
        match pruned.root() {
            Expr::Always(t) => assert_eq!(t.weights, vec![0.0, 0.4, 0.0, 0.3]),
            _ => unreachable!(),
        }
        // Ties: equal weights keep the lower time index.
        let g = always_with_weights(vec![0.25, 0.25, 0.25, 0.25]);
        let (pruned, _) = prune_top_sbar(&g, 2).unwrap();
        match pruned.root() {
            Expr::Always(t) => assert_eq!(t.weights, vec![0.25, 0.25, 0.0, 0.0]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn top_sbar_full_length_is_identity_up_to_normalization() {
        let f = always_with_weights(vec![1.0, 3.0]);
        let (pruned, report) = prune_top_sbar(&f, 2).unwrap();
        match pruned.root() {
            Expr::Always(t) => assert_eq!(t.weights, vec![0.25, 0.75]),
            _ => unreachable!(),
        }
        assert_eq!(report.total_zeroed(), 0);
    }

    #[test]
    fn top_sbar_range_is_checked() {
        let f = always_with_weights(vec![0.5, 0.5]);
        assert!(matches!(
            prune_top_sbar(&f, 0),
            Err(SparsifyError::SbarOutOfRange { .. })
        ));
        assert!(matches!(
            prune_top_sbar(&f, 3),
            Err(SparsifyError::SbarOutOfRange { .. })
        ));
    }

    #[test]
    fn pruning_covers_nested_operators() {
        let f = Formula::and(
            0.75,
            always_with_weights(vec![0.5, 0.3, 0.2]),
            0.25,
            Formula::eventually(
                Interval::new(0, 1).unwrap(),
                vec![0.9, 0.1],
                Formula::pred(vec![1.0], 0.0),
            ),
        );
        let (pruned, report) = prune_top_sbar(&f, 1).unwrap();
        assert_eq!(report.operators.len(), 3);
        assert_eq!(report.total_weights(), 2 + 3 + 2);
        // One survivor per operator: the And keeps 0.75, the Always 0.5, the
        // Eventually 0.9 (each normalized within its operator).
        assert_eq!(report.total_zeroed(), 4);
        match pruned.root() {
            Expr::And(b) => {
                assert_eq!(b.weights, [0.75, 0.0]);
                match b.left.as_ref() {
                    Expr::Always(t) => assert_eq!(t.weights, vec![0.5, 0.0, 0.0]),
                    _ => unreachable!(),
                }
                match b.right.as_ref() {
                    Expr::Eventually(t) => assert_eq!(t.weights, vec![0.9, 0.0]),
                    _ => unreachable!(),
                }
            }
            _ => unreachable!(),
        }
        // s over the smallest operator's length is out of range.
        assert!(matches!(prune_top_sbar(&f, 3), Err(SparsifyError::SbarOutOfRange { .. })));
    }

    #[test]
    fn pruned_aggregate_equals_renormalized_survivors() {
        let w = [0.1, 0.4, 0.2, 0.3];
        let r = [0.5, -0.2, 0.9, 0.1];
        let s = sigma(1.0);
        let full = softmin_aggregate(&[0.0, w[1], 0.0, w[3]], &r, s).unwrap();
        let survivors = softmin_aggregate(&[w[1], w[3]], &[r[1], r[3]], s).unwrap();
        assert!((full - survivors).abs() <= 1e-10);
    }

    #[test]
    fn prunable_fraction_arithmetic_matches_hand_case() {
        // delta=-1, gamma=2, positive mass 0.5 under positive robustness.
        let f = prunable_fraction_formula(-1.0, 2.0, 0.5, true);
        assert!((f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn prunable_fraction_report_matches_independent_recomputation() {
        let s = SignalMatrix::scalar(&[-1.0, -1.0, 0.5, 0.5]).unwrap();
        let f = Formula::always(
            Interval::new(0, 3).unwrap(),
            vec![0.45, 0.45, 0.05, 0.05],
            Formula::pred(vec![1.0], 0.0),
        );
        for sv in [1.0, 2.0] {
            let report = prunable_fraction(&s, &f, 0, sigma(sv)).unwrap();
            // Independent recomputation of the pieces.
            let r = [1.0, 1.0, -0.5, -0.5];
            let denom: f64 = r.iter().map(|&ri| (-ri / sv).exp()).sum();
            let z: Vec<f64> = r.iter().map(|&ri| (-ri / sv).exp() * ri / denom).collect();
            assert!((report.gamma_a - z[0]).abs() < 1e-12);
            assert!((report.delta - z[2]).abs() < 1e-12);
            assert!((report.w_pos_mass - 0.9).abs() < 1e-12);
            let expected = 1.0 + z[2] * (1.0 - 0.9) / (z[0] * 0.9);
            assert!((report.f_raw - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn prunable_fraction_requires_both_sides() {
        let s = SignalMatrix::scalar(&[-1.0, -2.0]).unwrap();
        let f = always_with_weights(vec![0.5, 0.5]);
        match prunable_fraction(&s, &f, 0, sigma(1.0)) {
            Err(SparsifyError::SideUndefined("delta")) => {}
            other => panic!("expected delta-undefined, got {other:?}"),
        }
        let s = SignalMatrix::scalar(&[1.0, 2.0]).unwrap();
        match prunable_fraction(&s, &f, 0, sigma(1.0)) {
            Err(SparsifyError::SideUndefined("gamma")) => {}
            other => panic!("expected gamma-undefined, got {other:?}"),
        }
    }

    #[test]
    fn prunable_fraction_rejects_non_always_root() {
        let s = SignalMatrix::scalar(&[1.0]).unwrap();
        let f = Formula::pred(vec![1.0], 0.0);
        assert!(matches!(
            prunable_fraction(&s, &f, 0, sigma(1.0)),
            Err(SparsifyError::NotAlwaysRoot)
        ));
    }

    #[test]
    fn gated_training_with_inert_gates_matches_plain_training() {
        let data = split(synth_generate(20, 6, 5), 0.25, 1).unwrap();
        let mut cfg = TrainConfig::new(sigma(1.0));
        cfg.epochs = 3;
        let t = Formula::always(
            Interval::new(0, 5).unwrap(),
            vec![1.0; 6],
            Formula::pred(vec![1.0, 1.0], 0.0),
        );
        let plain = train(&data, &t, &cfg).unwrap();
        let gate_cfg = GateConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            resample: false,
        };
        let (gated_formula, gates, history) = train_gated(&data, &t, &cfg, &gate_cfg).unwrap();
        assert_eq!(plain.history, history);
        // All gates start at 0.95 and drift only through the straight-through
        // term; none is expected to close in three epochs, so the final
        // weights coincide with the plain run.
        assert_eq!(gates.g_s.iter().filter(|&&b| b == 1).count(), 6);
        assert!(gated_formula.approx_eq(&plain.formula, 1e-12));
    }

    #[test]
    fn bimodal_gradient_is_zero_at_half() {
        // d/dg [g (1 - g)] = 1 - 2g vanishes at g = 0.5.
        let g = 0.5f64;
        assert_eq!(1.0 - 2.0 * g, 0.0);
    }

    #[test]
    fn regularizer_identities_at_binary_gates() {
        // The bi-modal term vanishes exactly on {0,1} gates and the L1 term
        // counts the open ones.
        let gates = [0.0, 1.0, 1.0, 0.0, 1.0];
        let bimodal: f64 = gates.iter().map(|g| g * (1.0 - g)).sum();
        let l1: f64 = gates.iter().sum();
        assert_eq!(bimodal, 0.0);
        assert_eq!(l1, 3.0);
    }

    #[test]
    fn gated_training_prunes_uninformative_time_points() {
        let data = split(synth_generate(40, 6, 11), 0.2, 2).unwrap();
        let mut cfg = TrainConfig::new(sigma(1.0));
        cfg.epochs = 12;
        let t = Formula::always(
            Interval::new(0, 5).unwrap(),
            vec![1.0; 6],
            Formula::pred(vec![1.0, 1.0], 0.0),
        );
        let gate_cfg = GateConfig::new(0.05, 0.3);
        let (formula, gates, _) = train_gated(&data, &t, &cfg, &gate_cfg).unwrap();
        assert!(formula.is_sparsified());
        assert!(gates.open_count() >= 1);
        assert!(gates.open_count() <= 6);
        assert!(formula.validate(2).is_ok());
    }
}
