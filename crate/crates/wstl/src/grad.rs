//! Reverse-mode differentiation of the weighted robustness with respect to
//! every trainable scalar of a formula.
//!
//! A forward pass records one tape node per distinct (subformula, time)
//! pair — the evaluation graph of the formula unrolled over the window, with
//! shared subexpressions computed once. Aggregate nodes store exact local
//! partials with respect to both their input robustness values and their raw
//! weights, so the backward sweep is a single reverse scan with adjoint
//! accumulation.
//!
//! For the aggregate `out = sum(w_i e_i r_i) / sum(w_i e_i)` with
//! `e_i = exp(-r_i / sigma)` and `p_i = w_i e_i / sum(w_j e_j)`:
//!
//! ```text
//!   d out / d r_i = p_i * (1 + (out - r_i) / sigma)
//!   d out / d w_i = e_i * (r_i - out) / sum(w_j e_j)
//! ```
//!
//! the first accounting for the explicit `r_i`, its softmin factor and the
//! shared denominator, the second for the full normalization Jacobian (the
//! value is invariant under uniform weight scaling, so these partials sum
//! against `w` to zero).

use crate::formula::{Expr, Formula, ParamKind, ParamView, TreeLayout};
use crate::rng::Rng;
use crate::semantics::{
    pred_value, robustness_weighted, softmin_core, EvalError, Sigma, SignalMatrix, SoftminLocals,
};

/// Gradient of one recorded evaluation; same length and order as the
/// [`ParamView`] of the formula (gate entries appended when gates are used).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    values: Vec<f64>,
}

impl Gradient {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

impl std::ops::Index<usize> for Gradient {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

#[derive(Debug, Clone)]
struct WeightSlot {
    param: usize,
    /// d out / d effective weight.
    dval: f64,
    /// For gated runs: (gate param index, raw weight, sampled gate).
    gate: Option<(usize, f64, f64)>,
}

#[derive(Debug, Clone)]
enum Node {
    Const {
        value: f64,
    },
    Pred {
        value: f64,
        sample: Vec<f64>,
        coeff_start: usize,
        offset_param: usize,
    },
    Neg {
        value: f64,
        input: usize,
    },
    Agg {
        value: f64,
        inputs: Vec<usize>,
        dr: Vec<f64>,
        weights: Vec<WeightSlot>,
        temporal: bool,
    },
}

impl Node {
    fn value(&self) -> f64 {
        match self {
            Node::Const { value }
            | Node::Pred { value, .. }
            | Node::Neg { value, .. }
            | Node::Agg { value, .. } => *value,
        }
    }
}

/// Record of one forward evaluation, topologically ordered (inputs precede
/// their consumers), with exactly one output node.
#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    output: usize,
    n_params: usize,
}

/// Breakdown of tape nodes by kind, mostly for inspecting network structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapeStats {
    pub predicates: usize,
    pub negations: usize,
    pub boolean_aggregates: usize,
    pub temporal_aggregates: usize,
    pub constants: usize,
}

impl Tape {
    /// Value of the recorded output (bit-identical to `robustness_weighted`
    /// on the same inputs).
    pub fn value(&self) -> f64 {
        self.nodes[self.output].value()
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn stats(&self) -> TapeStats {
        let mut s = TapeStats {
            predicates: 0,
            negations: 0,
            boolean_aggregates: 0,
            temporal_aggregates: 0,
            constants: 0,
        };
        for n in &self.nodes {
            match n {
                Node::Pred { .. } => s.predicates += 1,
                Node::Neg { .. } => s.negations += 1,
                Node::Agg { temporal: true, .. } => s.temporal_aggregates += 1,
                Node::Agg {
                    temporal: false, ..
                } => s.boolean_aggregates += 1,
                Node::Const { .. } => s.constants += 1,
            }
        }
        s
    }

    /// Exact reverse-mode gradient of the output with respect to every
    /// parameter.
    pub fn backward(&self) -> Gradient {
        let mut grad = vec![0.0; self.n_params];
        self.backward_scaled_into(1.0, &mut grad);
        Gradient { values: grad }
    }

    /// Accumulates `scale * gradient` into `acc`; used for summing weighted
    /// per-sample gradients without reallocation.
    pub fn backward_scaled_into(&self, scale: f64, acc: &mut [f64]) {
        assert_eq!(
            acc.len(),
            self.n_params,
            "gradient accumulator length mismatch"
        );
        let mut adjoint = vec![0.0; self.nodes.len()];
        adjoint[self.output] = scale;
        for idx in (0..self.nodes.len()).rev() {
            let adj = adjoint[idx];
            if adj == 0.0 {
                continue;
            }
            match &self.nodes[idx] {
                Node::Const { .. } => {}
                Node::Pred {
                    sample,
                    coeff_start,
                    offset_param,
                    ..
                } => {
                    for (j, &s) in sample.iter().enumerate() {
                        acc[coeff_start + j] += adj * (-s);
                    }
                    acc[*offset_param] += adj;
                }
                Node::Neg { input, .. } => {
                    adjoint[*input] -= adj;
                }
                Node::Agg {
                    inputs,
                    dr,
                    weights,
                    ..
                } => {
                    for (i, &input) in inputs.iter().enumerate() {
                        adjoint[input] += adj * dr[i];
                    }
                    for slot in weights {
                        match slot.gate {
                            None => acc[slot.param] += adj * slot.dval,
                            Some((gate_param, raw_w, sample)) => {
                                // Effective weight is raw * gate sample; the
                                // gate path uses the straight-through rule.
                                acc[slot.param] += adj * slot.dval * sample;
                                acc[gate_param] += adj * slot.dval * raw_w;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Exponent clamp when reconstructing the softmin factor of an inactive
/// (zero effective weight) entry; keeps the weight partial finite.
const INACTIVE_EXP_CLAMP: f64 = 500.0;

fn agg_partials(
    w_eff: &[f64],
    vals: &[f64],
    sigma: Sigma,
    locals: &SoftminLocals,
) -> (Vec<f64>, Vec<f64>) {
    let inv_sigma = 1.0 / sigma.value();
    let out = locals.value;
    let n = w_eff.len();
    let mut dr = vec![0.0; n];
    let mut dw = vec![0.0; n];
    for i in 0..n {
        if w_eff[i] == 0.0 {
            let e = ((locals.shift - vals[i]) * inv_sigma)
                .min(INACTIVE_EXP_CLAMP)
                .exp();
            dw[i] = e * (vals[i] - out) / locals.denom;
        } else {
            let p = w_eff[i] * locals.shifted[i] / locals.denom;
            dr[i] = p * (1.0 + (out - vals[i]) * inv_sigma);
            dw[i] = locals.shifted[i] * (vals[i] - out) / locals.denom;
        }
    }
    (dr, dw)
}

struct FlatNode<'a> {
    expr: &'a Expr,
    children: Vec<usize>,
}

fn flatten(expr: &Expr) -> Vec<FlatNode<'_>> {
    fn walk<'a>(expr: &'a Expr, out: &mut Vec<FlatNode<'a>>) -> usize {
        let id = out.len();
        out.push(FlatNode {
            expr,
            children: Vec::new(),
        });
        match expr {
            Expr::True | Expr::Pred(_) => {}
            Expr::Not(c) => {
                let child = walk(c, out);
                out[id].children.push(child);
            }
            Expr::And(b) | Expr::Or(b) => {
                let l = walk(&b.left, out);
                out[id].children.push(l);
                let r = walk(&b.right, out);
                out[id].children.push(r);
            }
            Expr::Always(t) | Expr::Eventually(t) => {
                let c = walk(&t.child, out);
                out[id].children.push(c);
            }
        }
        id
    }
    let mut out = Vec::new();
    walk(expr, &mut out);
    out
}

struct Recorder<'a> {
    signal: &'a SignalMatrix,
    sigma: Sigma,
    flat: Vec<FlatNode<'a>>,
    layout: TreeLayout,
    base_time: usize,
    /// memo[node_id][t - base_time] -> tape node index
    memo: Vec<Vec<Option<usize>>>,
    nodes: Vec<Node>,
    /// Gate mask and the param index of the first gate, when gated.
    gates: Option<(&'a [f64], usize)>,
}

impl<'a> Recorder<'a> {
    fn weight_slots(&self, id: usize, raw: &[f64], dw: &[f64]) -> Vec<WeightSlot> {
        let (param_start, _) = self.layout.param_range[id];
        let ordinal = self.layout.weight_base[id];
        (0..raw.len())
            .map(|i| WeightSlot {
                param: param_start + i,
                dval: dw[i],
                gate: self
                    .gates
                    .map(|(mask, gate_base)| (gate_base + ordinal + i, raw[i], mask[ordinal + i])),
            })
            .collect()
    }

    fn effective_weights(&self, id: usize, raw: &[f64]) -> Vec<f64> {
        match self.gates {
            None => raw.to_vec(),
            Some((mask, _)) => {
                let ordinal = self.layout.weight_base[id];
                raw.iter()
                    .enumerate()
                    .map(|(i, &w)| w * mask[ordinal + i])
                    .collect()
            }
        }
    }

    fn build(&mut self, id: usize, t: usize) -> Result<usize, EvalError> {
        if let Some(idx) = self.memo[id][t - self.base_time] {
            return Ok(idx);
        }
        let children: Vec<usize> = self.flat[id].children.clone();
        let idx = match self.flat[id].expr {
            Expr::True => {
                self.nodes.push(Node::Const {
                    value: f64::INFINITY,
                });
                self.nodes.len() - 1
            }
            Expr::Pred(p) => {
                let sample = self.signal.sample(t).to_vec();
                let value = pred_value(&p.coeffs, p.offset, &sample)?;
                let (start, _) = self.layout.param_range[id];
                self.nodes.push(Node::Pred {
                    value,
                    sample,
                    coeff_start: start,
                    offset_param: start + p.coeffs.len(),
                });
                self.nodes.len() - 1
            }
            Expr::Not(_) => {
                let input = self.build(children[0], t)?;
                let value = -self.nodes[input].value();
                self.nodes.push(Node::Neg { value, input });
                self.nodes.len() - 1
            }
            Expr::And(b) | Expr::Or(b) => {
                let dual = matches!(self.flat[id].expr, Expr::Or(_));
                let l = self.build(children[0], t)?;
                let r = self.build(children[1], t)?;
                let inputs = vec![l, r];
                let vals = [self.nodes[l].value(), self.nodes[r].value()];
                self.push_aggregate(id, &b.weights, inputs, &vals, dual, false)?
            }
            Expr::Always(tn) | Expr::Eventually(tn) => {
                let dual = matches!(self.flat[id].expr, Expr::Eventually(_));
                let mut inputs = Vec::with_capacity(tn.interval.len());
                let mut vals = Vec::with_capacity(tn.interval.len());
                for dt in tn.interval.points() {
                    let c = self.build(children[0], t + dt)?;
                    inputs.push(c);
                    vals.push(self.nodes[c].value());
                }
                self.push_aggregate(id, &tn.weights, inputs, &vals, dual, true)?
            }
        };
        self.memo[id][t - self.base_time] = Some(idx);
        Ok(idx)
    }

    fn push_aggregate(
        &mut self,
        id: usize,
        raw_weights: &[f64],
        inputs: Vec<usize>,
        vals: &[f64],
        dual: bool,
        temporal: bool,
    ) -> Result<usize, EvalError> {
        let w_eff = self.effective_weights(id, raw_weights);
        let (value, dr, dw) = if dual {
            let m: Vec<f64> = vals.iter().map(|v| -v).collect();
            let locals = softmin_core(&w_eff, &m, self.sigma)?;
            let (dr, dw) = agg_partials(&w_eff, &m, self.sigma, &locals);
            (-locals.value, dr, dw.iter().map(|d| -d).collect::<Vec<_>>())
        } else {
            let locals = softmin_core(&w_eff, vals, self.sigma)?;
            let (dr, dw) = agg_partials(&w_eff, vals, self.sigma, &locals);
            (locals.value, dr, dw)
        };
        let weights = self.weight_slots(id, raw_weights, &dw);
        self.nodes.push(Node::Agg {
            value,
            inputs,
            dr,
            weights,
            temporal,
        });
        Ok(self.nodes.len() - 1)
    }
}

fn record(
    signal: &SignalMatrix,
    formula: &Formula,
    k: usize,
    sigma: Sigma,
    gate_mask: Option<&[f64]>,
) -> Result<(f64, Tape), EvalError> {
    let needed = k + formula.horizon();
    if needed > signal.len() {
        return Err(EvalError::InsufficientLength {
            k,
            needed,
            have: signal.len(),
        });
    }
    let flat = flatten(formula.root());
    let layout = TreeLayout::of(formula);
    let horizon = formula.horizon().max(1);
    let n_tree_params = layout.n_params;
    let n_params = match gate_mask {
        Some(mask) => {
            assert_eq!(mask.len(), layout.n_op_weights, "gate mask length mismatch");
            n_tree_params + layout.n_op_weights
        }
        None => n_tree_params,
    };
    let mut rec = Recorder {
        signal,
        sigma,
        memo: vec![vec![None; horizon]; flat.len()],
        flat,
        layout,
        base_time: k,
        nodes: Vec::new(),
        gates: gate_mask.map(|m| (m, n_tree_params)),
    };
    let output = rec.build(0, k)?;
    let tape = Tape {
        nodes: rec.nodes,
        output,
        n_params,
    };
    Ok((tape.value(), tape))
}

/// Evaluates the weighted robustness and records the tape for
/// differentiation. The returned value is bit-identical to
/// [`robustness_weighted`] on the same inputs.
pub fn forward_record(
    signal: &SignalMatrix,
    formula: &Formula,
    k: usize,
    sigma: Sigma,
) -> Result<(f64, Tape), EvalError> {
    record(signal, formula, k, sigma, None)
}

/// Like [`forward_record`] but multiplies every operator weight by its gate
/// sample (`mask`, one entry per operator weight in parameter order). The
/// gradient vector gains one trailing entry per gate, reached through the
/// straight-through convention.
pub fn forward_record_gated(
    signal: &SignalMatrix,
    formula: &Formula,
    k: usize,
    sigma: Sigma,
    mask: &[f64],
) -> Result<(f64, Tape), EvalError> {
    record(signal, formula, k, sigma, Some(mask))
}

/// Relative error used by the finite-difference comparison.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Central finite-difference gradient of `robustness_weighted` with respect
/// to every parameter; the independent oracle for [`grad_check`].
pub fn finite_difference_gradient(
    signal: &SignalMatrix,
    formula: &Formula,
    k: usize,
    sigma: Sigma,
    step: f64,
) -> Result<Vec<f64>, EvalError> {
    let view = ParamView::of(formula);
    let base = view.read_values(formula);
    let mut probe = formula.clone();
    let mut grad = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        view.set(&mut probe, i, base[i] + step);
        let plus = robustness_weighted(signal, &probe, k, sigma)?;
        view.set(&mut probe, i, base[i] - step);
        let minus = robustness_weighted(signal, &probe, k, sigma)?;
        view.set(&mut probe, i, base[i]);
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

#[derive(Debug, Clone)]
pub struct GradCheckWorst {
    pub trial: usize,
    pub param: usize,
    pub kind: ParamKind,
    pub ad: f64,
    pub fd: f64,
    pub rel_error: f64,
}

/// Outcome of comparing reverse-mode gradients against central finite
/// differences over randomized signals and parameters.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub trials: usize,
    pub params_checked: usize,
    pub tolerance: f64,
    pub failures: usize,
    pub worst_rel_error: f64,
    pub worst: Option<GradCheckWorst>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

const FD_STEP: f64 = 1e-5;
/// Coarse step used to confirm numerically flat coordinates (see below).
const FD_STEP_COARSE: f64 = 1e-2;
/// Disagreements where both gradients are this small are candidates for
/// finite-difference roundoff noise rather than real errors.
const FD_NOISE_BAND: f64 = 1e-6;
/// Below this both measurements are under the oracle's resolution and count
/// as agreeing; a slope this size is indistinguishable from rounding.
const FD_ATOL: f64 = 1e-9;
/// Ulp allowance on the forward evaluations entering one central difference.
const FD_NOISE_ULPS: f64 = 32.0;

fn fd_single(
    signal: &SignalMatrix,
    probe: &mut Formula,
    view: &ParamView,
    index: usize,
    base: f64,
    k: usize,
    sigma: Sigma,
    step: f64,
) -> Result<f64, EvalError> {
    view.set(probe, index, base + step);
    let plus = robustness_weighted(signal, probe, k, sigma)?;
    view.set(probe, index, base - step);
    let minus = robustness_weighted(signal, probe, k, sigma)?;
    view.set(probe, index, base);
    Ok((plus - minus) / (2.0 * step))
}

/// Randomizes signals and parameters of `formula` `trials` times, comparing
/// [`Tape::backward`] against central finite differences per parameter.
/// Failures above `tolerance` are flagged in the report, not raised.
///
/// A coordinate where both sides are tiny and the first-pass difference is
/// below the finite-difference noise floor (central differences at step h
/// cannot resolve slopes under roughly `eps * |f| / h`, about 1e-11 here) is
/// re-measured at a coarser step before being counted: sharply concentrated
/// aggregates have exactly-zero recorded partials on time points whose
/// softmin factor underflowed, and the oracle must not mistake its own
/// roundoff for a gradient there.
pub fn grad_check(
    formula: &Formula,
    trials: usize,
    tolerance: f64,
    sigma: Sigma,
    seed: u64,
) -> Result<GradCheckReport, EvalError> {
    let mut rng = Rng::new(seed);
    let dim = formula.dim().unwrap_or(1);
    let horizon = formula.horizon().max(1);
    let view = ParamView::of(formula);
    let mut report = GradCheckReport {
        trials,
        params_checked: 0,
        tolerance,
        failures: 0,
        worst_rel_error: 0.0,
        worst: None,
    };
    for trial in 0..trials {
        let mut probe = formula.clone();
        for (i, desc) in view.descriptors().iter().enumerate() {
            let value = match desc.kind {
                ParamKind::OperatorWeight => {
                    // Preserve sparsified zeros so the masked path stays masked.
                    if formula.is_sparsified() && desc.value == 0.0 {
                        0.0
                    } else {
                        rng.uniform(0.5, 1.5)
                    }
                }
                ParamKind::Coefficient => rng.normal(),
                ParamKind::Offset => rng.uniform(-1.0, 1.0),
                ParamKind::GateLogit => unreachable!("gates are not tree parameters"),
            };
            view.set(&mut probe, i, value);
        }
        let len = horizon + rng.below(3);
        let data: Vec<f64> = (0..dim * len).map(|_| rng.normal()).collect();
        let signal = SignalMatrix::new(dim, len, data).expect("generated signal is finite");

        let (value, tape) = forward_record(&signal, &probe, 0, sigma)?;
        let ad = tape.backward();
        let fd = finite_difference_gradient(&signal, &probe, 0, sigma, FD_STEP)?;
        // Smallest slope the oracle can certify: rounding of the two forward
        // evaluations divided by the step.
        let resolution = FD_NOISE_ULPS * f64::EPSILON * value.abs().max(1.0) / (2.0 * FD_STEP);
        for param in 0..fd.len() {
            let a = ad[param];
            let mut f = fd[param];
            report.params_checked += 1;
            let mut rel = relative_error(a, f);
            if rel > tolerance && (a - f).abs() <= resolution {
                rel = 0.0;
            }
            if rel > tolerance && a.abs() + f.abs() < FD_NOISE_BAND {
                let base = view.get(&probe, param);
                let coarse = fd_single(
                    &signal,
                    &mut probe,
                    &view,
                    param,
                    base,
                    0,
                    sigma,
                    FD_STEP_COARSE,
                )?;
                let rel_coarse = relative_error(a, coarse);
                if rel_coarse < rel {
                    rel = rel_coarse;
                    f = coarse;
                }
                if rel > tolerance && a.abs() < FD_ATOL && f.abs() < FD_ATOL {
                    rel = 0.0;
                }
            }
            if rel > report.worst_rel_error {
                report.worst_rel_error = rel;
                report.worst = Some(GradCheckWorst {
                    trial,
                    param,
                    kind: view.kind(param),
                    ad: a,
                    fd: f,
                    rel_error: rel,
                });
            }
            if rel > tolerance {
                report.failures += 1;
            }
        }
    }
    Ok(report)
}
