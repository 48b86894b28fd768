//! Weighted STL formulas: syntax tree, validity rules, parameter enumeration,
//! and evaluation-horizon computation.
//!
//! A formula is a tree of predicates (`a^T s <= c`), Boolean connectives and
//! bounded temporal operators. Every conjunction/disjunction branch and every
//! time point of a temporal operator carries an importance weight. Weights are
//! stored un-normalized; the semantics layer normalizes per operator at
//! evaluation time, so training updates the raw values directly.

use thiserror::Error;

/// Discrete time interval `[start, end]`, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("empty interval: [{start},{end}] requires start <= end")]
pub struct EmptyInterval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn new(start: usize, end: usize) -> Result<Self, EmptyInterval> {
        if start > end {
            Err(EmptyInterval { start, end })
        } else {
            Ok(Interval { start, end })
        }
    }

    /// Number of time points covered (>= 1 for a valid interval).
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        self.start > self.end
    }

    pub fn points(&self) -> impl Iterator<Item = usize> {
        self.start..=self.end
    }
}

/// Affine predicate `a^T s <= c` over one signal sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl Predicate {
    pub fn new(coeffs: Vec<f64>, offset: f64) -> Self {
        Predicate { coeffs, offset }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }
}

/// Binary weighted connective (`and` / `or`).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryNode {
    pub weights: [f64; 2],
    pub left: Box<Expr>,
    pub right: Box<Expr>,
}

/// Weighted temporal operator (`always` / `eventually`) over an interval;
/// one weight per time point, so `weights.len() == interval.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalNode {
    pub interval: Interval,
    pub weights: Vec<f64>,
    pub child: Box<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    True,
    Pred(Predicate),
    Not(Box<Expr>),
    And(BinaryNode),
    Or(BinaryNode),
    Always(TemporalNode),
    Eventually(TemporalNode),
}

/// A wSTL formula: an expression tree plus a marker telling whether weights
/// have been sparsified. Zero weights are legal only on sparsified formulas;
/// at construction time every weight must be strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Formula {
    root: Expr,
    sparsified: bool,
}

impl Formula {
    pub fn truth() -> Self {
        Formula {
            root: Expr::True,
            sparsified: false,
        }
    }

    pub fn pred(coeffs: Vec<f64>, offset: f64) -> Self {
        Formula {
            root: Expr::Pred(Predicate::new(coeffs, offset)),
            sparsified: false,
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(child: Formula) -> Self {
        Formula {
            sparsified: child.sparsified,
            root: Expr::Not(Box::new(child.root)),
        }
    }

    pub fn and(w_left: f64, left: Formula, w_right: f64, right: Formula) -> Self {
        Formula {
            sparsified: left.sparsified || right.sparsified,
            root: Expr::And(BinaryNode {
                weights: [w_left, w_right],
                left: Box::new(left.root),
                right: Box::new(right.root),
            }),
        }
    }

    pub fn or(w_left: f64, left: Formula, w_right: f64, right: Formula) -> Self {
        Formula {
            sparsified: left.sparsified || right.sparsified,
            root: Expr::Or(BinaryNode {
                weights: [w_left, w_right],
                left: Box::new(left.root),
                right: Box::new(right.root),
            }),
        }
    }

    pub fn always(interval: Interval, weights: Vec<f64>, child: Formula) -> Self {
        Formula {
            sparsified: child.sparsified,
            root: Expr::Always(TemporalNode {
                interval,
                weights,
                child: Box::new(child.root),
            }),
        }
    }

    pub fn eventually(interval: Interval, weights: Vec<f64>, child: Formula) -> Self {
        Formula {
            sparsified: child.sparsified,
            root: Expr::Eventually(TemporalNode {
                interval,
                weights,
                child: Box::new(child.root),
            }),
        }
    }

    pub fn from_parts(root: Expr, sparsified: bool) -> Self {
        Formula { root, sparsified }
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn root_mut(&mut self) -> &mut Expr {
        &mut self.root
    }

    pub fn is_sparsified(&self) -> bool {
        self.sparsified
    }

    pub fn mark_sparsified(&mut self) {
        self.sparsified = true;
    }

    /// Minimal number of samples needed to evaluate the formula at time 0.
    pub fn horizon(&self) -> usize {
        horizon_expr(&self.root)
    }

    /// Checks every structural invariant against the declared signal
    /// dimension, collecting all violations rather than stopping at the first.
    pub fn validate(&self, dim: usize) -> Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        validate_expr(
            &self.root,
            dim,
            self.sparsified,
            &mut Vec::new(),
            &mut violations,
        );
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    /// Signal dimension of the first predicate found, if any. A formula with
    /// no predicates (e.g. `TRUE`) fits any dimension.
    pub fn dim(&self) -> Option<usize> {
        fn walk(e: &Expr) -> Option<usize> {
            match e {
                Expr::True => None,
                Expr::Pred(p) => Some(p.dim()),
                Expr::Not(c) => walk(c),
                Expr::And(b) | Expr::Or(b) => walk(&b.left).or_else(|| walk(&b.right)),
                Expr::Always(t) | Expr::Eventually(t) => walk(&t.child),
            }
        }
        walk(&self.root)
    }

    /// Structural equality with scalar tolerance: same shape, scalars within
    /// `rel_tol` relative (with a small absolute floor near zero).
    pub fn approx_eq(&self, other: &Formula, rel_tol: f64) -> bool {
        fn close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol * a.abs().max(b.abs()) + 1e-12
        }
        fn walk(a: &Expr, b: &Expr, tol: f64) -> bool {
            match (a, b) {
                (Expr::True, Expr::True) => true,
                (Expr::Pred(p), Expr::Pred(q)) => {
                    p.dim() == q.dim()
                        && close(p.offset, q.offset, tol)
                        && p.coeffs
                            .iter()
                            .zip(&q.coeffs)
                            .all(|(x, y)| close(*x, *y, tol))
                }
                (Expr::Not(x), Expr::Not(y)) => walk(x, y, tol),
                (Expr::And(x), Expr::And(y)) | (Expr::Or(x), Expr::Or(y)) => {
                    close(x.weights[0], y.weights[0], tol)
                        && close(x.weights[1], y.weights[1], tol)
                        && walk(&x.left, &y.left, tol)
                        && walk(&x.right, &y.right, tol)
                }
                (Expr::Always(x), Expr::Always(y)) | (Expr::Eventually(x), Expr::Eventually(y)) => {
                    x.interval == y.interval
                        && x.weights.len() == y.weights.len()
                        && x.weights
                            .iter()
                            .zip(&y.weights)
                            .all(|(p, q)| close(*p, *q, tol))
                        && walk(&x.child, &y.child, tol)
                }
                _ => false,
            }
        }
        walk(&self.root, &other.root, rel_tol)
    }
}

fn horizon_expr(expr: &Expr) -> usize {
    match expr {
        Expr::True => 0,
        Expr::Pred(_) => 1,
        Expr::Not(child) => horizon_expr(child),
        Expr::And(b) | Expr::Or(b) => horizon_expr(&b.left).max(horizon_expr(&b.right)),
        Expr::Always(t) | Expr::Eventually(t) => t.interval.end + horizon_expr(&t.child),
    }
}

/// One violation found by [`Formula::validate`]. `path` is the sequence of
/// child indices from the root to the offending node.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveWeight {
        path: Vec<u8>,
        index: usize,
        value: f64,
    },
    NegativeWeight {
        path: Vec<u8>,
        index: usize,
        value: f64,
    },
    OperatorFullyZero {
        path: Vec<u8>,
    },
    WeightLengthMismatch {
        path: Vec<u8>,
        weights: usize,
        interval_len: usize,
    },
    DimensionMismatch {
        path: Vec<u8>,
        expected: usize,
        got: usize,
    },
    EmptyInterval {
        path: Vec<u8>,
        start: usize,
        end: usize,
    },
    NonFiniteScalar {
        path: Vec<u8>,
        what: &'static str,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fn path_str(p: &[u8]) -> String {
            if p.is_empty() {
                "root".to_string()
            } else {
                p.iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(".")
            }
        }
        match self {
            Violation::NonPositiveWeight { path, index, value } => {
                write!(
                    f,
                    "non-positive weight {value} at index {index} of operator {}",
                    path_str(path)
                )
            }
            Violation::NegativeWeight { path, index, value } => {
                write!(
                    f,
                    "negative weight {value} at index {index} of sparsified operator {}",
                    path_str(path)
                )
            }
            Violation::OperatorFullyZero { path } => {
                write!(f, "all weights zero on operator {}", path_str(path))
            }
            Violation::WeightLengthMismatch {
                path,
                weights,
                interval_len,
            } => {
                write!(
                    f,
                    "weight length {weights} != interval length {interval_len} at {}",
                    path_str(path)
                )
            }
            Violation::DimensionMismatch {
                path,
                expected,
                got,
            } => {
                write!(
                    f,
                    "predicate dimension {got} != signal dimension {expected} at {}",
                    path_str(path)
                )
            }
            Violation::EmptyInterval { path, start, end } => {
                write!(f, "empty interval [{start},{end}] at {}", path_str(path))
            }
            Violation::NonFiniteScalar { path, what } => {
                write!(f, "non-finite {what} at {}", path_str(path))
            }
        }
    }
}

fn check_weights(weights: &[f64], sparsified: bool, path: &[u8], out: &mut Vec<Violation>) {
    let mut any_positive = false;
    for (index, &value) in weights.iter().enumerate() {
        if !value.is_finite() {
            out.push(Violation::NonFiniteScalar {
                path: path.to_vec(),
                what: "weight",
            });
            continue;
        }
        if value > 0.0 {
            any_positive = true;
        } else if sparsified {
            if value < 0.0 {
                out.push(Violation::NegativeWeight {
                    path: path.to_vec(),
                    index,
                    value,
                });
            }
        } else {
            out.push(Violation::NonPositiveWeight {
                path: path.to_vec(),
                index,
                value,
            });
        }
    }
    if sparsified && !any_positive {
        out.push(Violation::OperatorFullyZero {
            path: path.to_vec(),
        });
    }
}

fn validate_expr(
    expr: &Expr,
    dim: usize,
    sparsified: bool,
    path: &mut Vec<u8>,
    out: &mut Vec<Violation>,
) {
    match expr {
        Expr::True => {}
        Expr::Pred(p) => {
            if p.dim() != dim {
                out.push(Violation::DimensionMismatch {
                    path: path.clone(),
                    expected: dim,
                    got: p.dim(),
                });
            }
            if !p.offset.is_finite() || p.coeffs.iter().any(|c| !c.is_finite()) {
                out.push(Violation::NonFiniteScalar {
                    path: path.clone(),
                    what: "predicate scalar",
                });
            }
        }
        Expr::Not(child) => {
            path.push(0);
            validate_expr(child, dim, sparsified, path, out);
            path.pop();
        }
        Expr::And(b) | Expr::Or(b) => {
            check_weights(&b.weights, sparsified, path, out);
            path.push(0);
            validate_expr(&b.left, dim, sparsified, path, out);
            path.pop();
            path.push(1);
            validate_expr(&b.right, dim, sparsified, path, out);
            path.pop();
        }
        Expr::Always(t) | Expr::Eventually(t) => {
            if t.interval.is_empty() {
                out.push(Violation::EmptyInterval {
                    path: path.clone(),
                    start: t.interval.start,
                    end: t.interval.end,
                });
            }
            if t.weights.len() != t.interval.len() && !t.interval.is_empty() {
                out.push(Violation::WeightLengthMismatch {
                    path: path.clone(),
                    weights: t.weights.len(),
                    interval_len: t.interval.len(),
                });
            }
            check_weights(&t.weights, sparsified, path, out);
            path.push(0);
            validate_expr(&t.child, dim, sparsified, path, out);
            path.pop();
        }
    }
}

/// Kind of a trainable scalar inside a formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Predicate coefficient `a_j`.
    Coefficient,
    /// Predicate offset `c`.
    Offset,
    /// Weight of a Boolean or temporal operator.
    OperatorWeight,
    /// Gate probability attached to one operator weight (present only when
    /// gate sparsification is active).
    GateLogit,
}

/// Descriptor of one trainable scalar: where it lives and what it is.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDesc {
    pub path: Vec<u8>,
    pub kind: ParamKind,
    /// Index within the node: coefficient index, weight index, 0 for offsets.
    pub slot: usize,
    /// Value at the time the view was built.
    pub value: f64,
}

/// Flat, deterministic (pre-order, weights before children, left before
/// right) enumeration of every trainable scalar in a formula. Reading and
/// writing go through the descriptor paths, so a view stays usable across
/// parameter updates as long as the tree SHAPE is unchanged.
#[derive(Debug, Clone)]
pub struct ParamView {
    descs: Vec<ParamDesc>,
}

impl ParamView {
    pub fn of(formula: &Formula) -> Self {
        let mut descs = Vec::new();
        let mut path = Vec::new();
        collect_params(formula.root(), &mut path, &mut descs);
        ParamView { descs }
    }

    pub fn len(&self) -> usize {
        self.descs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descs.is_empty()
    }

    pub fn descriptors(&self) -> &[ParamDesc] {
        &self.descs
    }

    pub fn kind(&self, index: usize) -> ParamKind {
        self.descs[index].kind
    }

    /// Current values read from the tree, in view order.
    pub fn read_values(&self, formula: &Formula) -> Vec<f64> {
        self.descs
            .iter()
            .map(|d| *scalar_at(formula.root(), &d.path, d.kind, d.slot))
            .collect()
    }

    /// Writes `values` (same length and order as the view) into the tree.
    pub fn write_values(&self, formula: &mut Formula, values: &[f64]) {
        assert_eq!(
            values.len(),
            self.descs.len(),
            "value vector length mismatch"
        );
        for (d, &v) in self.descs.iter().zip(values) {
            *scalar_at_mut(formula.root_mut(), &d.path, d.kind, d.slot) = v;
        }
    }

    pub fn get(&self, formula: &Formula, index: usize) -> f64 {
        let d = &self.descs[index];
        *scalar_at(formula.root(), &d.path, d.kind, d.slot)
    }

    pub fn set(&self, formula: &mut Formula, index: usize, value: f64) {
        let d = &self.descs[index];
        *scalar_at_mut(formula.root_mut(), &d.path, d.kind, d.slot) = value;
    }
}

fn collect_params(expr: &Expr, path: &mut Vec<u8>, out: &mut Vec<ParamDesc>) {
    match expr {
        Expr::True => {}
        Expr::Pred(p) => {
            for (slot, &value) in p.coeffs.iter().enumerate() {
                out.push(ParamDesc {
                    path: path.clone(),
                    kind: ParamKind::Coefficient,
                    slot,
                    value,
                });
            }
            out.push(ParamDesc {
                path: path.clone(),
                kind: ParamKind::Offset,
                slot: 0,
                value: p.offset,
            });
        }
        Expr::Not(child) => {
            path.push(0);
            collect_params(child, path, out);
            path.pop();
        }
        Expr::And(b) | Expr::Or(b) => {
            for (slot, &value) in b.weights.iter().enumerate() {
                out.push(ParamDesc {
                    path: path.clone(),
                    kind: ParamKind::OperatorWeight,
                    slot,
                    value,
                });
            }
            path.push(0);
            collect_params(&b.left, path, out);
            path.pop();
            path.push(1);
            collect_params(&b.right, path, out);
            path.pop();
        }
        Expr::Always(t) | Expr::Eventually(t) => {
            for (slot, &value) in t.weights.iter().enumerate() {
                out.push(ParamDesc {
                    path: path.clone(),
                    kind: ParamKind::OperatorWeight,
                    slot,
                    value,
                });
            }
            path.push(0);
            collect_params(&t.child, path, out);
            path.pop();
        }
    }
}

fn node_at<'a>(mut expr: &'a Expr, path: &[u8]) -> &'a Expr {
    for &step in path {
        expr = match expr {
            Expr::Not(c) => c,
            Expr::And(b) | Expr::Or(b) => {
                if step == 0 {
                    &b.left
                } else {
                    &b.right
                }
            }
            Expr::Always(t) | Expr::Eventually(t) => &t.child,
            _ => panic!("path descends into a leaf"),
        };
    }
    expr
}

fn node_at_mut<'a>(mut expr: &'a mut Expr, path: &[u8]) -> &'a mut Expr {
    for &step in path {
        expr = match expr {
            Expr::Not(c) => c,
            Expr::And(b) | Expr::Or(b) => {
                if step == 0 {
                    &mut b.left
                } else {
                    &mut b.right
                }
            }
            Expr::Always(t) | Expr::Eventually(t) => &mut t.child,
            _ => panic!("path descends into a leaf"),
        };
    }
    expr
}

fn scalar_at<'a>(root: &'a Expr, path: &[u8], kind: ParamKind, slot: usize) -> &'a f64 {
    let node = node_at(root, path);
    match (kind, node) {
        (ParamKind::Coefficient, Expr::Pred(p)) => &p.coeffs[slot],
        (ParamKind::Offset, Expr::Pred(p)) => &p.offset,
        (ParamKind::OperatorWeight, Expr::And(b) | Expr::Or(b)) => &b.weights[slot],
        (ParamKind::OperatorWeight, Expr::Always(t) | Expr::Eventually(t)) => &t.weights[slot],
        _ => panic!("descriptor does not match tree shape"),
    }
}

fn scalar_at_mut<'a>(root: &'a mut Expr, path: &[u8], kind: ParamKind, slot: usize) -> &'a mut f64 {
    let node = node_at_mut(root, path);
    match (kind, node) {
        (ParamKind::Coefficient, Expr::Pred(p)) => &mut p.coeffs[slot],
        (ParamKind::Offset, Expr::Pred(p)) => &mut p.offset,
        (ParamKind::OperatorWeight, Expr::And(b) | Expr::Or(b)) => &mut b.weights[slot],
        (ParamKind::OperatorWeight, Expr::Always(t) | Expr::Eventually(t)) => &mut t.weights[slot],
        _ => panic!("descriptor does not match tree shape"),
    }
}

/// Pre-order layout of a formula used by the differentiation tape: per-node
/// parameter offsets into the [`ParamView`] order, plus a running ordinal for
/// operator weights (gates attach one-per-operator-weight in this order).
#[derive(Debug, Clone)]
pub(crate) struct TreeLayout {
    /// For each pre-order node id: (first param index, param count).
    pub param_range: Vec<(usize, usize)>,
    /// For each pre-order node id: first operator-weight ordinal (meaningful
    /// for operator nodes only).
    pub weight_base: Vec<usize>,
    pub n_params: usize,
    pub n_op_weights: usize,
}

impl TreeLayout {
    pub fn of(formula: &Formula) -> Self {
        let mut layout = TreeLayout {
            param_range: Vec::new(),
            weight_base: Vec::new(),
            n_params: 0,
            n_op_weights: 0,
        };
        fn walk(expr: &Expr, l: &mut TreeLayout) {
            let start = l.n_params;
            l.weight_base.push(l.n_op_weights);
            let id = l.param_range.len();
            l.param_range.push((start, 0));
            match expr {
                Expr::True => {}
                Expr::Pred(p) => {
                    l.n_params += p.dim() + 1;
                }
                Expr::Not(c) => {
                    walk(c, l);
                }
                Expr::And(b) | Expr::Or(b) => {
                    l.n_params += 2;
                    l.n_op_weights += 2;
                    walk(&b.left, l);
                    walk(&b.right, l);
                }
                Expr::Always(t) | Expr::Eventually(t) => {
                    l.n_params += t.weights.len();
                    l.n_op_weights += t.weights.len();
                    walk(&t.child, l);
                }
            }
            l.param_range[id].1 = match expr {
                Expr::Pred(p) => p.dim() + 1,
                Expr::And(_) | Expr::Or(_) => 2,
                Expr::Always(t) | Expr::Eventually(t) => t.weights.len(),
                _ => 0,
            };
        }
        walk(formula.root(), &mut layout);
        layout
    }
}
