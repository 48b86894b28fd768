//! Randomized verification suites: semantic properties of the weighted
//! aggregate, agreement with an independent classical oracle, gradient
//! correctness against finite differences, and parser round-trips. These
//! back the `check` CLI command and the acceptance tests.

use crate::formula::{Expr, Formula, Interval, ParamKind, ParamView};
use crate::grad::{forward_record, grad_check};
use crate::random::{random_formula, random_signal, GenConfig};
use crate::rng::Rng;
use crate::semantics::{
    robustness_classical, robustness_weighted, softmin_aggregate, Sigma, SignalMatrix,
};
use crate::text;

/// Outcome of one randomized property run.
#[derive(Debug, Clone)]
pub struct PropertyReport {
    pub name: &'static str,
    pub instances: usize,
    pub failures: usize,
    /// Worst observed deviation, when the property is numeric.
    pub worst: f64,
    pub detail: String,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn line(&self) -> String {
        format!(
            "{}: {} ({} instances, worst {:.3e}{})",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.instances,
            self.worst,
            if self.detail.is_empty() {
                String::new()
            } else {
                format!(", {}", self.detail)
            }
        )
    }
}

/// Independent transliteration of the classical min/max semantics, kept
/// deliberately separate from `robustness_classical` (explicit loops and
/// accumulators) so the two can cross-check each other.
pub fn classical_oracle(signal: &SignalMatrix, formula: &Formula, k: usize) -> f64 {
    fn eval(signal: &SignalMatrix, expr: &Expr, k: usize) -> f64 {
        match expr {
            Expr::True => f64::INFINITY,
            Expr::Pred(p) => {
                let sample = signal.sample(k);
                let mut dot = 0.0;
                for j in 0..p.coeffs.len() {
                    dot += p.coeffs[j] * sample[j];
                }
                p.offset - dot
            }
            Expr::Not(c) => -eval(signal, c, k),
            Expr::And(b) => {
                let l = eval(signal, &b.left, k);
                let r = eval(signal, &b.right, k);
                if l < r {
                    l
                } else {
                    r
                }
            }
            Expr::Or(b) => {
                let l = eval(signal, &b.left, k);
                let r = eval(signal, &b.right, k);
                if l > r {
                    l
                } else {
                    r
                }
            }
            Expr::Always(t) => {
                let mut m = f64::INFINITY;
                for dt in t.interval.start..=t.interval.end {
                    let v = eval(signal, &t.child, k + dt);
                    if v < m {
                        m = v;
                    }
                }
                m
            }
            Expr::Eventually(t) => {
                let mut m = f64::NEG_INFINITY;
                for dt in t.interval.start..=t.interval.end {
                    let v = eval(signal, &t.child, k + dt);
                    if v > m {
                        m = v;
                    }
                }
                m
            }
        }
    }
    eval(signal, formula.root(), k)
}

fn random_weights(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(0.1, 2.0)).collect()
}

fn random_values(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-5.0, 5.0)).collect()
}

/// Perturbing inputs under zero weights must leave the aggregate bit-exact.
pub fn check_zero_weight_non_influence(instances: usize, seed: u64) -> PropertyReport {
    let mut rng = Rng::new(seed);
    let sigma = Sigma::new(1.0).unwrap();
    let mut failures = 0;
    for _ in 0..instances {
        let n = 2 + rng.below(7);
        let mut w = random_weights(&mut rng, n);
        let zeros = 1 + rng.below(n - 1);
        for w_i in w.iter_mut().take(zeros) {
            *w_i = 0.0;
        }
        let r = random_values(&mut rng, n);
        let a = softmin_aggregate(&w, &r, sigma).unwrap();
        let mut r2 = r.clone();
        for (z, item) in r2.iter_mut().enumerate().take(zeros) {
            *item = rng.uniform(-1e6, 1e6) + (z as f64);
        }
        let b = softmin_aggregate(&w, &r2, sigma).unwrap();
        if a.to_bits() != b.to_bits() {
            failures += 1;
        }
    }
    PropertyReport {
        name: "zero-weight non-influence",
        instances,
        failures,
        worst: 0.0,
        detail: "bit-exact".to_string(),
    }
}

/// Adding d >= 0 to every input never decreases the conjunctive aggregate.
pub fn check_monotonicity(instances: usize, seed: u64) -> PropertyReport {
    let mut rng = Rng::new(seed);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let sigma = Sigma::new([0.1, 1.0, 10.0][i % 3]).unwrap();
        let n = 2 + rng.below(7);
        let w = random_weights(&mut rng, n);
        let r = random_values(&mut rng, n);
        let d = if rng.bernoulli(0.1) {
            0.0
        } else {
            rng.uniform(0.001, 5.0)
        };
        let shifted: Vec<f64> = r.iter().map(|v| v + d).collect();
        let a = softmin_aggregate(&w, &r, sigma).unwrap();
        let b = softmin_aggregate(&w, &shifted, sigma).unwrap();
        if b < a {
            failures += 1;
            worst = worst.max(a - b);
        }
    }
    PropertyReport {
        name: "monotonicity",
        instances,
        failures,
        worst,
        detail: String::new(),
    }
}

/// `not(not(f) and not(g))` against `f or g` (and the temporal pair) under
/// identical weights.
pub fn check_demorgan(instances: usize, seed: u64) -> PropertyReport {
    let mut rng = Rng::new(seed);
    let cfg = GenConfig {
        max_depth: 2,
        dim: 2,
        max_horizon: 5,
        allow_true: false,
    };
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    const TOL: f64 = 1e-12;
    for i in 0..instances {
        let sigma = Sigma::new([0.5, 1.0, 5.0][i % 3]).unwrap();
        let f = random_formula(&mut rng, &cfg);
        let g = random_formula(&mut rng, &cfg);
        let (w1, w2) = (rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0));
        let horizon = f.horizon().max(g.horizon()) + 4;
        let signal = random_signal(&mut rng, 2, horizon);

        let lhs = Formula::not(Formula::and(
            w1,
            Formula::not(f.clone()),
            w2,
            Formula::not(g.clone()),
        ));
        let rhs = Formula::or(w1, f.clone(), w2, g);
        let a = robustness_weighted(&signal, &lhs, 0, sigma).unwrap();
        let b = robustness_weighted(&signal, &rhs, 0, sigma).unwrap();
        let d1 = (a - b).abs();

        let n = 1 + rng.below(3);
        let interval = Interval::new(0, n - 1).unwrap();
        let weights = random_weights(&mut rng, n);
        let lhs_t = Formula::not(Formula::always(
            interval,
            weights.clone(),
            Formula::not(f.clone()),
        ));
        let rhs_t = Formula::eventually(interval, weights, f);
        let at = robustness_weighted(&signal, &lhs_t, 0, sigma).unwrap();
        let bt = robustness_weighted(&signal, &rhs_t, 0, sigma).unwrap();
        let d2 = (at - bt).abs();

        let d = d1.max(d2);
        worst = worst.max(d);
        if d > TOL {
            failures += 1;
        }
    }
    PropertyReport {
        name: "DeMorgan duality",
        instances,
        failures,
        worst,
        detail: "tol 1e-12".to_string(),
    }
}

/// Double negation evaluates bit-identically.
pub fn check_double_negation(instances: usize, seed: u64) -> PropertyReport {
    let mut rng = Rng::new(seed);
    let cfg = GenConfig {
        max_depth: 3,
        dim: 2,
        max_horizon: 8,
        allow_true: false,
    };
    let mut failures = 0;
    for i in 0..instances {
        let sigma = Sigma::new([0.1, 1.0, 10.0][i % 3]).unwrap();
        let f = random_formula(&mut rng, &cfg);
        let signal = random_signal(&mut rng, 2, f.horizon().max(1));
        let a = robustness_weighted(&signal, &f, 0, sigma).unwrap();
        let b = robustness_weighted(&signal, &Formula::not(Formula::not(f)), 0, sigma).unwrap();
        if a.to_bits() != b.to_bits() {
            failures += 1;
        }
    }
    PropertyReport {
        name: "double negation",
        instances,
        failures,
        worst: 0.0,
        detail: "bit-exact".to_string(),
    }
}

/// The aggregate is a convex combination of its active inputs.
pub fn check_convex_bounds(instances: usize, seed: u64) -> PropertyReport {
    let mut rng = Rng::new(seed);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let sigma = Sigma::new([0.1, 1.0, 10.0][i % 3]).unwrap();
        let n = 1 + rng.below(8);
        let mut w = random_weights(&mut rng, n);
        if n > 1 && rng.bernoulli(0.3) {
            w[rng.below(n)] = 0.0;
        }
        let r = random_values(&mut rng, n);
        if w.iter().all(|&x| x == 0.0) {
            continue;
        }
        let out = softmin_aggregate(&w, &r, sigma).unwrap();
        let active: Vec<f64> = r
            .iter()
            .zip(&w)
            .filter(|(_, &wi)| wi > 0.0)
            .map(|(&ri, _)| ri)
            .collect();
        let lo = active.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = active.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        let excess = (lo - out).max(out - hi).max(0.0);
        if excess > slack {
            failures += 1;
        }
        worst = worst.max(excess);
    }
    PropertyReport {
        name: "convex-combination bounds",
        instances,
        failures,
        worst,
        detail: String::new(),
    }
}

/// Scaling one operator's weight vector leaves the robustness unchanged
/// (normalization cancels).
pub fn check_weight_scaling_invariance(instances: usize, seed: u64) -> PropertyReport {
    let mut rng = Rng::new(seed);
    let cfg = GenConfig {
        max_depth: 3,
        dim: 2,
        max_horizon: 8,
        allow_true: false,
    };
    const TOL: f64 = 1e-10;
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < instances {
        let sigma = Sigma::new([0.1, 1.0, 10.0][done % 3]).unwrap();
        let f = random_formula(&mut rng, &cfg);
        let view = ParamView::of(&f);
        // Group operator-weight parameters by owning node path.
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut last_path: Option<&[u8]> = None;
        for (i, d) in view.descriptors().iter().enumerate() {
            if d.kind != ParamKind::OperatorWeight {
                continue;
            }
            if last_path == Some(d.path.as_slice()) {
                groups.last_mut().unwrap().push(i);
            } else {
                groups.push(vec![i]);
                last_path = Some(d.path.as_slice());
            }
        }
        if groups.is_empty() {
            continue;
        }
        let signal = random_signal(&mut rng, 2, f.horizon().max(1));
        let base = robustness_weighted(&signal, &f, 0, sigma).unwrap();
        let mut scaled = f.clone();
        for &i in &groups[rng.below(groups.len())] {
            let v = view.get(&scaled, i);
            view.set(&mut scaled, i, v * 3.0);
        }
        let after = robustness_weighted(&signal, &scaled, 0, sigma).unwrap();
        let d = (base - after).abs() / base.abs().max(1.0);
        worst = worst.max(d);
        if d > TOL {
            failures += 1;
        }
        done += 1;
    }
    PropertyReport {
        name: "weight-scaling invariance",
        instances,
        failures,
        worst,
        detail: "tol 1e-10".to_string(),
    }
}

/// With equal weights and a sharp temperature the weighted semantics must
/// approach the classical one; inputs are kept pairwise separated so the
/// softmin concentrates cleanly.
pub fn check_sigma_limit(instances: usize, seed: u64) -> PropertyReport {
    let mut rng = Rng::new(seed);
    let sigma = Sigma::new(1e-3).unwrap();
    const SEPARATION: f64 = 0.1;
    const TOL: f64 = 1e-6;
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        // Child robustness values with pairwise separation >= 0.1.
        let n = 2 + rng.below(6);
        let mut values: Vec<f64>;
        loop {
            values = (0..n).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let mut ok = true;
            for a in 0..n {
                for b in a + 1..n {
                    if (values[a] - values[b]).abs() < SEPARATION {
                        ok = false;
                    }
                }
            }
            if ok {
                break;
            }
        }
        // Predicate (x1 <= 0) gives child robustness -s(k).
        let samples: Vec<f64> = values.iter().map(|v| -v).collect();
        let signal = SignalMatrix::scalar(&samples).unwrap();
        let interval = Interval::new(0, n - 1).unwrap();
        let pred = Formula::pred(vec![1.0], 0.0);
        let f = match i % 4 {
            0 => Formula::always(interval, vec![1.0; n], pred),
            1 => Formula::eventually(interval, vec![1.0; n], pred),
            2 => Formula::and(
                1.0,
                Formula::pred(vec![1.0], values[0] + samples[0]),
                1.0,
                Formula::pred(vec![1.0], values[1] + samples[0]),
            ),
            _ => Formula::or(
                1.0,
                Formula::pred(vec![1.0], values[0] + samples[0]),
                1.0,
                Formula::pred(vec![1.0], values[1] + samples[0]),
            ),
        };
        let w = robustness_weighted(&signal, &f, 0, sigma).unwrap();
        let c = robustness_classical(&signal, &f, 0).unwrap();
        let d = (w - c).abs();
        worst = worst.max(d);
        if d > TOL {
            failures += 1;
        }
    }
    PropertyReport {
        name: "sigma->0 classical limit",
        instances,
        failures,
        worst,
        detail: "sigma 1e-3, tol 1e-6".to_string(),
    }
}

/// With equal child values, the branch with the larger weight has the larger
/// influence on the output (checked through predicate-offset gradients).
pub fn check_ordering_of_influence(instances: usize, seed: u64) -> PropertyReport {
    let mut rng = Rng::new(seed);
    let mut failures = 0;
    for i in 0..instances {
        let sigma = Sigma::new([0.5, 1.0, 5.0][i % 3]).unwrap();
        let w1 = rng.uniform(0.5, 2.0);
        let w2 = w1 - rng.uniform(0.05, 0.45);
        let a = rng.normal();
        let c = rng.uniform(-1.0, 1.0);
        let f = Formula::and(w1, Formula::pred(vec![a], c), w2, Formula::pred(vec![a], c));
        let signal = SignalMatrix::scalar(&[rng.normal()]).unwrap();
        let (_, tape) = forward_record(&signal, &f, 0, sigma).unwrap();
        let g = tape.backward();
        // params: [w1, w2, a1, c1, a2, c2]; d out / d c_i = d out / d r_i.
        if g[3].abs() <= g[5].abs() {
            failures += 1;
        }
    }
    PropertyReport {
        name: "ordering of influence",
        instances,
        failures,
        worst: 0.0,
        detail: String::new(),
    }
}

/// Classical semantics against the independent oracle, exact equality.
pub fn check_classical_oracle(instances: usize, seed: u64) -> PropertyReport {
    let mut rng = Rng::new(seed);
    let cfg = GenConfig {
        max_depth: 3,
        dim: 3,
        max_horizon: 10,
        allow_true: true,
    };
    let mut failures = 0;
    for _ in 0..instances {
        let f = random_formula(&mut rng, &cfg);
        let len = f.horizon().max(1) + rng.below(3);
        let signal = random_signal(&mut rng, 3, len);
        let a = robustness_classical(&signal, &f, 0).unwrap();
        let b = classical_oracle(&signal, &f, 0);
        if a.to_bits() != b.to_bits() {
            failures += 1;
        }
    }
    PropertyReport {
        name: "classical semantics vs oracle",
        instances,
        failures,
        worst: 0.0,
        detail: "exact".to_string(),
    }
}

/// Print -> parse round trip: structural equality with 1e-6 scalar
/// agreement.
pub fn check_parser_round_trip(instances: usize, seed: u64) -> PropertyReport {
    let mut rng = Rng::new(seed);
    let mut failures = 0;
    for i in 0..instances {
        let dim = 1 + (i % 5);
        let cfg = GenConfig {
            max_depth: 4,
            dim,
            max_horizon: 12,
            allow_true: true,
        };
        let f = random_formula(&mut rng, &cfg);
        let printed = text::print(&f);
        match text::parse(&printed, dim) {
            Ok(parsed) => {
                if !parsed.approx_eq(&f, 1e-6) {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    PropertyReport {
        name: "parser round trip",
        instances,
        failures,
        worst: 0.0,
        detail: "structural, 1e-6 scalars".to_string(),
    }
}

/// Runs every property suite with at least `instances` randomized cases.
pub fn check_properties(instances: usize, seed: u64) -> Vec<PropertyReport> {
    vec![
        check_zero_weight_non_influence(instances, seed),
        check_monotonicity(instances, seed.wrapping_add(1)),
        check_demorgan(instances, seed.wrapping_add(2)),
        check_double_negation(instances, seed.wrapping_add(3)),
        check_convex_bounds(instances, seed.wrapping_add(4)),
        check_weight_scaling_invariance(instances, seed.wrapping_add(5)),
        check_sigma_limit(instances, seed.wrapping_add(6)),
        check_ordering_of_influence(instances, seed.wrapping_add(7)),
        check_classical_oracle(instances, seed.wrapping_add(8)),
        check_parser_round_trip(instances, seed.wrapping_add(9)),
    ]
}

/// Gradient suite over randomized formula shapes (depth <= 4, dimension
/// <= 5, horizon <= 12) and temperatures {0.1, 1, 10}.
#[derive(Debug, Clone)]
pub struct GradSuiteReport {
    pub formulas: usize,
    pub params_checked: usize,
    pub tolerance: f64,
    pub failures: usize,
    pub worst_rel_error: f64,
}

impl GradSuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn line(&self) -> String {
        format!(
            "gradient check: {} ({} formulas, {} partials, worst rel err {:.3e}, tol {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.formulas,
            self.params_checked,
            self.worst_rel_error,
            self.tolerance
        )
    }
}

pub fn check_gradients(formulas: usize, tolerance: f64, seed: u64) -> GradSuiteReport {
    let mut rng = Rng::new(seed);
    let mut report = GradSuiteReport {
        formulas,
        params_checked: 0,
        tolerance,
        failures: 0,
        worst_rel_error: 0.0,
    };
    for i in 0..formulas {
        let dim = 1 + rng.below(5);
        let cfg = GenConfig {
            max_depth: 4,
            dim,
            max_horizon: 12,
            allow_true: false,
        };
        let f = random_formula(&mut rng, &cfg);
        let sigma = Sigma::new([0.1, 1.0, 10.0][i % 3]).unwrap();
        let check = grad_check(&f, 2, tolerance, sigma, seed.wrapping_add(i as u64))
            .expect("generated formulas evaluate");
        report.params_checked += check.params_checked;
        report.failures += check.failures;
        if check.worst_rel_error > report.worst_rel_error {
            report.worst_rel_error = check.worst_rel_error;
        }
    }
    report
}
