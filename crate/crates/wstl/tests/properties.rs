//! Property tests for the structural invariants: parameter enumeration,
//! horizon arithmetic, parser round trips, aggregate identities, windowing
//! and scaling.

use proptest::prelude::*;
use wstl::dataset::{apply_scale, fit_scale, synth_generate, window, Label, RawRow};
use wstl::formula::{Formula, ParamView};
use wstl::random::{random_formula, random_signal, GenConfig};
use wstl::rng::Rng;
use wstl::semantics::{robustness_weighted, softmin_aggregate, Sigma};
use wstl::text;

fn sigma(v: f64) -> Sigma {
    Sigma::new(v).unwrap()
}

/// Paired weights and values of one aggregate.
fn aggregate_inputs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..8).prop_flat_map(|n| {
        (
            prop::collection::vec(0.01f64..2.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
        )
    })
}

fn formula_from_seed(seed: u64, allow_true: bool) -> Formula {
    let mut rng = Rng::new(seed);
    let dim = 1 + (seed % 5) as usize;
    let cfg = GenConfig {
        max_depth: 4,
        dim,
        max_horizon: 12,
        allow_true,
    };
    random_formula(&mut rng, &cfg)
}

proptest! {
    #[test]
    fn aggregate_stays_within_input_bounds((w, r) in aggregate_inputs(), s in 0.05f64..10.0) {
        let out = softmin_aggregate(&w, &r, sigma(s)).unwrap();
        let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        prop_assert!(out >= lo - slack && out <= hi + slack, "{out} outside [{lo}, {hi}]");
    }

    #[test]
    fn aggregate_translates_with_its_inputs((w, r) in aggregate_inputs(), d in 0.0f64..5.0) {
        // Shifting every input by d shifts the output by exactly d (up to
        // rounding), which implies the monotonicity property.
        let base = softmin_aggregate(&w, &r, sigma(1.0)).unwrap();
        let shifted_r: Vec<f64> = r.iter().map(|v| v + d).collect();
        let shifted = softmin_aggregate(&w, &shifted_r, sigma(1.0)).unwrap();
        prop_assert!((shifted - (base + d)).abs() <= 1e-9 * (1.0 + base.abs() + d));
    }

    #[test]
    fn zero_weight_inputs_are_inert((w, r) in aggregate_inputs(), junk in -1e6f64..1e6) {
        prop_assume!(w.len() >= 2);
        let mut w = w;
        w[0] = 0.0;
        let a = softmin_aggregate(&w, &r, sigma(1.0)).unwrap();
        let mut r2 = r.clone();
        r2[0] = junk;
        let b = softmin_aggregate(&w, &r2, sigma(1.0)).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn param_view_is_idempotent_and_order_stable(seed in any::<u64>()) {
        let formula = formula_from_seed(seed, true);
        let a = ParamView::of(&formula);
        let b = ParamView::of(&formula);
        prop_assert_eq!(a.descriptors(), b.descriptors());
        let mut probe = formula.clone();
        let values = a.read_values(&formula);
        let doubled: Vec<f64> = values.iter().map(|v| v * 2.0).collect();
        a.write_values(&mut probe, &doubled);
        prop_assert_eq!(a.read_values(&probe), doubled);
    }

    #[test]
    fn negation_preserves_horizon(seed in any::<u64>()) {
        let formula = formula_from_seed(seed, true);
        prop_assert_eq!(Formula::not(formula.clone()).horizon(), formula.horizon());
    }

    #[test]
    fn printed_formulas_parse_back_and_validate(seed in any::<u64>()) {
        let formula = formula_from_seed(seed, true);
        let dim = 1 + (seed % 5) as usize;
        let printed = text::print(&formula);
        let parsed = text::parse(&printed, dim).unwrap();
        prop_assert!(parsed.approx_eq(&formula, 1e-6), "{printed}");
        prop_assert!(parsed.validate(dim).is_ok());
    }

    #[test]
    fn double_negation_is_bit_exact(seed in any::<u64>()) {
        let formula = formula_from_seed(seed, false);
        let dim = 1 + (seed % 5) as usize;
        let mut rng = Rng::new(seed ^ 0xabcd);
        let signal = random_signal(&mut rng, dim, formula.horizon().max(1));
        let a = robustness_weighted(&signal, &formula, 0, sigma(1.0)).unwrap();
        let doubled = Formula::not(Formula::not(formula));
        let b = robustness_weighted(&signal, &doubled, 0, sigma(1.0)).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn windows_have_constant_labels(raw_labels in prop::collection::vec(any::<bool>(), 0..200), ki in 1usize..8) {
        let rows: Vec<RawRow> = raw_labels
            .iter()
            .enumerate()
            .map(|(i, &b)| RawRow {
                features: vec![i as f64],
                label: if b { Label::Positive } else { Label::Negative },
            })
            .collect();
        for w in window(&rows, ki) {
            let start = w.signal.value(0, 0) as usize;
            let label = rows[start].label;
            for k in 0..w.signal.len() {
                prop_assert_eq!(rows[start + k].label, label);
            }
        }
    }

    #[test]
    fn scaler_round_trips_raw_values(seed in any::<u64>(), ki in 1usize..6) {
        let windows = synth_generate(4, ki, seed);
        let scaler = fit_scale(&windows);
        let scaled = apply_scale(&scaler, &windows);
        for (raw, s) in windows.iter().zip(&scaled) {
            let back = scaler.invert_signal(&s.signal);
            for (a, b) in raw.signal.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }
}

proptest! {
    #[test]
    fn parse_error_spans_stay_inside_the_input(text in "[ -~]{0,60}") {
        // Arbitrary printable garbage either parses or reports a span whose
        // byte range lies within the input.
        if let Err(e) = text::parse(&text, 3) {
            prop_assert!(e.span.start <= e.span.end, "{e}");
            prop_assert!(e.span.end <= text.len(), "{e} vs len {}", text.len());
        }
    }

    #[test]
    fn gradients_match_param_view_length(seed in any::<u64>()) {
        let formula = formula_from_seed(seed, false);
        let dim = 1 + (seed % 5) as usize;
        let mut rng = Rng::new(seed ^ 0x5151);
        let signal = random_signal(&mut rng, dim, formula.horizon().max(1));
        let view = ParamView::of(&formula);
        let (_, tape) = wstl::grad::forward_record(&signal, &formula, 0, sigma(1.0)).unwrap();
        prop_assert_eq!(tape.n_params(), view.len());
        prop_assert_eq!(tape.backward().len(), view.len());
        for g in tape.backward().values() {
            prop_assert!(g.is_finite());
        }
    }
}

proptest! {
    #[test]
    fn stratified_split_preserves_class_ratio(
        n_pos in 2usize..60,
        n_neg in 2usize..60,
        seed in any::<u64>(),
        fraction in 0.1f64..0.5,
    ) {
        use wstl::dataset::{split, LabeledWindow};
        use wstl::semantics::SignalMatrix;
        let mut windows = Vec::new();
        for i in 0..n_pos + n_neg {
            windows.push(LabeledWindow {
                signal: SignalMatrix::new(1, 1, vec![i as f64]).unwrap(),
                label: if i < n_pos { Label::Positive } else { Label::Negative },
            });
        }
        let s = split(windows, fraction, seed).unwrap();
        let test_pos = s.test.iter().filter(|w| w.label == Label::Positive).count() as f64;
        let test_neg = s.test.len() as f64 - test_pos;
        prop_assert!((test_pos - n_pos as f64 * fraction).abs() <= 1.0 + 1e-9);
        prop_assert!((test_neg - n_neg as f64 * fraction).abs() <= 1.0 + 1e-9);
        prop_assert_eq!(s.train.len() + s.test.len(), n_pos + n_neg);
    }
}
