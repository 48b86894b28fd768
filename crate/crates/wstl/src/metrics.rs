//! Binary-classification metrics for learned formulas. The decision rule is
//! the sign of the weighted robustness at time 0, with the boundary counted
//! as positive.

use crate::dataset::{Label, LabeledWindow};
use crate::formula::Formula;
use crate::semantics::{robustness_weighted, EvalError, Sigma};

/// Predicts the class of one window.
pub fn classify(
    formula: &Formula,
    window: &LabeledWindow,
    sigma: Sigma,
) -> Result<Label, EvalError> {
    let r = robustness_weighted(&window.signal, formula, 0, sigma)?;
    Ok(if r >= 0.0 {
        Label::Positive
    } else {
        Label::Negative
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, actual: Label, predicted: Label) {
        match (actual, predicted) {
            (Label::Positive, Label::Positive) => self.tp += 1,
            (Label::Positive, Label::Negative) => self.fn_ += 1,
            (Label::Negative, Label::Positive) => self.fp += 1,
            (Label::Negative, Label::Negative) => self.tn += 1,
        }
    }
}

/// Evaluation measures; `None` marks a measure whose denominator is zero
/// (undefined, deliberately distinct from 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

pub fn metrics(counts: &ConfusionCounts) -> Metrics {
    Metrics {
        accuracy: ratio(counts.tp + counts.tn, counts.total()),
        sensitivity: ratio(counts.tp, counts.tp + counts.fn_),
        specificity: ratio(counts.tn, counts.tn + counts.fp),
        ppv: ratio(counts.tp, counts.tp + counts.fp),
        npv: ratio(counts.tn, counts.tn + counts.fn_),
    }
}

/// Classifies every window and tallies the confusion counts.
pub fn evaluate(
    formula: &Formula,
    windows: &[LabeledWindow],
    sigma: Sigma,
) -> Result<(ConfusionCounts, Metrics), EvalError> {
    let mut counts = ConfusionCounts::default();
    for w in windows {
        counts.record(w.label, classify(formula, w, sigma)?);
    }
    Ok((counts, metrics(&counts)))
}

fn fmt_measure(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "undefined".to_string(),
    }
}

/// Aligned text table, measures to 4 decimal places.
pub fn format_table(counts: &ConfusionCounts, m: &Metrics) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "windows      {}  (tp={} fp={} tn={} fn={})\n",
        counts.total(),
        counts.tp,
        counts.fp,
        counts.tn,
        counts.fn_
    ));
    out.push_str(&format!("accuracy     {}\n", fmt_measure(m.accuracy)));
    out.push_str(&format!("sensitivity  {}\n", fmt_measure(m.sensitivity)));
    out.push_str(&format!("specificity  {}\n", fmt_measure(m.specificity)));
    out.push_str(&format!("ppv          {}\n", fmt_measure(m.ppv)));
    out.push_str(&format!("npv          {}\n", fmt_measure(m.npv)));
    out
}

fn fmt_json_measure(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "null".to_string(),
    }
}

/// Machine form of the metrics table.
pub fn format_json(counts: &ConfusionCounts, m: &Metrics) -> String {
    format!(
        "{{\"tp\":{},\"fp\":{},\"tn\":{},\"fn\":{},\"accuracy\":{},\"sensitivity\":{},\"specificity\":{},\"ppv\":{},\"npv\":{}}}",
        counts.tp,
        counts.fp,
        counts.tn,
        counts.fn_,
        fmt_json_measure(m.accuracy),
        fmt_json_measure(m.sensitivity),
        fmt_json_measure(m.specificity),
        fmt_json_measure(m.ppv),
        fmt_json_measure(m.npv),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_generate, synth_oracle_formula};
    use crate::formula::Formula;
    use crate::semantics::SignalMatrix;

    fn sigma(v: f64) -> Sigma {
        Sigma::new(v).unwrap()
    }

    #[test]
    fn measure_arithmetic() {
        let c = ConfusionCounts {
            tp: 2,
            fp: 1,
            tn: 3,
            fn_: 0,
        };
        let m = metrics(&c);
        assert_eq!(m.sensitivity, Some(1.0));
        assert_eq!(m.specificity, Some(0.75));
        assert!((m.ppv.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.npv, Some(1.0));
        assert!((m.accuracy.unwrap() - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn zero_denominators_are_undefined() {
        let c = ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: 3,
            fn_: 1,
        };
        let m = metrics(&c);
        assert_eq!(m.ppv, None);
        assert!(format_table(&c, &m).contains("ppv          undefined"));
        assert!(format_json(&c, &m).contains("\"ppv\":null"));
    }

    #[test]
    fn oracle_formula_classifies_fixture_perfectly() {
        let ws = synth_generate(20, 8, 1);
        let f = synth_oracle_formula(8);
        let (counts, m) = evaluate(&f, &ws, sigma(0.05)).unwrap();
        assert_eq!(counts.total(), 40);
        assert_eq!(m.accuracy, Some(1.0));
    }

    #[test]
    fn negation_flips_every_prediction() {
        let ws = synth_generate(10, 6, 2);
        let f = synth_oracle_formula(6);
        let g = Formula::not(f.clone());
        for w in &ws {
            let a = classify(&f, w, sigma(1.0)).unwrap();
            let b = classify(&g, w, sigma(1.0)).unwrap();
            assert_ne!(a, b);
        }
    }

    #[test]
    fn exact_zero_robustness_is_positive() {
        let w = LabeledWindow {
            signal: SignalMatrix::scalar(&[5.0]).unwrap(),
            label: Label::Positive,
        };
        let f = Formula::pred(vec![1.0], 5.0);
        assert_eq!(classify(&f, &w, sigma(1.0)).unwrap(), Label::Positive);
    }
}
