//! Browser demo bindings: evaluate a formula's robustness over an editable
//! signal (with a temperature sweep), train a classifier on the synthetic
//! fixture in-page, and explore top-s weight pruning. Each entry point
//! returns a JSON string the page renders onto canvases.

use wasm_bindgen::prelude::*;
use wstl::dataset::{split, synth_generate, LabeledWindow};
use wstl::formula::{Expr, Formula};
use wstl::learn::{train, TrainConfig};
use wstl::metrics::evaluate;
use wstl::semantics::{robustness_classical, robustness_weighted, Sigma, SignalMatrix};
use wstl::sparsify::prune_top_sbar;
use wstl::text;

fn esc(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x > 0.0 {
        "1e308".to_string()
    } else {
        "-1e308".to_string()
    }
}

fn parse_signal_csv(csv: &str) -> Result<SignalMatrix, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in csv.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line_no == 0 => continue, // header
            Err(_) => return Err(format!("row {} is not numeric", line_no + 1)),
        }
    }
    SignalMatrix::from_rows(&rows).map_err(|e| e.to_string())
}

/// Weights of the root operator, normalized, for the bar chart.
fn root_weights(formula: &Formula) -> Vec<f64> {
    let raw: Vec<f64> = match formula.root() {
        Expr::And(b) | Expr::Or(b) => b.weights.to_vec(),
        Expr::Always(t) | Expr::Eventually(t) => t.weights.clone(),
        _ => Vec::new(),
    };
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|w| w / total).collect()
    } else {
        raw
    }
}

fn weights_json(w: &[f64]) -> String {
    let items: Vec<String> = w.iter().map(|x| num(*x)).collect();
    format!("[{}]", items.join(","))
}

/// Robustness of `formula_text` over the signal (rows = time steps, columns
/// = features), both semantics, plus a log-spaced sigma sweep of the
/// weighted value.
#[wasm_bindgen]
pub fn evaluate_robustness(
    formula_text: &str,
    signal_csv: &str,
    sigma: f64,
) -> Result<String, JsError> {
    let signal = parse_signal_csv(signal_csv).map_err(|e| JsError::new(&e))?;
    let formula =
        text::parse(formula_text.trim(), signal.dim()).map_err(|e| JsError::new(&e.to_string()))?;
    formula
        .validate(signal.dim())
        .map_err(|v| JsError::new(&v[0].to_string()))?;
    let sig = Sigma::new(sigma).map_err(|e| JsError::new(&e.to_string()))?;
    let weighted =
        robustness_weighted(&signal, &formula, 0, sig).map_err(|e| JsError::new(&e.to_string()))?;
    let classical =
        robustness_classical(&signal, &formula, 0).map_err(|e| JsError::new(&e.to_string()))?;

    // Sweep sigma over [1e-3, 1e2], 60 log-spaced points.
    let mut sweep = Vec::new();
    let steps = 60;
    for i in 0..steps {
        let exponent = -3.0 + 5.0 * i as f64 / (steps - 1) as f64;
        let s = 10f64.powf(exponent);
        let v = robustness_weighted(&signal, &formula, 0, Sigma::new(s).unwrap())
            .map_err(|e| JsError::new(&e.to_string()))?;
        sweep.push(format!("{{\"sigma\":{},\"value\":{}}}", num(s), num(v)));
    }
    Ok(format!(
        "{{\"weighted\":{},\"classical\":{},\"satisfied\":{},\"horizon\":{},\"dim\":{},\"sweep\":[{}]}}",
        num(weighted),
        num(classical),
        classical >= 0.0,
        formula.horizon(),
        signal.dim(),
        sweep.join(",")
    ))
}

fn history_json(history: &[wstl::learn::EpochStats]) -> String {
    let items: Vec<String> = history
        .iter()
        .map(|e| {
            format!(
                "{{\"epoch\":{},\"loss\":{},\"accuracy\":{}}}",
                e.epoch,
                num(e.loss),
                num(e.train_accuracy)
            )
        })
        .collect();
    format!("[{}]", items.join(","))
}

/// Trains `G[0,ki-1](pred)` on the synthetic separable fixture and reports
/// the learned formula, training curves and test accuracy.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn train_synthetic(
    n_per_class: u32,
    ki: u32,
    epochs: u32,
    learning_rate: f64,
    seed: u32,
    sigma: f64,
    zeta: f64,
) -> Result<String, JsError> {
    if n_per_class == 0 || ki == 0 || epochs == 0 {
        return Err(JsError::new(
            "window count, length and epochs must be positive",
        ));
    }
    if n_per_class > 2000 || ki > 64 || epochs > 500 {
        return Err(JsError::new(
            "demo limits: n <= 2000, ki <= 64, epochs <= 500",
        ));
    }
    let sig = Sigma::new(sigma).map_err(|e| JsError::new(&e.to_string()))?;
    let windows = synth_generate(n_per_class as usize, ki as usize, seed as u64);
    let data = split(windows, 0.2, seed as u64).map_err(|e| JsError::new(&e.to_string()))?;
    let structure = Formula::always(
        wstl::formula::Interval::new(0, ki as usize - 1).unwrap(),
        vec![1.0; ki as usize],
        Formula::pred(vec![1.0, 1.0], 0.0),
    );
    let mut cfg = TrainConfig::new(sig);
    cfg.zeta = zeta;
    cfg.epochs = epochs as usize;
    cfg.learning_rate = learning_rate;
    cfg.seed = seed as u64;
    cfg.validate().map_err(|e| JsError::new(&e.to_string()))?;
    let outcome = train(&data, &structure, &cfg).map_err(|e| JsError::new(&e.to_string()))?;
    let (_, m) =
        evaluate(&outcome.formula, &data.test, sig).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(format!(
        "{{\"formula\":\"{}\",\"test_accuracy\":{},\"history\":{},\"weights\":{}}}",
        esc(&text::print(&outcome.formula)),
        num(m.accuracy.unwrap_or(f64::NAN)),
        history_json(&outcome.history),
        weights_json(&root_weights(&outcome.formula))
    ))
}

fn accuracy_on(formula: &Formula, windows: &[LabeledWindow], sig: Sigma) -> Result<f64, JsError> {
    let (_, m) = evaluate(formula, windows, sig).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(m.accuracy.unwrap_or(f64::NAN))
}

/// Top-s pruning of a formula (typically one trained by [`train_synthetic`]),
/// evaluated before and after on a fresh synthetic test set drawn with the
/// same generator settings.
#[wasm_bindgen]
pub fn prune_model(
    formula_text: &str,
    sbar: u32,
    n_per_class: u32,
    ki: u32,
    seed: u32,
    sigma: f64,
) -> Result<String, JsError> {
    let dim = text::infer_dim(formula_text.trim()).map_err(|e| JsError::new(&e.to_string()))?;
    let formula =
        text::parse(formula_text.trim(), dim.max(2)).map_err(|e| JsError::new(&e.to_string()))?;
    let sig = Sigma::new(sigma).map_err(|e| JsError::new(&e.to_string()))?;
    let (pruned, report) =
        prune_top_sbar(&formula, sbar as usize).map_err(|e| JsError::new(&e.to_string()))?;
    let windows = synth_generate(n_per_class as usize, ki as usize, seed as u64);
    let before = accuracy_on(&formula, &windows, sig)?;
    let after = accuracy_on(&pruned, &windows, sig)?;
    Ok(format!(
        "{{\"pruned\":\"{}\",\"accuracy_before\":{},\"accuracy_after\":{},\"fraction_pruned\":{},\"weights_before\":{},\"weights_after\":{}}}",
        esc(&text::print(&pruned)),
        num(before),
        num(after),
        num(report.fraction_pruned()),
        weights_json(&root_weights(&formula)),
        weights_json(&root_weights(&pruned))
    ))
}
