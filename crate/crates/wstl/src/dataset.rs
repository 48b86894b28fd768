//! Labeled time-series ingestion: CSV loading (occupancy schema and a
//! generic labeled schema), fixed-length windowing, feature scaling and
//! stratified train/test splitting, plus a synthetic separable fixture.

use crate::formula::{Formula, Interval};
use crate::rng::Rng;
use crate::semantics::SignalMatrix;
use std::path::Path;
use thiserror::Error;

/// Class label of one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn signum(&self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn from_signum(v: i8) -> Option<Label> {
        match v {
            1 => Some(Label::Positive),
            -1 => Some(Label::Negative),
            _ => None,
        }
    }
}

/// One labeled row of raw data: feature vector plus class label.
#[derive(Debug, Clone)]
pub struct RawRow {
    pub features: Vec<f64>,
    pub label: Label,
}

/// A parsed data file: feature names plus rows in file order.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<RawRow>,
}

impl RawTable {
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn concat(mut tables: Vec<RawTable>) -> Result<RawTable, DataError> {
        let mut iter = tables.drain(..);
        let mut first = iter.next().ok_or(DataError::Empty)?;
        for t in iter {
            if t.dim() != first.dim() {
                return Err(DataError::DimensionMismatch {
                    expected: first.dim(),
                    got: t.dim(),
                });
            }
            first.rows.extend(t.rows);
        }
        Ok(first)
    }
}

/// A fixed-length labeled instance: an `l x K_I` signal with its class.
#[derive(Debug, Clone)]
pub struct LabeledWindow {
    pub signal: SignalMatrix,
    pub label: Label,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("empty data file")]
    Empty,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("row {row}: cannot parse {column:?} value {value:?}")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: expected {expected} fields, found {got}")]
    BadRowWidth {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("class with zero windows: {0}")]
    EmptyClass(&'static str),
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
}

/// Splits one CSV line into fields, honoring double quotes.
fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut field = String::new();
    let mut in_quotes = false;
    for c in line.chars() {
        match c {
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => {
                fields.push(std::mem::take(&mut field));
            }
            _ => field.push(c),
        }
    }
    fields.push(field);
    fields
}

const OCCUPANCY_FEATURES: [&str; 5] = ["Temperature", "Humidity", "Light", "CO2", "HumidityRatio"];

/// Loads the occupancy-detection CSV schema: a header naming (at least)
/// date, Temperature, Humidity, Light, CO2, HumidityRatio and Occupancy
/// (case-insensitive), rows optionally carrying one extra leading index
/// field. Features map to x1..x5 in the order above; Occupancy 1 is the
/// positive class.
pub fn load_occupancy_csv(path: impl AsRef<Path>) -> Result<RawTable, DataError> {
    let content = std::fs::read_to_string(path)?;
    parse_occupancy_csv(&content)
}

pub fn parse_occupancy_csv(content: &str) -> Result<RawTable, DataError> {
    let mut lines = content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header_line) = lines.next().ok_or(DataError::Empty)?;
    let header = split_csv_line(header_line);
    let find = |name: &str| -> Result<usize, DataError> {
        header
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let feature_cols: Vec<usize> = OCCUPANCY_FEATURES
        .iter()
        .map(|n| find(n))
        .collect::<Result<_, _>>()?;
    let label_col = find("Occupancy")?;

    let mut rows = Vec::new();
    for (line_no, line) in lines {
        let mut fields = split_csv_line(line);
        // Data rows in the published files carry an unnamed leading index
        // column; shift when a row is one field wider than the header.
        if fields.len() == header.len() + 1 {
            fields.remove(0);
        }
        if fields.len() != header.len() {
            return Err(DataError::BadRowWidth {
                row: line_no + 1,
                expected: header.len(),
                got: fields.len(),
            });
        }
        let parse_cell = |col: usize, name: &str| -> Result<f64, DataError> {
            fields[col]
                .trim()
                .parse::<f64>()
                .map_err(|_| DataError::BadCell {
                    row: line_no + 1,
                    column: name.to_string(),
                    value: fields[col].clone(),
                })
        };
        let features: Vec<f64> = feature_cols
            .iter()
            .zip(OCCUPANCY_FEATURES)
            .map(|(&c, n)| parse_cell(c, n))
            .collect::<Result<_, _>>()?;
        let label = match fields[label_col].trim() {
            "1" => Label::Positive,
            "0" => Label::Negative,
            other => {
                return Err(DataError::BadCell {
                    row: line_no + 1,
                    column: "Occupancy".to_string(),
                    value: other.to_string(),
                })
            }
        };
        rows.push(RawRow { features, label });
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(RawTable {
        feature_names: OCCUPANCY_FEATURES.iter().map(|s| s.to_string()).collect(),
        rows,
    })
}

/// Loads a generic labeled CSV: header `x1,...,xl,label`, label in {-1, 1}
/// (0 is also accepted for the negative class).
pub fn load_labeled_csv(path: impl AsRef<Path>) -> Result<RawTable, DataError> {
    let content = std::fs::read_to_string(path)?;
    parse_labeled_csv(&content)
}

pub fn parse_labeled_csv(content: &str) -> Result<RawTable, DataError> {
    let mut lines = content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header_line) = lines.next().ok_or(DataError::Empty)?;
    let header = split_csv_line(header_line);
    let label_col = header
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case("label"))
        .ok_or_else(|| DataError::MissingColumn("label".to_string()))?;
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| c != label_col).collect();
    let feature_names: Vec<String> = feature_cols
        .iter()
        .map(|&c| header[c].trim().to_string())
        .collect();

    let mut rows = Vec::new();
    for (line_no, line) in lines {
        let fields = split_csv_line(line);
        if fields.len() != header.len() {
            return Err(DataError::BadRowWidth {
                row: line_no + 1,
                expected: header.len(),
                got: fields.len(),
            });
        }
        let features: Vec<f64> = feature_cols
            .iter()
            .map(|&c| {
                fields[c]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| DataError::BadCell {
                        row: line_no + 1,
                        column: header[c].trim().to_string(),
                        value: fields[c].clone(),
                    })
            })
            .collect::<Result<_, _>>()?;
        let label = match fields[label_col].trim() {
            "1" | "+1" => Label::Positive,
            "-1" | "0" => Label::Negative,
            other => {
                return Err(DataError::BadCell {
                    row: line_no + 1,
                    column: "label".to_string(),
                    value: other.to_string(),
                })
            }
        };
        rows.push(RawRow { features, label });
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(RawTable {
        feature_names,
        rows,
    })
}

/// Sniffs the schema from the header: tables with an `Occupancy` column use
/// the occupancy mapping, tables with a `label` column the generic one.
pub fn load_csv_auto(path: impl AsRef<Path>) -> Result<RawTable, DataError> {
    let content = std::fs::read_to_string(path)?;
    let header = content.lines().next().unwrap_or("").to_ascii_lowercase();
    if header.contains("occupancy") {
        parse_occupancy_csv(&content)
    } else {
        parse_labeled_csv(&content)
    }
}

/// Greedy, non-overlapping windowing: scan forward; whenever the next `ki`
/// consecutive rows share one label, emit a window and advance by `ki`,
/// otherwise advance by one row. Every window is a segment of constant
/// class.
pub fn window(rows: &[RawRow], ki: usize) -> Vec<LabeledWindow> {
    assert!(ki >= 1, "window length must be at least 1");
    let mut out = Vec::new();
    let mut i = 0;
    while i + ki <= rows.len() {
        let label = rows[i].label;
        if rows[i..i + ki].iter().all(|r| r.label == label) {
            let data: Vec<f64> = rows[i..i + ki]
                .iter()
                .flat_map(|r| r.features.iter().copied())
                .collect();
            let dim = rows[i].features.len();
            let signal = SignalMatrix::new(dim, ki, data).expect("rows are finite");
            out.push(LabeledWindow { signal, label });
            i += ki;
        } else {
            i += 1;
        }
    }
    out
}

/// Per-feature affine transform fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-9;

/// Standardizing scaler from the pooled samples of the given windows.
pub fn fit_scale(windows: &[LabeledWindow]) -> Scaler {
    assert!(!windows.is_empty(), "cannot fit a scaler on no data");
    let dim = windows[0].signal.dim();
    let mut mean = vec![0.0; dim];
    let mut count = 0usize;
    for w in windows {
        for k in 0..w.signal.len() {
            for (j, &v) in w.signal.sample(k).iter().enumerate() {
                mean[j] += v;
            }
            count += 1;
        }
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    let mut var = vec![0.0; dim];
    for w in windows {
        for k in 0..w.signal.len() {
            for (j, &v) in w.signal.sample(k).iter().enumerate() {
                var[j] += (v - mean[j]) * (v - mean[j]);
            }
        }
    }
    let std = var
        .iter()
        .map(|v| (v / count as f64).sqrt().max(STD_FLOOR))
        .collect();
    Scaler { mean, std }
}

impl Scaler {
    pub fn identity(dim: usize) -> Scaler {
        Scaler {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn apply_signal(&self, signal: &SignalMatrix) -> SignalMatrix {
        signal.map_features(|j, v| (v - self.mean[j]) / self.std[j])
    }

    pub fn invert_signal(&self, signal: &SignalMatrix) -> SignalMatrix {
        signal.map_features(|j, v| v * self.std[j] + self.mean[j])
    }
}

pub fn apply_scale(scaler: &Scaler, windows: &[LabeledWindow]) -> Vec<LabeledWindow> {
    windows
        .iter()
        .map(|w| LabeledWindow {
            signal: scaler.apply_signal(&w.signal),
            label: w.label,
        })
        .collect()
}

/// Folds a standardization into a formula's predicates so the result
/// evaluates identically on raw (unscaled) signals: `a'_j = a_j / std_j`,
/// `c' = c + sum_j a'_j * mean_j`. Robustness values are preserved exactly
/// up to rounding, not merely in sign.
pub fn fold_scaler_into_formula(formula: &mut Formula, scaler: &Scaler) {
    use crate::formula::Expr;
    fn walk(e: &mut Expr, scaler: &Scaler) {
        match e {
            Expr::True => {}
            Expr::Pred(p) => {
                let mut shift = 0.0;
                for (j, a) in p.coeffs.iter_mut().enumerate() {
                    *a /= scaler.std[j];
                    shift += *a * scaler.mean[j];
                }
                p.offset += shift;
            }
            Expr::Not(c) => walk(c, scaler),
            Expr::And(b) | Expr::Or(b) => {
                walk(&mut b.left, scaler);
                walk(&mut b.right, scaler);
            }
            Expr::Always(t) | Expr::Eventually(t) => walk(&mut t.child, scaler),
        }
    }
    walk(formula.root_mut(), scaler);
}

/// Train/test partition with the scaler fitted on the training part only.
/// Windows are stored unscaled; consumers decide whether to apply the
/// scaler.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: Vec<LabeledWindow>,
    pub test: Vec<LabeledWindow>,
    pub scaler: Scaler,
}

/// Deterministic stratified split: per-class seeded shuffles, per-class test
/// counts chosen by largest remainder so the total equals
/// `round(len * test_fraction)` and the class ratio is preserved within one
/// window per class.
pub fn split(
    windows: Vec<LabeledWindow>,
    test_fraction: f64,
    seed: u64,
) -> Result<DataSplit, DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::BadFraction(test_fraction));
    }
    let mut pos: Vec<LabeledWindow> = Vec::new();
    let mut neg: Vec<LabeledWindow> = Vec::new();
    for w in windows {
        match w.label {
            Label::Positive => pos.push(w),
            Label::Negative => neg.push(w),
        }
    }
    if pos.is_empty() {
        return Err(DataError::EmptyClass("positive"));
    }
    if neg.is_empty() {
        return Err(DataError::EmptyClass("negative"));
    }
    let total = pos.len() + neg.len();
    let total_test = (((total as f64) * test_fraction).round() as usize).clamp(1, total - 1);

    // Largest-remainder apportionment of the test quota over classes, capped
    // so no class ends up entirely in the test part.
    let quota_pos = pos.len() as f64 * test_fraction;
    let quota_neg = neg.len() as f64 * test_fraction;
    let mut n_pos = quota_pos.floor() as usize;
    let mut n_neg = quota_neg.floor() as usize;
    while n_pos + n_neg < total_test {
        if quota_pos - n_pos as f64 >= quota_neg - n_neg as f64 {
            n_pos += 1;
        } else {
            n_neg += 1;
        }
    }
    let n_pos = n_pos.min(pos.len() - 1);
    let n_neg = n_neg.min(neg.len() - 1);

    let mut rng = Rng::new(seed);
    rng.shuffle(&mut pos);
    rng.shuffle(&mut neg);

    let mut test: Vec<LabeledWindow> = Vec::with_capacity(n_pos + n_neg);
    test.extend(pos.drain(..n_pos));
    test.extend(neg.drain(..n_neg));
    let mut train = pos;
    train.append(&mut neg);
    let scaler = fit_scale(&train);
    Ok(DataSplit {
        train,
        test,
        scaler,
    })
}

/// Synthetic two-feature fixture that is perfectly separable by a formula of
/// shape `G[0,ki-1](x1 <= 0)`: positive windows keep `x1` at `-0.5` plus
/// noise of amplitude 0.1, negative windows push `x1` to `+0.5` plus noise
/// at three or more time points. The second feature is uninformative noise.
pub fn synth_generate(n_per_class: usize, ki: usize, seed: u64) -> Vec<LabeledWindow> {
    assert!(n_per_class >= 1);
    assert!(ki >= 1);
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(2 * n_per_class);
    let n_violations = 3.min(ki);
    for class in [Label::Positive, Label::Negative] {
        for _ in 0..n_per_class {
            let mut x1: Vec<f64> = (0..ki).map(|_| -0.5 + rng.uniform(-0.1, 0.1)).collect();
            if class == Label::Negative {
                let mut slots: Vec<usize> = (0..ki).collect();
                rng.shuffle(&mut slots);
                for &s in slots.iter().take(n_violations) {
                    x1[s] = 0.5 + rng.uniform(-0.1, 0.1);
                }
            }
            let mut data = Vec::with_capacity(2 * ki);
            for &v in &x1 {
                data.push(v);
                data.push(rng.uniform(-1.0, 1.0));
            }
            let signal = SignalMatrix::new(2, ki, data).expect("finite");
            out.push(LabeledWindow {
                signal,
                label: class,
            });
        }
    }
    out
}

/// The formula that generates [`synth_generate`]'s class boundary.
pub fn synth_oracle_formula(ki: usize) -> Formula {
    Formula::always(
        Interval::new(0, ki - 1).expect("ki >= 1"),
        vec![1.0; ki],
        Formula::pred(vec![1.0, 0.0], 0.0),
    )
}

/// Writes windows as a generic labeled CSV (`x1,..,xl,label`), each window
/// emitted as its consecutive rows. Window boundaries survive re-windowing
/// because every window spans exactly `ki` same-label rows.
pub fn windows_to_labeled_csv(windows: &[LabeledWindow]) -> String {
    let dim = windows.first().map(|w| w.signal.dim()).unwrap_or(0);
    let mut out = String::new();
    for j in 1..=dim {
        out.push_str(&format!("x{j},"));
    }
    out.push_str("label\n");
    for w in windows {
        let label = if w.label == Label::Positive {
            "1"
        } else {
            "-1"
        };
        for k in 0..w.signal.len() {
            for &v in w.signal.sample(k) {
                out.push_str(&format!("{v},"));
            }
            out.push_str(label);
            out.push('\n');
        }
    }
    out
}
