//! Command-line interface for the wSTL learning toolkit: train a formula
//! classifier on labeled time-series CSVs, evaluate it, compute robustness
//! of a single signal, sparsify trained models, run the randomized
//! verification suites, and syntax-check formula files.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/model error, 3 failed check.
//! Errors are printed to stderr with a machine-readable `ERROR:<category>:`
//! prefix.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use wstl::dataset::{
    load_csv_auto, split, synth_generate, window, windows_to_labeled_csv, DataSplit, LabeledWindow,
    RawTable,
};
use wstl::formula::Formula;
use wstl::learn::{train, TrainConfig};
use wstl::metrics::{evaluate, format_json, format_table};
use wstl::semantics::{robustness_classical, robustness_weighted, Sigma, SignalMatrix};
use wstl::sparsify::{prune_tau, prune_top_sbar, train_gated, GateConfig, PruneReport};
use wstl::text;
use wstl::verify;

#[derive(Parser)]
#[command(
    name = "wstl",
    version,
    about = "Weighted STL formula learning for time-series classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a formula classifier on labeled CSV data.
    Train(TrainArgs),
    /// Evaluate a stored model on labeled CSV data and print metrics.
    Evaluate(EvaluateArgs),
    /// Print the robustness of one signal under a stored model.
    Robustness(RobustnessArgs),
    /// Prune a trained model by threshold, top-s, or gate retraining.
    Sparsify(SparsifyArgs),
    /// Run the gradient and/or semantic property verification suites.
    Check(CheckArgs),
    /// Validate a formula file and print its canonical form.
    Parse(ParseArgs),
    /// Generate the synthetic separable fixture as a labeled CSV.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Labeled CSV files (occupancy schema or generic x1..xl,label).
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Formula file, or a structure template such as `G[0,15](pred)`.
    #[arg(long)]
    structure: String,
    /// Window length: consecutive same-label rows per instance.
    #[arg(long, default_value_t = 16)]
    ki: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    zeta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable feature standardization.
    #[arg(long)]
    no_scale: bool,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Where to store the trained model.
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV of per-epoch (epoch, loss, train_accuracy).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long, default_value_t = 16)]
    ki: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Emit metrics as JSON instead of the text table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RobustnessArgs {
    #[arg(long)]
    model: PathBuf,
    /// Signal CSV: one row per time step, one column per feature, optional
    /// header.
    #[arg(long)]
    signal: PathBuf,
    /// Evaluate the classical (min/max) semantics instead of the weighted one.
    #[arg(long)]
    classical: bool,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Evaluation time index.
    #[arg(long, default_value_t = 0)]
    at: usize,
}

#[derive(Args)]
struct SparsifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Zero normalized weights at or below this threshold.
    #[arg(long, conflicts_with_all = ["top_sbar", "gates"])]
    tau: Option<f64>,
    /// Keep only the given number of largest weights per operator.
    #[arg(long, conflicts_with = "gates")]
    top_sbar: Option<usize>,
    /// Retrain with Bernoulli gate variables and keep open-gated weights.
    #[arg(long, requires = "data")]
    gates: bool,
    #[arg(long, default_value_t = 0.05)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.2)]
    lambda2: f64,
    /// Training data for --gates.
    #[arg(long, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long, default_value_t = 16)]
    ki: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    zeta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long)]
    out: PathBuf,
    /// Optional pruning report (CSV rows operator_path,index,pre,post).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Compare reverse-mode gradients against finite differences on random
    /// formulas.
    #[arg(long)]
    grad: bool,
    /// Run the randomized semantic property suites.
    #[arg(long)]
    properties: bool,
    /// Number of random formulas for --grad.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Randomized instances per property for --properties.
    #[arg(long, default_value_t = 1000)]
    instances: usize,
    #[arg(long, default_value_t = 12345)]
    seed: u64,
}

#[derive(Args)]
struct ParseArgs {
    /// Formula file to validate.
    #[arg(long)]
    formula: PathBuf,
    /// Signal dimension; inferred from the largest feature index if omitted.
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Windows per class.
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    ki: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct CliError {
    category: &'static str,
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            category: "usage",
            code: 1,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        CliError {
            category: "data",
            code: 2,
            message: message.into(),
        }
    }

    fn model(message: impl Into<String>) -> Self {
        CliError {
            category: "model",
            code: 2,
            message: message.into(),
        }
    }

    fn check(message: impl Into<String>) -> Self {
        CliError {
            category: "check",
            code: 3,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("ERROR:usage: {e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Robustness(args) => cmd_robustness(args),
        Command::Sparsify(args) => cmd_sparsify(args),
        Command::Check(args) => cmd_check(args),
        Command::Parse(args) => cmd_parse(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR:{}: {}", e.category, e.message);
            ExitCode::from(e.code)
        }
    }
}

/// Resolves a data path, falling back to `WSTL_DATA_DIR` for relative paths
/// that do not exist as given.
fn resolve_data_path(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    if let Ok(dir) = std::env::var("WSTL_DATA_DIR") {
        let candidate = Path::new(&dir).join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    path.to_path_buf()
}

fn load_tables(paths: &[PathBuf]) -> Result<RawTable, CliError> {
    let mut tables = Vec::new();
    for p in paths {
        let resolved = resolve_data_path(p);
        let table = load_csv_auto(&resolved)
            .map_err(|e| CliError::data(format!("{}: {e}", resolved.display())))?;
        tables.push(table);
    }
    RawTable::concat(tables).map_err(|e| CliError::data(e.to_string()))
}

fn load_windows(paths: &[PathBuf], ki: usize) -> Result<Vec<LabeledWindow>, CliError> {
    if ki < 1 {
        return Err(CliError::usage("--ki must be at least 1"));
    }
    let table = load_tables(paths)?;
    let windows = window(&table.rows, ki);
    if windows.is_empty() {
        return Err(CliError::data(format!(
            "no windows of length {ki} with constant label in {} rows",
            table.rows.len()
        )));
    }
    Ok(windows)
}

fn sigma_arg(value: f64) -> Result<Sigma, CliError> {
    Sigma::new(value).map_err(|e| CliError::usage(e.to_string()))
}

fn load_model(path: &Path, dim_hint: Option<usize>) -> Result<Formula, CliError> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| CliError::model(format!("{}: {e}", path.display())))?;
    let dim = match dim_hint {
        Some(d) => d,
        None => text::infer_dim(&content)
            .map_err(|e| CliError::model(format!("{}: {e}", path.display())))?,
    };
    let formula = text::parse(&content, dim)
        .map_err(|e| CliError::model(format!("{}: {e}", path.display())))?;
    if let Err(violations) = formula.validate(dim) {
        return Err(CliError::model(format!(
            "{}: {}",
            path.display(),
            violations[0]
        )));
    }
    Ok(formula)
}

fn save_model(path: &Path, formula: &Formula) -> Result<(), CliError> {
    let mut text = text::print(formula);
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::model(format!("{}: {e}", path.display())))
}

fn resolve_structure(spec: &str, dim: usize) -> Result<Formula, CliError> {
    let path = Path::new(spec);
    let (content, what) = if path.exists() {
        let c = std::fs::read_to_string(path)
            .map_err(|e| CliError::model(format!("{}: {e}", path.display())))?;
        (c, "structure file")
    } else {
        (spec.to_string(), "structure template")
    };
    let formula =
        text::parse_template(&content, dim).map_err(|e| CliError::usage(format!("{what}: {e}")))?;
    formula
        .validate(dim)
        .map_err(|v| CliError::usage(format!("{what}: {}", v[0])))?;
    Ok(formula)
}

fn split_windows(
    windows: Vec<LabeledWindow>,
    test_fraction: f64,
    seed: u64,
) -> Result<DataSplit, CliError> {
    split(windows, test_fraction, seed).map_err(|e| CliError::data(e.to_string()))
}

fn train_config(
    sigma: f64,
    zeta: f64,
    epochs: usize,
    seed: u64,
    lr: f64,
    batch: usize,
    scaling: bool,
) -> Result<TrainConfig, CliError> {
    let mut cfg = TrainConfig::new(sigma_arg(sigma)?);
    cfg.zeta = zeta;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.learning_rate = lr;
    cfg.batch_size = batch;
    cfg.scaling = scaling;
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let windows = load_windows(&args.data, args.ki)?;
    let dim = windows[0].signal.dim();
    let structure = resolve_structure(&args.structure, dim)?;
    let data = split_windows(windows, args.test_fraction, args.seed)?;
    let cfg = train_config(
        args.sigma,
        args.zeta,
        args.epochs,
        args.seed,
        args.lr,
        args.batch,
        !args.no_scale,
    )?;

    let outcome = train(&data, &structure, &cfg).map_err(|e| CliError::data(e.to_string()))?;
    save_model(&args.out, &outcome.formula)?;
    if let Some(history_path) = &args.history {
        let mut csv = String::from("epoch,loss,train_accuracy\n");
        for e in &outcome.history {
            csv.push_str(&format!("{},{},{}\n", e.epoch, e.loss, e.train_accuracy));
        }
        std::fs::write(history_path, csv)
            .map_err(|e| CliError::data(format!("{}: {e}", history_path.display())))?;
    }

    let sigma = sigma_arg(args.sigma)?;
    let (_, train_metrics) = evaluate(&outcome.formula, &data.train, sigma)
        .map_err(|e| CliError::data(e.to_string()))?;
    let (_, test_metrics) =
        evaluate(&outcome.formula, &data.test, sigma).map_err(|e| CliError::data(e.to_string()))?;
    println!(
        "trained on {} windows ({} test): train accuracy {:.4}, test accuracy {:.4}",
        data.train.len(),
        data.test.len(),
        train_metrics.accuracy.unwrap_or(f64::NAN),
        test_metrics.accuracy.unwrap_or(f64::NAN),
    );
    println!("model written to {}", args.out.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let windows = load_windows(&args.data, args.ki)?;
    let dim = windows[0].signal.dim();
    let model = load_model(&args.model, Some(dim))?;
    if model.horizon() > args.ki {
        return Err(CliError::usage(format!(
            "model horizon {} exceeds window length {}",
            model.horizon(),
            args.ki
        )));
    }
    let sigma = sigma_arg(args.sigma)?;
    let (counts, m) =
        evaluate(&model, &windows, sigma).map_err(|e| CliError::data(e.to_string()))?;
    if args.json {
        println!("{}", format_json(&counts, &m));
    } else {
        print!("{}", format_table(&counts, &m));
    }
    Ok(())
}

/// Parses a plain numeric CSV (optional header) into a signal: rows are time
/// steps, columns are features.
fn load_signal(path: &Path) -> Result<SignalMatrix, CliError> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line_no == 0 => continue, // header
            Err(_) => {
                return Err(CliError::data(format!(
                    "{}: row {} is not numeric",
                    path.display(),
                    line_no + 1
                )))
            }
        }
    }
    SignalMatrix::from_rows(&rows).map_err(|e| CliError::data(e.to_string()))
}

fn cmd_robustness(args: RobustnessArgs) -> Result<(), CliError> {
    let signal = load_signal(&args.signal)?;
    let model = load_model(&args.model, Some(signal.dim()))?;
    let value = if args.classical {
        robustness_classical(&signal, &model, args.at)
    } else {
        robustness_weighted(&signal, &model, args.at, sigma_arg(args.sigma)?)
    }
    .map_err(|e| CliError::data(e.to_string()))?;
    println!("{value}");
    Ok(())
}

fn write_report(path: &Option<PathBuf>, report: &PruneReport) -> Result<(), CliError> {
    if let Some(p) = path {
        std::fs::write(p, report.format_csv())
            .map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn cmd_sparsify(args: SparsifyArgs) -> Result<(), CliError> {
    if args.gates {
        let windows = load_windows(&args.data, args.ki)?;
        let dim = windows[0].signal.dim();
        let structure = load_model(&args.model, Some(dim))?;
        let data = split_windows(windows, args.test_fraction, args.seed)?;
        let cfg = train_config(
            args.sigma,
            args.zeta,
            args.epochs,
            args.seed,
            0.05,
            32,
            true,
        )?;
        let gate_cfg = GateConfig::new(args.lambda1, args.lambda2);
        let (formula, gates, _) = train_gated(&data, &structure, &cfg, &gate_cfg)
            .map_err(|e| CliError::data(e.to_string()))?;
        save_model(&args.out, &formula)?;
        if let Some(p) = &args.report {
            let mut csv = String::from("gate,probability,open\n");
            for (i, (g, s)) in gates.g.iter().zip(&gates.g_s).enumerate() {
                csv.push_str(&format!("{i},{g},{s}\n"));
            }
            std::fs::write(p, csv).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
        }
        println!(
            "gate sparsification kept {}/{} weights; model written to {}",
            gates.open_count(),
            gates.g.len(),
            args.out.display()
        );
        return Ok(());
    }

    let model = load_model(&args.model, None)?;
    let (pruned, report) = match (args.tau, args.top_sbar) {
        (Some(tau), None) => prune_tau(&model, tau).map_err(|e| CliError::model(e.to_string()))?,
        (None, Some(sbar)) => {
            prune_top_sbar(&model, sbar).map_err(|e| CliError::model(e.to_string()))?
        }
        _ => {
            return Err(CliError::usage(
                "choose exactly one of --tau, --top-sbar, or --gates".to_string(),
            ))
        }
    };
    save_model(&args.out, &pruned)?;
    write_report(&args.report, &report)?;
    print!("{}", report.format_text());
    println!("model written to {}", args.out.display());
    Ok(())
}

fn cmd_check(args: CheckArgs) -> Result<(), CliError> {
    if !args.grad && !args.properties {
        return Err(CliError::usage("pass --grad and/or --properties"));
    }
    let mut failed = false;
    if args.grad {
        let report = verify::check_gradients(args.trials, args.tol, args.seed);
        println!("{}", report.line());
        failed |= !report.passed();
    }
    if args.properties {
        for report in verify::check_properties(args.instances, args.seed) {
            println!("{}", report.line());
            failed |= !report.passed();
        }
    }
    if failed {
        return Err(CliError::check("one or more verification suites failed"));
    }
    Ok(())
}

fn cmd_parse(args: ParseArgs) -> Result<(), CliError> {
    let content = std::fs::read_to_string(&args.formula)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.formula.display())))?;
    let dim = match args.dim {
        Some(d) => d,
        None => text::infer_dim(&content)
            .map_err(|e| CliError::usage(format!("{}: {e}", args.formula.display())))?,
    };
    let formula = text::parse(&content, dim)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.formula.display())))?;
    if let Err(violations) = formula.validate(dim) {
        let all = violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(CliError::usage(format!(
            "{}: {all}",
            args.formula.display()
        )));
    }
    println!("{}", text::print(&formula));
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    if args.n < 1 || args.ki < 1 {
        return Err(CliError::usage("--n and --ki must be at least 1"));
    }
    let windows = synth_generate(args.n, args.ki, args.seed);
    std::fs::write(&args.out, windows_to_labeled_csv(&windows))
        .map_err(|e| CliError::data(format!("{}: {e}", args.out.display())))?;
    println!("wrote {} windows to {}", windows.len(), args.out.display());
    Ok(())
}
