//! Library walkthrough on the occupancy dataset: load the CSVs, window and
//! split, train `G[0,15](pred)`, evaluate, then prune to the four strongest
//! time points.
//!
//! Run with: cargo run --release -p wstl --example occupancy

use wstl::dataset::{load_occupancy_csv, split, window, RawTable};
use wstl::formula::{Formula, Interval};
use wstl::learn::{train, TrainConfig};
use wstl::metrics::{evaluate, format_table};
use wstl::semantics::Sigma;
use wstl::sparsify::prune_top_sbar;
use wstl::text;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::var("WSTL_DATA_DIR").unwrap_or_else(|_| "data".to_string());
    let tables = ["datatraining.txt", "datatest.txt", "datatest2.txt"]
        .iter()
        .map(|f| load_occupancy_csv(format!("{dir}/{f}")))
        .collect::<Result<Vec<_>, _>>()?;
    let table = RawTable::concat(tables)?;
    println!("{} rows, {} features", table.rows.len(), table.dim());

    let windows = window(&table.rows, 16);
    println!("{} constant-label windows of 16 minutes", windows.len());
    let data = split(windows, 0.2, 0)?;

    let sigma = Sigma::new(1.0)?;
    let structure = Formula::always(
        Interval::new(0, 15)?,
        vec![1.0; 16],
        Formula::pred(vec![1.0; 5], 0.0),
    );
    let outcome = train(&data, &structure, &TrainConfig::new(sigma))?;
    println!("\nlearned: {}", text::print(&outcome.formula));

    let (counts, metrics) = evaluate(&outcome.formula, &data.test, sigma)?;
    println!("\ntest metrics:\n{}", format_table(&counts, &metrics));

    let (pruned, report) = prune_top_sbar(&outcome.formula, 4)?;
    let (_, pruned_metrics) = evaluate(&pruned, &data.test, sigma)?;
    println!(
        "pruned to 4 weights ({}% of weights zeroed): test accuracy {:.4}",
        (100.0 * report.fraction_pruned()).round(),
        pruned_metrics.accuracy.unwrap_or(f64::NAN)
    );
    println!("pruned model: {}", text::print(&pruned));
    Ok(())
}
