//! Learning weighted Signal Temporal Logic (wSTL) formulas as binary
//! time-series classifiers.
//!
//! The crate provides:
//!
//! - a wSTL syntax tree with per-operator importance weights ([`formula`]),
//! - a text grammar with parser and canonical printer ([`text`]),
//! - classical and smooth weighted robustness semantics ([`semantics`]),
//! - exact reverse-mode gradients of the weighted robustness ([`grad`]),
//! - dataset ingestion, windowing and splitting ([`dataset`]),
//! - gradient-descent formula learning ([`learn`]),
//! - weight sparsification by thresholding and gate variables ([`sparsify`]),
//! - classification metrics ([`metrics`]),
//! - randomized self-checks used by the `check` CLI command ([`verify`]).

pub mod dataset;
pub mod formula;
pub mod grad;
pub mod learn;
pub mod metrics;
pub mod random;
pub mod rng;
pub mod semantics;
pub mod sparsify;
pub mod text;
pub mod verify;

pub use formula::{Formula, Interval, ParamKind, ParamView, Predicate};
pub use semantics::{robustness_classical, robustness_weighted, Sigma, SignalMatrix};
