//! Debiasing of tabular binary-classification data with several sensitive
//! attributes, and a counterfactual fairness index to measure the result.
//!
//! The pipeline partitions the data into one sub-dataset per combination of
//! sensitive options ("world"), resamples every world to the median
//! accepted/rejected counts, then drops training rows whose prediction
//! changes when only their sensitive attributes are rewritten.

pub mod balance;
pub mod config;
pub mod fairness;
pub mod model;
pub mod rng;
pub mod tabular;
pub mod worlds;

pub use balance::{
    balance_all, compute_targets, smote_sample, undersample, BalanceTargets, SmoteParams,
};
pub use fairness::{
    compute_awi, compute_performance, probe_point, situation_test, AwiScore, PerformanceMetrics,
};
pub use model::{fit, ClassifierModel, FitConfig};
pub use tabular::{
    clean, encode_and_normalize, load_csv, ColumnKind, ColumnSpec, Dataset, RawTable,
};
pub use worlds::{partition, Partition, SensitiveSpec, WorldBinding, WorldKey};
pub mod harness;
pub use config::Config;
pub use harness::{
    generate_synthetic, run_dualfair, write_report, ExperimentConfig, FairnessReport, SyntheticSpec,
};
