//! Benchmark harness for comparing an in-context classifier with tuned
//! classical baselines.
//!
//! Each dataset is split repeatedly; every split's training rows are
//! presented in a fixed order whose prefixes give the fraction schedule.
//! Methods fit on a prefix and predict the test rows; records carry scores
//! and wall times and are summarized by rank statistics, relative data
//! efficiency and performance/time Pareto ranks.

pub mod analysis;
pub mod baselines;
pub mod error;
pub mod methods;
pub mod protocol;
pub mod report;
pub mod runner;
pub mod seeds;

pub use error::{Error, Result};
pub use methods::{pfn_predict_proba, BaselineMethod, FitOutcome, Fitted, Method, PfnMethod};
pub use report::{load_report, save_report, REPORT_COLUMNS};
pub use runner::{run_benchmark, BenchConfig, BenchmarkRecord, RecordStatus};
