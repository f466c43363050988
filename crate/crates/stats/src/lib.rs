//! Scoring and ranking machinery for classifier benchmarks.
//!
//! Per-record metrics (F1, macro-F1, accuracy), relative data efficiency over
//! learning curves, average ranks with the Friedman test, pairwise Wilcoxon
//! signed-rank tests with Holm correction and significance grouping, and the
//! curve summaries used for performance/time trade-offs (trapezoid AUC and
//! Pareto ranks). Everything here is a pure function.

pub mod curves;
pub mod efficiency;
pub mod error;
pub mod metrics;
pub mod rank;
pub mod special;
pub mod summary;

pub use curves::{auc_trapezoid, pareto_rank};
pub use efficiency::{data_efficiency, EfficiencyRecord, DEFAULT_EFFICIENCY_THRESHOLD};
pub use error::{Error, Result};
pub use metrics::{accuracy, confusion_for_class, f1_binary, f1_macro, ConfusionCounts};
pub use rank::{
    friedman_test, holm_adjust, rank_scores, significance_groups, wilcoxon_signed_rank,
    FriedmanResult, WilcoxonResult, DEFAULT_ALPHA, DEFAULT_EXACT_LIMIT,
};
pub use special::{chi_square_survival, ln_gamma, normal_survival, regularized_gamma_q};
pub use summary::{summarize_ranks, PairwiseTest, RankSummary};
