//! Splitting, training-fraction schedule and preprocessing.

mod preprocess;
mod schedule;
mod splits;

pub use preprocess::{preprocess, LabelMap, Prepared, ScalerParams};
pub use schedule::{fraction_schedule, prefix_count, FRACTION_PERCENTS};
pub use splits::{make_splits, test_rows, SplitPlan, DEFAULT_TEST_FRACTION, MAX_GUARD_ATTEMPTS};
