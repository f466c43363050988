/// Training-set fractions in percent.
pub const FRACTION_PERCENTS: [u32; 11] = [5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100];

pub fn fraction_schedule() -> Vec<f64> {
    FRACTION_PERCENTS.iter().map(|&p| p as f64 / 100.0).collect()
}

/// Rows in the training prefix for `percent` of `n_train`:
/// `ceil(percent * n_train / 100)`, raised to `max(2, n_classes)` and capped
/// at `n_train`. Integer arithmetic, so 10% of 400 is exactly 40.
pub fn prefix_count(percent: u32, n_train: usize, n_classes: usize) -> usize {
    let raw = (percent as usize * n_train).div_ceil(100);
    raw.max(n_classes.max(2)).min(n_train)
}
