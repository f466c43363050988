//! Relative data efficiency over learning curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Share of the best score that counts as "reached".
pub const DEFAULT_EFFICIENCY_THRESHOLD: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRecord {
    /// Total training points available.
    pub n_max: usize,
    /// Points the first method to reach the threshold needed.
    pub n_best: usize,
    /// Points this method needed, or `n_max` if it never reached the threshold.
    pub n_m: usize,
    pub eta: f64,
}

/// Data efficiency of each method on one split.
///
/// `curves[m][i]` is method `m`'s score after `counts[i]` training points;
/// `counts` is increasing and shared by all methods. The threshold is
/// `threshold_ratio` times the best score over all methods and points, and
/// `eta = (n_max - n_m) / (n_max - n_best)`.
///
/// Edge cases: if every score is zero (or negative) nothing meaningful is
/// reached and all methods get `n_m = n_best = n_max`, `eta = 0`. If the first
/// crossing happens only at `n_max` the ratio is undefined and every method
/// gets 0, since using all data is worth 0.
pub fn data_efficiency(
    curves: &[Vec<f64>],
    counts: &[usize],
    n_max: usize,
    threshold_ratio: f64,
) -> Result<Vec<EfficiencyRecord>> {
    if curves.is_empty() {
        return Err(Error::Undefined("no curves".into()));
    }
    if let Some((m, c)) = curves.iter().enumerate().find(|(_, c)| c.len() != counts.len()) {
        return Err(Error::Dimension(format!(
            "curve {m} has {} points, grid has {}",
            c.len(),
            counts.len()
        )));
    }
    if counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("point counts must be strictly increasing".into()));
    }
    if counts.last().is_some_and(|&c| c > n_max) {
        return Err(Error::Argument(format!("point count exceeds n_max = {n_max}")));
    }
    if !(threshold_ratio > 0.0 && threshold_ratio <= 1.0) {
        return Err(Error::Argument(format!("threshold ratio {threshold_ratio}")));
    }
    let best = curves
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if best.is_nan() || curves.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::Undefined("NaN score".into()));
    }
    if best <= 0.0 {
        return Ok(vec![
            EfficiencyRecord {
                n_max,
                n_best: n_max,
                n_m: n_max,
                eta: 0.0,
            };
            curves.len()
        ]);
    }
    let threshold = threshold_ratio * best;
    let needed: Vec<usize> = curves
        .iter()
        .map(|c| {
            c.iter()
                .position(|&v| v >= threshold)
                .map_or(n_max, |i| counts[i])
        })
        .collect();
    let n_best = *needed.iter().min().expect("non-empty");
    Ok(needed
        .iter()
        .map(|&n_m| {
            let eta = if n_best >= n_max {
                0.0
            } else {
                (n_max - n_m) as f64 / (n_max - n_best) as f64
            };
            EfficiencyRecord {
                n_max,
                n_best,
                n_m,
                eta,
            }
        })
        .collect())
}
