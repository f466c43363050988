use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-vs-rest confusion counts for a designated positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Counts treating `class` as positive and every other label as negative.
pub fn confusion_for_class(y_true: &[usize], y_pred: &[usize], class: usize) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == class, p == class) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// `2TP / (2TP + FP + FN)`, or 0 when the denominator is 0.
pub fn f1_binary(c: ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    }
}

/// Unweighted mean of the per-class F1 over all `n_classes` classes; classes
/// absent from both vectors contribute 0.
pub fn f1_macro(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension(format!(
            "{} labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if n_classes == 0 {
        return Err(Error::Argument("n_classes = 0".into()));
    }
    let sum: f64 = (0..n_classes)
        .map(|c| f1_binary(confusion_for_class(y_true, y_pred, c)))
        .sum();
    Ok(sum / n_classes as f64)
}

/// Fraction of positions where the two vectors agree.
pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension(format!(
            "{} labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Undefined("accuracy of an empty prediction".into()));
    }
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}
