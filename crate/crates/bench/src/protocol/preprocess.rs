use pfn_core::numeric::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature standardization fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for constant features.
    pub sd: Vec<f64>,
}

impl ScalerParams {
    pub fn fit(x: &Matrix<f64>) -> Result<Self> {
        let n = x.rows();
        if n == 0 {
            return Err(Error::Parameter("cannot fit a scaler on no rows".into()));
        }
        let d = x.cols();
        let mut mean = vec![0.0; d];
        for r in 0..n {
            mean.iter_mut().zip(x.row(r)).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let sd = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(ScalerParams { mean, sd })
    }

    pub fn transform(&self, x: &Matrix<f64>) -> Result<Matrix<f64>> {
        if x.cols() != self.mean.len() {
            return Err(Error::Parameter(format!(
                "{} columns for a {}-feature scaler",
                x.cols(),
                self.mean.len()
            )));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.sd) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Contiguous relabeling of the classes present in training labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    /// Original label of each contiguous code, ascending.
    pub classes: Vec<usize>,
}

impl LabelMap {
    pub fn fit(y: &[usize]) -> Self {
        let mut classes = y.to_vec();
        classes.sort_unstable();
        classes.dedup();
        LabelMap { classes }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn encode(&self, label: usize) -> Option<usize> {
        self.classes.binary_search(&label).ok()
    }

    pub fn decode(&self, code: usize) -> usize {
        self.classes[code]
    }
}

/// Scaled training and test features with contiguous training labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub x_train: Matrix<f64>,
    pub y_train: Vec<usize>,
    pub x_test: Matrix<f64>,
    pub scaler: ScalerParams,
    pub labels: LabelMap,
}

/// Fits the scaler and label map on the training rows only and applies them
/// to both sides.
pub fn preprocess(x_train: &Matrix<f64>, y_train: &[usize], x_test: &Matrix<f64>) -> Result<Prepared> {
    if y_train.len() != x_train.rows() {
        return Err(Error::Parameter(format!(
            "{} labels for {} rows",
            y_train.len(),
            x_train.rows()
        )));
    }
    let scaler = ScalerParams::fit(x_train)?;
    let labels = LabelMap::fit(y_train);
    Ok(Prepared {
        x_train: scaler.transform(x_train)?,
        y_train: y_train
            .iter()
            .map(|&c| labels.encode(c).expect("fitted on these labels"))
            .collect(),
        x_test: scaler.transform(x_test)?,
        scaler,
        labels,
    })
}
