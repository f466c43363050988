//! Exact k-nearest-neighbour classification.

use pfn_core::numeric::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl KnnParams {
    pub fn validate(&self, n_train: usize) -> Result<()> {
        if self.k == 0 || self.k > n_train {
            return Err(Error::Parameter(format!(
                "k = {} outside [1, {n_train}]",
                self.k
            )));
        }
        Ok(())
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Majority vote among the `k` nearest training rows (Euclidean). Distance
/// ties go to the lower row index, vote ties to the lower class.
pub fn knn_predict(
    x_train: &Matrix<f64>,
    y_train: &[usize],
    x_query: &Matrix<f64>,
    p: KnnParams,
) -> Result<Vec<usize>> {
    let n = x_train.rows();
    if n == 0 || y_train.len() != n {
        return Err(Error::Parameter(format!(
            "{n} training rows with {} labels",
            y_train.len()
        )));
    }
    if x_query.cols() != x_train.cols() {
        return Err(Error::Parameter(format!(
            "query has {} features, training data {}",
            x_query.cols(),
            x_train.cols()
        )));
    }
    p.validate(n)?;
    let n_classes = y_train.iter().max().map_or(0, |m| m + 1);
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut votes = vec![0usize; n_classes];
    let mut out = Vec::with_capacity(x_query.rows());
    for q in 0..x_query.rows() {
        let row = x_query.row(q);
        dist.clear();
        dist.extend((0..n).map(|i| (squared_distance(row, x_train.row(i)), i)));
        let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if p.k < n {
            dist.select_nth_unstable_by(p.k - 1, by_key);
        }
        votes.fill(0);
        for &(_, i) in &dist[..p.k] {
            votes[y_train[i]] += 1;
        }
        let mut best = 0;
        for c in 1..n_classes {
            if votes[c] > votes[best] {
                best = c;
            }
        }
        out.push(best);
    }
    Ok(out)
}
