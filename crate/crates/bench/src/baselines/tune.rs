//! Random-search hyperparameter tuning with k-fold cross-validation.

use std::collections::HashMap;
use std::time::Instant;

use pfn_core::numeric::Matrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::knn::{knn_predict, KnnParams};
use super::tree::{tree_fit, tree_predict, TreeParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Knn,
    Tree,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum TunedParams {
    Knn(KnnParams),
    Tree(TreeParams),
}

impl TunedParams {
    pub fn describe(&self) -> String {
        match self {
            TunedParams::Knn(p) => format!("k={}", p.k),
            TunedParams::Tree(p) => format!(
                "max_depth={};min_samples_split={};min_samples_leaf={}",
                p.max_depth, p.min_samples_split, p.min_samples_leaf
            ),
        }
    }

    pub fn fit_predict(
        &self,
        x: &Matrix<f64>,
        y: &[usize],
        query: &Matrix<f64>,
    ) -> Result<Vec<usize>> {
        match self {
            TunedParams::Knn(p) => knn_predict(x, y, query, *p),
            TunedParams::Tree(p) => tree_predict(&tree_fit(x, y, *p)?, query),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneBudget {
    pub folds: usize,
    pub max_configs: usize,
    pub seed: u64,
}

impl Default for TuneBudget {
    fn default() -> Self {
        TuneBudget {
            folds: 5,
            max_configs: 100,
            seed: 0,
        }
    }
}

pub const KNN_MAX_K: usize = 50;
pub const TREE_DEPTH: (usize, usize) = (1, 20);
pub const TREE_MIN_SPLIT: (usize, usize) = (2, 20);
pub const TREE_MIN_LEAF: (usize, usize) = (1, 10);

/// Rows a fold's model was fitted on and the rows it was scored on, as
/// indices into the tuner's input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldAudit {
    pub fit_rows: Vec<usize>,
    pub eval_rows: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub params: TunedParams,
    /// Mean fold accuracy of `params`.
    pub cv_score: f64,
    /// Distinct configurations scored (repeated draws are scored once).
    pub configs_evaluated: usize,
    /// Set when some class had fewer members than folds and plain folds were used.
    pub unstratified_fallback: bool,
    pub seconds: f64,
    pub folds: Vec<FoldAudit>,
}

/// Fold index per row. Stratified: rows of each class are shuffled and dealt
/// round-robin, continuing the deal across classes. Returns the assignment and
/// whether it had to fall back to plain shuffled folds.
pub fn assign_folds(y: &[usize], folds: usize, rng: &mut impl Rng) -> (Vec<usize>, bool) {
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    y.iter().enumerate().for_each(|(i, &c)| by_class[c].push(i));
    let fallback = by_class.iter().any(|m| !m.is_empty() && m.len() < folds);
    let mut fold = vec![0; y.len()];
    let mut next = 0;
    if fallback {
        let mut all: Vec<usize> = (0..y.len()).collect();
        all.shuffle(rng);
        for i in all {
            fold[i] = next % folds;
            next += 1;
        }
    } else {
        for mut members in by_class {
            members.shuffle(rng);
            for i in members {
                fold[i] = next % folds;
                next += 1;
            }
        }
    }
    (fold, fallback)
}

fn gather(x: &Matrix<f64>, y: &[usize], rows: &[usize]) -> (Matrix<f64>, Vec<usize>) {
    let mut m = Matrix::zeros(rows.len(), x.cols());
    for (r, &i) in rows.iter().enumerate() {
        m.row_mut(r).copy_from_slice(x.row(i));
    }
    (m, rows.iter().map(|&i| y[i]).collect())
}

/// Samples up to `max_configs` configurations from the documented ranges,
/// scores each distinct one by mean fold accuracy and returns the best; the
/// first configuration drawn wins ties.
///
/// For k-NN the upper end of `k` is additionally capped by the smallest
/// fold-training set so every draw is valid.
pub fn tune(family: Family, x: &Matrix<f64>, y: &[usize], budget: TuneBudget) -> Result<TuneResult> {
    let start = Instant::now();
    let n = x.rows();
    if budget.folds < 2 || budget.max_configs == 0 {
        return Err(Error::Parameter(format!("invalid tuning budget {budget:?}")));
    }
    if n < budget.folds || y.len() != n {
        return Err(Error::Parameter(format!(
            "{n} rows for {} folds",
            budget.folds
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let (fold_of, fallback) = assign_folds(y, budget.folds, &mut rng);
    let mut folds = Vec::with_capacity(budget.folds);
    let mut data = Vec::with_capacity(budget.folds);
    for f in 0..budget.folds {
        let fit_rows: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let eval_rows: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        if fit_rows.iter().any(|i| eval_rows.contains(i)) {
            return Err(Error::Structural(format!("fold {f} scores rows it was fitted on")));
        }
        data.push((gather(x, y, &fit_rows), gather(x, y, &eval_rows)));
        folds.push(FoldAudit { fit_rows, eval_rows });
    }
    let min_fit = folds.iter().map(|f| f.fit_rows.len()).min().unwrap_or(0);
    let k_max = KNN_MAX_K.min(min_fit).max(1);

    let mut seen: HashMap<TunedParams, f64> = HashMap::new();
    let mut best: Option<(TunedParams, f64)> = None;
    for _ in 0..budget.max_configs {
        let p = match family {
            Family::Knn => TunedParams::Knn(KnnParams {
                k: rng.random_range(1..=k_max),
            }),
            Family::Tree => TunedParams::Tree(TreeParams {
                max_depth: rng.random_range(TREE_DEPTH.0..=TREE_DEPTH.1),
                min_samples_split: rng.random_range(TREE_MIN_SPLIT.0..=TREE_MIN_SPLIT.1),
                min_samples_leaf: rng.random_range(TREE_MIN_LEAF.0..=TREE_MIN_LEAF.1),
            }),
        };
        if seen.contains_key(&p) {
            continue;
        }
        let mut total = 0.0;
        for ((fx, fy), (ex, ey)) in &data {
            let pred = p.fit_predict(fx, fy, ex)?;
            total += pfn_stats::accuracy(ey, &pred)?;
        }
        let score = total / budget.folds as f64;
        seen.insert(p, score);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((p, score));
        }
    }
    let (params, cv_score) = best.expect("at least one configuration");
    Ok(TuneResult {
        params,
        cv_score,
        configs_evaluated: seen.len(),
        unstratified_fallback: fallback,
        seconds: start.elapsed().as_secs_f64(),
        folds,
    })
}
