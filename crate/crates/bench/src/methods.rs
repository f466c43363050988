//! The uniform fit-then-predict interface shared by the PFN and the baselines.

use std::sync::Arc;
use std::time::Instant;

use pfn_core::model::{argmax_rows, Checkpoint, ContextBatch};
use pfn_core::numeric::Matrix;

use crate::baselines::{tree_fit, tree_predict, tune, Family, KnnParams, Tree, TreeParams, TuneBudget, TunedParams};
use crate::baselines::knn_predict;
use crate::error::Result;

/// A fitted model.
pub trait Fitted {
    fn predict(&self, x: &Matrix<f64>) -> Result<Vec<usize>>;
}

pub struct FitOutcome {
    pub model: Box<dyn Fitted>,
    /// Time spent on hyperparameter search, included in the fit call's wall time.
    pub tune_seconds: f64,
    pub tuned: Option<String>,
}

pub trait Method: Send + Sync {
    fn name(&self) -> &str;

    /// Why this method cannot run on data of this shape, if it cannot.
    fn capacity_issue(&self, n_train: usize, n_features: usize, n_classes: usize) -> Option<String>;

    /// Fits on preprocessed rows with contiguous labels `0..n_classes`.
    fn fit(&self, x: &Matrix<f64>, y: &[usize], n_classes: usize, seed: u64) -> Result<FitOutcome>;
}

/// In-context prediction with a frozen checkpoint: fitting stores the context.
pub struct PfnMethod {
    pub checkpoint: Arc<Checkpoint>,
}

struct PfnContext {
    checkpoint: Arc<Checkpoint>,
    x: Matrix<f32>,
    y: Vec<usize>,
    n_classes: usize,
}

/// Class probabilities for `x_query` given a labeled context, with queries fed
/// in chunks of the model's query capacity.
pub fn pfn_predict_proba(
    checkpoint: &Checkpoint,
    x_train: &Matrix<f32>,
    y_train: &[usize],
    n_classes: usize,
    x_query: &Matrix<f32>,
) -> Result<Matrix<f32>> {
    let chunk = checkpoint.config.max_query;
    let mut out = Matrix::zeros(x_query.rows(), n_classes);
    let mut start = 0;
    while start < x_query.rows() {
        let end = (start + chunk).min(x_query.rows());
        let batch = ContextBatch::new(x_train.clone(), y_train.to_vec(), x_query.slice_rows(start, end))?;
        let p = checkpoint.predict_proba_with_classes(&batch, n_classes)?;
        for r in 0..p.rows() {
            out.row_mut(start + r).copy_from_slice(p.row(r));
        }
        start = end;
    }
    Ok(out)
}

impl Fitted for PfnContext {
    fn predict(&self, x: &Matrix<f64>) -> Result<Vec<usize>> {
        let p = pfn_predict_proba(&self.checkpoint, &self.x, &self.y, self.n_classes, &x.cast::<f32>())?;
        Ok(argmax_rows(&p))
    }
}

impl Method for PfnMethod {
    fn name(&self) -> &str {
        "PFN"
    }

    fn capacity_issue(&self, n_train: usize, n_features: usize, n_classes: usize) -> Option<String> {
        let c = &self.checkpoint.config;
        if n_train > c.max_train {
            Some(format!("{n_train} context rows exceed the model's {}", c.max_train))
        } else if n_features > c.max_features {
            Some(format!("{n_features} features exceed the model's {}", c.max_features))
        } else if n_classes > c.max_classes {
            Some(format!("{n_classes} classes exceed the model's {}", c.max_classes))
        } else {
            None
        }
    }

    fn fit(&self, x: &Matrix<f64>, y: &[usize], n_classes: usize, _seed: u64) -> Result<FitOutcome> {
        Ok(FitOutcome {
            model: Box::new(PfnContext {
                checkpoint: Arc::clone(&self.checkpoint),
                x: x.cast::<f32>(),
                y: y.to_vec(),
                n_classes,
            }),
            tune_seconds: 0.0,
            tuned: None,
        })
    }
}

/// k-NN or CART, tuned by cross-validated random search before the final fit.
pub struct BaselineMethod {
    pub family: Family,
    pub folds: usize,
    pub max_configs: usize,
}

impl BaselineMethod {
    pub fn knn() -> Self {
        BaselineMethod {
            family: Family::Knn,
            folds: TuneBudget::default().folds,
            max_configs: TuneBudget::default().max_configs,
        }
    }

    pub fn tree() -> Self {
        BaselineMethod {
            family: Family::Tree,
            ..Self::knn()
        }
    }
}

struct KnnModel {
    x: Matrix<f64>,
    y: Vec<usize>,
    p: KnnParams,
}

impl Fitted for KnnModel {
    fn predict(&self, x: &Matrix<f64>) -> Result<Vec<usize>> {
        knn_predict(&self.x, &self.y, x, self.p)
    }
}

impl Fitted for Tree {
    fn predict(&self, x: &Matrix<f64>) -> Result<Vec<usize>> {
        tree_predict(self, x)
    }
}

impl Method for BaselineMethod {
    fn name(&self) -> &str {
        match self.family {
            Family::Knn => "KNN",
            Family::Tree => "DT",
        }
    }

    fn capacity_issue(&self, _: usize, _: usize, _: usize) -> Option<String> {
        None
    }

    /// With fewer rows than folds the fold count shrinks to the row count;
    /// below two rows tuning is skipped and defaults are used.
    fn fit(&self, x: &Matrix<f64>, y: &[usize], _n_classes: usize, seed: u64) -> Result<FitOutcome> {
        let n = x.rows();
        let folds = self.folds.min(n);
        let (params, tune_seconds) = if folds >= 2 {
            let start = Instant::now();
            let r = tune(
                self.family,
                x,
                y,
                TuneBudget {
                    folds,
                    max_configs: self.max_configs,
                    seed,
                },
            )?;
            (r.params, start.elapsed().as_secs_f64())
        } else {
            let p = match self.family {
                Family::Knn => TunedParams::Knn(KnnParams { k: 1 }),
                Family::Tree => TunedParams::Tree(TreeParams::default()),
            };
            (p, 0.0)
        };
        let model: Box<dyn Fitted> = match params {
            TunedParams::Knn(p) => Box::new(KnnModel {
                x: x.clone(),
                y: y.to_vec(),
                p,
            }),
            TunedParams::Tree(p) => Box::new(tree_fit(x, y, p)?),
        };
        Ok(FitOutcome {
            model,
            tune_seconds,
            tuned: Some(params.describe()),
        })
    }
}
