//! The benchmark executor.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use pfn_core::data::Dataset;
use pfn_core::numeric::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::methods::Method;
use crate::protocol::{make_splits, prefix_count, preprocess, SplitPlan, DEFAULT_TEST_FRACTION, FRACTION_PERCENTS};
use crate::seeds::{derive_seed, Key};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_reps: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n_reps: 20,
            test_fraction: DEFAULT_TEST_FRACTION,
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub dataset: String,
    pub method: String,
    pub split: usize,
    pub fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub status: RecordStatus,
    /// Class-1 F1 on binary datasets, macro-F1 otherwise.
    pub f1: Option<f64>,
    pub macro_f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub tune_seconds: f64,
    /// Fitting plus preprocessing.
    pub train_seconds: f64,
    pub inference_seconds: f64,
    pub total_seconds: f64,
    pub seed: u64,
    pub tuned_params: String,
    pub reason: String,
}

impl BenchmarkRecord {
    pub fn percent(&self) -> u32 {
        (self.fraction * 100.0).round() as u32
    }

    /// Sort key used for reports.
    pub fn key(&self) -> (String, String, usize, u32) {
        (self.dataset.clone(), self.method.clone(), self.split, self.percent())
    }

    /// Copy with all wall-time fields zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        BenchmarkRecord {
            tune_seconds: 0.0,
            train_seconds: 0.0,
            inference_seconds: 0.0,
            total_seconds: 0.0,
            ..self.clone()
        }
    }
}

/// Headline F1: positive class 1 for binary datasets, macro otherwise.
pub fn headline_f1(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<f64> {
    if n_classes == 2 {
        Ok(pfn_stats::f1_binary(pfn_stats::confusion_for_class(y_true, y_pred, 1)))
    } else {
        Ok(pfn_stats::f1_macro(y_true, y_pred, n_classes)?)
    }
}

/// Errors unless the context rows and test rows are disjoint.
pub fn check_no_leakage(context: &[usize], test: &[usize], n_rows: usize) -> Result<()> {
    let mut used = vec![false; n_rows];
    context.iter().for_each(|&i| used[i] = true);
    if let Some(&i) = test.iter().find(|&&i| used[i]) {
        return Err(Error::Structural(format!("test row {i} is part of the training context")));
    }
    Ok(())
}

struct Job {
    dataset: usize,
    split: usize,
    percent: u32,
    method: usize,
}

fn rows(x: &Matrix<f64>, idx: &[usize]) -> Matrix<f64> {
    let mut m = Matrix::zeros(idx.len(), x.cols());
    for (r, &i) in idx.iter().enumerate() {
        m.row_mut(r).copy_from_slice(x.row(i));
    }
    m
}

fn run_job(ds: &Dataset, plan: &SplitPlan, percent: u32, method: &dyn Method, base_seed: u64) -> BenchmarkRecord {
    let n_train = prefix_count(percent, plan.train.len(), ds.n_classes);
    let seed = derive_seed(
        base_seed,
        &[
            Key::Str(&ds.name),
            Key::Int(plan.split_id as u64),
            Key::Int(percent as u64),
            Key::Str(method.name()),
        ],
    );
    let mut rec = BenchmarkRecord {
        dataset: ds.name.clone(),
        method: method.name().to_string(),
        split: plan.split_id,
        fraction: percent as f64 / 100.0,
        n_train,
        n_test: plan.test.len(),
        status: RecordStatus::Ok,
        f1: None,
        macro_f1: None,
        accuracy: None,
        tune_seconds: 0.0,
        train_seconds: 0.0,
        inference_seconds: 0.0,
        total_seconds: 0.0,
        seed,
        tuned_params: String::new(),
        reason: String::new(),
    };
    if let Some(why) = method.capacity_issue(n_train, ds.n_features(), ds.n_classes) {
        rec.status = RecordStatus::Skipped;
        rec.reason = why;
        return rec;
    }
    if let Err(e) = evaluate(ds, plan, n_train, method, &mut rec) {
        rec.status = RecordStatus::Failed;
        rec.reason = e.to_string();
        rec.f1 = None;
        rec.macro_f1 = None;
        rec.accuracy = None;
    }
    rec.total_seconds = rec.tune_seconds + rec.train_seconds + rec.inference_seconds;
    rec
}

fn evaluate(ds: &Dataset, plan: &SplitPlan, n_train: usize, method: &dyn Method, rec: &mut BenchmarkRecord) -> Result<()> {
    let context = &plan.train[..n_train];
    let (x_test, y_test) = match &ds.test {
        Some(t) if plan.fixed_test => (rows(&t.x, &plan.test), plan.test.iter().map(|&i| t.y[i]).collect::<Vec<_>>()),
        _ => {
            check_no_leakage(context, &plan.test, ds.n_rows())?;
            (rows(&ds.x, &plan.test), plan.test.iter().map(|&i| ds.y[i]).collect())
        }
    };
    let x_ctx = rows(&ds.x, context);
    let y_ctx: Vec<usize> = context.iter().map(|&i| ds.y[i]).collect();

    let start = Instant::now();
    let prep = preprocess(&x_ctx, &y_ctx, &x_test)?;
    let fit = method.fit(&prep.x_train, &prep.y_train, prep.labels.n_classes(), rec.seed)?;
    let fit_seconds = start.elapsed().as_secs_f64();
    rec.tune_seconds = fit.tune_seconds;
    rec.train_seconds = (fit_seconds - fit.tune_seconds).max(0.0);
    rec.tuned_params = fit.tuned.unwrap_or_default();

    let start = Instant::now();
    let codes = fit.model.predict(&prep.x_test)?;
    let pred: Vec<usize> = codes.iter().map(|&c| prep.labels.decode(c)).collect();
    rec.inference_seconds = start.elapsed().as_secs_f64();

    rec.f1 = Some(headline_f1(&y_test, &pred, ds.n_classes)?);
    rec.macro_f1 = Some(pfn_stats::f1_macro(&y_test, &pred, ds.n_classes)?);
    rec.accuracy = Some(pfn_stats::accuracy(&y_test, &pred)?);
    Ok(())
}

/// Runs every (dataset, split, fraction, method) combination and returns the
/// records sorted by (dataset, method, split, fraction).
///
/// Split generation errors (for example an unsatisfiable imbalance guard)
/// abort before any work; method faults produce `failed` records and
/// capacity limits `skipped` records. Each record's seed is derived from the
/// run seed and its key, so results do not depend on `workers`.
pub fn run_benchmark(datasets: &[Dataset], methods: &[Arc<dyn Method>], cfg: &BenchConfig) -> Result<Vec<BenchmarkRecord>> {
    if methods.is_empty() || datasets.is_empty() {
        return Err(Error::Config("need at least one dataset and one method".into()));
    }
    let mut names: Vec<&str> = methods.iter().map(|m| m.name()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("method names must be unique".into()));
    }
    let mut dnames: Vec<&str> = datasets.iter().map(|d| d.name.as_str()).collect();
    dnames.sort_unstable();
    if dnames.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("dataset names must be unique".into()));
    }
    let plans: Vec<Vec<SplitPlan>> = datasets
        .iter()
        .map(|d| make_splits(d, cfg.n_reps, cfg.test_fraction, cfg.seed))
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for d in 0..datasets.len() {
        for s in 0..cfg.n_reps {
            for &p in &FRACTION_PERCENTS {
                for m in 0..methods.len() {
                    jobs.push(Job {
                        dataset: d,
                        split: s,
                        percent: p,
                        method: m,
                    });
                }
            }
        }
    }
    let next = AtomicUsize::new(0);
    let out = Mutex::new(Vec::with_capacity(jobs.len()));
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(j) = jobs.get(i) else { break };
        let rec = run_job(
            &datasets[j.dataset],
            &plans[j.dataset][j.split],
            j.percent,
            methods[j.method].as_ref(),
            cfg.seed,
        );
        out.lock().expect("no worker panics while holding the lock").push(rec);
    };
    let workers = cfg.workers.max(1);
    if workers == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(worker);
            }
        });
    }
    let mut records = out.into_inner().expect("workers joined");
    records.sort_by_key(BenchmarkRecord::key);
    Ok(records)
}
