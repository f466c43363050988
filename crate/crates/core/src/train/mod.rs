//! Offline meta-training: sample a task, cut it into labeled context and
//! held-back queries, score the queries with cross-entropy and take an Adam
//! step. Repeated over a stream of prior tasks, this fits the network once;
//! afterwards it is only ever used for inference.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::save_checkpoint;
use crate::error::{Error, Result};
use crate::model::{
    backward, forward_cached, Checkpoint, ContextBatch, ModelConfig, PfnParams,
    TrainingFingerprint,
};
use crate::numeric::{cross_entropy_with_grad, AdamConfig, AdamState, Matrix, Scalar};
use crate::prior::{bayes_oracle, PriorConfig, SyntheticTask, TaskStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    /// Tasks per optimizer step.
    pub batch_size: usize,
    /// Context share of each task's rows, drawn uniformly from this range.
    pub split_range: (f64, f64),
    pub lr: f64,
    pub warmup_steps: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Write a checkpoint every this many steps (0: final checkpoint only).
    pub checkpoint_interval: usize,
    pub log_interval: usize,
    /// Held-out tasks scored at every log line.
    pub holdout_tasks: usize,
    pub holdout_context: usize,
    pub holdout_query: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 8,
            split_range: (0.25, 0.75),
            lr: 3e-4,
            warmup_steps: 200,
            grad_clip: 1.0,
            checkpoint_interval: 0,
            log_interval: 100,
            holdout_tasks: 32,
            holdout_context: 64,
            holdout_query: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        let (lo, hi) = self.split_range;
        if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
            return bad(format!("split range ({lo}, {hi}) must lie inside (0, 1)"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {}", self.lr));
        }
        if !(self.grad_clip >= 0.0) {
            return bad(format!("grad_clip {}", self.grad_clip));
        }
        if self.log_interval == 0 {
            return bad("log_interval must be at least 1".into());
        }
        if self.holdout_context == 0 || self.holdout_query == 0 {
            return bad("held-out context and query sizes must be positive".into());
        }
        Ok(())
    }

    /// Linear warmup to `lr`, then cosine decay to zero at `steps`.
    pub fn learning_rate(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        self.lr * 0.5 * (1.0 + (PI * progress).cos())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: usize,
    /// Mean batch loss since the previous entry.
    pub loss: f64,
    pub holdout_acc: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<TrainLogEntry>,
}

impl TrainLog {
    pub const HEADER: &'static str = "step,loss,holdout_acc,seconds";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{},{:.3}", e.step, e.loss, e.holdout_acc, e.seconds);
        }
        s
    }

    pub fn from_csv(text: &str, source: &Path) -> Result<Self> {
        let parse_err = |line: usize, detail: String| Error::Parse {
            path: source.to_path_buf(),
            line,
            detail,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == Self::HEADER => {}
            _ => return Err(parse_err(1, format!("expected header {:?}", Self::HEADER))),
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(parse_err(i + 1, format!("{} fields, expected 4", f.len())));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(i + 1, format!("{s:?}: {e}")))
            };
            entries.push(TrainLogEntry {
                step: f[0]
                    .trim()
                    .parse()
                    .map_err(|e| parse_err(i + 1, format!("{:?}: {e}", f[0])))?,
                loss: num(f[1])?,
                holdout_acc: num(f[2])?,
                seconds: num(f[3])?,
            });
        }
        Ok(TrainLog { entries })
    }
}

/// Context rows `0..cut` and query rows `cut..` of a task, truncated to the
/// model's capacity, with the query labels.
pub fn task_batch<T: Scalar>(
    task: &SyntheticTask,
    cut: usize,
    cfg: &ModelConfig,
) -> Result<(ContextBatch<T>, Vec<usize>)> {
    let n = task.n_rows();
    if cut == 0 || cut >= n {
        return Err(Error::Contract(format!(
            "cut {cut} leaves no context or no query rows in a {n}-row task"
        )));
    }
    let n_train = cut.min(cfg.max_train);
    let n_query = (n - cut).min(cfg.max_query);
    let x = task.x.cast::<T>();
    let batch = ContextBatch::new(
        x.slice_rows(0, n_train),
        task.y[..n_train].to_vec(),
        x.slice_rows(cut, cut + n_query),
    )?;
    Ok((batch, task.y[cut..cut + n_query].to_vec()))
}

/// Mean query cross-entropy over the batch and its parameter gradient.
/// Each task's loss uses the first `n_classes` logits of that task.
pub fn batch_loss_and_grad<T: Scalar>(
    params: &PfnParams<T>,
    cfg: &ModelConfig,
    tasks: &[SyntheticTask],
    cuts: &[usize],
) -> Result<(f64, PfnParams<T>)> {
    if tasks.len() != cuts.len() || tasks.is_empty() {
        return Err(Error::Contract(format!(
            "{} tasks with {} cuts",
            tasks.len(),
            cuts.len()
        )));
    }
    let inv_b = T::ONE / T::from_f64(tasks.len() as f64);
    let mut grads = PfnParams::zeros(cfg);
    let mut total = 0.0;
    for (task, &cut) in tasks.iter().zip(cuts) {
        let (batch, y_query) = task_batch::<T>(task, cut, cfg)?;
        let batch = batch.normalized(cfg);
        let (logits, cache) = match forward_cached(&batch, params, cfg) {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => return Err(diverged(task, "non-finite activations")),
            Err(e) => return Err(e),
        };
        let c = task.n_classes();
        let (loss, mut dactive) = match cross_entropy_with_grad(&logits.slice_cols(0, c), &y_query)
        {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => return Err(diverged(task, "non-finite loss")),
            Err(e) => return Err(e),
        };
        dactive.scale(inv_b);
        let mut dlogits = Matrix::zeros(logits.rows(), logits.cols());
        dlogits.set_cols(0, &dactive);
        let g = backward(&cache, params, cfg, &dlogits)?;
        grads.accumulate(&g);
        total += loss.to_f64();
    }
    let loss = total / tasks.len() as f64;
    if !loss.is_finite() {
        return Err(diverged(&tasks[0], "non-finite loss"));
    }
    Ok((loss, grads))
}

fn diverged(task: &SyntheticTask, detail: &str) -> Error {
    Error::Diverged {
        step: 0,
        seed: task.meta.seed,
        detail: format!(
            "{detail} (task with {} rows, {} features, {} classes)",
            task.n_rows(),
            task.n_features(),
            task.n_classes()
        ),
    }
}

fn grad_norm<T: Scalar>(g: &PfnParams<T>) -> f64 {
    g.tensors()
        .iter()
        .flat_map(|m| m.as_slice())
        .map(|v| v.to_f64() * v.to_f64())
        .sum::<f64>()
        .sqrt()
}

/// One optimizer step on a batch of tasks; returns the mean batch loss.
pub fn training_step(
    params: &mut PfnParams<f32>,
    cfg: &ModelConfig,
    tasks: &[SyntheticTask],
    cuts: &[usize],
    opt: &mut AdamState<f32>,
    lr: f64,
    grad_clip: f64,
) -> Result<f64> {
    let (loss, mut grads) = batch_loss_and_grad(params, cfg, tasks, cuts)?;
    let norm = grad_norm(&grads);
    if !norm.is_finite() {
        return Err(diverged(&tasks[0], "non-finite gradient"));
    }
    if grad_clip > 0.0 && norm > grad_clip {
        grads.scale((grad_clip / norm) as f32);
    }
    let grad_tensors = grads.tensors();
    let grad_slices: Vec<&[f32]> = grad_tensors.iter().map(|m| m.as_slice()).collect();
    let mut param_tensors = params.tensors_mut();
    let mut param_slices: Vec<&mut [f32]> =
        param_tensors.iter_mut().map(|m| m.as_mut_slice()).collect();
    opt.update_with_lr(&mut param_slices, &grad_slices, lr)?;
    Ok(loss)
}

/// Context size for a task of `n` rows: uniform over
/// `[ceil(lo * n), floor(hi * n)]`, kept inside `[1, n - 1]`.
pub fn draw_cut(n: usize, range: (f64, f64), rng: &mut impl Rng) -> usize {
    let lo = ((range.0 * n as f64).ceil() as usize).clamp(1, n - 1);
    let hi = ((range.1 * n as f64).floor() as usize).clamp(lo, n - 1);
    rng.random_range(lo..=hi)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the training task stream.
pub fn task_stream_seed(train_seed: u64, prior: &PriorConfig) -> u64 {
    splitmix(train_seed ^ splitmix(prior.seed))
}

/// Seed of the held-out stream; disjoint in practice from the training stream.
pub fn holdout_seed(train_seed: u64, prior: &PriorConfig) -> u64 {
    splitmix(task_stream_seed(train_seed, prior) ^ 0x686f_6c64_6f75_74)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub n_tasks: usize,
    pub mean_acc: f64,
    pub se_acc: f64,
    pub mean_macro_f1: f64,
    pub se_macro_f1: f64,
    /// Mean accuracy of the noise-free generator labels on the same queries.
    pub oracle_acc: f64,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// In-context accuracy on fresh prior tasks of exactly
/// `context + query` rows, the first `context` of which are labeled.
pub fn held_out_eval(
    ckpt: &Checkpoint,
    prior: &PriorConfig,
    n_tasks: usize,
    context: usize,
    query: usize,
    seed: u64,
) -> Result<HoldoutReport> {
    if n_tasks == 0 || context == 0 || query == 0 {
        return Err(Error::Parameter(
            "held-out evaluation needs tasks, context and query rows".into(),
        ));
    }
    let rows = context + query;
    let cfg = PriorConfig {
        rows: (rows, rows),
        seed,
        ..prior.clone()
    };
    let mut stream = TaskStream::new(cfg)?;
    let (mut accs, mut f1s, mut oracle) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n_tasks {
        let task = stream.next_task()?;
        let (batch, y_query) = task_batch::<f32>(&task, context, &ckpt.config)?;
        let c = task.n_classes();
        let pred = crate::model::argmax_rows(&ckpt.predict_proba_with_classes(&batch, c)?);
        accs.push(pfn_stats::accuracy(&y_query, &pred).expect("non-empty query"));
        f1s.push(pfn_stats::f1_macro(&y_query, &pred, c).expect("equal lengths"));
        let xq = task.x.slice_rows(context, context + y_query.len());
        let clean = bayes_oracle(&task.meta, &xq);
        oracle.push(pfn_stats::accuracy(&y_query, &clean).expect("non-empty query"));
    }
    let (mean_acc, se_acc) = mean_se(&accs);
    let (mean_macro_f1, se_macro_f1) = mean_se(&f1s);
    Ok(HoldoutReport {
        n_tasks,
        mean_acc,
        se_acc,
        mean_macro_f1,
        se_macro_f1,
        oracle_acc: mean_se(&oracle).0,
    })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
    /// Files written, in order (periodic checkpoints, final checkpoint, log).
    pub files: Vec<PathBuf>,
}

/// File name of the checkpoint written after `step` optimizer steps.
pub fn checkpoint_file_name(step: usize) -> String {
    format!("checkpoint_{step:06}.pfn")
}

pub const FINAL_CHECKPOINT: &str = "final.pfn";
pub const TRAIN_LOG: &str = "train_log.csv";

fn write_file(path: &Path, bytes: &[u8], files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    files.push(path.to_path_buf());
    Ok(())
}

/// Meta-trains a freshly initialized model on `prior`.
///
/// Deterministic given the configurations: parameters are initialized from
/// `train.seed`, tasks come from a stream seeded by [`task_stream_seed`] and
/// held-out scores from [`holdout_seed`]. With `out_dir`, periodic and final
/// checkpoints plus the CSV log are written there; if any write fails, the
/// files written by this call are removed before the error is returned.
pub fn meta_train(
    model: &ModelConfig,
    train: &TrainConfig,
    prior: &PriorConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut files = Vec::new();
    let result = run(model, train, prior, out_dir, &mut files);
    if result.is_err() {
        for f in &files {
            let _ = std::fs::remove_file(f);
        }
    }
    result.map(|(checkpoint, log)| TrainOutcome {
        checkpoint,
        log,
        files,
    })
}

fn run(
    model: &ModelConfig,
    train: &TrainConfig,
    prior: &PriorConfig,
    out_dir: Option<&Path>,
    files: &mut Vec<PathBuf>,
) -> Result<(Checkpoint, TrainLog)> {
    model.validate()?;
    train.validate()?;
    prior.validate(Some(model))?;
    let mut params = PfnParams::<f32>::init(model, train.seed);
    let fingerprint = |steps: usize| TrainingFingerprint {
        prior_hash: prior.fingerprint(),
        seed: train.seed,
        steps: steps as u64,
    };
    let mut stream = TaskStream::with_seed(prior, task_stream_seed(train.seed, prior))?;
    let mut cut_rng = ChaCha8Rng::seed_from_u64(splitmix(train.seed ^ 0x6375_7473));
    let mut opt = AdamState::new(
        AdamConfig {
            lr: train.lr,
            ..AdamConfig::default()
        },
        params.tensors().iter().map(|m| m.len()),
    );
    let start = Instant::now();
    let mut log = TrainLog::default();
    let mut interval_loss = 0.0;
    let mut interval_steps = 0usize;
    let hseed = holdout_seed(train.seed, prior);

    for step in 0..train.steps {
        let mut tasks = Vec::with_capacity(train.batch_size);
        let mut cuts = Vec::with_capacity(train.batch_size);
        for _ in 0..train.batch_size {
            let t = stream.next_task()?;
            cuts.push(draw_cut(t.n_rows(), train.split_range, &mut cut_rng));
            tasks.push(t);
        }
        let loss = training_step(
            &mut params,
            model,
            &tasks,
            &cuts,
            &mut opt,
            train.learning_rate(step),
            train.grad_clip,
        )
        .map_err(|e| match e {
            Error::Diverged { seed, detail, .. } => Error::Diverged {
                step: step + 1,
                seed,
                detail,
            },
            other => other,
        })?;
        interval_loss += loss;
        interval_steps += 1;
        let done = step + 1;
        if done % train.log_interval == 0 || done == train.steps {
            let acc = if train.holdout_tasks > 0 {
                let ck = Checkpoint::new(model.clone(), params.clone(), fingerprint(done))?;
                held_out_eval(
                    &ck,
                    prior,
                    train.holdout_tasks,
                    train.holdout_context,
                    train.holdout_query,
                    hseed,
                )
                .map_err(|e| match e {
                    Error::NonFinite { op } => Error::Diverged {
                        step: done,
                        seed: hseed,
                        detail: format!("non-finite {op} during held-out evaluation"),
                    },
                    other => other,
                })?
                .mean_acc
            } else {
                f64::NAN
            };
            log.entries.push(TrainLogEntry {
                step: done,
                loss: interval_loss / interval_steps as f64,
                holdout_acc: acc,
                seconds: start.elapsed().as_secs_f64(),
            });
            interval_loss = 0.0;
            interval_steps = 0;
        }
        if let Some(dir) = out_dir {
            if train.checkpoint_interval > 0
                && done % train.checkpoint_interval == 0
                && done != train.steps
            {
                let ck = Checkpoint::new(model.clone(), params.clone(), fingerprint(done))?;
                let path = dir.join(checkpoint_file_name(done));
                save_checkpoint(&ck, &path)?;
                files.push(path);
            }
        }
    }

    let checkpoint = Checkpoint::new(model.clone(), params, fingerprint(train.steps))?;
    if let Some(dir) = out_dir {
        let path = dir.join(FINAL_CHECKPOINT);
        save_checkpoint(&checkpoint, &path)?;
        files.push(path);
        write_file(&dir.join(TRAIN_LOG), log.to_csv().as_bytes(), files)?;
    }
    Ok((checkpoint, log))
}
