//! Synthetic task prior for meta-training.
//!
//! Each task comes from a randomly drawn generator: inputs are sampled from a
//! Gaussian or uniform distribution (optionally quantized onto integer grids),
//! pushed through a random MLP to a scalar score, and cut into contiguous
//! classes at random score quantiles. Labels are then flipped with a small
//! probability and every feature is standardized and randomly rescaled and
//! shifted. The generator is stored with the task so that noise-free labels
//! can be recomputed for any input ([`bayes_oracle`]).
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), which produces the same
//! stream on every platform. A [`TaskStream`] draws one 64-bit seed per task
//! and generates the task from a fresh ChaCha8 instance seeded with it.

use std::hash::{Hash, Hasher};

use fnv::FnvHasher;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numeric::Matrix;

/// Retries before [`sample_task`] gives up on a degenerate draw.
pub const MAX_RESAMPLES: usize = 100;

const ORACLE_SLACK: f64 = 1e-12;

/// Distribution over synthetic tasks. Ranges are inclusive `[min, max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub features: (usize, usize),
    pub classes: (usize, usize),
    pub rows: (usize, usize),
    pub depth: (usize, usize),
    pub width: (usize, usize),
    pub label_noise: (f64, f64),
    /// Probability that a task draws Gaussian rather than uniform inputs.
    pub gaussian_inputs: f64,
    /// Probability that a task quantizes a random subset of its features.
    pub quantize: f64,
    pub seed: u64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            features: (1, 20),
            classes: (2, 4),
            rows: (16, 1024),
            depth: (1, 3),
            width: (4, 32),
            label_noise: (0.0, 0.1),
            gaussian_inputs: 0.5,
            quantize: 0.2,
            seed: 0,
        }
    }
}

impl PriorConfig {
    /// Binary tasks with a linear decision boundary and no label noise.
    pub fn linear() -> Self {
        PriorConfig {
            features: (1, 10),
            classes: (2, 2),
            depth: (1, 1),
            label_noise: (0.0, 0.0),
            quantize: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self, model: Option<&ModelConfig>) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        let ranges = [
            ("features", self.features, 1),
            ("classes", self.classes, 2),
            ("rows", self.rows, 2),
            ("depth", self.depth, 1),
            ("width", self.width, 1),
        ];
        for (name, (lo, hi), floor) in ranges {
            if lo > hi || lo < floor {
                return bad(format!("{name} range [{lo}, {hi}] is empty or below {floor}"));
            }
        }
        let (nlo, nhi) = self.label_noise;
        if !(0.0..=1.0).contains(&nlo) || !(0.0..=1.0).contains(&nhi) || nlo > nhi {
            return bad(format!("label_noise range [{nlo}, {nhi}] invalid"));
        }
        for (name, p) in [("gaussian_inputs", self.gaussian_inputs), ("quantize", self.quantize)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} probability {p} outside [0, 1]"));
            }
        }
        if self.rows.0 < 2 * self.classes.1 {
            return bad(format!(
                "minimum task size {} cannot hold two rows of each of {} classes",
                self.rows.0, self.classes.1
            ));
        }
        if let Some(m) = model {
            if self.features.1 > m.max_features {
                return bad(format!(
                    "prior draws up to {} features, model holds {}",
                    self.features.1, m.max_features
                ));
            }
            if self.classes.1 > m.max_classes {
                return bad(format!(
                    "prior draws up to {} classes, model holds {}",
                    self.classes.1, m.max_classes
                ));
            }
        }
        Ok(())
    }

    /// Stable 64-bit fingerprint of every field.
    pub fn fingerprint(&self) -> u64 {
        let mut h = FnvHasher::default();
        self.features.hash(&mut h);
        self.classes.hash(&mut h);
        self.rows.hash(&mut h);
        self.depth.hash(&mut h);
        self.width.hash(&mut h);
        self.label_noise.0.to_bits().hash(&mut h);
        self.label_noise.1.to_bits().hash(&mut h);
        self.gaussian_inputs.to_bits().hash(&mut h);
        self.quantize.to_bits().hash(&mut h);
        self.seed.hash(&mut h);
        h.finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }
}

/// Random MLP mapping an input row to a scalar score.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMlp {
    /// `(weight fan_in x fan_out, bias)` per layer; the last layer has fan_out 1.
    pub layers: Vec<(Matrix<f64>, Vec<f64>)>,
    pub activation: Activation,
}

impl GeneratorMlp {
    pub fn score(&self, x: &[f64]) -> f64 {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, (w, b)) in self.layers.iter().enumerate() {
            let mut next = b.clone();
            for (i, &hv) in h.iter().enumerate() {
                for (o, &wv) in next.iter_mut().zip(w.row(i)) {
                    *o += hv * wv;
                }
            }
            if li != last {
                next.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            h = next;
        }
        h[0]
    }

    /// `(weights, bias)` when the generator is a single linear layer.
    pub fn as_linear(&self) -> Option<(Vec<f64>, f64)> {
        match self.layers.as_slice() {
            [(w, b)] => Some((w.as_slice().to_vec(), b[0])),
            _ => None,
        }
    }
}

/// Affine map from generator space to the emitted feature:
/// `out = (raw - mean) / sd * scale + shift`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureTransform {
    pub mean: f64,
    pub sd: f64,
    pub scale: f64,
    pub shift: f64,
}

impl FeatureTransform {
    pub fn forward(&self, raw: f64) -> f64 {
        (raw - self.mean) / self.sd * self.scale + self.shift
    }

    pub fn inverse(&self, out: f64) -> f64 {
        (out - self.shift) / self.scale * self.sd + self.mean
    }
}

/// Everything needed to regenerate a task's noise-free labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskMeta {
    pub seed: u64,
    pub n_classes: usize,
    pub generator: GeneratorMlp,
    /// Ascending class thresholds on the score; `n_classes - 1` of them.
    pub thresholds: Vec<f64>,
    pub transforms: Vec<FeatureTransform>,
    /// Grid resolution per quantized feature (`round(x * levels) / levels`).
    pub quantized: Vec<Option<u32>>,
    pub label_noise: f64,
}

/// One prior draw.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTask {
    pub x: Matrix<f64>,
    pub y: Vec<usize>,
    pub meta: TaskMeta,
}

impl SyntheticTask {
    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.meta.n_classes
    }
}

/// Labels from explicit quantile levels: the threshold for level `q` is the
/// order statistic at index `floor(q * n)` and a score's class counts the
/// thresholds it reaches. Returns `(labels, thresholds)`.
pub fn assign_by_quantiles(scores: &[f64], levels: &[f64]) -> Result<(Vec<usize>, Vec<f64>)> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Generation("non-finite score".into()));
    }
    if scores.is_empty() {
        return Err(Error::Generation("no scores to split".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::Generation("all scores are equal".into()));
    }
    let n = sorted.len();
    let thresholds: Vec<f64> = levels
        .iter()
        .map(|&q| sorted[((q * n as f64).floor() as usize).min(n - 1)])
        .collect();
    let labels = scores
        .iter()
        .map(|&s| thresholds.iter().filter(|&&t| s >= t).count())
        .collect();
    Ok((labels, thresholds))
}

/// Cuts scores into `n_classes` contiguous classes at random quantile levels.
/// Higher scores never receive lower classes.
pub fn assign_classes(
    scores: &[f64],
    n_classes: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if n_classes < 2 {
        return Err(Error::Parameter(format!("{n_classes} classes requested")));
    }
    let mut levels: Vec<f64> = (0..n_classes - 1).map(|_| rng.random::<f64>()).collect();
    levels.sort_by(f64::total_cmp);
    assign_by_quantiles(scores, &levels)
}

fn draw_range(rng: &mut impl Rng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_generator(rng: &mut impl Rng, d: usize, depth: usize, width: usize) -> GeneratorMlp {
    let mut layers = Vec::with_capacity(depth);
    let mut fan_in = d;
    for li in 0..depth {
        let fan_out = if li + 1 == depth { 1 } else { width };
        let std = 1.0 / (fan_in as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| normal(rng) * std).collect();
        let b: Vec<f64> = (0..fan_out).map(|_| normal(rng) * 0.5).collect();
        layers.push((Matrix::from_vec(fan_in, fan_out, w).expect("sized"), b));
        fan_in = fan_out;
    }
    let activation = if rng.random::<bool>() {
        Activation::Tanh
    } else {
        Activation::Relu
    };
    GeneratorMlp { layers, activation }
}

fn quantize(x: f64, levels: u32) -> f64 {
    (x * levels as f64).round() / levels as f64
}

struct Shape {
    d: usize,
    n_classes: usize,
    n: usize,
    depth: usize,
    width: usize,
    noise: f64,
}

fn draw_shape(cfg: &PriorConfig, seed: u64) -> Shape {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = draw_range(&mut rng, cfg.features);
    let n_classes = draw_range(&mut rng, cfg.classes);
    let n = draw_range(&mut rng, cfg.rows);
    let depth = draw_range(&mut rng, cfg.depth);
    let width = draw_range(&mut rng, cfg.width);
    let noise = if cfg.label_noise.0 < cfg.label_noise.1 {
        rng.random_range(cfg.label_noise.0..=cfg.label_noise.1)
    } else {
        cfg.label_noise.0
    };
    Shape {
        d,
        n_classes,
        n,
        depth,
        width,
        noise,
    }
}

fn try_sample(cfg: &PriorConfig, shape: &Shape, seed: u64) -> Result<SyntheticTask> {
    let &Shape {
        d,
        n_classes,
        n,
        depth,
        width,
        noise,
    } = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = rng.random::<f64>() < cfg.gaussian_inputs;
    let do_quantize = rng.random::<f64>() < cfg.quantize;
    let quantized: Vec<Option<u32>> = (0..d)
        .map(|_| {
            if do_quantize && rng.random::<bool>() {
                Some(rng.random_range(1..=4))
            } else {
                None
            }
        })
        .collect();

    let mut raw = Matrix::zeros(n, d);
    for r in 0..n {
        for (c, v) in raw.row_mut(r).iter_mut().enumerate() {
            let x = if gaussian {
                normal(&mut rng)
            } else {
                rng.random_range(-1.0..1.0) * 3f64.sqrt()
            };
            *v = match quantized[c] {
                Some(l) => quantize(x, l),
                None => x,
            };
        }
    }
    let generator = random_generator(&mut rng, d, depth, width);
    let scores: Vec<f64> = (0..n).map(|r| generator.score(raw.row(r))).collect();
    let (clean, thresholds) = assign_classes(&scores, n_classes, &mut rng)?;

    let y: Vec<usize> = clean
        .iter()
        .map(|&c| {
            if noise > 0.0 && rng.random::<f64>() < noise {
                let other = rng.random_range(0..n_classes - 1);
                if other >= c {
                    other + 1
                } else {
                    other
                }
            } else {
                c
            }
        })
        .collect();
    let mut counts = vec![0usize; n_classes];
    for &c in &y {
        counts[c] += 1;
    }
    if let Some(c) = counts.iter().position(|&k| k < 2) {
        return Err(Error::Generation(format!(
            "class {c} has {} rows",
            counts[c]
        )));
    }

    let mut transforms = Vec::with_capacity(d);
    for c in 0..d {
        let mean = (0..n).map(|r| raw.get(r, c)).sum::<f64>() / n as f64;
        let var = (0..n).map(|r| (raw.get(r, c) - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 1e-24 { var.sqrt() } else { 1.0 };
        let scale = 10f64.powf(rng.random_range(-1.0..1.0));
        let shift = normal(&mut rng) * 2.0;
        transforms.push(FeatureTransform {
            mean,
            sd,
            scale,
            shift,
        });
    }
    let mut x = raw;
    for r in 0..n {
        for (v, t) in x.row_mut(r).iter_mut().zip(&transforms) {
            *v = t.forward(*v);
        }
    }
    x.ensure_finite("sample_task")?;
    Ok(SyntheticTask {
        x,
        y,
        meta: TaskMeta {
            seed,
            n_classes,
            generator,
            thresholds,
            transforms,
            quantized,
            label_noise: noise,
        },
    })
}

/// Draws one task. The task's shape (sizes, class count, noise level) is drawn
/// once; degenerate draws (a class with fewer than two rows, constant scores)
/// redraw the inputs and generator for that shape. After [`MAX_RESAMPLES`] failed
/// attempts a generation error is returned.
pub fn sample_task(cfg: &PriorConfig, rng: &mut impl RngCore) -> Result<SyntheticTask> {
    let shape = draw_shape(cfg, rng.next_u64());
    let mut last = None;
    for _ in 0..MAX_RESAMPLES {
        let seed = rng.next_u64();
        match try_sample(cfg, &shape, seed) {
            Ok(t) => return Ok(t),
            Err(Error::Generation(e)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Generation(format!(
        "no valid task after {MAX_RESAMPLES} attempts (last: {})",
        last.unwrap_or_default()
    )))
}

/// Noise-free labels recomputed from the stored generator.
pub fn bayes_oracle(meta: &TaskMeta, x_query: &Matrix<f64>) -> Vec<usize> {
    (0..x_query.rows())
        .map(|r| {
            let raw: Vec<f64> = x_query
                .row(r)
                .iter()
                .zip(&meta.transforms)
                .map(|(&v, t)| t.inverse(v))
                .collect();
            let s = meta.generator.score(&raw);
            // thresholds are sample scores; allow for the round trip through the feature map
            meta.thresholds
                .iter()
                .filter(|&&t| s >= t - ORACLE_SLACK * t.abs().max(1.0))
                .count()
        })
        .collect()
}

/// Reproducible stream of tasks for one seed.
#[derive(Clone, Debug)]
pub struct TaskStream {
    cfg: PriorConfig,
    rng: ChaCha8Rng,
}

impl TaskStream {
    pub fn new(cfg: PriorConfig) -> Result<Self> {
        cfg.validate(None)?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(TaskStream { cfg, rng })
    }

    /// Stream with the configuration's seed replaced by `seed`.
    pub fn with_seed(cfg: &PriorConfig, seed: u64) -> Result<Self> {
        Self::new(PriorConfig {
            seed,
            ..cfg.clone()
        })
    }

    pub fn config(&self) -> &PriorConfig {
        &self.cfg
    }

    pub fn next_task(&mut self) -> Result<SyntheticTask> {
        sample_task(&self.cfg, &mut self.rng)
    }
}
