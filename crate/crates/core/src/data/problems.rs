//! Built-in feasibility problems: a point is labeled 1 when its performance
//! value is at most the threshold and every constraint is satisfied, 0
//! otherwise.

use crate::error::{Error, Result};
use crate::numeric::Matrix;

use super::dataset::{Dataset, ImbalanceGuard};
use super::sampler::{SamplerState, SequenceKind};

pub type ProblemFn = fn(&[f64]) -> f64;

#[derive(Clone, Debug, PartialEq)]
pub enum ClassRule {
    /// 1 if `f(x) <= f_thresh` and every `g(x) <= 0`, else 0.
    Feasible,
    /// Count of thresholds strictly exceeded by `f(x)` when all constraints
    /// hold; class 0 otherwise.
    Levels(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub name: &'static str,
    pub dims: usize,
    pub performance: ProblemFn,
    pub f_thresh: f64,
    pub constraints: Vec<ProblemFn>,
    pub train_sampler: SequenceKind,
    pub rule: ClassRule,
    /// Flag for the imbalance guard when splitting.
    pub imbalanced: bool,
}

impl ProblemSpec {
    pub fn n_classes(&self) -> usize {
        match &self.rule {
            ClassRule::Feasible => 2,
            ClassRule::Levels(t) => t.len() + 1,
        }
    }

    pub fn label(&self, x: &[f64]) -> usize {
        let f = (self.performance)(x);
        let feasible = self.constraints.iter().all(|g| g(x) <= 0.0);
        match &self.rule {
            ClassRule::Feasible => usize::from(feasible && f <= self.f_thresh),
            ClassRule::Levels(ts) if feasible => ts.iter().filter(|&&t| f > t).count(),
            ClassRule::Levels(_) => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 {
            return Err(Error::Parameter(format!("{}: zero dimensions", self.name)));
        }
        if !self.f_thresh.is_finite() {
            return Err(Error::Parameter(format!("{}: non-finite threshold", self.name)));
        }
        if let ClassRule::Levels(ts) = &self.rule {
            if ts.is_empty() || ts.windows(2).any(|w| w[0] >= w[1]) || ts.iter().any(|t| !t.is_finite()) {
                return Err(Error::Parameter(format!(
                    "{}: level thresholds must be finite and increasing",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

fn rings_f(x: &[f64]) -> f64 {
    let r = ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt();
    (r - 0.3).abs()
}

fn box_f(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn box_g_strength(x: &[f64]) -> f64 {
    0.9 - (x[0] + x[1] + x[2])
}

fn box_g_balance(x: &[f64]) -> f64 {
    (x[3] - x[5]) - 0.4
}

const NEEDLE_CENTER: [f64; 4] = [0.3, 0.7, 0.5, 0.4];

fn needle_f(x: &[f64]) -> f64 {
    x.iter().zip(NEEDLE_CENTER).map(|(a, c)| (a - c).powi(2)).sum()
}

fn needle_g(x: &[f64]) -> f64 {
    x[2] - 0.7
}

/// Two-dimensional annulus around the centre of the unit square; about 45% of
/// the square is feasible.
pub fn rings2d() -> ProblemSpec {
    ProblemSpec {
        name: "rings2d",
        dims: 2,
        performance: rings_f,
        f_thresh: 0.12,
        constraints: vec![],
        train_sampler: SequenceKind::Sobol,
        rule: ClassRule::Feasible,
        imbalanced: false,
    }
}

/// Six-dimensional region cut by a mean-value threshold and two linear
/// constraints.
pub fn box6d() -> ProblemSpec {
    ProblemSpec {
        name: "box6d",
        dims: 6,
        performance: box_f,
        f_thresh: 0.55,
        constraints: vec![box_g_strength, box_g_balance],
        train_sampler: SequenceKind::Sobol,
        rule: ClassRule::Feasible,
        imbalanced: false,
    }
}

/// Small four-dimensional ball with a capped side; a few percent of the cube
/// is feasible.
pub fn needle4d() -> ProblemSpec {
    ProblemSpec {
        name: "needle4d",
        dims: 4,
        performance: needle_f,
        f_thresh: 0.0711,
        constraints: vec![needle_g],
        train_sampler: SequenceKind::Sobol,
        rule: ClassRule::Feasible,
        imbalanced: true,
    }
}

pub fn builtin_problems() -> Vec<ProblemSpec> {
    vec![rings2d(), box6d(), needle4d()]
}

pub fn builtin_problem(name: &str) -> Option<ProblemSpec> {
    builtin_problems().into_iter().find(|p| p.name == name)
}

/// Generated train/test pair plus notes on any regeneration.
#[derive(Clone, Debug)]
pub struct GeneratedProblem {
    pub train: Dataset,
    pub test: Dataset,
    pub notes: Vec<String>,
}

const REGENERATION_ATTEMPTS: u64 = 16;

fn sample_labeled(
    spec: &ProblemSpec,
    kind: SequenceKind,
    start: u64,
    n: usize,
) -> Result<(Matrix<f64>, Vec<usize>)> {
    let mut s = SamplerState::new(kind, spec.dims, start)?;
    let mut x = Matrix::zeros(n, spec.dims);
    let mut y = Vec::with_capacity(n);
    for r in 0..n {
        let p = s.next_point()?;
        y.push(spec.label(&p));
        x.row_mut(r).copy_from_slice(&p);
    }
    Ok((x, y))
}

/// Train points from the problem's sampler and test points from Halton, starting
/// at seed-dependent indices. If a class is missing from the training set, the
/// train range is moved and enlarged (doubling the skipped stretch) and a note
/// is recorded.
pub fn generate_problem(
    spec: &ProblemSpec,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<GeneratedProblem> {
    spec.validate()?;
    if n_train < 2 || n_test == 0 {
        return Err(Error::Parameter(format!(
            "{}: need at least 2 train rows and 1 test row",
            spec.name
        )));
    }
    let c = spec.n_classes();
    let offset = seed % 4096;
    let train_kind = if spec.dims > super::sampler::SOBOL_MAX_DIMS {
        SequenceKind::Halton
    } else {
        spec.train_sampler
    };
    // Halton starts at 1 to skip the origin.
    let halton_base = 1 + offset;
    let mut notes = Vec::new();
    let mut start = offset + u64::from(train_kind == SequenceKind::Halton);
    let mut chosen = None;
    for attempt in 0..REGENERATION_ATTEMPTS {
        let (x, y) = sample_labeled(spec, train_kind, start, n_train)?;
        let mut seen = vec![false; c];
        y.iter().for_each(|&k| seen[k] = true);
        if seen.iter().all(|&s| s) {
            chosen = Some((x, y));
            break;
        }
        let missing: Vec<usize> = (0..c).filter(|&k| !seen[k]).collect();
        let skip = (n_train as u64) << attempt;
        notes.push(format!(
            "{}: classes {missing:?} absent from train range starting at {start}; regenerating after skipping {skip} points",
            spec.name
        ));
        start += skip;
    }
    let (x, y) = chosen.ok_or_else(|| {
        Error::Generation(format!(
            "{}: training set misses a class after {REGENERATION_ATTEMPTS} attempts",
            spec.name
        ))
    })?;
    // When training also uses Halton, test indices start past the training range.
    let test_start = if train_kind == SequenceKind::Halton {
        start + n_train as u64
    } else {
        halton_base
    };
    let (xt, yt) = sample_labeled(spec, SequenceKind::Halton, test_start, n_test)?;
    let guard = spec.imbalanced.then(ImbalanceGuard::default);
    let train = Dataset::new(spec.name, x, y, c)?.with_guard(guard);
    let test = Dataset::new(format!("{}_test", spec.name), xt, yt, c)?;
    Ok(GeneratedProblem { train, test, notes })
}
