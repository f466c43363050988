//! Every hand-written backward pass against central finite differences.
//!
//! 64-bit gradients are compared with 64-bit differences. 32-bit gradients are
//! compared with differences of the same function evaluated in 64-bit on the
//! same (exactly representable) inputs, since 32-bit differences are dominated
//! by rounding noise. Errors are norm-wise relative.

use pfn_core::model::{ModelConfig, PfnParams};
use pfn_core::numeric::*;
use pfn_core::prior::{sample_task, PriorConfig};
use pfn_core::train::{batch_loss_and_grad, draw_cut};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const SEEDS: u64 = 20;
const TOL_F32: f64 = 1e-3;
const TOL_F64: f64 = 1e-6;
const FD_EPS: f64 = 1e-5;

fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
    let v = (0..r * c).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::from_vec(r, c, v).unwrap()
}

#[derive(Clone, Copy, Debug)]
enum Kernel {
    Matmul,
    Linear,
    Softmax,
    LayerNorm,
    Gelu,
    Attention,
    CrossEntropy,
}

fn mask_for(seed: u64, rows: usize, cols: usize) -> AttentionMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let allowed: Vec<bool> = (0..rows * cols)
        .map(|i| i % cols == i / cols % cols || rng.random::<f64>() < 0.6)
        .collect();
    AttentionMask::new(rows, cols, allowed).unwrap()
}

const TARGETS: [usize; 4] = [2, 0, 1, 2];

/// Output of the kernel and, given the upstream gradient, the input gradients.
fn run<T: Scalar>(
    k: Kernel,
    x: &[Matrix<T>],
    dout: Option<&Matrix<T>>,
    seed: u64,
) -> (Matrix<T>, Vec<Matrix<T>>) {
    let Some(dout) = dout else {
        return (forward_only(k, x, seed), Vec::new());
    };
    match k {
        Kernel::Matmul => {
            let y = matmul(&x[0], &x[1]).unwrap();
            let (da, db) = matmul_backward(&x[0], &x[1], dout).unwrap();
            (y, vec![da, db])
        }
        Kernel::Linear => {
            let y = linear(&x[0], &x[1], &x[2]).unwrap();
            let (dx, dw, db) = linear_backward(&x[0], &x[1], dout).unwrap();
            (y, vec![dx, dw, db])
        }
        Kernel::Softmax => {
            let y = softmax_rows(&x[0]).unwrap();
            let dx = softmax_rows_backward(&y, dout).unwrap();
            (y, vec![dx])
        }
        Kernel::LayerNorm => {
            let (y, cache) = layer_norm_forward(&x[0], &x[1], &x[2], T::from_f64(LN_EPS)).unwrap();
            let (dx, dg, db) = layer_norm_backward(&cache, &x[1], dout).unwrap();
            (y, vec![dx, dg, db])
        }
        Kernel::Gelu => {
            let y = gelu(&x[0]).unwrap();
            (y, vec![gelu_backward(&x[0], dout).unwrap()])
        }
        Kernel::Attention => {
            let mask = mask_for(seed, x[0].rows(), x[1].rows());
            let (y, cache) = masked_attention_forward(&x[0], &x[1], &x[2], &mask).unwrap();
            let (dq, dk, dv) = masked_attention_backward(&x[0], &x[1], &x[2], &cache, dout).unwrap();
            (y, vec![dq, dk, dv])
        }
        Kernel::CrossEntropy => {
            let (loss, g) = cross_entropy_with_grad(&x[0], &TARGETS).unwrap();
            // The loss is a scalar; scale the gradient by the upstream value.
            let mut g = g;
            g.scale(dout.get(0, 0));
            (Matrix::row_vector(vec![loss]), vec![g])
        }
    }
}

fn forward_only<T: Scalar>(k: Kernel, x: &[Matrix<T>], seed: u64) -> Matrix<T> {
    match k {
        Kernel::Matmul => matmul(&x[0], &x[1]).unwrap(),
        Kernel::Linear => linear(&x[0], &x[1], &x[2]).unwrap(),
        Kernel::Softmax => softmax_rows(&x[0]).unwrap(),
        Kernel::LayerNorm => layer_norm(&x[0], &x[1], &x[2], T::from_f64(LN_EPS)).unwrap(),
        Kernel::Gelu => gelu(&x[0]).unwrap(),
        Kernel::Attention => {
            let mask = mask_for(seed, x[0].rows(), x[1].rows());
            masked_attention(&x[0], &x[1], &x[2], &mask).unwrap()
        }
        Kernel::CrossEntropy => Matrix::row_vector(vec![cross_entropy(&x[0], &TARGETS).unwrap()]),
    }
}

fn shapes(k: Kernel) -> Vec<(usize, usize)> {
    match k {
        Kernel::Matmul => vec![(5, 4), (4, 3)],
        Kernel::Linear => vec![(5, 4), (4, 3), (1, 3)],
        Kernel::Softmax => vec![(4, 6)],
        Kernel::LayerNorm => vec![(4, 6), (1, 6), (1, 6)],
        Kernel::Gelu => vec![(5, 5)],
        Kernel::Attention => vec![(5, 4), (6, 4), (6, 3)],
        Kernel::CrossEntropy => vec![(4, 3)],
    }
}

fn check_kernel<T: Scalar>(k: Kernel, seed: u64, tol: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Matrix<f64>> = shapes(k).iter().map(|&(r, c)| randn(&mut rng, r, c)).collect();
    // Round through T so the oracle sees exactly the analytic inputs.
    let inputs: Vec<Matrix<f64>> = inputs.iter().map(|m| m.cast::<T>().cast::<f64>()).collect();
    let (out, _) = run::<f64>(k, &inputs, None, seed);
    let upstream = randn(&mut rng, out.rows(), out.cols()).cast::<T>().cast::<f64>();

    let lens: Vec<usize> = inputs.iter().map(Matrix::len).collect();
    let flat: Vec<f64> = inputs.iter().flat_map(|m| m.as_slice().to_vec()).collect();
    let rebuild = |v: &[f64]| {
        let mut off = 0;
        inputs
            .iter()
            .zip(&lens)
            .map(|(m, &n)| {
                let r = Matrix::from_vec(m.rows(), m.cols(), v[off..off + n].to_vec()).unwrap();
                off += n;
                r
            })
            .collect::<Vec<_>>()
    };
    let loss = |v: &[f64]| {
        let (o, _) = run::<f64>(k, &rebuild(v), None, seed);
        o.as_slice().iter().zip(upstream.as_slice()).map(|(a, b)| a * b).sum::<f64>()
    };
    let numeric = finite_diff_grad(loss, &flat, FD_EPS).unwrap();

    let cast_inputs: Vec<Matrix<T>> = inputs.iter().map(|m| m.cast::<T>()).collect();
    let (_, grads) = run::<T>(k, &cast_inputs, Some(&upstream.cast::<T>()), seed);
    let mut off = 0;
    for (i, g) in grads.iter().enumerate() {
        let analytic: Vec<f64> = g.as_slice().iter().map(|v| v.to_f64()).collect();
        let err = relative_error(&analytic, &numeric[off..off + lens[i]]);
        assert!(
            err < tol,
            "{k:?} input {i} seed {seed}: relative error {err:.3e} (tol {tol:e})"
        );
        off += lens[i];
    }
}

const KERNELS: [Kernel; 7] = [
    Kernel::Matmul,
    Kernel::Linear,
    Kernel::Softmax,
    Kernel::LayerNorm,
    Kernel::Gelu,
    Kernel::Attention,
    Kernel::CrossEntropy,
];

#[test]
fn kernels_match_finite_differences_f64() {
    for k in KERNELS {
        for seed in 0..SEEDS {
            check_kernel::<f64>(k, seed, TOL_F64);
        }
    }
}

#[test]
fn kernels_match_finite_differences_f32() {
    for k in KERNELS {
        for seed in 0..SEEDS {
            check_kernel::<f32>(k, 100 + seed, TOL_F32);
        }
    }
}

fn micro_config() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        d_ff: 16,
        max_features: 3,
        max_classes: 3,
        max_train: 16,
        max_query: 16,
    }
}

fn micro_prior() -> PriorConfig {
    PriorConfig {
        features: (1, 3),
        classes: (2, 3),
        rows: (8, 14),
        ..Default::default()
    }
}

/// Perturbs the zero-initialized output head so every parameter receives a
/// non-trivial gradient.
fn micro_params(cfg: &ModelConfig, seed: u64) -> PfnParams<f64> {
    let mut p = PfnParams::<f64>::init(cfg, seed).cast::<f32>().cast::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for v in p.head_w2.as_mut_slice() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = (0.3 * z) as f32 as f64;
    }
    p
}

fn check_full_step<T: Scalar>(seed: u64, tol: f64) {
    let cfg = micro_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tasks: Vec<_> = (0..2).map(|_| sample_task(&micro_prior(), &mut rng).unwrap()).collect();
    let cuts: Vec<usize> = tasks
        .iter()
        .map(|t| draw_cut(t.n_rows(), (0.25, 0.75), &mut rng))
        .collect();
    // Inputs rounded through T so both precisions see the same task.
    let tasks: Vec<_> = tasks
        .into_iter()
        .map(|mut t| {
            t.x = t.x.cast::<T>().cast::<f64>();
            t
        })
        .collect();
    let params = micro_params(&cfg, seed);
    let flat = params.flatten();
    let loss = |v: &[f64]| {
        let mut p = params.clone();
        p.assign_flat(v);
        batch_loss_and_grad(&p, &cfg, &tasks, &cuts).unwrap().0
    };
    let numeric = finite_diff_grad(loss, &flat, FD_EPS).unwrap();
    let (_, grads) = batch_loss_and_grad(&params.cast::<T>(), &cfg, &tasks, &cuts).unwrap();
    let analytic: Vec<f64> = grads.flatten().iter().map(|v| v.to_f64()).collect();
    let err = relative_error(&analytic, &numeric);
    assert!(err < tol, "full step seed {seed}: relative error {err:.3e} (tol {tol:e})");
    // Per-tensor check so that small tensors cannot hide behind large ones.
    let mut off = 0;
    for (name, m) in params.named_tensors() {
        let n = m.len();
        let a = &analytic[off..off + n];
        let b = &numeric[off..off + n];
        let scale = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if scale > 1e-6 {
            let e = relative_error(a, b);
            assert!(e < tol * 10.0, "seed {seed} tensor {name}: {e:.3e}");
        }
        off += n;
    }
}

#[test]
fn full_micro_model_step_matches_finite_differences_f64() {
    for seed in 0..SEEDS {
        check_full_step::<f64>(seed, TOL_F64);
    }
}

#[test]
fn full_micro_model_step_matches_finite_differences_f32() {
    for seed in 0..SEEDS {
        check_full_step::<f32>(seed, TOL_F32);
    }
}
