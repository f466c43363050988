//! Forward kernels and their hand-derived backward passes.
//!
//! Every reduction accumulates in a fixed order (ascending index), so two calls
//! with identical inputs produce bit-identical outputs. Inner loops run across
//! independent output elements, which lets the compiler vectorize them without
//! changing any per-element summation order.

use super::matrix::{Matrix, Scalar};
use crate::error::{Error, Result};

/// Additive bias applied to disallowed attention scores before the softmax.
/// `exp(-1e9 - max)` underflows to exactly zero in both `f32` and `f64`.
pub const MASK_BIAS: f64 = -1.0e9;

/// `sqrt(2 / pi)`, the scale inside the tanh form of GELU.
pub const GELU_SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// Cubic coefficient of the tanh form of GELU.
pub const GELU_CUBIC: f64 = 0.044_715;

/// Default layer-norm epsilon.
pub const LN_EPS: f64 = 1e-5;

fn check_finite<T: Scalar>(op: &'static str, m: &Matrix<T>) -> Result<()> {
    m.ensure_finite(op)
}

/// `a * b`.
pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols() != b.rows() {
        return Err(Error::dim(
            "matmul",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let (n, m) = (a.rows(), b.cols());
    let mut out = Matrix::zeros(n, m);
    let kdim = a.cols();
    // Register-tiled ROWS x COLS blocks; every output element accumulates over
    // k in ascending order, identical to the scalar remainder loops.
    const ROWS: usize = 4;
    const COLS: usize = 16;
    let full_rows = n - n % ROWS;
    let full_cols = m - m % COLS;
    for i0 in (0..full_rows).step_by(ROWS) {
        for j0 in (0..full_cols).step_by(COLS) {
            let mut acc = [[T::ZERO; COLS]; ROWS];
            let (r0, r1, r2, r3) = (a.row(i0), a.row(i0 + 1), a.row(i0 + 2), a.row(i0 + 3));
            for k in 0..kdim {
                let brow: [T; COLS] = b.row(k)[j0..j0 + COLS].try_into().unwrap();
                let (x0, x1, x2, x3) = (r0[k], r1[k], r2[k], r3[k]);
                for c in 0..COLS {
                    acc[0][c] += x0 * brow[c];
                    acc[1][c] += x1 * brow[c];
                    acc[2][c] += x2 * brow[c];
                    acc[3][c] += x3 * brow[c];
                }
            }
            for (r, acc_row) in acc.iter().enumerate() {
                out.row_mut(i0 + r)[j0..j0 + COLS].copy_from_slice(acc_row);
            }
        }
        if full_cols < m {
            for i in i0..i0 + ROWS {
                accumulate_row(a.row(i), b, full_cols, &mut out.row_mut(i)[full_cols..]);
            }
        }
    }
    for i in full_rows..n {
        accumulate_row(a.row(i), b, 0, out.row_mut(i));
    }
    Ok(out)
}

/// `out[j] += sum_k arow[k] * b[k][col0 + j]`, k ascending.
#[inline]
fn accumulate_row<T: Scalar>(arow: &[T], b: &Matrix<T>, col0: usize, out: &mut [T]) {
    for (k, &aik) in arow.iter().enumerate() {
        let brow = &b.row(k)[col0..];
        for (o, &bkj) in out.iter_mut().zip(brow) {
            *o += aik * bkj;
        }
    }
}

/// `a * b^T`.
pub fn matmul_nt<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols() != b.cols() {
        return Err(Error::dim(
            "matmul_nt",
            format!("{:?} x {:?}^T", a.shape(), b.shape()),
        ));
    }
    matmul(a, &b.transpose())
}

/// `a^T * b`.
pub fn matmul_tn<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.rows() != b.rows() {
        return Err(Error::dim(
            "matmul_tn",
            format!("{:?}^T x {:?}", a.shape(), b.shape()),
        ));
    }
    matmul(&a.transpose(), b)
}

/// Gradients of `c = a * b` given `dc`: returns `(da, db)`.
pub fn matmul_backward<T: Scalar>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    dc: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    Ok((matmul_nt(dc, b)?, matmul_tn(a, dc)?))
}

/// `x * w + bias` where `bias` is a `1 x out` row.
pub fn linear<T: Scalar>(x: &Matrix<T>, w: &Matrix<T>, bias: &Matrix<T>) -> Result<Matrix<T>> {
    if bias.rows() != 1 || bias.cols() != w.cols() {
        return Err(Error::dim(
            "linear",
            format!("bias {:?} for weight {:?}", bias.shape(), w.shape()),
        ));
    }
    let mut y = matmul(x, w)?;
    let b = bias.as_slice();
    for r in 0..y.rows() {
        for (o, &bv) in y.row_mut(r).iter_mut().zip(b) {
            *o += bv;
        }
    }
    Ok(y)
}

/// Gradients of [`linear`]: returns `(dx, dw, dbias)`.
pub fn linear_backward<T: Scalar>(
    x: &Matrix<T>,
    w: &Matrix<T>,
    dy: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
    let dx = matmul_nt(dy, w)?;
    let dw = matmul_tn(x, dy)?;
    Ok((dx, dw, column_sums(dy)))
}

/// Sum over rows, as a `1 x cols` row.
pub fn column_sums<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = vec![T::ZERO; m.cols()];
    for r in 0..m.rows() {
        for (o, &v) in out.iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
    Matrix::row_vector(out)
}

fn softmax_row_in_place<T: Scalar>(row: &mut [T]) {
    let mut max = row[0];
    for &v in row.iter() {
        max = max.max(v);
    }
    let mut sum = T::ZERO;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = T::ONE / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    check_finite("softmax_rows", m)?;
    let mut out = m.clone();
    if m.cols() == 0 {
        return Ok(out);
    }
    for r in 0..out.rows() {
        softmax_row_in_place(out.row_mut(r));
    }
    Ok(out)
}

/// Gradient of [`softmax_rows`] given its output `y` and upstream `dy`.
pub fn softmax_rows_backward<T: Scalar>(y: &Matrix<T>, dy: &Matrix<T>) -> Result<Matrix<T>> {
    y.check_same_shape("softmax_rows_backward", dy)?;
    let mut dx = Matrix::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let (yr, dyr) = (y.row(r), dy.row(r));
        let mut dot = T::ZERO;
        for (&a, &b) in yr.iter().zip(dyr) {
            dot += a * b;
        }
        for ((o, &a), &b) in dx.row_mut(r).iter_mut().zip(yr).zip(dyr) {
            *o = a * (b - dot);
        }
    }
    Ok(dx)
}

/// Intermediates kept by [`layer_norm_forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct LayerNormCache<T: Scalar> {
    pub normalized: Matrix<T>,
    pub inv_std: Vec<T>,
}

/// Row-wise layer normalization: `(x - mean) / sqrt(var + eps) * gain + bias`.
pub fn layer_norm<T: Scalar>(
    m: &Matrix<T>,
    gain: &Matrix<T>,
    bias: &Matrix<T>,
    eps: T,
) -> Result<Matrix<T>> {
    Ok(layer_norm_forward(m, gain, bias, eps)?.0)
}

pub fn layer_norm_forward<T: Scalar>(
    m: &Matrix<T>,
    gain: &Matrix<T>,
    bias: &Matrix<T>,
    eps: T,
) -> Result<(Matrix<T>, LayerNormCache<T>)> {
    let d = m.cols();
    if gain.len() != d || bias.len() != d {
        return Err(Error::dim(
            "layer_norm",
            format!("gain {} / bias {} for width {d}", gain.len(), bias.len()),
        ));
    }
    check_finite("layer_norm", m)?;
    let inv_d = T::ONE / T::from_f64(d as f64);
    let mut normalized = Matrix::zeros(m.rows(), d);
    let mut out = Matrix::zeros(m.rows(), d);
    let mut inv_std = Vec::with_capacity(m.rows());
    for r in 0..m.rows() {
        let x = m.row(r);
        let mut mean = T::ZERO;
        for &v in x {
            mean += v;
        }
        mean *= inv_d;
        let mut var = T::ZERO;
        for &v in x {
            let c = v - mean;
            var += c * c;
        }
        var *= inv_d;
        let is = T::ONE / (var + eps).sqrt();
        inv_std.push(is);
        let nrow = normalized.row_mut(r);
        for (n, &v) in nrow.iter_mut().zip(x) {
            *n = (v - mean) * is;
        }
        let nrow = normalized.row(r);
        for (((o, &n), &g), &b) in out
            .row_mut(r)
            .iter_mut()
            .zip(nrow)
            .zip(gain.as_slice())
            .zip(bias.as_slice())
        {
            *o = n * g + b;
        }
    }
    Ok((
        out,
        LayerNormCache {
            normalized,
            inv_std,
        },
    ))
}

/// Gradients of layer norm: returns `(dx, dgain, dbias)`.
pub fn layer_norm_backward<T: Scalar>(
    cache: &LayerNormCache<T>,
    gain: &Matrix<T>,
    dy: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
    cache.normalized.check_same_shape("layer_norm_backward", dy)?;
    let d = dy.cols();
    let inv_d = T::ONE / T::from_f64(d as f64);
    let mut dx = Matrix::zeros(dy.rows(), d);
    let mut dgain = vec![T::ZERO; d];
    let mut dbias = vec![T::ZERO; d];
    let mut dxhat = vec![T::ZERO; d];
    for r in 0..dy.rows() {
        let (xh, g) = (cache.normalized.row(r), dy.row(r));
        let mut sum_dxhat = T::ZERO;
        let mut sum_dxhat_xhat = T::ZERO;
        for j in 0..d {
            dgain[j] += g[j] * xh[j];
            dbias[j] += g[j];
            dxhat[j] = g[j] * gain.as_slice()[j];
            sum_dxhat += dxhat[j];
            sum_dxhat_xhat += dxhat[j] * xh[j];
        }
        let mean_a = sum_dxhat * inv_d;
        let mean_b = sum_dxhat_xhat * inv_d;
        let is = cache.inv_std[r];
        for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = is * (dxhat[j] - mean_a - xh[j] * mean_b);
        }
    }
    Ok((dx, Matrix::row_vector(dgain), Matrix::row_vector(dbias)))
}

/// Scalar GELU, tanh form:
/// `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
///
/// Evaluated through the identity `1 + tanh(u) = 2 / (1 + exp(-2u))`, which
/// needs one `exp` instead of a `tanh`.
#[inline]
pub fn gelu_scalar<T: Scalar>(x: T) -> T {
    x * gelu_gate(x)
}

/// `sigmoid(2u) = 0.5 (1 + tanh(u))` with `u = sqrt(2/pi) (x + 0.044715 x^3)`.
#[inline]
fn gelu_gate<T: Scalar>(x: T) -> T {
    let c = T::from_f64(GELU_SQRT_2_OVER_PI);
    let a = T::from_f64(GELU_CUBIC);
    let two = T::from_f64(2.0);
    let u = c * (x + a * x * x * x);
    T::ONE / (T::ONE + (-two * u).exp())
}

#[inline]
fn gelu_grad_scalar<T: Scalar>(x: T) -> T {
    let c = T::from_f64(GELU_SQRT_2_OVER_PI);
    let a = T::from_f64(GELU_CUBIC);
    let two = T::from_f64(2.0);
    let three = T::from_f64(3.0);
    let s = gelu_gate(x);
    // d/dx [x s] with ds/du = 2 s (1 - s) and du/dx = c (1 + 3 a x^2)
    s + two * x * s * (T::ONE - s) * c * (T::ONE + three * a * x * x)
}

pub fn gelu<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    check_finite("gelu", m)?;
    Ok(m.map(gelu_scalar))
}

/// Gradient of [`gelu`] given its input `x`.
pub fn gelu_backward<T: Scalar>(x: &Matrix<T>, dy: &Matrix<T>) -> Result<Matrix<T>> {
    x.check_same_shape("gelu_backward", dy)?;
    let mut dx = Matrix::zeros(x.rows(), x.cols());
    for ((o, &xv), &g) in dx.as_mut_slice().iter_mut().zip(x.as_slice()).zip(dy.as_slice()) {
        *o = gelu_grad_scalar(xv) * g;
    }
    Ok(dx)
}

/// Boolean attention mask: `allowed(i, j)` means query row `i` may attend to key row `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn new(rows: usize, cols: usize, allowed: Vec<bool>) -> Result<Self> {
        if allowed.len() != rows * cols {
            return Err(Error::dim(
                "AttentionMask::new",
                format!("{} flags for {rows}x{cols}", allowed.len()),
            ));
        }
        Ok(AttentionMask {
            rows,
            cols,
            allowed,
        })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        AttentionMask {
            rows,
            cols,
            allowed: vec![true; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut allowed = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                allowed.push(f(i, j));
            }
        }
        AttentionMask {
            rows,
            cols,
            allowed,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.allowed[i * self.cols..(i + 1) * self.cols]
    }

    /// Restriction to the first `cols` key columns.
    pub fn leading_cols(&self, cols: usize) -> Self {
        Self::from_fn(self.rows, cols, |i, j| self.allowed(i, j))
    }
}

/// Attention probabilities kept for the backward pass.
#[derive(Clone, Debug)]
pub struct AttentionCache<T: Scalar> {
    pub probs: Matrix<T>,
}

/// Single-head scaled dot-product attention with an additive mask.
pub fn masked_attention<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    mask: &AttentionMask,
) -> Result<Matrix<T>> {
    Ok(masked_attention_forward(q, k, v, mask)?.0)
}

pub fn masked_attention_forward<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    mask: &AttentionMask,
) -> Result<(Matrix<T>, AttentionCache<T>)> {
    if q.cols() != k.cols()
        || k.rows() != v.rows()
        || mask.cols() != k.rows()
        || mask.rows() != q.rows()
    {
        return Err(Error::dim(
            "masked_attention",
            format!(
                "q {:?}, k {:?}, v {:?}, mask {}x{}",
                q.shape(),
                k.shape(),
                v.shape(),
                mask.rows(),
                mask.cols()
            ),
        ));
    }
    for i in 0..mask.rows() {
        if !mask.row(i).iter().any(|&a| a) {
            return Err(Error::Contract(format!(
                "attention row {i} has every key masked"
            )));
        }
    }
    let scale = T::ONE / T::from_f64(q.cols() as f64).sqrt();
    let bias = T::from_f64(MASK_BIAS);
    let mut scores = matmul_nt(q, k)?;
    for i in 0..scores.rows() {
        let mrow = mask.row(i);
        for (s, &ok) in scores.row_mut(i).iter_mut().zip(mrow) {
            *s *= scale;
            if !ok {
                *s += bias;
            }
        }
    }
    let probs = softmax_rows(&scores)?;
    let out = matmul(&probs, v)?;
    Ok((out, AttentionCache { probs }))
}

/// Gradients of masked attention: returns `(dq, dk, dv)`.
pub fn masked_attention_backward<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    cache: &AttentionCache<T>,
    dout: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
    let scale = T::ONE / T::from_f64(q.cols() as f64).sqrt();
    let dv = matmul_tn(&cache.probs, dout)?;
    let dprobs = matmul_nt(dout, v)?;
    let mut dscores = softmax_rows_backward(&cache.probs, &dprobs)?;
    dscores.scale(scale);
    let dq = matmul(&dscores, k)?;
    let dk = matmul_tn(&dscores, q)?;
    Ok((dq, dk, dv))
}

fn check_targets(op: &'static str, logits_cols: usize, rows: usize, targets: &[usize]) -> Result<()> {
    if targets.len() != rows {
        return Err(Error::dim(
            op,
            format!("{} targets for {rows} rows", targets.len()),
        ));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= logits_cols) {
        return Err(Error::Index {
            op,
            index: t,
            bound: logits_cols,
        });
    }
    Ok(())
}

/// Mean over rows of `-log softmax(logits)[target]`.
pub fn cross_entropy<T: Scalar>(logits: &Matrix<T>, targets: &[usize]) -> Result<T> {
    Ok(cross_entropy_with_grad(logits, targets)?.0)
}

/// Cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy_with_grad<T: Scalar>(
    logits: &Matrix<T>,
    targets: &[usize],
) -> Result<(T, Matrix<T>)> {
    check_targets("cross_entropy", logits.cols(), logits.rows(), targets)?;
    if logits.rows() == 0 {
        return Err(Error::Contract("cross_entropy over zero rows".into()));
    }
    let probs = softmax_rows(logits)?;
    let inv_n = T::ONE / T::from_f64(logits.rows() as f64);
    let mut loss = T::ZERO;
    let mut grad = probs.clone();
    for (r, &t) in targets.iter().enumerate() {
        let row = logits.row(r);
        let mut max = row[0];
        for &v in row {
            max = max.max(v);
        }
        let mut sum = T::ZERO;
        for &v in row {
            sum += (v - max).exp();
        }
        loss += sum.ln() - (row[t] - max);
        let g = grad.row_mut(r);
        g[t] -= T::ONE;
        for x in g.iter_mut() {
            *x *= inv_n;
        }
    }
    let loss = loss * inv_n;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            op: "cross_entropy",
        });
    }
    Ok((loss, grad))
}
