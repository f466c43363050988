//! Token encoding, the asymmetric attention mask, and the transformer forward
//! and backward passes.
//!
//! Layout of the token sequence: the `n_train` labeled rows first, then the
//! `n_query` unlabeled rows. Labeled rows attend to every labeled row; query
//! rows attend to labeled rows only. No positional encoding is added, so the
//! output is invariant to the order of the labeled rows.

use super::config::ModelConfig;
use super::params::{LayerParams, PfnParams};
use crate::error::{Error, Result};
use crate::numeric::{
    column_sums, gelu, gelu_backward, layer_norm_backward, layer_norm_forward, linear,
    linear_backward, masked_attention_backward, masked_attention_forward, AttentionCache,
    AttentionMask, LayerNormCache, Matrix, Scalar, LN_EPS,
};

/// Labeled context rows plus unlabeled query rows for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextBatch<T: Scalar = f32> {
    pub x_train: Matrix<T>,
    pub y_train: Vec<usize>,
    pub x_query: Matrix<T>,
}

impl<T: Scalar> ContextBatch<T> {
    pub fn new(x_train: Matrix<T>, y_train: Vec<usize>, x_query: Matrix<T>) -> Result<Self> {
        if y_train.len() != x_train.rows() {
            return Err(Error::dim(
                "ContextBatch",
                format!("{} labels for {} rows", y_train.len(), x_train.rows()),
            ));
        }
        if x_query.cols() != x_train.cols() && x_query.rows() > 0 {
            return Err(Error::dim(
                "ContextBatch",
                format!(
                    "query width {} != train width {}",
                    x_query.cols(),
                    x_train.cols()
                ),
            ));
        }
        Ok(ContextBatch {
            x_train,
            y_train,
            x_query,
        })
    }

    pub fn n_train(&self) -> usize {
        self.x_train.rows()
    }

    pub fn n_query(&self) -> usize {
        self.x_query.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x_train.cols()
    }

    /// Number of contiguous classes implied by the labels (`max + 1`).
    pub fn n_active_classes(&self) -> usize {
        self.y_train.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Checks the batch against model capacity.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        if self.n_train() == 0 {
            return Err(Error::Contract("context needs at least one labeled row".into()));
        }
        if self.n_features() > cfg.max_features {
            return Err(Error::Capacity(format!(
                "{} features exceed max_features {}",
                self.n_features(),
                cfg.max_features
            )));
        }
        if self.n_train() > cfg.max_train || self.n_query() > cfg.max_query {
            return Err(Error::Capacity(format!(
                "{} labeled + {} query rows exceed capacity {} + {}",
                self.n_train(),
                self.n_query(),
                cfg.max_train,
                cfg.max_query
            )));
        }
        if let Some(&c) = self.y_train.iter().find(|&&c| c >= cfg.max_classes) {
            return Err(Error::Class {
                class: c,
                max_classes: cfg.max_classes,
            });
        }
        self.x_train.ensure_finite("ContextBatch")?;
        self.x_query.ensure_finite("ContextBatch")?;
        Ok(())
    }

    /// Standardizes every column with labeled-row statistics (zero spread maps to
    /// one) and rescales by `sqrt(max_features / d)` so that the padded input keeps
    /// a comparable magnitude regardless of how many features are present.
    pub fn normalized(&self, cfg: &ModelConfig) -> ContextBatch<T> {
        let (n, d) = (self.n_train(), self.n_features());
        let inv_n = T::ONE / T::from_f64(n as f64);
        let width_scale = T::from_f64((cfg.max_features as f64 / d.max(1) as f64).sqrt());
        let mut mean = vec![T::ZERO; d];
        for r in 0..n {
            for (m, &v) in mean.iter_mut().zip(self.x_train.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m *= inv_n);
        let mut var = vec![T::ZERO; d];
        for r in 0..n {
            for ((s, &v), &m) in var.iter_mut().zip(self.x_train.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let factor: Vec<T> = var
            .iter()
            .map(|&s| {
                let sd = (s * inv_n).sqrt();
                if sd > T::from_f64(1e-12) {
                    width_scale / sd
                } else {
                    width_scale
                }
            })
            .collect();
        let apply = |x: &Matrix<T>| {
            let mut out = x.clone();
            for r in 0..out.rows() {
                for ((v, &m), &f) in out.row_mut(r).iter_mut().zip(&mean).zip(&factor) {
                    *v = (*v - m) * f;
                }
            }
            out
        };
        ContextBatch {
            x_train: apply(&self.x_train),
            y_train: self.y_train.clone(),
            x_query: apply(&self.x_query),
        }
    }
}

/// `(n_train + n_query)^2` mask: labeled rows see labeled keys, query rows see
/// labeled keys only (never other queries, never themselves).
pub fn build_attention_mask(n_train: usize, n_query: usize) -> Result<AttentionMask> {
    if n_train == 0 {
        return Err(Error::Contract("attention mask needs n_train >= 1".into()));
    }
    let n = n_train + n_query;
    Ok(AttentionMask::from_fn(n, n, |_, j| j < n_train))
}

/// Token matrix for a batch: zero-padded features projected to `d_model`, plus
/// the class embedding (labeled rows) or the masked-label embedding (queries).
pub fn encode_tokens<T: Scalar>(
    batch: &ContextBatch<T>,
    params: &PfnParams<T>,
    cfg: &ModelConfig,
) -> Result<Matrix<T>> {
    batch.validate(cfg)?;
    Ok(encode_unchecked(batch, params, cfg)?.0)
}

fn encode_unchecked<T: Scalar>(
    batch: &ContextBatch<T>,
    params: &PfnParams<T>,
    cfg: &ModelConfig,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let (nt, nq) = (batch.n_train(), batch.n_query());
    let mut x = Matrix::zeros(nt + nq, cfg.max_features);
    for r in 0..nt {
        x.row_mut(r)[..batch.n_features()].copy_from_slice(batch.x_train.row(r));
    }
    for r in 0..nq {
        x.row_mut(nt + r)[..batch.n_features()].copy_from_slice(batch.x_query.row(r));
    }
    let mut tokens = linear(&x, &params.feature_w, &params.feature_b)?;
    for (r, &c) in batch.y_train.iter().enumerate() {
        for (t, &e) in tokens.row_mut(r).iter_mut().zip(params.class_emb.row(c)) {
            *t += e;
        }
    }
    for r in nt..nt + nq {
        for (t, &e) in tokens.row_mut(r).iter_mut().zip(params.query_emb.row(0)) {
            *t += e;
        }
    }
    Ok((tokens, x))
}

struct LayerCache<T: Scalar> {
    input: Matrix<T>,
    ln1: LayerNormCache<T>,
    a: Matrix<T>,
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    heads: Vec<AttentionCache<T>>,
    attn: Matrix<T>,
    ln2: LayerNormCache<T>,
    b: Matrix<T>,
    ff_pre: Matrix<T>,
    ff_act: Matrix<T>,
}

/// Intermediates of one forward pass, consumed by [`backward`].
pub struct ForwardCache<T: Scalar> {
    n_train: usize,
    y_train: Vec<usize>,
    padded_x: Matrix<T>,
    layers: Vec<LayerCache<T>>,
    final_hidden_q: Matrix<T>,
    out_ln: LayerNormCache<T>,
    z: Matrix<T>,
    head_pre: Matrix<T>,
    head_act: Matrix<T>,
}

fn layer_forward<T: Scalar>(
    h: Matrix<T>,
    lp: &LayerParams<T>,
    cfg: &ModelConfig,
    n_train: usize,
    mask: &AttentionMask,
) -> Result<(Matrix<T>, LayerCache<T>)> {
    let eps = T::from_f64(LN_EPS);
    let (a, ln1) = layer_norm_forward(&h, &lp.ln1_gain, &lp.ln1_bias, eps)?;
    let q = linear(&a, &lp.wq, &lp.bq)?;
    let a_train = a.slice_rows(0, n_train);
    let k = linear(&a_train, &lp.wk, &lp.bk)?;
    let v = linear(&a_train, &lp.wv, &lp.bv)?;
    let dh = cfg.head_dim();
    let mut attn = Matrix::zeros(h.rows(), cfg.d_model);
    let mut heads = Vec::with_capacity(cfg.n_heads);
    for hd in 0..cfg.n_heads {
        let (lo, hi) = (hd * dh, (hd + 1) * dh);
        let (o, c) = masked_attention_forward(
            &q.slice_cols(lo, hi),
            &k.slice_cols(lo, hi),
            &v.slice_cols(lo, hi),
            mask,
        )?;
        attn.set_cols(lo, &o);
        heads.push(c);
    }
    let mut mid = linear(&attn, &lp.wo, &lp.bo)?;
    mid.add_assign(&h)?;
    let (b, ln2) = layer_norm_forward(&mid, &lp.ln2_gain, &lp.ln2_bias, eps)?;
    let ff_pre = linear(&b, &lp.w1, &lp.b1)?;
    let ff_act = gelu(&ff_pre)?;
    let mut out = linear(&ff_act, &lp.w2, &lp.b2)?;
    out.add_assign(&mid)?;
    Ok((
        out,
        LayerCache {
            input: h,
            ln1,
            a,
            q,
            k,
            v,
            heads,
            attn,
            ln2,
            b,
            ff_pre,
            ff_act,
        },
    ))
}

/// Forward pass over an already-normalized batch; returns `n_query x max_classes`
/// logits and the cache for [`backward`].
pub fn forward_cached<T: Scalar>(
    batch: &ContextBatch<T>,
    params: &PfnParams<T>,
    cfg: &ModelConfig,
) -> Result<(Matrix<T>, ForwardCache<T>)> {
    batch.validate(cfg)?;
    let nt = batch.n_train();
    let nq = batch.n_query();
    let (mut h, padded_x) = encode_unchecked(batch, params, cfg)?;
    // Every row's allowed keys lie among the labeled rows, so keys and values are
    // computed for those rows only.
    let mask = build_attention_mask(nt, nq)?.leading_cols(nt);
    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let (next, cache) = layer_forward(h, lp, cfg, nt, &mask)?;
        layers.push(cache);
        h = next;
    }
    let final_hidden_q = h.slice_rows(nt, nt + nq);
    let eps = T::from_f64(LN_EPS);
    let (z, out_ln) =
        layer_norm_forward(&final_hidden_q, &params.out_ln_gain, &params.out_ln_bias, eps)?;
    let head_pre = linear(&z, &params.head_w1, &params.head_b1)?;
    let head_act = gelu(&head_pre)?;
    let logits = linear(&head_act, &params.head_w2, &params.head_b2)?;
    logits.ensure_finite("forward")?;
    Ok((
        logits,
        ForwardCache {
            n_train: nt,
            y_train: batch.y_train.clone(),
            padded_x,
            layers,
            final_hidden_q,
            out_ln,
            z,
            head_pre,
            head_act,
        },
    ))
}

fn layer_backward<T: Scalar>(
    c: &LayerCache<T>,
    lp: &LayerParams<T>,
    g: &mut LayerParams<T>,
    cfg: &ModelConfig,
    n_train: usize,
    dout: Matrix<T>,
) -> Result<Matrix<T>> {
    // out = mid + ffn(ln2(mid))
    let mut dmid = dout.clone();
    let (dff_act, dw2, db2) = linear_backward(&c.ff_act, &lp.w2, &dout)?;
    g.w2.add_assign(&dw2)?;
    g.b2.add_assign(&db2)?;
    let dff_pre = gelu_backward(&c.ff_pre, &dff_act)?;
    let (db_in, dw1, db1) = linear_backward(&c.b, &lp.w1, &dff_pre)?;
    g.w1.add_assign(&dw1)?;
    g.b1.add_assign(&db1)?;
    let (dmid_ln, dg2, dbias2) = layer_norm_backward(&c.ln2, &lp.ln2_gain, &db_in)?;
    g.ln2_gain.add_assign(&dg2)?;
    g.ln2_bias.add_assign(&dbias2)?;
    dmid.add_assign(&dmid_ln)?;

    // mid = input + attn(ln1(input)) * wo + bo
    let mut dinput = dmid.clone();
    let (dattn, dwo, dbo) = linear_backward(&c.attn, &lp.wo, &dmid)?;
    g.wo.add_assign(&dwo)?;
    g.bo.add_assign(&dbo)?;
    let dh = cfg.head_dim();
    let n = c.q.rows();
    let mut dq = Matrix::zeros(n, cfg.d_model);
    let mut dk = Matrix::zeros(n_train, cfg.d_model);
    let mut dv = Matrix::zeros(n_train, cfg.d_model);
    for (hd, hc) in c.heads.iter().enumerate() {
        let (lo, hi) = (hd * dh, (hd + 1) * dh);
        let (dqh, dkh, dvh) = masked_attention_backward(
            &c.q.slice_cols(lo, hi),
            &c.k.slice_cols(lo, hi),
            &c.v.slice_cols(lo, hi),
            hc,
            &dattn.slice_cols(lo, hi),
        )?;
        dq.set_cols(lo, &dqh);
        dk.set_cols(lo, &dkh);
        dv.set_cols(lo, &dvh);
    }
    let a_train = c.a.slice_rows(0, n_train);
    let (mut da, dwq, dbq) = linear_backward(&c.a, &lp.wq, &dq)?;
    let (da_k, dwk, dbk) = linear_backward(&a_train, &lp.wk, &dk)?;
    let (da_v, dwv, dbv) = linear_backward(&a_train, &lp.wv, &dv)?;
    g.wq.add_assign(&dwq)?;
    g.bq.add_assign(&dbq)?;
    g.wk.add_assign(&dwk)?;
    g.bk.add_assign(&dbk)?;
    g.wv.add_assign(&dwv)?;
    g.bv.add_assign(&dbv)?;
    for r in 0..n_train {
        let row = da.row_mut(r);
        for ((x, &y), &z) in row.iter_mut().zip(da_k.row(r)).zip(da_v.row(r)) {
            *x += y + z;
        }
    }
    let (dinput_ln, dg1, dbias1) = layer_norm_backward(&c.ln1, &lp.ln1_gain, &da)?;
    g.ln1_gain.add_assign(&dg1)?;
    g.ln1_bias.add_assign(&dbias1)?;
    dinput.add_assign(&dinput_ln)?;
    debug_assert_eq!(dinput.shape(), c.input.shape());
    Ok(dinput)
}

/// Backpropagates `dlogits` through the cached forward pass, returning
/// gradients for every parameter tensor.
pub fn backward<T: Scalar>(
    cache: &ForwardCache<T>,
    params: &PfnParams<T>,
    cfg: &ModelConfig,
    dlogits: &Matrix<T>,
) -> Result<PfnParams<T>> {
    let mut g = PfnParams::zeros(cfg);
    let (dhead_act, dw2, db2) = linear_backward(&cache.head_act, &params.head_w2, dlogits)?;
    g.head_w2 = dw2;
    g.head_b2 = db2;
    let dhead_pre = gelu_backward(&cache.head_pre, &dhead_act)?;
    let (dz, dw1, db1) = linear_backward(&cache.z, &params.head_w1, &dhead_pre)?;
    g.head_w1 = dw1;
    g.head_b1 = db1;
    let (dq_hidden, dgain, dbias) = layer_norm_backward(&cache.out_ln, &params.out_ln_gain, &dz)?;
    g.out_ln_gain = dgain;
    g.out_ln_bias = dbias;
    debug_assert_eq!(dq_hidden.shape(), cache.final_hidden_q.shape());

    let nt = cache.n_train;
    let n = nt + dq_hidden.rows();
    let mut dh = Matrix::zeros(n, cfg.d_model);
    for r in 0..dq_hidden.rows() {
        dh.row_mut(nt + r).copy_from_slice(dq_hidden.row(r));
    }
    for (li, lc) in cache.layers.iter().enumerate().rev() {
        dh = layer_backward(lc, &params.layers[li], &mut g.layers[li], cfg, nt, dh)?;
    }
    let (_, dfw, dfb) = linear_backward(&cache.padded_x, &params.feature_w, &dh)?;
    g.feature_w = dfw;
    g.feature_b = dfb;
    for (r, &c) in cache.y_train.iter().enumerate() {
        for (e, &v) in g.class_emb.row_mut(c).iter_mut().zip(dh.row(r)) {
            *e += v;
        }
    }
    g.query_emb = column_sums(&dh.slice_rows(nt, n));
    Ok(g)
}

/// Logits for a raw (unnormalized) batch.
pub fn forward<T: Scalar>(
    batch: &ContextBatch<T>,
    params: &PfnParams<T>,
    cfg: &ModelConfig,
) -> Result<Matrix<T>> {
    batch.validate(cfg)?;
    Ok(forward_cached(&batch.normalized(cfg), params, cfg)?.0)
}
