use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::numeric::{Matrix, Scalar};

/// Weights of one pre-norm transformer block.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T: Scalar> {
    pub ln1_gain: Matrix<T>,
    pub ln1_bias: Matrix<T>,
    pub wq: Matrix<T>,
    pub bq: Matrix<T>,
    pub wk: Matrix<T>,
    pub bk: Matrix<T>,
    pub wv: Matrix<T>,
    pub bv: Matrix<T>,
    pub wo: Matrix<T>,
    pub bo: Matrix<T>,
    pub ln2_gain: Matrix<T>,
    pub ln2_bias: Matrix<T>,
    pub w1: Matrix<T>,
    pub b1: Matrix<T>,
    pub w2: Matrix<T>,
    pub b2: Matrix<T>,
}

/// All trainable tensors of the PFN.
#[derive(Clone, Debug, PartialEq)]
pub struct PfnParams<T: Scalar> {
    pub feature_w: Matrix<T>,
    pub feature_b: Matrix<T>,
    pub class_emb: Matrix<T>,
    pub query_emb: Matrix<T>,
    pub layers: Vec<LayerParams<T>>,
    pub out_ln_gain: Matrix<T>,
    pub out_ln_bias: Matrix<T>,
    pub head_w1: Matrix<T>,
    pub head_b1: Matrix<T>,
    pub head_w2: Matrix<T>,
    pub head_b2: Matrix<T>,
}

macro_rules! layer_fields {
    ($m:ident) => {
        $m!(ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo, ln2_gain, ln2_bias, w1, b1, w2, b2)
    };
}

impl<T: Scalar> LayerParams<T> {
    fn zeros(cfg: &ModelConfig) -> Self {
        let (d, f) = (cfg.d_model, cfg.d_ff);
        LayerParams {
            ln1_gain: Matrix::zeros(1, d),
            ln1_bias: Matrix::zeros(1, d),
            wq: Matrix::zeros(d, d),
            bq: Matrix::zeros(1, d),
            wk: Matrix::zeros(d, d),
            bk: Matrix::zeros(1, d),
            wv: Matrix::zeros(d, d),
            bv: Matrix::zeros(1, d),
            wo: Matrix::zeros(d, d),
            bo: Matrix::zeros(1, d),
            ln2_gain: Matrix::zeros(1, d),
            ln2_bias: Matrix::zeros(1, d),
            w1: Matrix::zeros(d, f),
            b1: Matrix::zeros(1, f),
            w2: Matrix::zeros(f, d),
            b2: Matrix::zeros(1, d),
        }
    }

    fn push_named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix<T>)>) {
        macro_rules! push {
            ($($f:ident),*) => {
                $(out.push((format!("{prefix}.{}", stringify!($f)), &self.$f));)*
            };
        }
        layer_fields!(push);
    }

    fn push_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Matrix<T>>) {
        macro_rules! push {
            ($($f:ident),*) => {
                $(out.push(&mut self.$f);)*
            };
        }
        layer_fields!(push);
    }
}

impl<T: Scalar> PfnParams<T> {
    /// All-zero tensors with the shapes implied by `cfg`; used for gradient buffers.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        PfnParams {
            feature_w: Matrix::zeros(cfg.max_features, d),
            feature_b: Matrix::zeros(1, d),
            class_emb: Matrix::zeros(cfg.max_classes, d),
            query_emb: Matrix::zeros(1, d),
            layers: (0..cfg.n_layers).map(|_| LayerParams::zeros(cfg)).collect(),
            out_ln_gain: Matrix::zeros(1, d),
            out_ln_bias: Matrix::zeros(1, d),
            head_w1: Matrix::zeros(d, d),
            head_b1: Matrix::zeros(1, d),
            head_w2: Matrix::zeros(d, cfg.max_classes),
            head_b2: Matrix::zeros(1, cfg.max_classes),
        }
    }

    /// Seeded initialization. Projections are `N(0, 1/fan_in)`, residual output
    /// projections are further shrunk by `1/sqrt(2 n_layers)`, layer-norm gains
    /// start at one, and the final head layer starts at zero so the initial
    /// prediction is uniform.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(cfg);
        let mut fill = |m: &mut Matrix<T>, std: f64| {
            let dist = Normal::new(0.0, std).expect("positive std");
            for v in m.as_mut_slice() {
                *v = T::from_f64(dist.sample(&mut rng));
            }
        };
        let d = cfg.d_model as f64;
        let resid = 1.0 / (2.0 * cfg.n_layers as f64).sqrt();
        fill(&mut p.feature_w, 1.0 / (cfg.max_features as f64).sqrt());
        fill(&mut p.class_emb, 1.0);
        fill(&mut p.query_emb, 1.0);
        for layer in &mut p.layers {
            layer.ln1_gain.fill(T::ONE);
            layer.ln2_gain.fill(T::ONE);
            fill(&mut layer.wq, 1.0 / d.sqrt());
            fill(&mut layer.wk, 1.0 / d.sqrt());
            fill(&mut layer.wv, 1.0 / d.sqrt());
            fill(&mut layer.wo, resid / d.sqrt());
            fill(&mut layer.w1, 1.0 / d.sqrt());
            fill(&mut layer.w2, resid / (cfg.d_ff as f64).sqrt());
        }
        p.out_ln_gain.fill(T::ONE);
        fill(&mut p.head_w1, 1.0 / d.sqrt());
        p
    }

    /// Tensors in canonical order with stable names.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out = vec![
            ("feature_w".to_string(), &self.feature_w),
            ("feature_b".to_string(), &self.feature_b),
            ("class_emb".to_string(), &self.class_emb),
            ("query_emb".to_string(), &self.query_emb),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            layer.push_named(&format!("layers.{i}"), &mut out);
        }
        out.extend([
            ("out_ln_gain".to_string(), &self.out_ln_gain),
            ("out_ln_bias".to_string(), &self.out_ln_bias),
            ("head_w1".to_string(), &self.head_w1),
            ("head_b1".to_string(), &self.head_b1),
            ("head_w2".to_string(), &self.head_w2),
            ("head_b2".to_string(), &self.head_b2),
        ]);
        out
    }

    /// Mutable tensors, same order as [`PfnParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = vec![
            &mut self.feature_w,
            &mut self.feature_b,
            &mut self.class_emb,
            &mut self.query_emb,
        ];
        for layer in &mut self.layers {
            layer.push_mut(&mut out);
        }
        out.extend([
            &mut self.out_ln_gain,
            &mut self.out_ln_bias,
            &mut self.head_w1,
            &mut self.head_b1,
            &mut self.head_w2,
            &mut self.head_b2,
        ]);
        out
    }

    pub fn tensors(&self) -> Vec<&Matrix<T>> {
        self.named_tensors().into_iter().map(|(_, m)| m).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }

    /// Concatenation of every tensor, canonical order.
    pub fn flatten(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.num_scalars());
        for m in self.tensors() {
            v.extend_from_slice(m.as_slice());
        }
        v
    }

    /// Inverse of [`PfnParams::flatten`].
    pub fn assign_flat(&mut self, flat: &[T]) {
        let mut off = 0;
        for m in self.tensors_mut() {
            let n = m.len();
            m.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
    }

    /// Elementwise `self += other`.
    pub fn accumulate(&mut self, other: &PfnParams<T>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for m in self.tensors_mut() {
            m.scale(s);
        }
    }

    pub fn cast<U: Scalar>(&self) -> PfnParams<U> {
        let mut out = PfnParams::<U> {
            feature_w: self.feature_w.cast(),
            feature_b: self.feature_b.cast(),
            class_emb: self.class_emb.cast(),
            query_emb: self.query_emb.cast(),
            layers: Vec::new(),
            out_ln_gain: self.out_ln_gain.cast(),
            out_ln_bias: self.out_ln_bias.cast(),
            head_w1: self.head_w1.cast(),
            head_b1: self.head_b1.cast(),
            head_w2: self.head_w2.cast(),
            head_b2: self.head_b2.cast(),
        };
        for l in &self.layers {
            let nl = LayerParams::<U> {
                ln1_gain: l.ln1_gain.cast(),
                ln1_bias: l.ln1_bias.cast(),
                wq: l.wq.cast(),
                bq: l.bq.cast(),
                wk: l.wk.cast(),
                bk: l.bk.cast(),
                wv: l.wv.cast(),
                bv: l.bv.cast(),
                wo: l.wo.cast(),
                bo: l.bo.cast(),
                ln2_gain: l.ln2_gain.cast(),
                ln2_bias: l.ln2_bias.cast(),
                w1: l.w1.cast(),
                b1: l.b1.cast(),
                w2: l.w2.cast(),
                b2: l.b2.cast(),
            };
            out.layers.push(nl);
        }
        out
    }

    /// Checks every tensor against the shapes implied by `cfg`.
    pub fn matches_config(&self, cfg: &ModelConfig) -> bool {
        let reference = PfnParams::<T>::zeros(cfg);
        let a = self.named_tensors();
        let b = reference.named_tensors();
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|((na, ma), (nb, mb))| na == nb && ma.shape() == mb.shape())
    }
}
