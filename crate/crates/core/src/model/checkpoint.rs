//! Frozen model weights and their binary encoding.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! "PFN1"                              magic, 4 bytes
//! u32 format version (= 1)
//! u32 x 8   d_model n_layers n_heads d_ff max_features max_classes max_train max_query
//! u64 x 3   prior fingerprint, seed, training steps
//! u32       tensor count
//! per tensor:
//!   u32 name length, UTF-8 name
//!   u32 rows, u32 cols
//!   rows*cols f32 values, row-major
//! u64       FNV-1a 64 checksum of every preceding byte
//! ```

use std::hash::Hasher;

use fnv::FnvHasher;

use super::config::ModelConfig;
use super::forward::{forward, ContextBatch};
use super::params::PfnParams;
use crate::error::{Error, Result};
use crate::numeric::{softmax_rows, Matrix};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PFN1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Provenance of a checkpoint's weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrainingFingerprint {
    pub prior_hash: u64,
    pub seed: u64,
    pub steps: u64,
}

/// Model configuration plus weights; immutable once loaded.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: PfnParams<f32>,
    pub fingerprint: TrainingFingerprint,
}

/// FNV-1a 64 over `bytes`.
pub fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

impl Checkpoint {
    pub fn new(
        config: ModelConfig,
        params: PfnParams<f32>,
        fingerprint: TrainingFingerprint,
    ) -> Result<Self> {
        config.validate()?;
        if !params.matches_config(&config) {
            return Err(Error::Validation(
                "parameter shapes do not match the model configuration".into(),
            ));
        }
        Ok(Checkpoint {
            config,
            params,
            fingerprint,
        })
    }

    /// Freshly initialized weights.
    pub fn initialize(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = PfnParams::init(&config, seed);
        Self::new(
            config,
            params,
            TrainingFingerprint {
                prior_hash: 0,
                seed,
                steps: 0,
            },
        )
    }

    /// Raw `n_query x max_classes` logits.
    pub fn forward(&self, batch: &ContextBatch<f32>) -> Result<Matrix<f32>> {
        forward(batch, &self.params, &self.config)
    }

    /// Class probabilities over the first `n_active_classes` logits (`max label + 1`).
    pub fn predict_proba(&self, batch: &ContextBatch<f32>) -> Result<Matrix<f32>> {
        self.predict_proba_with_classes(batch, batch.n_active_classes())
    }

    /// Class probabilities over the first `n_classes` logits.
    pub fn predict_proba_with_classes(
        &self,
        batch: &ContextBatch<f32>,
        n_classes: usize,
    ) -> Result<Matrix<f32>> {
        if n_classes == 0 || n_classes > self.config.max_classes {
            return Err(Error::Class {
                class: n_classes.saturating_sub(1),
                max_classes: self.config.max_classes,
            });
        }
        let logits = self.forward(batch)?;
        softmax_rows(&logits.slice_cols(0, n_classes))
    }

    /// Argmax of [`Checkpoint::predict_proba`]; ties go to the lowest class.
    pub fn predict(&self, batch: &ContextBatch<f32>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict_proba(batch)?))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let c = &self.config;
        for v in [
            c.d_model,
            c.n_layers,
            c.n_heads,
            c.d_ff,
            c.max_features,
            c.max_classes,
            c.max_train,
            c.max_query,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        let f = &self.fingerprint;
        for v in [f.prior_hash, f.seed, f.steps] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let tensors = self.params.named_tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, m) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = checksum(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    /// Decodes and validates a checkpoint. `source` names the origin in errors.
    pub fn from_bytes(bytes: &[u8], source: &std::path::Path) -> Result<Self> {
        let corrupt = |detail: String| Error::Corrupt {
            path: source.to_path_buf(),
            detail,
        };
        if bytes.len() < 4 + 4 + 8 {
            return Err(corrupt(format!("file too short ({} bytes)", bytes.len())));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if &body[..4] != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic".into()));
        }
        if checksum(body) != stored {
            return Err(corrupt("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32().ok_or_else(|| corrupt("truncated header".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let mut dims = [0usize; 8];
        for d in &mut dims {
            *d = r.u32().ok_or_else(|| corrupt("truncated header".into()))? as usize;
        }
        let config = ModelConfig {
            d_model: dims[0],
            n_layers: dims[1],
            n_heads: dims[2],
            d_ff: dims[3],
            max_features: dims[4],
            max_classes: dims[5],
            max_train: dims[6],
            max_query: dims[7],
        };
        config
            .validate()
            .map_err(|e| corrupt(format!("invalid config: {e}")))?;
        let mut fp = [0u64; 3];
        for v in &mut fp {
            *v = r.u64().ok_or_else(|| corrupt("truncated header".into()))?;
        }
        let count = r.u32().ok_or_else(|| corrupt("truncated header".into()))? as usize;
        let mut params = PfnParams::<f32>::zeros(&config);
        let expected: Vec<(String, (usize, usize))> = params
            .named_tensors()
            .into_iter()
            .map(|(n, m)| (n, m.shape()))
            .collect();
        if count != expected.len() {
            return Err(corrupt(format!(
                "{count} tensors, expected {}",
                expected.len()
            )));
        }
        for ((name, shape), dst) in expected.iter().zip(params.tensors_mut()) {
            let trunc = || corrupt(format!("truncated tensor {name}"));
            let len = r.u32().ok_or_else(trunc)? as usize;
            let got = r.bytes(len).ok_or_else(trunc)?;
            if got != name.as_bytes() {
                return Err(corrupt(format!(
                    "tensor name {:?}, expected {name}",
                    String::from_utf8_lossy(got)
                )));
            }
            let rows = r.u32().ok_or_else(trunc)? as usize;
            let cols = r.u32().ok_or_else(trunc)? as usize;
            if (rows, cols) != *shape {
                return Err(corrupt(format!(
                    "tensor {name} has shape {rows}x{cols}, expected {}x{}",
                    shape.0, shape.1
                )));
            }
            for v in dst.as_mut_slice() {
                *v = r.f32().ok_or_else(trunc)?;
                if !v.is_finite() {
                    return Err(corrupt(format!("non-finite weight in {name}")));
                }
            }
        }
        if r.pos != body.len() {
            return Err(corrupt(format!(
                "{} trailing bytes",
                body.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            config,
            params,
            fingerprint: TrainingFingerprint {
                prior_hash: fp[0],
                seed: fp[1],
                steps: fp[2],
            },
        })
    }

    /// Checksum of the serialized form; equal checksums mean identical checkpoints.
    pub fn content_checksum(&self) -> u64 {
        checksum(&self.to_bytes())
    }
}

/// Row-wise argmax with ties resolved to the lowest index.
pub fn argmax_rows(probs: &Matrix<f32>) -> Vec<usize> {
    (0..probs.rows())
        .map(|r| {
            let row = probs.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.bytes(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.bytes(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f32(&mut self) -> Option<f32> {
        self.bytes(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn small() -> ModelConfig {
        ModelConfig {
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 8,
            max_features: 3,
            max_classes: 3,
            max_train: 8,
            max_query: 8,
        }
    }

    #[test]
    fn bytes_round_trip_bit_exactly() {
        let ck = Checkpoint::initialize(small(), 3).unwrap();
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..4], b"PFN1");
        let back = Checkpoint::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_and_bit_flips_are_corruption() {
        let bytes = Checkpoint::initialize(small(), 3).unwrap().to_bytes();
        for cut in [0, 3, 20, bytes.len() / 2, bytes.len() - 1] {
            let r = Checkpoint::from_bytes(&bytes[..cut], Path::new("mem"));
            assert!(matches!(r, Err(Error::Corrupt { .. })), "cut {cut}");
        }
        let mut flipped = bytes.clone();
        flipped[60] ^= 0x10;
        assert!(matches!(
            Checkpoint::from_bytes(&flipped, Path::new("mem")),
            Err(Error::Corrupt { .. })
        ));
    }

    #[test]
    fn argmax_ties_go_low() {
        let p = Matrix::from_rows(&[vec![0.2, 0.8], vec![0.5, 0.5], vec![0.3, 0.3, 0.4][..2].to_vec()])
            .unwrap();
        assert_eq!(argmax_rows(&p), vec![1, 0, 0]);
    }
}
