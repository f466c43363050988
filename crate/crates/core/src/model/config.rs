use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters of the PFN transformer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Feature capacity; narrower inputs are zero-padded.
    pub max_features: usize,
    /// Class capacity; the model emits this many logits per query.
    pub max_classes: usize,
    pub max_train: usize,
    pub max_query: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 128,
            n_layers: 4,
            n_heads: 4,
            d_ff: 256,
            max_features: 20,
            max_classes: 4,
            max_train: 512,
            max_query: 512,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_layers == 0 || self.d_ff == 0 {
            return bad("n_layers and d_ff must be positive".into());
        }
        if self.max_features == 0 {
            return bad("max_features must be at least 1".into());
        }
        if !(2..=10).contains(&self.max_classes) {
            return bad(format!(
                "max_classes {} outside [2, 10]",
                self.max_classes
            ));
        }
        if self.max_train == 0 || self.max_query == 0 {
            return bad("context capacity must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn max_context(&self) -> usize {
        self.max_train + self.max_query
    }
}
