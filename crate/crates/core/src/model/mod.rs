//! The encoder-only PFN transformer.

mod checkpoint;
mod config;
mod forward;
mod params;

pub use checkpoint::{
    argmax_rows, checksum, Checkpoint, TrainingFingerprint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::ModelConfig;
pub use forward::{
    backward, build_attention_mask, encode_tokens, forward, forward_cached, ContextBatch,
    ForwardCache,
};
pub use params::{LayerParams, PfnParams};
