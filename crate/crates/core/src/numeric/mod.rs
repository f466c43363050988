//! Dense matrix kernels with hand-derived backward passes.

mod adam;
mod gradcheck;
mod matrix;
mod ops;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_grad, relative_error};
pub use matrix::{GradPair, Matrix, Scalar};
pub use ops::*;
