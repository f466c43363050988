//! Prior-data fitted network (PFN) for in-context tabular classification.
//!
//! A small transformer is meta-trained once on a stream of synthetic labeled
//! tasks. At inference it receives labeled context rows together with
//! unlabeled query rows and classifies the queries in a single forward pass,
//! without any weight update.

pub mod data;
pub mod error;
pub mod model;
pub mod numeric;
pub mod prior;
pub mod train;

pub use error::{Error, Result};
