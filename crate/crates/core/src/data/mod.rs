//! Datasets, low-discrepancy samplers, built-in toy problems and checkpoint
//! files.

mod dataset;
mod problems;
mod sampler;

use std::io::Write;
use std::path::Path;

pub use dataset::{
    load_csv_dataset, save_dataset, Dataset, DatasetFiles, DatasetMeta, ImbalanceGuard,
    LABEL_COLUMN, MAX_DATASET_CLASSES,
};
pub use problems::{
    box6d, builtin_problem, builtin_problems, generate_problem, needle4d, rings2d, ClassRule,
    GeneratedProblem, ProblemFn, ProblemSpec,
};
pub use sampler::{
    halton_point, sobol_point, SamplerState, SequenceKind, HALTON_PRIMES, SOBOL_MAX_DIMS,
};

use crate::error::{Error, Result};
use crate::model::Checkpoint;

/// Writes the checkpoint through a temporary sibling file and renames it into
/// place, so a failed write never leaves a partial file at `path`.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&ckpt.to_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Reads and verifies a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}
