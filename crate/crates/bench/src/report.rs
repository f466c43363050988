//! Report CSV files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::runner::BenchmarkRecord;

/// Report columns, in file order.
pub const REPORT_COLUMNS: [&str; 17] = [
    "dataset",
    "method",
    "split",
    "fraction",
    "n_train",
    "n_test",
    "status",
    "f1",
    "macro_f1",
    "accuracy",
    "tune_seconds",
    "train_seconds",
    "inference_seconds",
    "total_seconds",
    "seed",
    "tuned_params",
    "reason",
];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            detail: format!("{other:?}"),
        },
    }
}

/// Writes one row per record under a header of [`REPORT_COLUMNS`].
pub fn write_report<W: std::io::Write>(records: &[BenchmarkRecord], out: W, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    if records.is_empty() {
        w.write_record(REPORT_COLUMNS).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_report(records: &[BenchmarkRecord], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_report(records, std::io::BufWriter::new(f), path)
}

pub fn load_report(path: &Path) -> Result<Vec<BenchmarkRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(REPORT_COLUMNS) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            detail: format!("unexpected header {header:?}"),
        });
    }
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}
