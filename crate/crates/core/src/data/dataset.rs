//! Labeled tabular datasets and their CSV + sidecar file format.
//!
//! A dataset is stored as a CSV file with a header row, one column per
//! feature and a final integer `label` column, plus a TOML sidecar:
//!
//! ```toml
//! name = "rings2d"
//! n_classes = 2
//! n_features = 2
//! discrete_columns = []          # zero-based feature indices
//! imbalance_guard = false
//! guard_class = 1                # only read when imbalance_guard = true
//! guard_min_count = 2
//! guard_window = 100
//! test_csv = "rings2d_test.csv"  # optional, relative to the sidecar
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub const MAX_DATASET_CLASSES: usize = 10;
pub const LABEL_COLUMN: &str = "label";

/// Splits of an imbalanced dataset must contain at least `min_count` rows of
/// `class` among the first `window` training rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImbalanceGuard {
    pub class: usize,
    pub min_count: usize,
    pub window: usize,
}

impl Default for ImbalanceGuard {
    fn default() -> Self {
        ImbalanceGuard {
            class: 1,
            min_count: 2,
            window: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub x: Matrix<f64>,
    pub y: Vec<usize>,
    pub n_classes: usize,
    pub feature_names: Vec<String>,
    /// Per-feature flag; carried as metadata only.
    pub discrete: Vec<bool>,
    pub guard: Option<ImbalanceGuard>,
    /// Fixed test split, if the dataset comes with one.
    pub test: Option<Box<Dataset>>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        x: Matrix<f64>,
        y: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        let d = x.cols();
        let ds = Dataset {
            name: name.into(),
            feature_names: (0..d).map(|i| format!("x{i}")).collect(),
            discrete: vec![false; d],
            x,
            y,
            n_classes,
            guard: None,
            test: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_guard(mut self, guard: Option<ImbalanceGuard>) -> Self {
        self.guard = guard;
        self
    }

    pub fn with_test(mut self, test: Dataset) -> Result<Self> {
        if test.n_features() != self.n_features() || test.n_classes != self.n_classes {
            return Err(Error::Validation(format!(
                "{}: test split has {} features / {} classes, train {} / {}",
                self.name,
                test.n_features(),
                test.n_classes,
                self.n_features(),
                self.n_classes
            )));
        }
        self.test = Some(Box::new(test));
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let v = |m: String| Err(Error::Validation(format!("{}: {m}", self.name)));
        if self.x.cols() == 0 {
            return v("no feature columns".into());
        }
        if !(2..=MAX_DATASET_CLASSES).contains(&self.n_classes) {
            return v(format!(
                "{} classes outside [2, {MAX_DATASET_CLASSES}]",
                self.n_classes
            ));
        }
        if self.y.len() != self.x.rows() {
            return v(format!("{} labels for {} rows", self.y.len(), self.x.rows()));
        }
        if let Some((r, &c)) = self.y.iter().enumerate().find(|(_, &c)| c >= self.n_classes) {
            return v(format!("row {r}: label {c} outside [0, {})", self.n_classes));
        }
        if self.feature_names.len() != self.x.cols() || self.discrete.len() != self.x.cols() {
            return v("feature metadata does not match the column count".into());
        }
        for r in 0..self.x.rows() {
            if let Some(c) = self.x.row(r).iter().position(|v| !v.is_finite()) {
                return v(format!("non-finite value at row {r}, column {c}"));
            }
        }
        if let Some(g) = &self.guard {
            if g.class >= self.n_classes {
                return v(format!("guard class {} out of range", g.class));
            }
        }
        Ok(())
    }

    /// Rows at `indices`, in that order; keeps metadata, drops the test split.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.n_features();
        let mut x = Matrix::zeros(indices.len(), d);
        for (r, &i) in indices.iter().enumerate() {
            x.row_mut(r).copy_from_slice(self.x.row(i));
        }
        Dataset {
            name: self.name.clone(),
            x,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
            discrete: self.discrete.clone(),
            guard: self.guard,
            test: None,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        self.y.iter().for_each(|&k| c[k] += 1);
        c
    }
}

/// Sidecar metadata as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub name: String,
    pub n_classes: usize,
    pub n_features: usize,
    #[serde(default)]
    pub discrete_columns: Vec<usize>,
    #[serde(default)]
    pub imbalance_guard: bool,
    #[serde(default = "default_guard_class")]
    pub guard_class: usize,
    #[serde(default = "default_guard_min")]
    pub guard_min_count: usize,
    #[serde(default = "default_guard_window")]
    pub guard_window: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_csv: Option<String>,
}

fn default_guard_class() -> usize {
    ImbalanceGuard::default().class
}
fn default_guard_min() -> usize {
    ImbalanceGuard::default().min_count
}
fn default_guard_window() -> usize {
    ImbalanceGuard::default().window
}

impl DatasetMeta {
    pub fn from_dataset(ds: &Dataset, test_csv: Option<String>) -> Self {
        let g = ds.guard.unwrap_or_default();
        DatasetMeta {
            name: ds.name.clone(),
            n_classes: ds.n_classes,
            n_features: ds.n_features(),
            discrete_columns: (0..ds.n_features()).filter(|&i| ds.discrete[i]).collect(),
            imbalance_guard: ds.guard.is_some(),
            guard_class: g.class,
            guard_min_count: g.min_count,
            guard_window: g.window,
            test_csv,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0),
            detail: e.message().to_string(),
        })
    }

    fn guard(&self) -> Option<ImbalanceGuard> {
        self.imbalance_guard.then_some(ImbalanceGuard {
            class: self.guard_class,
            min_count: self.guard_min_count,
            window: self.guard_window,
        })
    }
}

/// Feature names, features and labels from a dataset CSV.
fn read_csv(path: &Path, n_features: usize, n_classes: usize) -> Result<(Vec<String>, Matrix<f64>, Vec<usize>)> {
    let parse = |line: usize, detail: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(std::io::BufReader::new(file));
    let header = rdr
        .headers()
        .map_err(|e| parse(1, e.to_string()))?
        .clone();
    if header.len() != n_features + 1 {
        return Err(parse(
            1,
            format!(
                "{} columns, metadata declares {n_features} features plus `{LABEL_COLUMN}`",
                header.len()
            ),
        ));
    }
    if &header[n_features] != LABEL_COLUMN {
        return Err(parse(
            1,
            format!("last column is {:?}, expected `{LABEL_COLUMN}`", &header[n_features]),
        ));
    }
    let names: Vec<String> = header.iter().take(n_features).map(str::to_string).collect();
    let mut data = Vec::new();
    let mut y = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != n_features + 1 {
            return Err(parse(line, format!("{} fields, expected {}", rec.len(), n_features + 1)));
        }
        for (c, field) in rec.iter().take(n_features).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse(line, format!("column {:?}: {field:?} is not a number", names[c])))?;
            if !v.is_finite() {
                return Err(parse(line, format!("column {:?}: non-finite value {field:?}", names[c])));
            }
            data.push(v);
        }
        let label: usize = rec[n_features]
            .parse()
            .map_err(|_| parse(line, format!("label {:?} is not a non-negative integer", &rec[n_features])))?;
        if label >= n_classes {
            return Err(Error::Validation(format!(
                "{}:{line}: label {label} outside [0, {n_classes})",
                path.display()
            )));
        }
        y.push(label);
    }
    let x = Matrix::from_vec(y.len(), n_features, data)?;
    Ok((names, x, y))
}

/// Loads a dataset CSV with its sidecar; a `test_csv` entry is resolved
/// relative to the sidecar's directory and attached as the fixed test split.
pub fn load_csv_dataset(path: &Path, meta_path: &Path) -> Result<Dataset> {
    let meta = DatasetMeta::load(meta_path)?;
    if let Some(&c) = meta.discrete_columns.iter().find(|&&c| c >= meta.n_features) {
        return Err(Error::Validation(format!(
            "{}: discrete column {c} beyond {} features",
            meta_path.display(),
            meta.n_features
        )));
    }
    let build = |csv_path: &Path, name: String| -> Result<Dataset> {
        let (names, x, y) = read_csv(csv_path, meta.n_features, meta.n_classes)?;
        let mut discrete = vec![false; meta.n_features];
        meta.discrete_columns.iter().for_each(|&c| discrete[c] = true);
        let ds = Dataset {
            name,
            x,
            y,
            n_classes: meta.n_classes,
            feature_names: names,
            discrete,
            guard: meta.guard(),
            test: None,
        };
        ds.validate()?;
        Ok(ds)
    };
    let mut ds = build(path, meta.name.clone())?;
    if let Some(test) = &meta.test_csv {
        let dir = meta_path.parent().unwrap_or(Path::new("."));
        let mut t = build(&dir.join(test), format!("{}_test", meta.name))?;
        t.guard = None;
        ds = ds.with_test(t)?;
    }
    Ok(ds)
}

fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = ds.feature_names.clone();
    header.push(LABEL_COLUMN.into());
    w.write_record(&header).map_err(io)?;
    for r in 0..ds.n_rows() {
        let mut fields: Vec<String> = ds.x.row(r).iter().map(|v| v.to_string()).collect();
        fields.push(ds.y[r].to_string());
        w.write_record(&fields).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Paths written by [`save_dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFiles {
    pub csv: PathBuf,
    pub meta: PathBuf,
    pub test_csv: Option<PathBuf>,
}

/// Writes `<dir>/<name>.csv`, `<dir>/<name>.toml` and, with a fixed test
/// split, `<dir>/<name>_test.csv`. Values are written in Rust's shortest
/// round-trip decimal form, so loading reproduces them bit for bit.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<DatasetFiles> {
    ds.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{}.csv", ds.name));
    let meta_path = dir.join(format!("{}.toml", ds.name));
    write_csv(ds, &csv)?;
    let test_csv = match &ds.test {
        Some(t) => {
            let p = dir.join(format!("{}_test.csv", ds.name));
            write_csv(t, &p)?;
            Some(p)
        }
        None => None,
    };
    let meta = DatasetMeta::from_dataset(
        ds,
        test_csv
            .as_ref()
            .map(|p| p.file_name().expect("file").to_string_lossy().into_owned()),
    );
    let text = toml::to_string(&meta).map_err(|e| Error::Validation(e.to_string()))?;
    std::fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    Ok(DatasetFiles {
        csv,
        meta: meta_path,
        test_csv,
    })
}
