//! Run configuration: a TOML file merged over built-in defaults, then
//! command-line overrides.
//!
//! Every section is optional. Keys given in the file replace the defaults
//! one by one, so a file may set a single field of a section. `prior_preset`
//! picks the defaults of the `[prior]` section before the merge.

use std::path::{Path, PathBuf};

use pfn_core::data::builtin_problems;
use pfn_core::model::ModelConfig;
use pfn_core::prior::PriorConfig;
use pfn_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, Result};

/// Key of the table a manifest adds to the resolved configuration; ignored
/// when the manifest is read back as a config file.
pub const MANIFEST_KEY: &str = "manifest";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PriorPreset {
    /// Random MLP generators of depth 1 to 3.
    #[default]
    Mlp,
    /// Noise-free binary tasks with a linear boundary.
    Linear,
}

impl PriorPreset {
    pub fn config(self) -> PriorConfig {
        match self {
            PriorPreset::Mlp => PriorConfig::default(),
            PriorPreset::Linear => PriorConfig::linear(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataConfig {
    pub problems: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        GenDataConfig {
            problems: builtin_problems().iter().map(|p| p.name.to_string()).collect(),
            n_train: 400,
            n_test: 200,
        }
    }
}

/// Where a benchmark dataset comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum DatasetSource {
    /// A built-in toy problem, generated with the run seed. Sizes default to
    /// those of `[gen_data]`.
    Builtin {
        builtin: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_train: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_test: Option<usize>,
    },
    /// A dataset CSV and its sidecar.
    Files { csv: PathBuf, meta: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// Required when `methods` contains `PFN`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub methods: Vec<String>,
    pub n_reps: usize,
    pub test_fraction: f64,
    pub tune_folds: usize,
    pub tune_max_configs: usize,
    /// Empty means every built-in toy problem.
    pub datasets: Vec<DatasetSource>,
}

pub const METHOD_NAMES: [&str; 3] = ["PFN", "KNN", "DT"];

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            checkpoint: None,
            methods: METHOD_NAMES.iter().map(|s| s.to_string()).collect(),
            n_reps: 20,
            test_fraction: 0.2,
            tune_folds: 5,
            tune_max_configs: 100,
            datasets: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub alpha: f64,
    pub efficiency_threshold: f64,
    /// Integrate the time curve over log10 seconds.
    pub log_time: bool,
    /// Metric ranked by `stats`: f1, macro_f1, accuracy or total_seconds.
    pub metric: String,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            alpha: 0.05,
            efficiency_threshold: 0.9,
            log_time: false,
            metric: "f1".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; replaces `train.seed` and seeds data generation and splits.
    pub seed: u64,
    pub workers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub prior_preset: PriorPreset,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub prior: PriorConfig,
    pub gen_data: GenDataConfig,
    pub bench: BenchSection,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: 1,
            out: None,
            prior_preset: PriorPreset::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            prior: PriorConfig::default(),
            gen_data: GenDataConfig::default(),
            bench: BenchSection::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

/// Recursively overlays `over` on `base`; tables merge, everything else is
/// replaced.
fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn config_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

impl RunConfig {
    /// Parses config text. `preset` overrides the file's `prior_preset`.
    pub fn from_toml(text: &str, source: &Path, preset: Option<PriorPreset>) -> Result<Self> {
        let mut file: Table = toml::from_str(text).map_err(|e| config_error(source, e))?;
        file.remove(MANIFEST_KEY);
        if let Some(p) = preset {
            file.insert("prior_preset".into(), Value::try_from(p).expect("plain enum"));
        }
        let preset: PriorPreset = match file.get("prior_preset") {
            Some(v) => v.clone().try_into().map_err(|e| config_error(source, e))?,
            None => PriorPreset::default(),
        };
        let base_cfg = RunConfig {
            prior_preset: preset,
            prior: preset.config(),
            ..RunConfig::default()
        };
        let mut base = Table::try_from(&base_cfg).expect("defaults serialize");
        merge(&mut base, file);
        let mut cfg: RunConfig = base.try_into().map_err(|e| config_error(source, e))?;
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    /// Reads `path`, or starts from the defaults without one.
    pub fn load(path: Option<&Path>, preset: Option<PriorPreset>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| config_error(p, e))?;
                Self::from_toml(&text, p, preset)
            }
            None => Self::from_toml("", Path::new("<defaults>"), preset),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        let a = &self.analysis;
        if !(a.alpha > 0.0 && a.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", a.alpha));
        }
        if !(a.efficiency_threshold > 0.0 && a.efficiency_threshold <= 1.0) {
            return bad(format!("efficiency threshold {} outside (0, 1]", a.efficiency_threshold));
        }
        if pfn_bench::analysis::Metric::parse(&a.metric).is_none() {
            return bad(format!("unknown metric {:?}", a.metric));
        }
        let b = &self.bench;
        if let Some(m) = b.methods.iter().find(|m| !METHOD_NAMES.contains(&m.as_str())) {
            return bad(format!("unknown method {m:?}; expected one of {METHOD_NAMES:?}"));
        }
        if b.methods.is_empty() || b.n_reps == 0 || b.tune_folds < 2 || b.tune_max_configs == 0 {
            return bad("bench needs methods, at least one split, two folds and one config".into());
        }
        if !(b.test_fraction > 0.0 && b.test_fraction < 1.0) {
            return bad(format!("test fraction {} outside (0, 1)", b.test_fraction));
        }
        let known = |n: &str| builtin_problems().iter().any(|p| p.name == n);
        let builtins = self.gen_data.problems.iter().chain(b.datasets.iter().filter_map(|d| match d {
            DatasetSource::Builtin { builtin, .. } => Some(builtin),
            DatasetSource::Files { .. } => None,
        }));
        for name in builtins {
            if !known(name) {
                return bad(format!("unknown built-in problem {name:?}"));
            }
        }
        Ok(())
    }

    /// Full configuration as TOML.
    pub fn to_table(&self) -> Table {
        Table::try_from(self).expect("config serializes")
    }
}
