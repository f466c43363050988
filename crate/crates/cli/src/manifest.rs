//! `manifest.toml`: the resolved configuration of a run plus a `[manifest]`
//! table naming the tool version, seeds and file checksums. Passing the file
//! back with `--config` repeats the run.

use std::path::{Path, PathBuf};

use pfn_core::model::checksum;
use serde::Serialize;
use toml::Value;

use crate::config::{RunConfig, MANIFEST_KEY};
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TOOL_NAME: &str = "pfn";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileEntry {
    pub path: String,
    /// Checksum of the file contents as 16 hex digits.
    pub checksum: String,
}

impl FileEntry {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(FileEntry {
            path: path.display().to_string(),
            checksum: format!("{:016x}", checksum(&bytes)),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Seeds as hex strings; TOML integers cannot hold every u64.
    pub seeds: toml::Table,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            tool: TOOL_NAME.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            ..Default::default()
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.into(), Value::String(format!("{value:#018x}")));
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileEntry::of(path)?);
        Ok(())
    }

    pub fn outputs<'a>(&mut self, paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<()> {
        for p in paths {
            self.outputs.push(FileEntry::of(p)?);
        }
        Ok(())
    }

    /// Writes `<dir>/manifest.toml` and returns its path.
    pub fn write(&self, cfg: &RunConfig, dir: &Path) -> Result<PathBuf> {
        let mut t = cfg.to_table();
        t.insert(MANIFEST_KEY.into(), Value::try_from(self).expect("manifest serializes"));
        let text = toml::to_string(&t).map_err(|e| CliError::Runtime(e.to_string()))?;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
