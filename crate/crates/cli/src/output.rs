//! Result directories are assembled in a staging directory next to the
//! target and renamed into place only when the run succeeds.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use tempfile::TempDir;

use crate::config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Staged {
    target: PathBuf,
    staging: TempDir,
    force: bool,
}

impl Staged {
    pub fn begin(target: &Path, force: bool) -> Result<Self> {
        if target.exists() && !force {
            bail!(
                "output directory {} already exists (use --force to replace it)",
                target.display()
            );
        }
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&parent)
            .with_context(|| format!("creating {}", parent.display()))?;
        let staging = tempfile::Builder::new()
            .prefix(".chilasso-staging-")
            .tempdir_in(&parent)
            .with_context(|| format!("creating staging directory in {}", parent.display()))?;
        Ok(Self {
            target: target.to_path_buf(),
            staging,
            force,
        })
    }

    pub fn path(&self) -> &Path {
        self.staging.path()
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.staging.path().join(name)
    }

    pub fn subdir(&self, name: &str) -> Result<PathBuf> {
        let p = self.file(name);
        std::fs::create_dir_all(&p).with_context(|| format!("creating {}", p.display()))?;
        Ok(p)
    }

    /// Writes `name.csv` and its `name.json` sidecar.
    pub fn write_table(&self, name: &str, table: &Table, meta: &Metadata<'_>) -> Result<()> {
        table.write(&self.file(&format!("{name}.csv")))?;
        meta.write(&self.file(&format!("{name}.json")), name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.file(name);
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn commit(self) -> Result<PathBuf> {
        if self.target.exists() {
            if !self.force {
                bail!(
                    "output directory {} appeared during the run",
                    self.target.display()
                );
            }
            std::fs::remove_dir_all(&self.target)
                .with_context(|| format!("removing {}", self.target.display()))?;
        }
        let staged = self.staging.keep();
        std::fs::rename(&staged, &self.target)
            .with_context(|| format!("moving {} to {}", staged.display(), self.target.display()))?;
        Ok(self.target)
    }
}

/// A CSV table with a mandatory header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w =
            csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct Metadata<'a> {
    pub mode: &'static str,
    pub seed: u64,
    pub version: &'static str,
    pub config: &'a ExperimentConfig,
    pub notes: serde_json::Value,
}

impl<'a> Metadata<'a> {
    pub fn new(config: &'a ExperimentConfig, notes: serde_json::Value) -> Self {
        Self {
            mode: config.mode.name(),
            seed: config.seed,
            version: VERSION,
            config,
            notes,
        }
    }

    fn write(&self, path: &Path, table: &str) -> Result<()> {
        let mut value = serde_json::to_value(self)?;
        value["table"] = serde_json::Value::from(format!("{table}.csv"));
        let text = serde_json::to_string_pretty(&value)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

pub fn fmt(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v}")
    }
}
