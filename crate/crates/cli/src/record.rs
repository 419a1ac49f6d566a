//! Output directories, CSV tables and the JSON run summary.

use crate::error::CliError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// One CSV field.
#[derive(Clone, Debug)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // 17 significant digits: the value round-trips exactly.
            Self::Float(v) if v.is_finite() => format!("{v:.16e}"),
            Self::Float(v) => format!("{v}"),
            Self::Int(v) => v.to_string(),
            Self::Text(s) => s.clone(),
            Self::Bool(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Self::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Self::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Self::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Self::Bool(v)
    }
}

/// Summary written next to the tables of every run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultRecord {
    pub command: String,
    pub library_version: String,
    pub config_path: String,
    /// SHA-256 of the config file as a git blob.
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub wall_time_seconds: f64,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
    pub outputs: serde_json::Value,
}

pub const SUMMARY_FILE: &str = "summary.json";

/// The directory a command writes into.
#[derive(Debug)]
pub struct OutputDir {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

impl OutputDir {
    /// Creates `root/command`. A directory holding a summary from another
    /// config or seed is refused unless `force` is set.
    pub fn prepare(root: &Path, command: &str, hash: &str, seed: u64, force: bool) -> Result<Self, CliError> {
        let dir = root.join(command);
        let summary = dir.join(SUMMARY_FILE);
        if summary.is_file() && !force {
            let text = std::fs::read_to_string(&summary)?;
            let previous: ResultRecord = serde_json::from_str(&text)
                .map_err(|e| CliError::Replay(format!("{} is not a run summary ({e}); use --force", summary.display())))?;
            if previous.config_hash != hash || previous.seed != seed {
                return Err(CliError::Replay(format!(
                    "{} holds results of config {} with seed {}, this run is config {hash} with seed {seed}; use --force to overwrite",
                    dir.display(),
                    previous.config_hash,
                    previous.seed
                )));
            }
        }
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    pub fn table<I>(&mut self, name: &str, header: &[String], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<Cell>>,
    {
        let path = self.dir.join(name);
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            if row.len() != header.len() {
                return Err(CliError::Io(format!("{name}: row of {} fields under {} columns", row.len(), header.len())));
            }
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn finish(&self, record: &ResultRecord) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(record).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(self.dir.join(SUMMARY_FILE), text + "\n")?;
        Ok(())
    }
}

/// Column names `prefix0, prefix1, …`.
pub fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}
