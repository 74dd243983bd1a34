//! Append-only JSON-lines record of every command run.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedgerEntry {
    pub timestamp_unix: u64,
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub summary: Value,
    pub artifacts: Vec<PathBuf>,
}

impl RunLedgerEntry {
    pub fn now(command: &str, config_digest: String, seed: u64, summary: Value, artifacts: Vec<PathBuf>) -> Self {
        let timestamp_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        RunLedgerEntry {
            timestamp_unix,
            command: command.to_string(),
            config_digest,
            seed,
            summary,
            artifacts,
        }
    }
}

/// Appends one line; creates the file and its parent directory if needed.
pub fn append(path: &Path, entry: &RunLedgerEntry) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut line = serde_json::to_string(entry).expect("ledger entry serializes");
    line.push('\n');
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .and_then(|mut f| f.write_all(line.as_bytes()))
        .map_err(|e| CliError::io(path, e))
}

pub fn read_all(path: &Path) -> Result<Vec<RunLedgerEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| CliError::Validation(format!("{}: {e}", path.display()))))
        .collect()
}
