//! Append-only JSONL audit log of every attempted action.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::monitor::Verdict;
use crate::sts::ActivityInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditLevel {
    Low,
    High,
    Bypass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecResult {
    Ok,
    /// The environment rejected the action; holds the error kind name.
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub tick: u64,
    pub experience_id: String,
    pub level: AuditLevel,
    /// Sensitive argument values are masked.
    pub action: ActivityInstance,
    pub verdict: Verdict,
    /// Absent exactly when the action was denied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_result: Option<ExecResult>,
    pub planner_used: bool,
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("audit io: {0}")]
    Io(#[from] std::io::Error),
    #[error("audit line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Appends records to a JSONL file, flushing after each one.
#[derive(Debug)]
pub struct AuditWriter {
    file: File,
}

impl AuditWriter {
    /// Creates (or truncates) the log file.
    pub fn create(path: &Path) -> Result<Self, AuditError> {
        File::create(path)?;
        Self::append_to(path)
    }

    /// Opens an existing log for appending, creating it if needed.
    pub fn append_to(path: &Path) -> Result<Self, AuditError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file })
    }

    pub fn append(&mut self, record: &AuditRecord) -> Result<(), AuditError> {
        let mut line = serde_json::to_string(record).expect("audit record serializes");
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

/// Writes `records` to a fresh log at `path`.
pub fn write_audit(records: &[AuditRecord], path: &Path) -> Result<(), AuditError> {
    let mut w = AuditWriter::create(path)?;
    for r in records {
        w.append(r)?;
    }
    Ok(())
}

pub fn read_audit(path: &Path) -> Result<Vec<AuditRecord>, AuditError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| AuditError::Json { line: i + 1, source })?);
    }
    Ok(out)
}
