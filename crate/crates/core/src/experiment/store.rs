use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExperimentError, RunRecord, SweepPoint, TrialConfig, SCHEMA_VERSION};

/// Content address of a trial: SHA-256 of its canonical config JSON.
pub fn trial_id(cfg: &TrialConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("trial configs always serialize");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

/// Diagnostic line written to the quarantine file when a trial fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub schema_version: u32,
    pub trial_id: String,
    pub sweep_point: Option<SweepPoint>,
    pub config: TrialConfig,
    pub error: String,
}

impl TrialFailure {
    pub fn new(cfg: &TrialConfig, sweep_point: Option<SweepPoint>, error: &ExperimentError) -> Self {
        TrialFailure {
            schema_version: SCHEMA_VERSION,
            trial_id: trial_id(cfg),
            sweep_point,
            config: cfg.clone(),
            error: error.to_string(),
        }
    }
}

/// Append-only JSONL store for one sweep. Only one writer may append at a
/// time; the sweep runner funnels all records through a single thread.
#[derive(Debug, Clone)]
pub struct RunStore {
    path: PathBuf,
}

impl RunStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        RunStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// `<stem>.failures.jsonl` next to the run file.
    pub fn failures_path(&self) -> PathBuf {
        let stem = self.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        self.path.with_file_name(format!("{stem}.failures.jsonl"))
    }

    fn store_error(&self, line: usize, message: impl Into<String>) -> ExperimentError {
        ExperimentError::Store { path: self.path.display().to_string(), line, message: message.into() }
    }

    /// All sealed records, in file order. A missing file is an empty store.
    /// A truncated final line (interrupted append) is skipped.
    pub fn load(&self) -> Result<Vec<RunRecord>, ExperimentError> {
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
        let mut records = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<RunRecord>(line) {
                Ok(r) if r.schema_version == SCHEMA_VERSION => records.push(r),
                Ok(r) => {
                    return Err(self.store_error(i + 1, format!("unsupported schema version {}", r.schema_version)))
                }
                Err(e) if i + 1 == lines.len() && e.is_eof() => {
                    log::warn!("{}: ignoring truncated final line", self.path.display());
                }
                Err(e) => return Err(self.store_error(i + 1, e.to_string())),
            }
        }
        Ok(records)
    }

    /// Trial ids already sealed in the store.
    pub fn load_completed(&self) -> Result<BTreeSet<String>, ExperimentError> {
        Ok(self.load()?.into_iter().map(|r| r.trial_id).collect())
    }

    fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut line = serde_json::to_vec(value)?;
        line.push(b'\n');
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        file.write_all(&line)?;
        file.flush()?;
        Ok(())
    }

    pub fn append(&self, record: &RunRecord) -> Result<(), ExperimentError> {
        Self::append_line(&self.path, record)
    }

    pub fn append_failure(&self, failure: &TrialFailure) -> Result<(), ExperimentError> {
        Self::append_line(&self.failures_path(), failure)
    }

    pub fn load_failures(&self) -> Result<Vec<TrialFailure>, ExperimentError> {
        let path = self.failures_path();
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| ExperimentError::Store {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect()
    }
}
