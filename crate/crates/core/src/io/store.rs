//! Line-delimited JSON persistence: the replay log of raw model replies and
//! the scored record store.
//!
//! Replay line fields: `item_id`, `perturbation_type`, `perturbation_index`,
//! `shuffle_index`, `prompt_digest` (SHA-256 hex of the full prompt text),
//! `response_text`, `token_logprobs` (list of `{position, candidates}`),
//! `model_tag`, and optionally `requested_at_ms` and `latency_ms` for
//! network backends.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelResponse, PerturbationType, RunKey, RunRecord, TokenLogprobRecord};
use crate::protocol::{FreshResponse, InferError, ModelBackend, PlannedRun, ResponseCache};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub item_id: String,
    pub perturbation_type: PerturbationType,
    pub perturbation_index: u32,
    pub shuffle_index: u32,
    pub prompt_digest: String,
    pub response_text: String,
    pub token_logprobs: Vec<TokenLogprobRecord>,
    pub model_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested_at_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

impl ReplayRecord {
    pub fn new(key: &RunKey, prompt_digest: String, response: &ModelResponse) -> Self {
        Self {
            item_id: key.item_id.clone(),
            perturbation_type: key.perturbation_type,
            perturbation_index: key.perturbation_index,
            shuffle_index: key.shuffle_index,
            prompt_digest,
            response_text: response.text.clone(),
            token_logprobs: response.token_logprobs.clone(),
            model_tag: response.model_tag.clone(),
            requested_at_ms: None,
            latency_ms: None,
        }
    }

    pub fn from_fresh(fresh: &FreshResponse<'_>) -> Self {
        Self {
            requested_at_ms: fresh.requested_at_ms,
            latency_ms: fresh.latency_ms,
            ..Self::new(&fresh.run.key, fresh.run.prompt.digest(), fresh.response)
        }
    }

    pub fn key(&self) -> RunKey {
        RunKey::new(
            &self.item_id,
            self.perturbation_type,
            self.perturbation_index,
            self.shuffle_index,
        )
    }

    pub fn response(&self) -> ModelResponse {
        ModelResponse {
            text: self.response_text.clone(),
            token_logprobs: self.token_logprobs.clone(),
            model_tag: self.model_tag.clone(),
        }
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    let io = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| StoreError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Append-only replay log writer; appends are serialized through a lock.
pub struct ReplayWriter {
    path: PathBuf,
    out: Mutex<BufWriter<File>>,
}

impl ReplayWriter {
    /// Starts a new log, replacing any existing file.
    pub fn create(path: &Path) -> Result<Self, StoreError> {
        Self::open(path, false)
    }

    /// Opens a log for appending, creating it if needed.
    pub fn append(path: &Path) -> Result<Self, StoreError> {
        Self::open(path, true)
    }

    fn open(path: &Path, append: bool) -> Result<Self, StoreError> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(|source| StoreError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(Self {
            path: path.to_path_buf(),
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn put(&self, record: &ReplayRecord) -> Result<(), StoreError> {
        let io = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        let line = serde_json::to_string(record).expect("replay records serialize");
        let mut out = self.out.lock().expect("replay writer lock");
        out.write_all(line.as_bytes()).map_err(io)?;
        out.write_all(b"\n").map_err(io)
    }

    pub fn flush(&self) -> Result<(), StoreError> {
        self.out
            .lock()
            .expect("replay writer lock")
            .flush()
            .map_err(|source| StoreError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

impl Drop for ReplayWriter {
    fn drop(&mut self) {
        if let Ok(mut out) = self.out.lock() {
            let _ = out.flush();
        }
    }
}

/// A loaded replay log, usable as a replay backend or as a cache in front
/// of a live backend.
#[derive(Debug, Clone, Default)]
pub struct ReplayLog {
    records: BTreeMap<RunKey, ReplayRecord>,
}

impl ReplayLog {
    /// Reads a log; a key stored more than once keeps its last record.
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let mut log = Self::default();
        for record in read_jsonl::<ReplayRecord>(path)? {
            if let Some(old) = log.records.insert(record.key(), record) {
                log::warn!("{}: {} stored twice, keeping the later record", path.display(), old.key());
            }
        }
        Ok(log)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &RunKey) -> Option<&ReplayRecord> {
        self.records.get(key)
    }

    pub fn insert(&mut self, record: ReplayRecord) {
        self.records.insert(record.key(), record);
    }

    pub fn records(&self) -> impl Iterator<Item = &ReplayRecord> {
        self.records.values()
    }

    /// Stored response for a planned run, checking the prompt digest.
    pub fn fetch(&self, run: &PlannedRun) -> Result<ModelResponse, InferError> {
        let stored = self
            .records
            .get(&run.key)
            .ok_or_else(|| InferError::Replay(format!("no stored response for {}", run.key)))?;
        let digest = run.prompt.digest();
        if stored.prompt_digest != digest {
            return Err(InferError::DigestMismatch {
                key: run.key.to_string(),
                stored: stored.prompt_digest.clone(),
                regenerated: digest,
            });
        }
        Ok(stored.response())
    }
}

impl ModelBackend for ReplayLog {
    fn infer(&self, run: &PlannedRun) -> Result<ModelResponse, InferError> {
        self.fetch(run)
    }

    fn model_tag(&self) -> String {
        self.records
            .values()
            .next()
            .map(|r| r.model_tag.clone())
            .unwrap_or_default()
    }
}

impl ResponseCache for ReplayLog {
    fn lookup(&self, run: &PlannedRun) -> Result<Option<ModelResponse>, InferError> {
        match self.fetch(run) {
            Ok(r) => Ok(Some(r)),
            Err(InferError::DigestMismatch { key, .. }) => {
                log::warn!("{key}: cached prompt differs, querying again");
                Ok(None)
            }
            Err(_) => Ok(None),
        }
    }
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<(), StoreError> {
    let io = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        let line = serde_json::to_string(r).expect("run records serialize");
        out.write_all(line.as_bytes()).map_err(io)?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, StoreError> {
    read_jsonl(path)
}

pub fn read_replay(path: &Path) -> Result<Vec<ReplayRecord>, StoreError> {
    read_jsonl(path)
}

pub fn ensure_dir(path: &Path) -> Result<(), StoreError> {
    fs::create_dir_all(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}
