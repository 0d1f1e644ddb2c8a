//! Append-only JSON-lines event log.
//!
//! One record per line, fields in the order `v, session, seq, kind, ts,
//! payload`. The byte-level format is documented in `docs/event-log.md`.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    CaseCreated,
    Prediction,
    Explanation,
    Questions,
    CfQuery,
    CfResult,
    LlmPrompt,
    LlmRaw,
    GroundingVerdict,
    Decision,
    Survey,
}

impl EventKind {
    /// Records of these kinds are flushed to stable storage before the
    /// append returns.
    pub fn is_durable(self) -> bool {
        matches!(self, EventKind::Decision | EventKind::Survey)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::CaseCreated => "case_created",
            EventKind::Prediction => "prediction",
            EventKind::Explanation => "explanation",
            EventKind::Questions => "questions",
            EventKind::CfQuery => "cf_query",
            EventKind::CfResult => "cf_result",
            EventKind::LlmPrompt => "llm_prompt",
            EventKind::LlmRaw => "llm_raw",
            EventKind::GroundingVerdict => "grounding_verdict",
            EventKind::Decision => "decision",
            EventKind::Survey => "survey",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub v: u32,
    pub session: String,
    pub seq: u64,
    pub kind: EventKind,
    pub ts: DateTime<Utc>,
    pub payload: serde_json::Value,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event log I/O: {0}")]
    Io(#[from] io::Error),
    #[error("cannot encode payload: {0}")]
    Encode(#[from] serde_json::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: unsupported log version {v}")]
    Version { line: usize, v: u32 },
}

enum Sink {
    Memory(Vec<String>),
    File { file: File, path: PathBuf },
}

/// Shared log handle; appends are serialized internally.
pub struct EventLog {
    sink: Mutex<Sink>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        EventLog {
            sink: Mutex::new(Sink::Memory(Vec::new())),
        }
    }

    /// Opens `path` for appending, creating it if needed.
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EventLog {
            sink: Mutex::new(Sink::File {
                file,
                path: path.to_path_buf(),
            }),
        })
    }

    pub fn path(&self) -> Option<PathBuf> {
        match &*self.sink.lock().expect("log lock") {
            Sink::Memory(_) => None,
            Sink::File { path, .. } => Some(path.clone()),
        }
    }

    pub fn append(&self, record: &EventRecord) -> Result<(), LogError> {
        let line = serde_json::to_string(record)?;
        let mut sink = self.sink.lock().expect("log lock");
        match &mut *sink {
            Sink::Memory(lines) => lines.push(line),
            Sink::File { file, .. } => {
                // one write per record keeps lines whole under O_APPEND
                file.write_all(format!("{line}\n").as_bytes())?;
                if record.kind.is_durable() {
                    file.sync_data()?;
                }
            }
        }
        Ok(())
    }

    /// Full log text (memory sinks) or the file's current contents.
    pub fn contents(&self) -> Result<String, LogError> {
        match &*self.sink.lock().expect("log lock") {
            Sink::Memory(lines) => Ok(lines.iter().map(|l| format!("{l}\n")).collect()),
            Sink::File { path, .. } => Ok(std::fs::read_to_string(path)?),
        }
    }
}

pub fn parse_log(text: &str) -> Result<Vec<EventRecord>, LogError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let record: EventRecord =
                serde_json::from_str(l).map_err(|source| LogError::Parse { line: i + 1, source })?;
            if record.v != LOG_VERSION {
                return Err(LogError::Version { line: i + 1, v: record.v });
            }
            Ok(record)
        })
        .collect()
}
