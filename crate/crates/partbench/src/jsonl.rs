//! JSONL readers and writers for question and response files.
//!
//! Files carry one record per line. An optional first line of the form
//! `{"provenance": {...}}` records the seed and config hash of the run
//! that produced the file; readers accept files with or without it.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gen::QuestionRecord;
use crate::metrics::ResponseRecord;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Where an artifact came from: the tool, its seed, and a hash of the
/// resolved configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct ProvenanceLine {
    provenance: Provenance,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> JsonlError + '_ {
    move |source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_jsonl<T: Serialize>(
    path: &Path,
    records: &[T],
    provenance: Option<&Provenance>,
) -> Result<(), JsonlError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    let map_io = io_err(path);
    if let Some(p) = provenance {
        let line = serde_json::to_string(&ProvenanceLine {
            provenance: p.clone(),
        })
        .expect("provenance serializes");
        writeln!(w, "{line}").map_err(&map_io)?;
    }
    for record in records {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(w, "{line}").map_err(&map_io)?;
    }
    w.flush().map_err(&map_io)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(
    path: &Path,
) -> Result<(Vec<T>, Option<Provenance>), JsonlError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    let mut provenance = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            if let Ok(head) = serde_json::from_str::<ProvenanceLine>(&line) {
                provenance = Some(head.provenance);
                continue;
            }
        }
        let record: T = serde_json::from_str(&line).map_err(|e| JsonlError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok((records, provenance))
}

pub fn write_questions(
    path: impl AsRef<Path>,
    questions: &[QuestionRecord],
    provenance: Option<&Provenance>,
) -> Result<(), JsonlError> {
    write_jsonl(path.as_ref(), questions, provenance)
}

pub fn read_questions(
    path: impl AsRef<Path>,
) -> Result<(Vec<QuestionRecord>, Option<Provenance>), JsonlError> {
    read_jsonl(path.as_ref())
}

pub fn write_responses(
    path: impl AsRef<Path>,
    responses: &[ResponseRecord],
    provenance: Option<&Provenance>,
) -> Result<(), JsonlError> {
    write_jsonl(path.as_ref(), responses, provenance)
}

pub fn read_responses(
    path: impl AsRef<Path>,
) -> Result<(Vec<ResponseRecord>, Option<Provenance>), JsonlError> {
    read_jsonl(path.as_ref())
}
