//! JSON Lines reading and writing: one object per line, LF terminated.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use cygent_core::datasetgen::{PromptCompletion, TrainingPair};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
}

pub fn write_records<T: Serialize>(dest: &Path, records: impl IntoIterator<Item = T>) -> Result<usize, JsonlError> {
    let io_err = |source| JsonlError::Io {
        path: dest.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(dest).map_err(io_err)?);
    let mut written = 0;
    for record in records {
        let line = serde_json::to_string(&record).map_err(|e| io_err(e.into()))?;
        out.write_all(line.as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
        written += 1;
    }
    out.flush().map_err(io_err)?;
    Ok(written)
}

/// Reads every non-blank line as one record.
pub fn read_records<T: DeserializeOwned>(src: &Path) -> Result<Vec<T>, JsonlError> {
    let path = src.display().to_string();
    let file = File::open(src).map_err(|source| JsonlError::Io {
        path: path.clone(),
        source,
    })?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| JsonlError::Io {
            path: path.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|source| JsonlError::Parse {
            path: path.clone(),
            line: idx + 1,
            source,
        })?);
    }
    Ok(records)
}

/// Writes fine-tune records with exactly the keys `prompt` and `completion`.
pub fn export_pairs<'a>(pairs: impl IntoIterator<Item = &'a TrainingPair>, dest: &Path) -> Result<usize, JsonlError> {
    write_records(dest, pairs.into_iter().map(PromptCompletion::from))
}

pub fn import_pairs(src: &Path) -> Result<Vec<PromptCompletion>, JsonlError> {
    read_records(src)
}
