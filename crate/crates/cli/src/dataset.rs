//! Line-oriented dataset files.
//!
//! Raw training records, one JSON object per line:
//!
//! ```json
//! {"query_id": "q1", "embedding": [0.1, 0.2], "models": [{"success": 1, "prompt_tokens": 900, "completion_tokens": 120}, ...]}
//! ```
//!
//! Model order must match the pool config; the loader verifies the count.
//! Scored files carry the same object plus `scores` and `target` arrays.
//! Precomputed embeddings use `{"query_id": ..., "vector": [...]}` lines.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use costroute_core::cost::UsageCounts;
use costroute_core::embed::PrecomputedEmbedder;
use costroute_core::scoring::{ModelOutcome, QueryRecord, ScoreVector, ScoredRecord};
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelRunDto {
    /// 0 or 1.
    pub success: u8,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RecordDto {
    pub query_id: String,
    pub embedding: Vec<f64>,
    pub models: Vec<ModelRunDto>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoredRecordDto {
    pub query_id: String,
    pub embedding: Vec<f64>,
    pub models: Vec<ModelRunDto>,
    pub scores: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbeddingDto {
    pub query_id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path} line {line}: embedding has dimension {got}, expected {expected}")]
    Dimension {
        path: String,
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("{path} line {line}: {got} model entries, expected {expected} (pool size)")]
    PoolSize {
        path: String,
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("{path} line {line}: field `success` must be 0 or 1, got {got}")]
    BadSuccess { path: String, line: usize, got: u8 },
    #[error("{path} line {line}: {message}")]
    Invalid {
        path: String,
        line: usize,
        message: String,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Embeddings {
        path: String,
        source: costroute_core::embed::EmbedError,
    },
}

fn read_lines(path: &Path) -> Result<Vec<String>, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn record_from_dto(
    dto: RecordDto,
    path: &Path,
    line: usize,
    expected_dim: &mut Option<usize>,
    pool_size: usize,
) -> Result<QueryRecord, DataError> {
    let path_str = || path.display().to_string();
    match *expected_dim {
        Some(d) if dto.embedding.len() != d => {
            return Err(DataError::Dimension {
                path: path_str(),
                line,
                expected: d,
                got: dto.embedding.len(),
            });
        }
        Some(_) => {}
        None => *expected_dim = Some(dto.embedding.len()),
    }
    if dto.embedding.is_empty() {
        return Err(DataError::Invalid {
            path: path_str(),
            line,
            message: "embedding is empty".into(),
        });
    }
    if dto.embedding.iter().any(|v| !v.is_finite()) {
        return Err(DataError::Invalid {
            path: path_str(),
            line,
            message: "embedding contains non-finite values".into(),
        });
    }
    if dto.models.len() != pool_size {
        return Err(DataError::PoolSize {
            path: path_str(),
            line,
            expected: pool_size,
            got: dto.models.len(),
        });
    }
    let per_model = dto
        .models
        .iter()
        .map(|m| {
            if m.success > 1 {
                return Err(DataError::BadSuccess {
                    path: path_str(),
                    line,
                    got: m.success,
                });
            }
            Ok(ModelOutcome {
                success: m.success == 1,
                usage: UsageCounts::new(m.prompt_tokens, m.completion_tokens),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QueryRecord {
        query_id: dto.query_id,
        embedding: dto.embedding,
        per_model,
    })
}

/// Load raw records, verifying pool size on every line and embedding
/// dimension against `expected_dim` (or the first record when `None`).
/// An empty file yields an empty vector; the caller decides how loudly to
/// warn.
pub fn load_records(
    path: &Path,
    pool_size: usize,
    mut expected_dim: Option<usize>,
) -> Result<Vec<QueryRecord>, DataError> {
    let mut records = Vec::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let dto: RecordDto = serde_json::from_str(line).map_err(|e| DataError::Parse {
            path: path.display().to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        records.push(record_from_dto(
            dto,
            path,
            line_no,
            &mut expected_dim,
            pool_size,
        )?);
    }
    Ok(records)
}

fn dto_from_record(record: &QueryRecord) -> RecordDto {
    RecordDto {
        query_id: record.query_id.clone(),
        embedding: record.embedding.clone(),
        models: record
            .per_model
            .iter()
            .map(|o| ModelRunDto {
                success: u8::from(o.success),
                prompt_tokens: o.usage.prompt_tokens,
                completion_tokens: o.usage.completion_tokens,
            })
            .collect(),
    }
}

pub fn write_records(path: &Path, records: &[QueryRecord]) -> Result<(), DataError> {
    let file = File::create(path).map_err(|source| DataError::Write {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        for record in records {
            serde_json::to_writer(&mut out, &dto_from_record(record))?;
            out.write_all(b"\n")?;
        }
        out.flush()
    };
    write().map_err(|source| DataError::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_scored(path: &Path, dataset: &[ScoredRecord]) -> Result<(), DataError> {
    let file = File::create(path).map_err(|source| DataError::Write {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        for (record, scores) in dataset {
            let raw = dto_from_record(record);
            let dto = ScoredRecordDto {
                query_id: raw.query_id,
                embedding: raw.embedding,
                models: raw.models,
                scores: scores.scores.clone(),
                target: scores.target.clone(),
            };
            serde_json::to_writer(&mut out, &dto)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    };
    write().map_err(|source| DataError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Load a scored dataset, validating per-line score/target shape and that
/// every target is a probability vector.
pub fn load_scored(
    path: &Path,
    pool_size: usize,
    mut expected_dim: Option<usize>,
) -> Result<Vec<ScoredRecord>, DataError> {
    let mut dataset = Vec::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let dto: ScoredRecordDto = serde_json::from_str(line).map_err(|e| DataError::Parse {
            path: path.display().to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        let invalid = |message: String| DataError::Invalid {
            path: path.display().to_string(),
            line: line_no,
            message,
        };
        if dto.scores.len() != pool_size || dto.target.len() != pool_size {
            return Err(invalid(format!(
                "scores/target have {}/{} entries, expected {pool_size}",
                dto.scores.len(),
                dto.target.len()
            )));
        }
        let sum: f64 = dto.target.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || dto.target.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return Err(invalid(format!(
                "target is not a probability vector (sum {sum})"
            )));
        }
        let scores = ScoreVector {
            scores: dto.scores.clone(),
            target: dto.target.clone(),
        };
        let record = record_from_dto(
            RecordDto {
                query_id: dto.query_id,
                embedding: dto.embedding,
                models: dto.models,
            },
            path,
            line_no,
            &mut expected_dim,
            pool_size,
        )?;
        dataset.push((record, scores));
    }
    Ok(dataset)
}

/// Load precomputed embeddings into a lookup provider.
pub fn load_embeddings(path: &Path, normalize: bool) -> Result<PrecomputedEmbedder, DataError> {
    let mut entries = Vec::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let dto: EmbeddingDto = serde_json::from_str(line).map_err(|e| DataError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        entries.push((dto.query_id, dto.vector));
    }
    let provider = PrecomputedEmbedder::new(entries).map_err(|source| DataError::Embeddings {
        path: path.display().to_string(),
        source,
    })?;
    Ok(if normalize {
        provider.with_l2_normalization()
    } else {
        provider
    })
}
