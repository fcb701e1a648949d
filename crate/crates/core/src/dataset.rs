//! Embedding corpora: loading, validation, normalization and cosine similarity.
//!
//! A corpus file is line-delimited JSON, one record per line:
//!
//! ```text
//! {"id": "r17", "text": "optional", "embedding": [0.1, -0.3, ...], "label": "positive"}
//! ```
//!
//! Embeddings are stored as `f32`; every dot product accumulates in `f64`
//! left to right over the coordinates, so results are bit-reproducible for a
//! given build.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: embedding has dimension {found}, expected {expected}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: record {id:?} has a non-finite embedding value")]
    NonFinite { line: usize, id: String },
    #[error("line {line}: empty id")]
    EmptyId { line: usize },
    #[error("empty corpus")]
    Empty,
    #[error("record {id:?} has a zero-norm embedding")]
    ZeroNorm { id: String },
    #[error("vectors have different dimensions ({0} vs {1})")]
    VectorDimension(usize, usize),
    #[error("zero-norm vector")]
    ZeroVector,
}

/// Ground-truth class of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn is_positive(self) -> bool {
        matches!(self, Label::Positive)
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        }
    }
}

/// Where a record came from: the real unlabeled pool or the synthetic seed pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub text: Option<String>,
    pub embedding: Vec<f32>,
    pub truth: Option<Label>,
    pub source: Source,
}

/// On-disk shape of one line.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    embedding: Vec<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<Label>,
}

/// An ordered, validated set of records sharing one embedding dimension.
#[derive(Debug, Clone)]
pub struct Corpus {
    records: Vec<Record>,
    dimension: usize,
    id_index: HashMap<String, usize>,
}

impl Corpus {
    /// Validates and indexes `records`. Line numbers in errors are 1-based
    /// record positions.
    pub fn from_records(records: Vec<Record>) -> Result<Corpus, DatasetError> {
        let dimension = match records.first() {
            Some(r) => r.embedding.len(),
            None => return Err(DatasetError::Empty),
        };
        let mut id_index = HashMap::with_capacity(records.len());
        for (pos, r) in records.iter().enumerate() {
            let line = pos + 1;
            if r.id.is_empty() {
                return Err(DatasetError::EmptyId { line });
            }
            if r.embedding.len() != dimension {
                return Err(DatasetError::DimensionMismatch {
                    line,
                    expected: dimension,
                    found: r.embedding.len(),
                });
            }
            if r.embedding.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite {
                    line,
                    id: r.id.clone(),
                });
            }
            if id_index.insert(r.id.clone(), pos).is_some() {
                return Err(DatasetError::DuplicateId {
                    line,
                    id: r.id.clone(),
                });
            }
        }
        if dimension == 0 {
            return Err(DatasetError::Malformed {
                line: 1,
                message: "embedding must not be empty".into(),
            });
        }
        Ok(Corpus {
            records,
            dimension,
            id_index,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn record(&self, pos: usize) -> &Record {
        &self.records[pos]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.id_index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Record> {
        self.position(id).map(|p| &self.records[p])
    }

    pub fn embedding(&self, pos: usize) -> &[f32] {
        &self.records[pos].embedding
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }

    /// Number of records whose truth label is positive.
    pub fn positive_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.truth == Some(Label::Positive))
            .count()
    }

    /// Keeps only the records at `positions`, in the given order.
    pub fn subset(&self, positions: &[usize]) -> Result<Corpus, DatasetError> {
        Corpus::from_records(positions.iter().map(|&p| self.records[p].clone()).collect())
    }

    /// Records of `self` followed by the records of `other`. Ids must stay unique.
    pub fn concat(&self, other: &Corpus) -> Result<Corpus, DatasetError> {
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        Corpus::from_records(records)
    }

    /// Writes the corpus in the line-delimited JSON format `load_corpus` reads.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), DatasetError> {
        let io_err = |source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        for r in &self.records {
            let line = RecordLine {
                id: r.id.clone(),
                text: r.text.clone(),
                embedding: r.embedding.clone(),
                label: r.truth,
            };
            serde_json::to_writer(&mut out, &line).map_err(|e| io_err(e.into()))?;
            out.write_all(b"\n").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

/// Reads a line-delimited JSON corpus. Blank lines are skipped; line numbers in
/// errors refer to the file.
pub fn load_corpus(path: &Path, source: Source) -> Result<Corpus, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine =
            serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        records.push(Record {
            id: parsed.id,
            text: parsed.text,
            embedding: parsed.embedding,
            truth: parsed.label,
            source,
        });
        lines.push(line_no);
    }
    // Re-map record positions in validation errors back to file lines.
    Corpus::from_records(records).map_err(|e| remap_line(e, &lines))
}

fn remap_line(err: DatasetError, lines: &[usize]) -> DatasetError {
    let fix = |l: usize| lines.get(l - 1).copied().unwrap_or(l);
    match err {
        DatasetError::DimensionMismatch {
            line,
            expected,
            found,
        } => DatasetError::DimensionMismatch {
            line: fix(line),
            expected,
            found,
        },
        DatasetError::DuplicateId { line, id } => DatasetError::DuplicateId { line: fix(line), id },
        DatasetError::NonFinite { line, id } => DatasetError::NonFinite { line: fix(line), id },
        DatasetError::EmptyId { line } => DatasetError::EmptyId { line: fix(line) },
        other => other,
    }
}

/// Rescales every embedding to unit L2 norm.
pub fn normalize_unit(corpus: Corpus) -> Result<Corpus, DatasetError> {
    let Corpus {
        mut records,
        dimension,
        id_index,
    } = corpus;
    for r in &mut records {
        let norm = norm(&r.embedding);
        if norm == 0.0 {
            return Err(DatasetError::ZeroNorm { id: r.id.clone() });
        }
        for v in &mut r.embedding {
            *v = (f64::from(*v) / norm) as f32;
        }
    }
    Ok(Corpus {
        records,
        dimension,
        id_index,
    })
}

/// Left-to-right dot product with `f64` accumulation.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += f64::from(*x) * f64::from(*y);
    }
    acc
}

#[inline]
pub fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, DatasetError> {
    if a.len() != b.len() {
        return Err(DatasetError::VectorDimension(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(DatasetError::ZeroVector);
    }
    Ok(cosine_with_norms(a, b, na, nb))
}

/// Cosine with precomputed norms; callers guarantee equal lengths and nonzero norms.
#[inline]
pub(crate) fn cosine_with_norms(a: &[f32], b: &[f32], na: f64, nb: f64) -> f64 {
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}
