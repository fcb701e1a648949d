//! Append-only label ledger.
//!
//! One JSON object per line:
//!
//! ```text
//! {"run":"lp-7","iter":3,"id":"r102","label":"positive","source":"truth"}
//! ```
//!
//! Rows are flushed as each batch is answered, so an interrupted run can be
//! replayed. An id keeps its first label for the whole run; a conflicting
//! append is rejected.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;
use crate::oracle::LabelSource;
use crate::runlog::{IterationRecord, RunLog, Strategy};

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("ledger i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("ledger line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("ledger already labels {id:?} as {existing:?}, refusing {new:?}")]
    Contradiction {
        id: String,
        existing: Label,
        new: Label,
    },
    #[error("batch has {ids} ids but {labels} labels")]
    Misaligned { ids: usize, labels: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerRow {
    pub run: String,
    pub iter: usize,
    pub id: String,
    pub label: Label,
    pub source: LabelSource,
}

pub struct Ledger {
    path: PathBuf,
    run: String,
    rows: Vec<LedgerRow>,
    by_id: HashMap<String, Label>,
    file: File,
}

impl Ledger {
    /// Opens (creating if needed) the ledger at `path` for run `run`, loading
    /// any rows already there.
    pub fn open(path: &Path, run: &str) -> Result<Ledger, LedgerError> {
        let io = |source| LedgerError::Io {
            path: path.display().to_string(),
            source,
        };
        let rows = if path.exists() { read_ledger(path)? } else { Vec::new() };
        let mut by_id = HashMap::new();
        for row in &rows {
            if let Some(&existing) = by_id.get(&row.id) {
                if existing != row.label {
                    return Err(LedgerError::Contradiction {
                        id: row.id.clone(),
                        existing,
                        new: row.label,
                    });
                }
            }
            by_id.insert(row.id.clone(), row.label);
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        Ok(Ledger {
            path: path.to_path_buf(),
            run: run.to_string(),
            rows,
            by_id,
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn run(&self) -> &str {
        &self.run
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    pub fn lookup(&self, id: &str) -> Option<Label> {
        self.by_id.get(id).copied()
    }

    /// Appends one row per id. Nothing is written if any id contradicts an
    /// earlier label.
    pub fn append_batch(
        &mut self,
        iter: usize,
        ids: &[String],
        labels: &[Label],
        source: LabelSource,
    ) -> Result<(), LedgerError> {
        if ids.len() != labels.len() {
            return Err(LedgerError::Misaligned {
                ids: ids.len(),
                labels: labels.len(),
            });
        }
        for (id, &label) in ids.iter().zip(labels) {
            if let Some(&existing) = self.by_id.get(id) {
                if existing != label {
                    return Err(LedgerError::Contradiction {
                        id: id.clone(),
                        existing,
                        new: label,
                    });
                }
            }
        }
        let mut buf = Vec::new();
        let mut new_rows = Vec::with_capacity(ids.len());
        for (id, &label) in ids.iter().zip(labels) {
            let row = LedgerRow {
                run: self.run.clone(),
                iter,
                id: id.clone(),
                label,
                source,
            };
            serde_json::to_writer(&mut buf, &row).expect("ledger rows serialize");
            buf.push(b'\n');
            new_rows.push(row);
        }
        let io = |source| LedgerError::Io {
            path: self.path.display().to_string(),
            source,
        };
        self.file.write_all(&buf).map_err(io)?;
        self.file.flush().map_err(io)?;
        for row in new_rows {
            self.by_id.insert(row.id.clone(), row.label);
            self.rows.push(row);
        }
        Ok(())
    }

    pub fn to_run_log(&self, strategy: Strategy) -> RunLog {
        run_log_from_rows(&self.rows, strategy)
    }
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerRow>, LedgerError> {
    let file = File::open(path).map_err(|source| LedgerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LedgerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line).map_err(|e| LedgerError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(rows)
}

/// Groups consecutive rows with the same `iter` into rounds, preserving order.
pub fn run_log_from_rows(rows: &[LedgerRow], strategy: Strategy) -> RunLog {
    let mut log = RunLog::new(strategy);
    for row in rows {
        match log.iterations.last_mut() {
            Some(it) if it.iteration == row.iter => {
                it.batch.push(row.id.clone());
                it.labels.push(row.label);
            }
            _ => log.iterations.push(IterationRecord {
                iteration: row.iter,
                batch: vec![row.id.clone()],
                labels: vec![row.label],
                k: None,
                scored: None,
            }),
        }
    }
    log
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Negative as N, Positive as P};

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn append_reopen_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ledger");
        {
            let mut l = Ledger::open(&path, "t").unwrap();
            l.append_batch(1, &ids(&["a", "b"]), &[P, N], LabelSource::Truth).unwrap();
            l.append_batch(2, &ids(&["c"]), &[P], LabelSource::Truth).unwrap();
        }
        let l = Ledger::open(&path, "t").unwrap();
        assert_eq!(l.rows().len(), 3);
        assert_eq!(l.lookup("b"), Some(N));
        let log = l.to_run_log(Strategy::Lp);
        assert_eq!(log.iterations.len(), 2);
        assert_eq!(log.iterations[0].batch, ids(&["a", "b"]));
        assert_eq!(log.positives_found(), 2);
        let first = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            first.lines().next().unwrap(),
            r#"{"run":"t","iter":1,"id":"a","label":"positive","source":"truth"}"#
        );
    }

    #[test]
    fn contradictions_are_rejected_without_writing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ledger");
        let mut l = Ledger::open(&path, "t").unwrap();
        l.append_batch(1, &ids(&["a"]), &[P], LabelSource::Human).unwrap();
        l.append_batch(2, &ids(&["a"]), &[P], LabelSource::Human).unwrap();
        let err = l.append_batch(3, &ids(&["z", "a"]), &[N, N], LabelSource::Human).unwrap_err();
        assert!(matches!(err, LedgerError::Contradiction { .. }));
        assert_eq!(l.rows().len(), 2);
        assert_eq!(read_ledger(&path).unwrap().len(), 2);
        assert_eq!(l.lookup("z"), None);
    }
}
