//! Cumulative precision / recall / F1 over the union of queried batches, and
//! plot-ready reports.
//!
//! Metrics are computed against corpus ground truth over the real pool only;
//! synthetic seeds never appear in a batch and never count.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Corpus, Label};
use crate::runlog::RunLog;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("record {0:?} has no ground-truth label")]
    MissingTruth(String),
    #[error("batch id {0:?} is not in the pool")]
    UnknownId(String),
    #[error("cannot write report to {path}: {message}")]
    Write { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iteration: usize,
    pub queried_cum: usize,
    pub query_ratio: f64,
    pub precision_cum: f64,
    pub recall_cum: f64,
    pub f1_cum: f64,
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// One point per non-empty round.
pub fn evaluate(run: &RunLog, pool: &Corpus) -> Result<Vec<EvalPoint>, MetricsError> {
    let mut total_pos = 0usize;
    for r in pool.records() {
        match r.truth {
            Some(Label::Positive) => total_pos += 1,
            Some(Label::Negative) => {}
            None => return Err(MetricsError::MissingTruth(r.id.clone())),
        }
    }
    let n = pool.len() as f64;
    let mut seen: HashSet<&str> = HashSet::new();
    let mut tp = 0usize;
    let mut points = Vec::new();
    for it in &run.iterations {
        if it.batch.is_empty() {
            continue;
        }
        for id in &it.batch {
            let rec = pool.get(id).ok_or_else(|| MetricsError::UnknownId(id.clone()))?;
            if seen.insert(id.as_str()) && rec.truth == Some(Label::Positive) {
                tp += 1;
            }
        }
        let queried = seen.len();
        let precision = tp as f64 / queried as f64;
        let recall = if total_pos == 0 {
            0.0
        } else {
            tp as f64 / total_pos as f64
        };
        points.push(EvalPoint {
            iteration: it.iteration,
            queried_cum: queried,
            query_ratio: queried as f64 / n,
            precision_cum: precision,
            recall_cum: recall,
            f1_cum: f1(precision, recall),
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("expected csv|json, got {other:?}")),
        }
    }
}

/// Serializes `points` to bytes; identical inputs give identical bytes.
pub fn render_report(points: &[EvalPoint], format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "iteration",
                "queried_cum",
                "query_ratio",
                "precision_cum",
                "recall_cum",
                "f1_cum",
            ])
            .expect("in-memory csv");
            for p in points {
                w.write_record(&[
                    p.iteration.to_string(),
                    p.queried_cum.to_string(),
                    p.query_ratio.to_string(),
                    p.precision_cum.to_string(),
                    p.recall_cum.to_string(),
                    p.f1_cum.to_string(),
                ])
                .expect("in-memory csv");
            }
            w.into_inner().expect("in-memory csv")
        }
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(points).expect("points serialize");
            out.push(b'\n');
            out
        }
    }
}

pub fn emit_report(points: &[EvalPoint], path: &Path, format: ReportFormat) -> Result<(), MetricsError> {
    let err = |e: std::io::Error| MetricsError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut out = BufWriter::new(File::create(path).map_err(err)?);
    out.write_all(&render_report(points, format)).map_err(err)?;
    out.flush().map_err(err)
}

/// Pool size and positive count, enough for the random-selection expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolStats {
    pub size: usize,
    pub positives: usize,
}

impl PoolStats {
    pub fn of(pool: &Corpus) -> Self {
        PoolStats {
            size: pool.len(),
            positives: pool.positive_count(),
        }
    }

    pub fn base_rate(&self) -> f64 {
        self.positives as f64 / self.size as f64
    }
}

/// Expected curve of uniform random querying: precision is the base rate at
/// every ratio (including 0, by convention) and recall equals the ratio.
pub fn random_baseline_curve(stats: PoolStats, ratios: &[f64]) -> Vec<EvalPoint> {
    let base = stats.base_rate();
    ratios
        .iter()
        .enumerate()
        .map(|(i, &r)| EvalPoint {
            iteration: i,
            queried_cum: (r * stats.size as f64).round() as usize,
            query_ratio: r,
            precision_cum: base,
            recall_cum: r,
            f1_cum: f1(base, r),
        })
        .collect()
}

/// Recall after labeling a `ratio` fraction of the pool. Within a batch,
/// items are taken to be labeled one at a time at the batch's hit rate, so the
/// curve is linear between points (starting from the origin); past the last
/// point it holds.
pub fn recall_at_ratio(points: &[EvalPoint], ratio: f64) -> f64 {
    let mut prev = (0.0, 0.0);
    for p in points {
        if p.query_ratio >= ratio {
            if p.query_ratio == prev.0 {
                return p.recall_cum;
            }
            let t = (ratio - prev.0) / (p.query_ratio - prev.0);
            return prev.1 + t.max(0.0) * (p.recall_cum - prev.1);
        }
        prev = (p.query_ratio, p.recall_cum);
    }
    prev.1
}

/// Interpolated precision at `recall`: the best precision among points whose
/// recall is at least `recall`.
pub fn interpolated_precision(points: &[EvalPoint], recall: f64) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.recall_cum >= recall - 1e-12)
        .map(|p| p.precision_cum)
        .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))))
}
