//! Per-iteration record of what a discovery strategy queried and learned.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::dataset::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Ibg,
    Lp,
    Lr,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Ibg => "ibg",
            Strategy::Lp => "lp",
            Strategy::Lr => "lr",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ibg" => Ok(Strategy::Ibg),
            "lp" => Ok(Strategy::Lp),
            "lr" => Ok(Strategy::Lr),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

/// One oracle round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based round number.
    pub iteration: usize,
    pub batch: Vec<String>,
    /// Oracle answers, aligned with `batch`.
    pub labels: Vec<Label>,
    /// Candidate budget used this round (LP and LR only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Points scored this round (LR only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scored: Option<usize>,
}

impl IterationRecord {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| l.is_positive()).count()
    }

    /// Batch precision; `None` for an empty batch.
    pub fn precision(&self) -> Option<f64> {
        (!self.batch.is_empty()).then(|| self.positives() as f64 / self.batch.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub strategy: Strategy,
    pub iterations: Vec<IterationRecord>,
    /// Known negatives handed to a strategy before the first round. They are
    /// never queried and never count toward metrics.
    #[serde(default)]
    pub initial_negatives: Vec<String>,
    /// Non-fatal conditions noticed during the run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RunLog {
    pub fn new(strategy: Strategy) -> Self {
        RunLog {
            strategy,
            iterations: Vec::new(),
            initial_negatives: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn labeled_count(&self) -> usize {
        self.iterations.iter().map(|it| it.batch.len()).sum()
    }

    pub fn positives_found(&self) -> usize {
        self.iterations.iter().map(IterationRecord::positives).sum()
    }

    pub fn labeled_ids(&self) -> HashSet<&str> {
        self.iterations
            .iter()
            .flat_map(|it| it.batch.iter().map(String::as_str))
            .collect()
    }

    /// Ids the oracle confirmed positive, in query order.
    pub fn positive_ids(&self) -> Vec<&str> {
        self.iterations
            .iter()
            .flat_map(|it| {
                it.batch
                    .iter()
                    .zip(&it.labels)
                    .filter(|(_, l)| l.is_positive())
                    .map(|(id, _)| id.as_str())
            })
            .collect()
    }
}

/// Failure of a strategy run.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("the pool is empty")]
    EmptyPool,
    #[error("no seeds given")]
    NoSeeds,
    #[error("seed {0:?} is not in the synthetic corpus")]
    UnknownSeed(String),
    #[error("seed id {0:?} also appears in the pool")]
    SeedInPool(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] crate::simgraph::GraphError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Model(#[from] crate::baseline_lr::LrError),
    /// The oracle failed; `log` holds every round completed before the failure.
    #[error("oracle failed in round {iteration}: {source}")]
    Oracle {
        iteration: usize,
        #[source]
        source: crate::oracle::OracleError,
        log: Box<RunLog>,
    },
}

/// Seed records, checked against the synthetic corpus and the pool.
pub(crate) fn resolve_seeds<'a>(
    pool: &crate::dataset::Corpus,
    synthetic: &'a crate::dataset::Corpus,
    seed_ids: &[String],
) -> Result<Vec<&'a crate::dataset::Record>, RunError> {
    if pool.is_empty() {
        return Err(RunError::EmptyPool);
    }
    if seed_ids.is_empty() {
        return Err(RunError::NoSeeds);
    }
    seed_ids
        .iter()
        .map(|id| {
            if pool.position(id).is_some() {
                return Err(RunError::SeedInPool(id.clone()));
            }
            synthetic
                .get(id)
                .ok_or_else(|| RunError::UnknownSeed(id.clone()))
        })
        .collect()
}
