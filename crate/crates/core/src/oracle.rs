//! Labeling authorities.
//!
//! Strategies hand a [`LabelBatch`] to an [`Oracle`] and get one label per
//! item back, aligned with the batch order. The truth oracle reads corpus
//! ground truth, the noisy oracle flips it at a fixed rate, and the human
//! oracle parks the batch in a [`HumanQueue`] until a complete submission
//! arrives.

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Corpus, Label};
use crate::ledger::{Ledger, LedgerError};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("record {0:?} has no ground-truth label")]
    MissingTruth(String),
    #[error("record {0:?} is not in the pool")]
    UnknownId(String),
    #[error("flip probability must lie in [0, 0.5), got {0}")]
    InvalidFlipProb(f64),
    #[error("unknown batch {0:?}")]
    UnknownBatch(String),
    #[error("another batch ({0:?}) is still pending")]
    BatchInFlight(String),
    #[error("submission is missing labels for {missing:?}")]
    Partial { missing: Vec<String> },
    #[error("submission labels ids outside the batch: {extra:?}")]
    Extraneous { extra: Vec<String> },
    #[error("label for {id:?} contradicts an earlier answer")]
    Contradiction { id: String },
    #[error("batch {batch:?} is only partially present in the ledger")]
    PartialReplay { batch: String },
    #[error("oracle was shut down")]
    Cancelled,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Who produced a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Truth,
    Human,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchStatus {
    Pending,
    Answered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchItem {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelBatch {
    pub batch_id: String,
    pub iteration: usize,
    pub items: Vec<BatchItem>,
    /// Unix seconds.
    pub created_at: u64,
    pub status: BatchStatus,
}

impl LabelBatch {
    /// A pending batch for round `iteration`, carrying each item's text when
    /// the pool has it.
    pub fn from_ids(iteration: usize, ids: &[String], pool: &Corpus) -> LabelBatch {
        LabelBatch {
            batch_id: format!("b{iteration}"),
            iteration,
            items: ids
                .iter()
                .map(|id| BatchItem {
                    id: id.clone(),
                    text: pool.get(id).and_then(|r| r.text.clone()),
                })
                .collect(),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            status: BatchStatus::Pending,
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.id.as_str())
    }
}

pub trait Oracle {
    fn source(&self) -> LabelSource;

    /// One label per batch item, in batch order.
    fn label(&mut self, batch: &LabelBatch) -> Result<Vec<Label>, OracleError>;
}

impl<O: Oracle + ?Sized> Oracle for &mut O {
    fn source(&self) -> LabelSource {
        (**self).source()
    }

    fn label(&mut self, batch: &LabelBatch) -> Result<Vec<Label>, OracleError> {
        (**self).label(batch)
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn source(&self) -> LabelSource {
        (**self).source()
    }

    fn label(&mut self, batch: &LabelBatch) -> Result<Vec<Label>, OracleError> {
        (**self).label(batch)
    }
}

/// Ground truth from the pool.
pub struct TruthOracle<'a> {
    pool: &'a Corpus,
}

impl<'a> TruthOracle<'a> {
    pub fn new(pool: &'a Corpus) -> Self {
        TruthOracle { pool }
    }
}

pub fn label_truth(batch: &LabelBatch, pool: &Corpus) -> Result<Vec<Label>, OracleError> {
    batch
        .ids()
        .map(|id| {
            let r = pool.get(id).ok_or_else(|| OracleError::UnknownId(id.to_string()))?;
            r.truth.ok_or_else(|| OracleError::MissingTruth(id.to_string()))
        })
        .collect()
}

impl Oracle for TruthOracle<'_> {
    fn source(&self) -> LabelSource {
        LabelSource::Truth
    }

    fn label(&mut self, batch: &LabelBatch) -> Result<Vec<Label>, OracleError> {
        label_truth(batch, self.pool)
    }
}

/// Ground truth with each label independently flipped with `flip_prob`.
pub struct NoisyOracle<'a> {
    pool: &'a Corpus,
    flip_prob: f64,
    rng: ChaCha8Rng,
}

impl<'a> NoisyOracle<'a> {
    pub fn new(pool: &'a Corpus, flip_prob: f64, rng_seed: u64) -> Result<Self, OracleError> {
        if !(0.0..0.5).contains(&flip_prob) {
            return Err(OracleError::InvalidFlipProb(flip_prob));
        }
        Ok(NoisyOracle {
            pool,
            flip_prob,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        })
    }
}

impl Oracle for NoisyOracle<'_> {
    fn source(&self) -> LabelSource {
        LabelSource::Noisy
    }

    fn label(&mut self, batch: &LabelBatch) -> Result<Vec<Label>, OracleError> {
        let truth = label_truth(batch, self.pool)?;
        Ok(truth
            .into_iter()
            .map(|l| {
                if self.rng.random_bool(self.flip_prob) {
                    l.flipped()
                } else {
                    l
                }
            })
            .collect())
    }
}

/// One-shot helper matching the noisy oracle's behavior for a single batch.
pub fn label_noisy(
    batch: &LabelBatch,
    pool: &Corpus,
    flip_prob: f64,
    rng_seed: u64,
) -> Result<Vec<Label>, OracleError> {
    NoisyOracle::new(pool, flip_prob, rng_seed)?.label(batch)
}

// ---------------------------------------------------------------------------
// Human queue
// ---------------------------------------------------------------------------

#[derive(Default)]
struct QueueState {
    batches: HashMap<String, LabelBatch>,
    answers: HashMap<String, Vec<Label>>,
    pending: Option<String>,
    closed: bool,
}

/// Batches waiting for human verdicts. One writer (the strategy loop) and any
/// number of readers; submissions are all-or-nothing per batch.
#[derive(Default)]
pub struct HumanQueue {
    state: Mutex<QueueState>,
    answered: Condvar,
}

impl HumanQueue {
    pub fn new() -> Arc<Self> {
        Arc::new(HumanQueue::default())
    }

    pub fn enqueue_human_batch(&self, batch: LabelBatch) -> Result<(), OracleError> {
        let mut st = self.state.lock().unwrap();
        if let Some(p) = &st.pending {
            return Err(OracleError::BatchInFlight(p.clone()));
        }
        st.pending = Some(batch.batch_id.clone());
        st.batches.insert(batch.batch_id.clone(), batch);
        Ok(())
    }

    /// The batch currently waiting for labels, if any.
    pub fn pending(&self) -> Option<LabelBatch> {
        let st = self.state.lock().unwrap();
        st.pending.as_ref().map(|id| st.batches[id].clone())
    }

    /// Records a complete set of verdicts for `batch_id`. Resubmitting the same
    /// verdicts for an answered batch is a no-op; different ones are a
    /// contradiction.
    pub fn submit(&self, batch_id: &str, labels: &[(String, Label)]) -> Result<(), OracleError> {
        let mut st = self.state.lock().unwrap();
        let batch = st
            .batches
            .get(batch_id)
            .ok_or_else(|| OracleError::UnknownBatch(batch_id.to_string()))?;
        let given: HashMap<&str, Label> = labels.iter().map(|(id, l)| (id.as_str(), *l)).collect();
        let extra: Vec<String> = given
            .keys()
            .filter(|id| !batch.ids().any(|b| b == **id))
            .map(|id| id.to_string())
            .collect();
        if !extra.is_empty() {
            let mut extra = extra;
            extra.sort();
            return Err(OracleError::Extraneous { extra });
        }
        let missing: Vec<String> = batch
            .ids()
            .filter(|id| !given.contains_key(id))
            .map(str::to_string)
            .collect();
        if !missing.is_empty() {
            return Err(OracleError::Partial { missing });
        }
        let ordered: Vec<Label> = batch.ids().map(|id| given[id]).collect();
        if let Some(prev) = st.answers.get(batch_id) {
            return match batch.ids().zip(prev).zip(&ordered).find(|((_, a), b)| a != b) {
                Some(((id, _), _)) => Err(OracleError::Contradiction { id: id.to_string() }),
                None => Ok(()),
            };
        }
        st.batches.get_mut(batch_id).unwrap().status = BatchStatus::Answered;
        st.answers.insert(batch_id.to_string(), ordered);
        if st.pending.as_deref() == Some(batch_id) {
            st.pending = None;
        }
        self.answered.notify_all();
        Ok(())
    }

    /// Labels for `batch_id` once a complete submission has arrived.
    pub fn poll_answers(&self, batch_id: &str) -> Result<Option<Vec<Label>>, OracleError> {
        let st = self.state.lock().unwrap();
        if !st.batches.contains_key(batch_id) {
            return Err(OracleError::UnknownBatch(batch_id.to_string()));
        }
        Ok(st.answers.get(batch_id).cloned())
    }

    /// Blocks until `batch_id` is answered or the queue is closed.
    pub fn wait_answers(&self, batch_id: &str) -> Result<Vec<Label>, OracleError> {
        let mut st = self.state.lock().unwrap();
        loop {
            if let Some(a) = st.answers.get(batch_id) {
                return Ok(a.clone());
            }
            if st.closed {
                return Err(OracleError::Cancelled);
            }
            if !st.batches.contains_key(batch_id) {
                return Err(OracleError::UnknownBatch(batch_id.to_string()));
            }
            st = self.answered.wait(st).unwrap();
        }
    }

    /// Wakes any waiter with [`OracleError::Cancelled`].
    pub fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.answered.notify_all();
    }
}

/// Oracle backed by a [`HumanQueue`]; `label` blocks until the batch is answered.
pub struct HumanOracle {
    queue: Arc<HumanQueue>,
}

impl HumanOracle {
    pub fn new(queue: Arc<HumanQueue>) -> Self {
        HumanOracle { queue }
    }
}

impl Oracle for HumanOracle {
    fn source(&self) -> LabelSource {
        LabelSource::Human
    }

    fn label(&mut self, batch: &LabelBatch) -> Result<Vec<Label>, OracleError> {
        self.queue.enqueue_human_batch(batch.clone())?;
        self.queue.wait_answers(&batch.batch_id)
    }
}

/// Wraps an oracle with an append-only ledger. Batches already recorded in the
/// ledger are answered from it without consulting the inner oracle, so a
/// deterministic strategy restarted on the same ledger resumes where it left off.
pub struct LedgerOracle<O> {
    inner: O,
    ledger: Ledger,
}

impl<O: Oracle> LedgerOracle<O> {
    pub fn new(inner: O, ledger: Ledger) -> Self {
        LedgerOracle { inner, ledger }
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn into_ledger(self) -> Ledger {
        self.ledger
    }
}

impl<O: Oracle> Oracle for LedgerOracle<O> {
    fn source(&self) -> LabelSource {
        self.inner.source()
    }

    fn label(&mut self, batch: &LabelBatch) -> Result<Vec<Label>, OracleError> {
        let known: Vec<Option<Label>> = batch.ids().map(|id| self.ledger.lookup(id)).collect();
        if !known.is_empty() && known.iter().all(Option::is_some) {
            return Ok(known.into_iter().flatten().collect());
        }
        if known.iter().any(Option::is_some) {
            return Err(OracleError::PartialReplay {
                batch: batch.batch_id.clone(),
            });
        }
        let labels = self.inner.label(batch)?;
        let ids: Vec<String> = batch.ids().map(str::to_string).collect();
        self.ledger
            .append_batch(batch.iteration, &ids, &labels, self.inner.source())?;
        Ok(labels)
    }
}
