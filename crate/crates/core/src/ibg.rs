//! Iterative bipartite expansion.
//!
//! Each round links every known positive to the still-unlabeled pool items
//! whose cosine exceeds `tau`, keeps each positive's `d_max` strongest links,
//! queries every linked item, and promotes confirmed positives into the known
//! set. Queried items (positive or negative) leave the pool. The graph is
//! rebuilt from scratch every round; the LSH index, when used, is built once.

use serde::{Deserialize, Serialize};

use crate::dataset::Corpus;
use crate::oracle::{LabelBatch, Oracle};
use crate::runlog::{resolve_seeds, IterationRecord, RunError, RunLog, Strategy};
use crate::simgraph::{
    build_bipartite_partial, build_lsh_index, LeftNode, LshMode, DEFAULT_LSH_BITS, DEFAULT_LSH_TABLES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbgConfig {
    pub tau: f64,
    pub d_max: usize,
    /// Iteration budget.
    pub rounds: usize,
    pub stop_on_empty_batch: bool,
    pub lsh: LshMode,
    pub lsh_tables: usize,
    pub lsh_bits: usize,
    pub lsh_seed: u64,
}

impl Default for IbgConfig {
    fn default() -> Self {
        IbgConfig {
            tau: 0.8,
            d_max: 32,
            rounds: 10,
            stop_on_empty_batch: true,
            lsh: LshMode::Auto,
            lsh_tables: DEFAULT_LSH_TABLES,
            lsh_bits: DEFAULT_LSH_BITS,
            lsh_seed: 7,
        }
    }
}

pub fn run_ibg<O: Oracle>(
    pool: &Corpus,
    synthetic: &Corpus,
    seed_ids: &[String],
    cfg: &IbgConfig,
    mut oracle: O,
) -> Result<RunLog, RunError> {
    if cfg.rounds == 0 {
        return Err(RunError::Config("IBG needs at least one round".into()));
    }
    let seeds = resolve_seeds(pool, synthetic, seed_ids)?;
    let index = if cfg.lsh.use_lsh(pool.len()) {
        Some(build_lsh_index(pool, cfg.lsh_tables, cfg.lsh_bits, cfg.lsh_seed)?)
    } else {
        None
    };
    let pool_norms: Vec<f64> = pool
        .records()
        .iter()
        .map(|r| crate::dataset::norm(&r.embedding))
        .collect();

    let mut known: Vec<LeftNode> = seeds
        .iter()
        .map(|r| LeftNode {
            id: &r.id,
            embedding: &r.embedding,
        })
        .collect();
    let mut remaining: Vec<usize> = (0..pool.len()).collect();
    let mut log = RunLog::new(Strategy::Ibg);

    for iteration in 1..=cfg.rounds {
        let graph = build_bipartite_partial(
            &known,
            pool,
            &pool_norms,
            &remaining,
            cfg.tau,
            cfg.d_max,
            index.as_ref(),
        )?;
        let batch_pos: Vec<usize> = graph
            .connected_right()
            .into_iter()
            .map(|slot| remaining[slot])
            .collect();
        if batch_pos.is_empty() {
            if cfg.stop_on_empty_batch {
                break;
            }
            log.iterations.push(IterationRecord {
                iteration,
                batch: Vec::new(),
                labels: Vec::new(),
                k: None,
                scored: None,
            });
            continue;
        }
        let ids: Vec<String> = batch_pos.iter().map(|&p| pool.record(p).id.clone()).collect();
        let batch = LabelBatch::from_ids(iteration, &ids, pool);
        let labels = match oracle.label(&batch) {
            Ok(l) => l,
            Err(source) => {
                return Err(RunError::Oracle {
                    iteration,
                    source,
                    log: Box::new(log),
                })
            }
        };
        for (&pos, label) in batch_pos.iter().zip(&labels) {
            if label.is_positive() {
                let r = pool.record(pos);
                known.push(LeftNode {
                    id: &r.id,
                    embedding: &r.embedding,
                });
            }
        }
        let mut queried = vec![false; pool.len()];
        for &p in &batch_pos {
            queried[p] = true;
        }
        remaining.retain(|&p| !queried[p]);
        log.iterations.push(IterationRecord {
            iteration,
            batch: ids,
            labels,
            k: None,
            scored: None,
        });
        if remaining.is_empty() {
            break;
        }
    }
    Ok(log)
}
