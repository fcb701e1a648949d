//! Clamped label propagation and the iterative top-K discovery loop.
//!
//! Scores live in `[-1, 1]`: known positives are clamped to `+1`, known
//! negatives to `-1`, everything else starts at `0`. A propagation step is a
//! synchronous `Y <- W Y` with `W` row-normalized, followed by re-clamping.
//! Isolated nodes have zero rows and keep their initial score.
//!
//! Each discovery round propagates from every known label, asks the oracle
//! about the `K` best-scoring unlabeled pool items, and resizes `K` from the
//! round's precision so that roughly `K0` positives turn up per round.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dataset::{Corpus, Label};
use crate::oracle::{LabelBatch, Oracle};
use crate::runlog::{resolve_seeds, IterationRecord, RunError, RunLog, Strategy};
use crate::simgraph::{
    build_lsh_index, build_similarity_graph, row_normalize, LshMode, NormalizedAdjacency, SimilarityGraph,
    DEFAULT_LSH_BITS, DEFAULT_LSH_TABLES,
};

pub const POSITIVE: f64 = 1.0;
pub const NEGATIVE: f64 = -1.0;

/// Scores plus the clamp set they were started from.
#[derive(Debug, Clone, PartialEq)]
pub struct LpState {
    pub scores: Vec<f64>,
    initial: Vec<f64>,
    clamped: Vec<bool>,
    pub iteration: usize,
}

impl LpState {
    pub fn new(initial: Vec<f64>, clamped: Vec<bool>) -> Self {
        assert_eq!(initial.len(), clamped.len());
        LpState {
            scores: initial.clone(),
            initial,
            clamped,
            iteration: 0,
        }
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn is_clamped(&self, i: usize) -> bool {
        self.clamped[i]
    }

    /// One synchronous step; returns `max |ΔY|`.
    pub fn step(&mut self, w: &NormalizedAdjacency) -> f64 {
        let mut next = vec![0.0; self.scores.len()];
        w.mul_vec(&self.scores, &mut next);
        let mut delta = 0.0f64;
        for (i, v) in next.iter_mut().enumerate() {
            if self.clamped[i] {
                *v = self.initial[i];
            } else if w.is_isolated(i) {
                *v = self.scores[i];
            }
            delta = delta.max((*v - self.scores[i]).abs());
        }
        self.scores = next;
        self.iteration += 1;
        delta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub scores: Vec<f64>,
    pub steps: usize,
    pub converged: bool,
    pub last_delta: f64,
}

/// Runs up to `max_steps` steps, stopping early once `max |ΔY| < eps`.
pub fn propagate(
    w: &NormalizedAdjacency,
    initial: &[f64],
    clamped: &[bool],
    max_steps: usize,
    eps: f64,
) -> Propagation {
    let mut state = LpState::new(initial.to_vec(), clamped.to_vec());
    let mut last_delta = f64::INFINITY;
    let mut converged = false;
    while state.iteration < max_steps {
        last_delta = state.step(w);
        if last_delta < eps {
            converged = true;
            break;
        }
    }
    Propagation {
        steps: state.iteration,
        scores: state.scores,
        converged,
        last_delta,
    }
}

/// `ceil(k0 / max(p_prev, k0 / k_max))`, i.e. `k0 / p_prev` clipped to `[k0, k_max]`.
pub fn adaptive_k(k0: usize, p_prev: f64, k_max: usize) -> usize {
    let k_max = k_max.max(k0);
    if p_prev <= k0 as f64 / k_max as f64 {
        return k_max;
    }
    let raw = k0 as f64 / p_prev;
    // Absorb division round-off so that e.g. 3 / (1/3) gives 9, not 10.
    let nearest = raw.round();
    let k = if (raw - nearest).abs() <= 1e-9 * raw.max(1.0) {
        nearest
    } else {
        raw.ceil()
    };
    (k as usize).clamp(k0, k_max)
}

/// Exact integer form of [`adaptive_k`] with `p_prev = positives / batch`.
pub fn adaptive_k_from_counts(k0: usize, positives: usize, batch: usize, k_max: usize) -> usize {
    let k_max = k_max.max(k0);
    if positives == 0 {
        return k_max;
    }
    (k0 * batch).div_ceil(positives).clamp(k0, k_max)
}

/// Positions of the `k` highest scores among `eligible` nodes, ties by id ascending.
pub fn select_top_k<S: AsRef<str>>(scores: &[f64], ids: &[S], k: usize, eligible: &[bool]) -> Vec<usize> {
    let mut cand: Vec<usize> = (0..scores.len()).filter(|&i| eligible[i]).collect();
    let cmp = |a: &usize, b: &usize| {
        scores[*b]
            .total_cmp(&scores[*a])
            .then_with(|| ids[*a].as_ref().cmp(ids[*b].as_ref()))
    };
    if k < cand.len() {
        cand.select_nth_unstable_by(k, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    cand
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpRunConfig {
    pub k0: usize,
    /// Cap on `K`; `None` means `10 * k0`.
    pub k_max: Option<usize>,
    pub rounds: usize,
    /// Propagation steps per round.
    pub t_prop: usize,
    pub eps: f64,
    pub tau: f64,
    pub knn_cap: Option<usize>,
    pub lsh: LshMode,
    pub lsh_tables: usize,
    pub lsh_bits: usize,
    pub lsh_seed: u64,
}

impl Default for LpRunConfig {
    fn default() -> Self {
        LpRunConfig {
            k0: 100,
            k_max: None,
            rounds: 20,
            t_prop: 50,
            eps: 1e-6,
            tau: 0.8,
            knn_cap: None,
            lsh: LshMode::Auto,
            lsh_tables: DEFAULT_LSH_TABLES,
            lsh_bits: DEFAULT_LSH_BITS,
            lsh_seed: 7,
        }
    }
}

impl LpRunConfig {
    pub fn k_max(&self) -> usize {
        self.k_max.unwrap_or(10 * self.k0)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.k0 == 0 {
            return Err(RunError::Config("k0 must be at least 1".into()));
        }
        if self.k_max() < self.k0 {
            return Err(RunError::Config("k_max must be at least k0".into()));
        }
        Ok(())
    }
}

/// Builds the similarity graph over pool + seeds and runs [`run_lp_on_graph`].
pub fn run_lp<O: Oracle>(
    pool: &Corpus,
    synthetic: &Corpus,
    seed_ids: &[String],
    cfg: &LpRunConfig,
    oracle: O,
) -> Result<RunLog, RunError> {
    let graph = build_lp_graph(pool, synthetic, seed_ids, cfg)?;
    run_lp_on_graph(pool, seed_ids.len(), &graph, cfg, oracle)
}

/// Similarity graph whose first `pool.len()` nodes are the pool (in order)
/// followed by the seeds (in `seed_ids` order).
pub fn build_lp_graph(
    pool: &Corpus,
    synthetic: &Corpus,
    seed_ids: &[String],
    cfg: &LpRunConfig,
) -> Result<SimilarityGraph, RunError> {
    let seeds = resolve_seeds(pool, synthetic, seed_ids)?;
    let seed_corpus = Corpus::from_records(seeds.into_iter().cloned().collect())?;
    let all = pool.concat(&seed_corpus)?;
    let index = if cfg.lsh.use_lsh(all.len()) {
        Some(build_lsh_index(&all, cfg.lsh_tables, cfg.lsh_bits, cfg.lsh_seed)?)
    } else {
        None
    };
    Ok(build_similarity_graph(&all, cfg.tau, cfg.knn_cap, index.as_ref())?)
}

/// The discovery loop on a prebuilt graph laid out as in [`build_lp_graph`].
/// Seed nodes are clamped positive and never become candidates.
pub fn run_lp_on_graph<O: Oracle>(
    pool: &Corpus,
    n_seeds: usize,
    graph: &SimilarityGraph,
    cfg: &LpRunConfig,
    mut oracle: O,
) -> Result<RunLog, RunError> {
    cfg.validate()?;
    let n_pool = pool.len();
    if n_pool == 0 {
        return Err(RunError::EmptyPool);
    }
    if graph.len() != n_pool + n_seeds {
        return Err(RunError::Config(format!(
            "graph has {} nodes, expected {} pool + {} seeds",
            graph.len(),
            n_pool,
            n_seeds
        )));
    }
    let w = row_normalize(graph);
    let mut log = RunLog::new(Strategy::Lp);
    let unreachable = unreachable_pool_nodes(graph, n_pool);
    if unreachable == n_pool {
        log.warnings.push("seeds are isolated: no pool item is reachable; candidates fall back to the id tie-break".into());
    } else if unreachable > 0 {
        log.warnings.push(format!("{unreachable} pool items are unreachable from the seeds and keep score 0"));
    }

    let mut initial = vec![0.0; graph.len()];
    let mut clamped = vec![false; graph.len()];
    for i in n_pool..graph.len() {
        initial[i] = POSITIVE;
        clamped[i] = true;
    }
    let mut eligible: Vec<bool> = (0..graph.len()).map(|i| i < n_pool).collect();
    let k_max = cfg.k_max();
    let mut k = cfg.k0;

    for iteration in 1..=cfg.rounds {
        let prop = propagate(&w, &initial, &clamped, cfg.t_prop, cfg.eps);
        let picks = select_top_k(&prop.scores, &graph.node_ids, k, &eligible);
        if picks.is_empty() {
            break;
        }
        let ids: Vec<String> = picks.iter().map(|&p| graph.node_ids[p].clone()).collect();
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
        for (&p, l) in picks.iter().zip(&labels) {
            initial[p] = if *l == Label::Positive { POSITIVE } else { NEGATIVE };
            clamped[p] = true;
            eligible[p] = false;
        }
        let record = IterationRecord {
            iteration,
            batch: ids,
            labels,
            k: Some(k),
            scored: None,
        };
        k = adaptive_k_from_counts(cfg.k0, record.positives(), record.batch.len(), k_max);
        log.iterations.push(record);
    }
    Ok(log)
}

/// Pool nodes (positions `< n_pool`) with no path to any seed node.
fn unreachable_pool_nodes(graph: &SimilarityGraph, n_pool: usize) -> usize {
    let mut seen = vec![false; graph.len()];
    let mut queue: VecDeque<usize> = (n_pool..graph.len()).collect();
    for &s in &queue {
        seen[s] = true;
    }
    while let Some(u) = queue.pop_front() {
        for &(v, _) in &graph.adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen[..n_pool].iter().filter(|&&s| !s).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::TruthOracle;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i:02}")).collect()
    }

    #[test]
    fn path_propagation_by_hand() {
        let g = SimilarityGraph::from_edges(ids(4), &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]);
        let w = row_normalize(&g);
        let p = propagate(&w, &[1.0, 0.0, 0.0, -1.0], &[true, false, false, true], 2, 0.0);
        assert_eq!(p.steps, 2);
        assert_eq!(p.scores, vec![1.0, 0.25, -0.25, -1.0]);
    }

    #[test]
    fn fully_clamped_is_a_fixed_point() {
        let g = SimilarityGraph::from_edges(ids(3), &[(0, 1, 1.0), (1, 2, 1.0)]);
        let w = row_normalize(&g);
        let y0 = [1.0, -1.0, 1.0];
        let p = propagate(&w, &y0, &[true; 3], 10, 0.0);
        assert_eq!(p.scores, y0.to_vec());
    }

    #[test]
    fn single_positive_boundary_converges_to_one() {
        let g = SimilarityGraph::from_edges(ids(5), &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 0, 1.0), (1, 3, 1.0)]);
        let w = row_normalize(&g);
        let p = propagate(&w, &[1.0, 0.0, 0.0, 0.0, 0.0], &[true, false, false, false, false], 10_000, 1e-9);
        assert!(p.converged);
        assert!(p.scores.iter().all(|s| (s - 1.0).abs() < 1e-6));
    }

    #[test]
    fn isolated_nodes_keep_their_score() {
        let g = SimilarityGraph::from_edges(ids(3), &[(0, 1, 1.0)]);
        let w = row_normalize(&g);
        let p = propagate(&w, &[1.0, 0.0, 0.5], &[true, false, false], 5, 0.0);
        assert_eq!(p.scores[2], 0.5);
        assert_eq!(p.scores[1], 1.0);
    }

    #[test]
    fn adaptive_k_examples() {
        assert_eq!(adaptive_k(100, 0.5, 1000), 200);
        assert_eq!(adaptive_k(100, 1.0, 1000), 100);
        assert_eq!(adaptive_k(100, 0.0, 1000), 1000);
        assert_eq!(adaptive_k(3, 1.0 / 3.0, 100), 9);
        assert_eq!(adaptive_k(100, 0.3, 1000), 334);
        assert_eq!(adaptive_k_from_counts(100, 30, 100, 1000), 334);
        assert_eq!(adaptive_k_from_counts(100, 0, 100, 1000), 1000);
    }

    #[test]
    fn top_k_ties_and_exclusions() {
        let names = ["a", "b", "c"];
        let scores = [0.9, 0.5, 0.9];
        assert_eq!(select_top_k(&scores, &names, 2, &[true; 3]), vec![0, 2]);
        assert!(select_top_k(&scores, &names, 2, &[false; 3]).is_empty());
        assert_eq!(select_top_k(&scores, &names, 10, &[true, true, false]), vec![0, 1]);
    }

    fn labeled_pool(n: usize, positive: impl Fn(usize) -> bool) -> Corpus {
        Corpus::from_records(
            ids(n)
                .into_iter()
                .enumerate()
                .map(|(i, id)| crate::dataset::Record {
                    id,
                    text: None,
                    embedding: vec![1.0],
                    truth: Some(if positive(i) { Label::Positive } else { Label::Negative }),
                    source: crate::dataset::Source::Real,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn isolated_seeds_fall_back_to_tie_break_with_warning() {
        let pool = labeled_pool(4, |i| i == 3);
        let mut node_ids = ids(4);
        node_ids.push("seed".into());
        let g = SimilarityGraph::from_edges(node_ids, &[(0, 1, 1.0)]);
        let cfg = LpRunConfig {
            k0: 2,
            rounds: 1,
            ..LpRunConfig::default()
        };
        let log = run_lp_on_graph(&pool, 1, &g, &cfg, TruthOracle::new(&pool)).unwrap();
        assert_eq!(log.iterations[0].batch, vec!["n00", "n01"]);
        assert!(log.warnings[0].contains("isolated"));
    }

    #[test]
    fn negatives_repel_and_k_adapts() {
        // Seed (node 6) touches 0 and 3. 0-1-2 is a positive chain, 3-4-5 a negative one.
        let pool = labeled_pool(6, |i| i < 3);
        let mut node_ids = ids(6);
        node_ids.push("seed".into());
        let g = SimilarityGraph::from_edges(node_ids, &[(6, 0, 1.0), (6, 3, 1.0), (0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0)]);
        let cfg = LpRunConfig {
            k0: 2,
            k_max: Some(4),
            rounds: 3,
            ..LpRunConfig::default()
        };
        let log = run_lp_on_graph(&pool, 1, &g, &cfg, TruthOracle::new(&pool)).unwrap();
        assert_eq!(log.iterations[0].batch, vec!["n00", "n03"]);
        // Precision 1/2 doubles K to 4; the positive chain now outranks the negative one.
        assert_eq!(log.iterations[1].k, Some(4));
        assert_eq!(log.iterations[1].batch[..2], ["n01", "n02"]);
        assert_eq!(log.labeled_count(), 6);
    }
}
