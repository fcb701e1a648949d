//! Similarity structures: thresholded bipartite graphs with a degree cap,
//! symmetric similarity graphs, their row-normalized adjacency, and a
//! random-hyperplane LSH index for sub-quadratic candidate generation.
//!
//! Every retained edge is verified with the exact cosine, so an LSH-built
//! graph is always a subgraph of the exact one. Ties in similarity are broken
//! by id ascending.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{cosine_with_norms, dot, norm, Corpus};

/// Pools up to this size use exact pairwise similarities in [`LshMode::Auto`].
pub const EXACT_POOL_LIMIT: usize = 20_000;
pub const DEFAULT_LSH_TABLES: usize = 16;
pub const DEFAULT_LSH_BITS: usize = 12;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("tau must lie in [0, 1), got {0}")]
    InvalidTau(f64),
    #[error("d_max must be at least 1")]
    InvalidDegreeCap,
    #[error("knn_cap must be at least 1")]
    InvalidKnnCap,
    #[error("seed set is empty")]
    EmptySeeds,
    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },
    #[error("record {0:?} has a zero-norm embedding")]
    ZeroNorm(String),
    #[error("LSH needs at least one table and 1..=64 bits (got L={tables}, b={bits})")]
    InvalidLsh { tables: usize, bits: usize },
    #[error("LSH index covers {indexed} points but the corpus has {corpus}")]
    IndexMismatch { indexed: usize, corpus: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// How candidate neighbors are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LshMode {
    /// Exact up to [`EXACT_POOL_LIMIT`] points, LSH above.
    #[default]
    Auto,
    On,
    Off,
}

impl LshMode {
    pub fn use_lsh(self, pool_len: usize) -> bool {
        match self {
            LshMode::Auto => pool_len > EXACT_POOL_LIMIT,
            LshMode::On => true,
            LshMode::Off => false,
        }
    }
}

impl std::str::FromStr for LshMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(LshMode::Auto),
            "on" => Ok(LshMode::On),
            "off" => Ok(LshMode::Off),
            other => Err(format!("expected auto|on|off, got {other:?}")),
        }
    }
}

fn check_tau(tau: f64) -> Result<(), GraphError> {
    if (0.0..1.0).contains(&tau) {
        Ok(())
    } else {
        Err(GraphError::InvalidTau(tau))
    }
}

fn norms_of(corpus: &Corpus) -> Result<Vec<f64>, GraphError> {
    corpus
        .records()
        .iter()
        .map(|r| {
            let n = norm(&r.embedding);
            if n == 0.0 {
                Err(GraphError::ZeroNorm(r.id.clone()))
            } else {
                Ok(n)
            }
        })
        .collect()
}

/// Similarity descending, then id ascending.
fn by_sim_then_id<'a>(ids: impl Fn(usize) -> &'a str) -> impl Fn(&(usize, f64), &(usize, f64)) -> Ordering {
    move |a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| ids(a.0).cmp(ids(b.0)))
    }
}

// ---------------------------------------------------------------------------
// LSH
// ---------------------------------------------------------------------------

/// Random-hyperplane (SimHash) index: bit `t` of a signature is
/// `<x, hyperplane_t> >= 0`.
#[derive(Debug, Clone)]
pub struct LshIndex {
    tables: usize,
    bits: usize,
    dimension: usize,
    /// `tables * bits` hyperplanes, each `dimension` long, flattened.
    hyperplanes: Vec<f32>,
    buckets: Vec<HashMap<u64, Vec<usize>>>,
    len: usize,
}

pub fn build_lsh_index(
    corpus: &Corpus,
    tables: usize,
    bits: usize,
    rng_seed: u64,
) -> Result<LshIndex, GraphError> {
    if tables == 0 || bits == 0 || bits > 64 {
        return Err(GraphError::InvalidLsh { tables, bits });
    }
    let dimension = corpus.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let hyperplanes: Vec<f32> = (0..tables * bits * dimension)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g as f32
        })
        .collect();
    let mut index = LshIndex {
        tables,
        bits,
        dimension,
        hyperplanes,
        buckets: vec![HashMap::new(); tables],
        len: corpus.len(),
    };
    let signatures: Vec<Vec<u64>> = corpus
        .records()
        .par_iter()
        .map(|r| (0..tables).map(|t| index.signature(t, &r.embedding)).collect())
        .collect();
    for (pos, sigs) in signatures.iter().enumerate() {
        for (t, sig) in sigs.iter().enumerate() {
            index.buckets[t].entry(*sig).or_default().push(pos);
        }
    }
    Ok(index)
}

impl LshIndex {
    pub fn tables(&self) -> usize {
        self.tables
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn signature(&self, table: usize, x: &[f32]) -> u64 {
        let mut sig = 0u64;
        for bit in 0..self.bits {
            let start = (table * self.bits + bit) * self.dimension;
            let plane = &self.hyperplanes[start..start + self.dimension];
            if dot(x, plane) >= 0.0 {
                sig |= 1u64 << bit;
            }
        }
        sig
    }

    pub fn buckets(&self, table: usize) -> &HashMap<u64, Vec<usize>> {
        &self.buckets[table]
    }

    /// Indexed positions sharing a bucket with `x` in at least one table,
    /// sorted ascending and deduplicated.
    pub fn candidates(&self, x: &[f32]) -> Vec<usize> {
        let mut out = Vec::new();
        for t in 0..self.tables {
            if let Some(b) = self.buckets[t].get(&self.signature(t, x)) {
                out.extend_from_slice(b);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

// ---------------------------------------------------------------------------
// Bipartite graph
// ---------------------------------------------------------------------------

/// Edges from known positives (left) to unlabeled pool items (right).
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    pub left_ids: Vec<String>,
    pub right_ids: Vec<String>,
    /// Per left node: `(right index, similarity)`, similarity descending,
    /// ties by right id ascending.
    pub edges: Vec<Vec<(usize, f64)>>,
    pub tau: f64,
    pub d_max: usize,
}

impl BipartiteGraph {
    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    /// Right indices with at least one edge, ascending.
    pub fn connected_right(&self) -> Vec<usize> {
        let mut hit = vec![false; self.right_ids.len()];
        for e in self.edges.iter().flatten() {
            hit[e.0] = true;
        }
        hit.iter()
            .enumerate()
            .filter_map(|(i, &h)| h.then_some(i))
            .collect()
    }

    pub fn write_dump(&self, path: &Path) -> Result<(), GraphError> {
        let rows = self.left_ids.iter().zip(&self.edges).map(|(id, nbrs)| {
            (
                id.as_str(),
                nbrs.iter()
                    .map(|&(j, s)| (self.right_ids[j].as_str(), s))
                    .collect::<Vec<_>>(),
            )
        });
        write_dump(path, rows)
    }
}

/// A left-side node: any id plus its embedding.
#[derive(Debug, Clone, Copy)]
pub struct LeftNode<'a> {
    pub id: &'a str,
    pub embedding: &'a [f32],
}

/// Bipartite graph from every seed to every pool item.
pub fn build_bipartite(
    seeds: &Corpus,
    pool: &Corpus,
    tau: f64,
    d_max: usize,
    index: Option<&LshIndex>,
) -> Result<BipartiteGraph, GraphError> {
    if seeds.dimension() != pool.dimension() {
        return Err(GraphError::Dimension {
            left: seeds.dimension(),
            right: pool.dimension(),
        });
    }
    let left: Vec<LeftNode> = seeds
        .records()
        .iter()
        .map(|r| LeftNode {
            id: &r.id,
            embedding: &r.embedding,
        })
        .collect();
    let right: Vec<usize> = (0..pool.len()).collect();
    let pool_norms = norms_of(pool)?;
    build_bipartite_partial(&left, pool, &pool_norms, &right, tau, d_max, index)
}

/// Bipartite graph from `left` to the pool items at positions `right`.
///
/// `pool_norms` holds the L2 norm of every pool record; `index`, when given,
/// must be built over the whole pool.
pub fn build_bipartite_partial(
    left: &[LeftNode<'_>],
    pool: &Corpus,
    pool_norms: &[f64],
    right: &[usize],
    tau: f64,
    d_max: usize,
    index: Option<&LshIndex>,
) -> Result<BipartiteGraph, GraphError> {
    check_tau(tau)?;
    if d_max == 0 {
        return Err(GraphError::InvalidDegreeCap);
    }
    if left.is_empty() {
        return Err(GraphError::EmptySeeds);
    }
    if let Some(idx) = index {
        if idx.len() != pool.len() {
            return Err(GraphError::IndexMismatch {
                indexed: idx.len(),
                corpus: pool.len(),
            });
        }
    }
    let mut left_norms = Vec::with_capacity(left.len());
    for l in left {
        if l.embedding.len() != pool.dimension() {
            return Err(GraphError::Dimension {
                left: l.embedding.len(),
                right: pool.dimension(),
            });
        }
        let n = norm(l.embedding);
        if n == 0.0 {
            return Err(GraphError::ZeroNorm(l.id.to_string()));
        }
        left_norms.push(n);
    }
    let mut right_slot = vec![usize::MAX; pool.len()];
    for (slot, &pos) in right.iter().enumerate() {
        right_slot[pos] = slot;
    }
    let right_id = |slot: usize| pool.record(right[slot]).id.as_str();

    let edges: Vec<Vec<(usize, f64)>> = left
        .par_iter()
        .zip(left_norms.par_iter())
        .map(|(l, &ln)| {
            let sim = |pos: usize| {
                cosine_with_norms(l.embedding, pool.embedding(pos), ln, pool_norms[pos])
            };
            let mut nbrs: Vec<(usize, f64)> = match index {
                Some(idx) => idx
                    .candidates(l.embedding)
                    .into_iter()
                    .filter(|&pos| right_slot[pos] != usize::MAX)
                    .map(|pos| (right_slot[pos], sim(pos)))
                    .filter(|e| e.1 > tau)
                    .collect(),
                None => right
                    .iter()
                    .enumerate()
                    .map(|(slot, &pos)| (slot, sim(pos)))
                    .filter(|e| e.1 > tau)
                    .collect(),
            };
            nbrs.sort_by(by_sim_then_id(right_id));
            nbrs.truncate(d_max);
            nbrs
        })
        .collect();

    Ok(BipartiteGraph {
        left_ids: left.iter().map(|l| l.id.to_string()).collect(),
        right_ids: right.iter().map(|&p| pool.record(p).id.clone()).collect(),
        edges,
        tau,
        d_max,
    })
}

// ---------------------------------------------------------------------------
// Similarity graph
// ---------------------------------------------------------------------------

/// Undirected weighted graph over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    pub node_ids: Vec<String>,
    /// Per node: `(neighbor position, similarity)` sorted by position.
    pub adjacency: Vec<Vec<(usize, f64)>>,
    pub tau: f64,
    pub symmetric: bool,
}

impl SimilarityGraph {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search_by_key(&j, |e| e.0).is_ok()
    }

    /// Builds a graph from an explicit undirected edge list (weights are
    /// mirrored). Used for hand-made fixtures and synthetic topologies.
    pub fn from_edges(node_ids: Vec<String>, edges: &[(usize, usize, f64)]) -> SimilarityGraph {
        let mut adjacency = vec![Vec::new(); node_ids.len()];
        for &(i, j, w) in edges {
            if i == j {
                continue;
            }
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for row in &mut adjacency {
            row.sort_by_key(|e| e.0);
            row.dedup_by_key(|e| e.0);
        }
        SimilarityGraph {
            node_ids,
            adjacency,
            tau: 0.0,
            symmetric: true,
        }
    }

    pub fn write_dump(&self, path: &Path) -> Result<(), GraphError> {
        let rows = self.node_ids.iter().zip(&self.adjacency).map(|(id, nbrs)| {
            (
                id.as_str(),
                nbrs.iter()
                    .map(|&(j, s)| (self.node_ids[j].as_str(), s))
                    .collect::<Vec<_>>(),
            )
        });
        write_dump(path, rows)
    }
}

/// Threshold graph over `all`: an edge wherever cosine > `tau`. With
/// `knn_cap`, each node first keeps only its top `knn_cap` neighbors and the
/// kept edges are then symmetrized by union.
pub fn build_similarity_graph(
    all: &Corpus,
    tau: f64,
    knn_cap: Option<usize>,
    index: Option<&LshIndex>,
) -> Result<SimilarityGraph, GraphError> {
    check_tau(tau)?;
    if knn_cap == Some(0) {
        return Err(GraphError::InvalidKnnCap);
    }
    if let Some(idx) = index {
        if idx.len() != all.len() {
            return Err(GraphError::IndexMismatch {
                indexed: idx.len(),
                corpus: all.len(),
            });
        }
    }
    let n = all.len();
    let norms = norms_of(all)?;
    let sim = |i: usize, j: usize| cosine_with_norms(all.embedding(i), all.embedding(j), norms[i], norms[j]);

    // Directed candidate lists: for node i, every j != i with sim > tau.
    // Exact mode computes the upper triangle only and mirrors it.
    let mut lists: Vec<Vec<(usize, f64)>> = match index {
        None => {
            let upper: Vec<Vec<(usize, f64)>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    ((i + 1)..n)
                        .map(|j| (j, sim(i, j)))
                        .filter(|e| e.1 > tau)
                        .collect()
                })
                .collect();
            let mut lists = vec![Vec::new(); n];
            for (i, row) in upper.iter().enumerate() {
                for &(j, s) in row {
                    lists[i].push((j, s));
                    lists[j].push((i, s));
                }
            }
            lists
        }
        Some(idx) => (0..n)
            .into_par_iter()
            .map(|i| {
                idx.candidates(all.embedding(i))
                    .into_iter()
                    .filter(|&j| j != i)
                    .map(|j| (j, sim(i, j)))
                    .filter(|e| e.1 > tau)
                    .collect()
            })
            .collect(),
    };

    let id = |p: usize| all.record(p).id.as_str();
    if let Some(k) = knn_cap {
        lists.par_iter_mut().for_each(|row| {
            row.sort_by(by_sim_then_id(id));
            row.truncate(k);
        });
    }

    // Union symmetrization. LSH candidate lists need it too, since bucket
    // membership is symmetric but a capped list is not.
    let mut adjacency = vec![Vec::new(); n];
    for (i, row) in lists.iter().enumerate() {
        for &(j, s) in row {
            adjacency[i].push((j, s));
            adjacency[j].push((i, s));
        }
    }
    adjacency.par_iter_mut().for_each(|row| {
        row.sort_by_key(|e| e.0);
        row.dedup_by_key(|e| e.0);
    });

    Ok(SimilarityGraph {
        node_ids: all.ids().map(str::to_string).collect(),
        adjacency,
        tau,
        symmetric: true,
    })
}

// ---------------------------------------------------------------------------
// Row-normalized adjacency
// ---------------------------------------------------------------------------

/// CSR matrix with `W[i][j] = 1 / deg(i)` for every edge `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    degree: Vec<usize>,
}

pub fn row_normalize(graph: &SimilarityGraph) -> NormalizedAdjacency {
    let mut row_ptr = Vec::with_capacity(graph.len() + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut degree = Vec::with_capacity(graph.len());
    row_ptr.push(0);
    for row in &graph.adjacency {
        let deg = row.len();
        degree.push(deg);
        if deg > 0 {
            let w = 1.0 / deg as f64;
            for &(j, _) in row {
                cols.push(j);
                vals.push(w);
            }
        }
        row_ptr.push(cols.len());
    }
    NormalizedAdjacency {
        row_ptr,
        cols,
        vals,
        degree,
    }
}

impl NormalizedAdjacency {
    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degree[i]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degree
    }

    pub fn is_isolated(&self, i: usize) -> bool {
        self.degree[i] == 0
    }

    /// `(column, weight)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|e| e.1).sum()
    }

    /// `out = W * y`, rows summed left to right.
    pub fn mul_vec(&self, y: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let mut acc = 0.0;
            for (j, w) in self.row(i) {
                acc += w * y[j];
            }
            *o = acc;
        });
    }
}

#[derive(Serialize)]
struct DumpRow<'a> {
    id: &'a str,
    nbrs: Vec<(&'a str, f64)>,
}

fn write_dump<'a>(
    path: &Path,
    rows: impl Iterator<Item = (&'a str, Vec<(&'a str, f64)>)>,
) -> Result<(), GraphError> {
    let mut out = BufWriter::new(File::create(path)?);
    for (id, nbrs) in rows {
        serde_json::to_writer(&mut out, &DumpRow { id, nbrs }).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Record, Source};

    fn corpus(points: &[(&str, Vec<f32>)]) -> Corpus {
        Corpus::from_records(
            points
                .iter()
                .map(|(id, e)| Record {
                    id: id.to_string(),
                    text: None,
                    embedding: e.clone(),
                    truth: None,
                    source: Source::Real,
                })
                .collect(),
        )
        .unwrap()
    }

    /// Unit vector in 2D at the given cosine from the x axis.
    fn at_cos(c: f64) -> Vec<f32> {
        vec![c as f32, (1.0 - c * c).sqrt() as f32]
    }

    #[test]
    fn bipartite_keeps_top_dmax_above_tau() {
        let seeds = corpus(&[("s", vec![1.0, 0.0])]);
        let pool = corpus(&[("a", at_cos(0.3)), ("b", at_cos(0.9)), ("c", at_cos(0.7))]);
        let g = build_bipartite(&seeds, &pool, 0.5, 2, None).unwrap();
        let got: Vec<&str> = g.edges[0].iter().map(|e| g.right_ids[e.0].as_str()).collect();
        assert_eq!(got, vec!["b", "c"]);
        assert!((g.edges[0][0].1 - 0.9).abs() < 1e-6);
    }

    #[test]
    fn bipartite_no_edges_above_high_tau() {
        let seeds = corpus(&[("s", vec![1.0, 0.0])]);
        let pool = corpus(&[("a", at_cos(0.3)), ("b", at_cos(0.9))]);
        let g = build_bipartite(&seeds, &pool, 0.99, 4, None).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert!(g.connected_right().is_empty());
    }

    #[test]
    fn bipartite_tie_breaks_by_id() {
        let seeds = corpus(&[("s", vec![1.0, 0.0])]);
        let v = at_cos(0.8);
        let pool = corpus(&[("zz", v.clone()), ("aa", v)]);
        let g = build_bipartite(&seeds, &pool, 0.5, 1, None).unwrap();
        assert_eq!(g.right_ids[g.edges[0][0].0], "aa");
    }

    #[test]
    fn bipartite_rejects_bad_arguments() {
        let seeds = corpus(&[("s", vec![1.0, 0.0])]);
        let pool = corpus(&[("a", vec![1.0, 0.0])]);
        assert!(matches!(build_bipartite(&seeds, &pool, 1.0, 1, None), Err(GraphError::InvalidTau(_))));
        assert!(matches!(build_bipartite(&seeds, &pool, 0.5, 0, None), Err(GraphError::InvalidDegreeCap)));
        let wide = corpus(&[("w", vec![1.0, 0.0, 0.0])]);
        assert!(matches!(build_bipartite(&wide, &pool, 0.5, 1, None), Err(GraphError::Dimension { .. })));
    }

    #[test]
    fn collinear_points_form_triangle() {
        let c = corpus(&[("a", vec![1.0, 0.0]), ("b", vec![2.0, 0.0]), ("c", vec![0.5, 0.0])]);
        let g = build_similarity_graph(&c, 0.5, None, None).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert!((0..3).all(|i| g.degree(i) == 2));
    }

    #[test]
    fn orthogonal_clusters_are_disconnected_cliques() {
        // 4 points near e1 and 4 near e2; brute force says within-cluster
        // cosines are > 0.9 and cross-cluster ones < 0.2.
        let mut pts = Vec::new();
        for k in 0..4 {
            let t = 0.05 * k as f32;
            pts.push((format!("x{k}"), vec![1.0, t, 0.0]));
            pts.push((format!("y{k}"), vec![t, 1.0, 0.0]));
        }
        let named: Vec<(&str, Vec<f32>)> = pts.iter().map(|(i, e)| (i.as_str(), e.clone())).collect();
        let c = corpus(&named);
        let g = build_similarity_graph(&c, 0.5, None, None).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                if i == j {
                    continue;
                }
                let brute = crate::dataset::cosine(c.embedding(i), c.embedding(j)).unwrap() > 0.5;
                assert_eq!(g.has_edge(i, j), brute);
                let same = c.record(i).id.as_bytes()[0] == c.record(j).id.as_bytes()[0];
                assert_eq!(g.has_edge(i, j), same);
            }
        }
        assert_eq!(g.edge_count(), 12);
    }

    #[test]
    fn knn_cap_one_on_path_symmetrizes_by_union() {
        // Angles 0, 10, 30, 60 degrees: nearest neighbors are
        // a->b, b->a, c->b, d->c; the union gives b and c degree 2.
        let deg = |d: f64| vec![d.to_radians().cos() as f32, d.to_radians().sin() as f32];
        let c = corpus(&[("a", deg(0.0)), ("b", deg(10.0)), ("c", deg(30.0)), ("d", deg(60.0))]);
        let g = build_similarity_graph(&c, 0.0, Some(1), None).unwrap();
        let degrees: Vec<usize> = (0..4).map(|i| g.degree(i)).collect();
        assert_eq!(degrees, vec![1, 2, 2, 1]);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 2) && g.has_edge(2, 3));
    }

    #[test]
    fn row_normalize_examples() {
        let ids = |n: usize| (0..n).map(|i| format!("n{i}")).collect::<Vec<_>>();
        let star = SimilarityGraph::from_edges(ids(6), &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (0, 4, 1.0)]);
        let w = row_normalize(&star);
        for j in 1..5 {
            assert_eq!(w.get(0, j), 0.25);
        }
        assert!(w.is_isolated(5));
        assert_eq!(w.row_sum(5), 0.0);
        let path = SimilarityGraph::from_edges(ids(3), &[(0, 1, 1.0), (1, 2, 1.0)]);
        let w = row_normalize(&path);
        assert_eq!(w.row(1).collect::<Vec<_>>(), vec![(0, 0.5), (2, 0.5)]);
    }

    #[test]
    fn lsh_is_deterministic_and_hashes_duplicates_together() {
        let c = corpus(&[("a", vec![0.3, 0.4, 0.1]), ("b", vec![0.3, 0.4, 0.1]), ("c", vec![-1.0, 0.2, 0.0])]);
        let i1 = build_lsh_index(&c, 4, 8, 7).unwrap();
        let i2 = build_lsh_index(&c, 4, 8, 7).unwrap();
        for t in 0..4 {
            assert_eq!(i1.buckets(t), i2.buckets(t));
            assert_eq!(i1.signature(t, c.embedding(0)), i1.signature(t, c.embedding(1)));
            let members: usize = i1.buckets(t).values().map(Vec::len).sum();
            assert_eq!(members, 3);
        }
        assert!(matches!(build_lsh_index(&c, 0, 8, 7), Err(GraphError::InvalidLsh { .. })));
        assert!(matches!(build_lsh_index(&c, 1, 65, 7), Err(GraphError::InvalidLsh { .. })));
    }

    #[test]
    fn dump_has_one_line_per_node() {
        let c = corpus(&[("a", vec![1.0, 0.0]), ("b", vec![1.0, 0.1])]);
        let g = build_similarity_graph(&c, 0.5, None, None).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        g.write_dump(f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["id"], "a");
        assert_eq!(first["nbrs"][0][0], "b");
        assert_eq!(text.lines().count(), 2);
    }
}
