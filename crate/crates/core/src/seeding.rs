//! Seed selection from the synthetic pool.
//!
//! Two methods: uniform sampling without replacement, and a coverage-based
//! selection. The coverage method searches (by bisection) for the largest
//! cosine radius `r` at which `k` greedy max-coverage picks, each covering
//! `{x : cos(x, s) >= r}`, reach a `c` fraction of the pool.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{cosine_with_norms, norm, Corpus};

/// Bisection stops once the radius bracket is this narrow.
pub const RADIUS_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SeedError {
    #[error("k = {k} is outside 1..={pool}")]
    InvalidK { k: usize, pool: usize },
    #[error("coverage c = {0} must lie in (0, 1]")]
    InvalidCoverage(f64),
    #[error("coverage {achieved:.4} < {target} even at the minimum radius {radius}")]
    Infeasible {
        achieved: f64,
        target: f64,
        radius: f64,
    },
    #[error("record {0:?} has a zero-norm embedding")]
    ZeroNorm(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedMethod {
    Random,
    Acs,
}

impl std::str::FromStr for SeedMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(SeedMethod::Random),
            "acs" => Ok(SeedMethod::Acs),
            other => Err(format!("expected random|acs, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedConfig {
    pub k: usize,
    pub c: f64,
    pub method: SeedMethod,
    pub rng_seed: u64,
    /// Lowest cosine radius the coverage search may use.
    #[serde(default = "default_min_radius")]
    pub min_radius: f64,
}

fn default_min_radius() -> f64 {
    -1.0
}

impl SeedConfig {
    pub fn new(k: usize, c: f64, method: SeedMethod, rng_seed: u64) -> Self {
        SeedConfig {
            k,
            c,
            method,
            rng_seed,
            min_radius: default_min_radius(),
        }
    }

    pub fn validate(&self, pool_len: usize) -> Result<(), SeedError> {
        if self.k == 0 || self.k > pool_len {
            return Err(SeedError::InvalidK {
                k: self.k,
                pool: pool_len,
            });
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(SeedError::InvalidCoverage(self.c));
        }
        Ok(())
    }
}

/// Dispatches on `cfg.method`.
pub fn select_seeds(pool: &Corpus, cfg: &SeedConfig) -> Result<Vec<String>, SeedError> {
    match cfg.method {
        SeedMethod::Random => sample_random_seeds(pool, cfg),
        SeedMethod::Acs => acs_select(pool, cfg).map(|s| s.ids),
    }
}

/// `k` distinct ids drawn uniformly without replacement.
pub fn sample_random_seeds(pool: &Corpus, cfg: &SeedConfig) -> Result<Vec<String>, SeedError> {
    cfg.validate(pool.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    Ok(rand::seq::index::sample(&mut rng, pool.len(), cfg.k)
        .into_iter()
        .map(|p| pool.record(p).id.clone())
        .collect())
}

/// Result of the coverage-based selection.
#[derive(Debug, Clone, PartialEq)]
pub struct AcsSelection {
    pub ids: Vec<String>,
    /// Cosine radius the picks were made at.
    pub radius: f64,
    /// Fraction of the pool covered.
    pub coverage: f64,
}

pub fn acs_select(pool: &Corpus, cfg: &SeedConfig) -> Result<AcsSelection, SeedError> {
    cfg.validate(pool.len())?;
    let cover = CoverageProblem::new(pool)?;
    let target = cfg.c * pool.len() as f64;
    let feasible = |g: &GreedyRun| g.covered as f64 >= target - 1e-9;

    let at_min = cover.greedy(cfg.min_radius, cfg.k);
    if !feasible(&at_min) {
        return Err(SeedError::Infeasible {
            achieved: at_min.covered as f64 / pool.len() as f64,
            target: cfg.c,
            radius: cfg.min_radius,
        });
    }
    let (mut lo, mut hi) = (cfg.min_radius, 1.0);
    let mut best = (lo, at_min);
    let top = cover.greedy(hi, cfg.k);
    if feasible(&top) {
        best = (hi, top);
    } else {
        while hi - lo > RADIUS_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            let run = cover.greedy(mid, cfg.k);
            if feasible(&run) {
                lo = mid;
                best = (mid, run);
            } else {
                hi = mid;
            }
        }
    }
    let (radius, run) = best;
    Ok(AcsSelection {
        ids: run.picks.iter().map(|&p| pool.record(p).id.clone()).collect(),
        radius,
        coverage: run.covered as f64 / pool.len() as f64,
    })
}

/// Greedy max-coverage outcome at one radius.
#[derive(Debug, Clone)]
pub struct GreedyRun {
    pub picks: Vec<usize>,
    pub covered: usize,
}

/// Pairwise-cosine neighborhoods over a pool, rebuilt per radius.
pub struct CoverageProblem<'a> {
    pool: &'a Corpus,
    norms: Vec<f64>,
    /// Positions sorted by id, for the id-ascending tie-break.
    id_order: Vec<usize>,
}

impl<'a> CoverageProblem<'a> {
    pub fn new(pool: &'a Corpus) -> Result<Self, SeedError> {
        let norms = pool
            .records()
            .iter()
            .map(|r| {
                let n = norm(&r.embedding);
                if n == 0.0 {
                    Err(SeedError::ZeroNorm(r.id.clone()))
                } else {
                    Ok(n)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut id_order: Vec<usize> = (0..pool.len()).collect();
        id_order.sort_by(|&a, &b| pool.record(a).id.cmp(&pool.record(b).id));
        Ok(CoverageProblem {
            pool,
            norms,
            id_order,
        })
    }

    /// `neighborhoods(r)[i]` = bitset of `{j : cos(i, j) >= r}`.
    pub fn neighborhoods(&self, radius: f64) -> Vec<BitSet> {
        let n = self.pool.len();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut set = BitSet::new(n);
                let ei = self.pool.embedding(i);
                for j in 0..n {
                    let s = if i == j {
                        1.0
                    } else {
                        cosine_with_norms(ei, self.pool.embedding(j), self.norms[i], self.norms[j])
                    };
                    if s >= radius {
                        set.insert(j);
                    }
                }
                set
            })
            .collect()
    }

    /// `k` greedy picks at `radius` (fewer only if the pool is smaller). Once
    /// everything reachable is covered, remaining picks go to unpicked points
    /// in id order.
    pub fn greedy(&self, radius: f64, k: usize) -> GreedyRun {
        let sets = self.neighborhoods(radius);
        let n = self.pool.len();
        let mut covered = BitSet::new(n);
        let mut picked = vec![false; n];
        let mut count = 0usize;
        let mut picks = Vec::new();
        while picks.len() < k {
            let mut best: Option<(usize, usize)> = None;
            for &i in &self.id_order {
                if picked[i] {
                    continue;
                }
                let gain = sets[i].count_minus(&covered);
                if best.is_none_or(|(_, g)| gain > g) {
                    best = Some((i, gain));
                }
            }
            let Some((i, gain)) = best else { break };
            covered.union_with(&sets[i]);
            count += gain;
            picked[i] = true;
            picks.push(i);
        }
        GreedyRun {
            picks,
            covered: count,
        }
    }
}

/// Fixed-size bitset over `u64` words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    pub fn new(n: usize) -> Self {
        BitSet {
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// `|self \ other|`
    pub fn count_minus(&self, other: &BitSet) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & !b).count_ones() as usize)
            .sum()
    }

    pub fn union_with(&mut self, other: &BitSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }
}

/// One id per line.
pub fn write_seed_file(ids: &[String], path: &Path) -> Result<(), SeedError> {
    let mut text = ids.join("\n");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_seed_file(path: &Path) -> Result<Vec<String>, SeedError> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{cosine, Record, Source};
    use rand::Rng;

    fn corpus(vecs: Vec<Vec<f32>>) -> Corpus {
        Corpus::from_records(
            vecs.into_iter()
                .enumerate()
                .map(|(i, e)| Record {
                    id: format!("p{i:03}"),
                    text: None,
                    embedding: e,
                    truth: None,
                    source: Source::Synthetic,
                })
                .collect(),
        )
        .unwrap()
    }

    /// Noisy points around the given 3D centers.
    fn clustered(centers: &[[f32; 3]], per: usize, noise: f32, seed: u64) -> Corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for c in centers {
            for _ in 0..per {
                out.push(c.iter().map(|v| v + rng.random_range(-noise..noise)).collect());
            }
        }
        corpus(out)
    }

    #[test]
    fn random_exhaustive_and_deterministic() {
        let pool = clustered(&[[1.0, 0.0, 0.0]], 10, 0.1, 1);
        let cfg = SeedConfig::new(10, 1.0, SeedMethod::Random, 3);
        let mut all = sample_random_seeds(&pool, &cfg).unwrap();
        all.sort();
        assert_eq!(all, pool.ids().map(String::from).collect::<Vec<_>>());
        let cfg = SeedConfig::new(4, 1.0, SeedMethod::Random, 3);
        assert_eq!(sample_random_seeds(&pool, &cfg).unwrap(), sample_random_seeds(&pool, &cfg).unwrap());
        let cfg = SeedConfig::new(11, 1.0, SeedMethod::Random, 3);
        assert!(matches!(sample_random_seeds(&pool, &cfg), Err(SeedError::InvalidK { .. })));
    }

    #[test]
    fn acs_picks_one_point_per_separated_cluster() {
        let pool = clustered(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], 8, 0.15, 2);
        let sel = acs_select(&pool, &SeedConfig::new(2, 1.0, SeedMethod::Acs, 7)).unwrap();
        assert_eq!(sel.ids.len(), 2);
        assert_eq!(sel.coverage, 1.0);
        // Brute force over all 2-subsets at the chosen radius: the selection
        // attains the maximum coverage, and it is one point per cluster.
        let n = pool.len();
        let covers = |i: usize, j: usize| cosine(pool.embedding(i), pool.embedding(j)).unwrap() >= sel.radius;
        let cov = |a: usize, b: usize| (0..n).filter(|&x| covers(a, x) || covers(b, x)).count();
        let best = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).map(|(a, b)| cov(a, b)).max().unwrap();
        let a = pool.position(&sel.ids[0]).unwrap();
        let b = pool.position(&sel.ids[1]).unwrap();
        assert_eq!(cov(a, b), best);
        assert_ne!(a / 8, b / 8);
    }

    #[test]
    fn acs_with_k_equal_pool_stops_at_coverage() {
        let pool = clustered(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], 5, 0.2, 4);
        let cfg = SeedConfig::new(pool.len(), 0.4, SeedMethod::Acs, 1);
        let sel = acs_select(&pool, &cfg).unwrap();
        assert!(sel.ids.len() <= pool.len());
        assert!(sel.coverage >= 0.4);
        assert_eq!(sel.radius, 1.0);
    }

    #[test]
    fn acs_infeasible_at_min_radius_reports_coverage() {
        let pool = clustered(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]], 4, 0.05, 5);
        let mut cfg = SeedConfig::new(1, 1.0, SeedMethod::Acs, 1);
        cfg.min_radius = 0.5;
        match acs_select(&pool, &cfg) {
            Err(SeedError::Infeasible { achieved, .. }) => assert!((achieved - 0.5).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn greedy_step_is_optimal_by_brute_force() {
        for seed in 0..5 {
            let pool = clustered(&[[1.0, 0.2, 0.0], [0.1, 1.0, 0.3], [0.0, 0.3, 1.0], [0.7, 0.7, 0.0]], 12, 0.4, seed);
            let sel = acs_select(&pool, &SeedConfig::new(4, 0.8, SeedMethod::Acs, 0)).unwrap();
            let n = pool.len();
            let nb = |i: usize| -> Vec<usize> {
                (0..n)
                    .filter(|&j| i == j || cosine(pool.embedding(i), pool.embedding(j)).unwrap() >= sel.radius)
                    .collect()
            };
            let mut covered = vec![false; n];
            for id in &sel.ids {
                let pick = pool.position(id).unwrap();
                let gain = |i: usize| nb(i).into_iter().filter(|&j| !covered[j]).count();
                let best = (0..n).map(gain).max().unwrap();
                assert_eq!(gain(pick), best, "seed {seed}");
                for j in nb(pick) {
                    covered[j] = true;
                }
            }
            let frac = covered.iter().filter(|&&c| c).count() as f64 / n as f64;
            assert!(frac >= 0.8);
            assert!((frac - sel.coverage).abs() < 1e-12);
        }
    }

    #[test]
    fn acs_seeds_are_more_diverse_than_random_on_average() {
        let mean_pair_sim = |pool: &Corpus, ids: &[String]| {
            let mut total = 0.0;
            let mut pairs = 0;
            for (a, ia) in ids.iter().enumerate() {
                for ib in &ids[a + 1..] {
                    total += cosine(&pool.get(ia).unwrap().embedding, &pool.get(ib).unwrap().embedding).unwrap();
                    pairs += 1;
                }
            }
            total / pairs as f64
        };
        let (mut acs, mut rnd) = (0.0, 0.0);
        for trial in 0..20 {
            // Unbalanced clusters: random sampling over-represents the big one.
            let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
            let mut pts = Vec::new();
            for (c, size) in [([1.0f32, 0.0, 0.0], 40), ([0.0, 1.0, 0.0], 6), ([0.0, 0.0, 1.0], 6), ([0.6, 0.0, -0.8], 6)] {
                for _ in 0..size {
                    pts.push(c.iter().map(|v| v + rng.random_range(-0.2..0.2)).collect());
                }
            }
            let pool = corpus(pts);
            acs += mean_pair_sim(&pool, &acs_select(&pool, &SeedConfig::new(4, 0.9, SeedMethod::Acs, trial)).unwrap().ids);
            rnd += mean_pair_sim(&pool, &sample_random_seeds(&pool, &SeedConfig::new(4, 0.9, SeedMethod::Random, trial)).unwrap());
        }
        assert!(acs <= rnd, "acs {acs} vs random {rnd}");
    }

    #[test]
    fn seed_file_round_trip() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let ids = vec!["a".to_string(), "b".to_string()];
        write_seed_file(&ids, f.path()).unwrap();
        assert_eq!(read_seed_file(f.path()).unwrap(), ids);
    }
}
