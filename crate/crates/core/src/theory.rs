//! Closed-form precision and recall of one round of bipartite expansion on a
//! d-regular graph, and a Monte Carlo harness on planted graphs to check them.
//!
//! Neighborhoods are closed: `N(S₊)` contains `S₊`, so the expansion ratio
//! `h = |N(S₊)| / |S₊|` lies in `[1, d+1]`. The seed set `S` is an independent
//! set and no vertex touches more than two seeds. A non-seed vertex adjacent
//! to exactly one (two) positive seeds is positive with probability `q1`
//! (`q2`); everything else outside `S₊` is negative.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("infeasible: h = {h} with d = {d} gives a negative count (need h >= {bound})")]
    Infeasible { h: f64, d: usize, bound: f64 },
    #[error("planting failed after {attempts} attempts (seed {seed}): {reason}")]
    Generation { seed: u64, attempts: usize, reason: String },
}

pub fn q2_from_q1(q1: f64) -> Result<f64, TheoryError> {
    if !(q1 > 0.0 && q1 < 1.0) {
        return Err(TheoryError::Invalid(format!("q1 must be in (0, 1), got {q1}")));
    }
    Ok(1.0 - (1.0 - q1) * (1.0 - q1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub d: usize,
    /// Fraction of seeds that are truly positive.
    pub p: f64,
    pub q1: f64,
    pub q2: f64,
    /// Expansion ratio of the positive seeds.
    pub h: f64,
    pub s_size: usize,
    pub v_size: usize,
}

impl TheoryParams {
    /// Parameters with `q2` derived from `q1` under independent assignment.
    pub fn derived(d: usize, p: f64, q1: f64, h: f64, s_size: usize, v_size: usize) -> Result<Self, TheoryError> {
        let params = TheoryParams {
            d,
            p,
            q1,
            q2: q2_from_q1(q1)?,
            h,
            s_size,
            v_size,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), TheoryError> {
        let bad = |m: String| Err(TheoryError::Invalid(m));
        if self.d == 0 {
            return bad("d must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.p) {
            return bad(format!("p must be in [0, 1], got {}", self.p));
        }
        if !(self.q1 > 0.0 && self.q1 < self.q2 && self.q2 < 2.0 * self.q1) {
            return bad(format!("need 0 < q1 < q2 < 2*q1, got q1 = {}, q2 = {}", self.q1, self.q2));
        }
        if self.q2 > 1.0 {
            return bad(format!("q2 must be a probability, got {}", self.q2));
        }
        if !(self.h >= 1.0 && self.h <= self.d as f64 + 1.0) {
            return bad(format!("h must be in [1, {}], got {}", self.d + 1, self.h));
        }
        if self.v_size == 0 || self.s_size > self.v_size {
            return bad(format!("need 0 <= |S| <= |V| and |V| > 0, got {} and {}", self.s_size, self.v_size));
        }
        Ok(())
    }

    /// Also require nonnegative `|S₁|` and `|S₂|`.
    pub fn check_feasible(&self) -> Result<(), TheoryError> {
        self.validate()?;
        s1_s2_counts(self.h, self.d, 1.0).map(|_| ())
    }

    /// Expected positives per positive seed: `1 + q1·|S₁|/|S₊| + q2·|S₂|/|S₊|`.
    fn yield_per_positive_seed(&self) -> f64 {
        let (q1, q2, d) = (self.q1, self.q2, self.d as f64);
        (1.0 - 2.0 * q1 + q2) + (q2 - q1) * d + (2.0 * q1 - q2) * self.h
    }
}

/// Expected precision `E[P] / |Q|`.
pub fn expected_precision(params: &TheoryParams) -> f64 {
    let (p, q1, q2, d, h) = (params.p, params.q1, params.q2, params.d as f64, params.h);
    if p == 0.0 {
        return 0.0;
    }
    (2.0 * q1 - q2) + (1.0 + q2 * (d + 1.0 / p) - q1 * (d + 2.0 / p)) / ((1.0 - p) / p + h)
}

/// The same quantity before simplification: positives over queried, both per seed.
pub fn expected_precision_unsimplified(params: &TheoryParams) -> f64 {
    let p = params.p;
    p * params.yield_per_positive_seed() / (1.0 - p + p * params.h)
}

/// Expected `E[P] / |V|`.
pub fn expected_recall(params: &TheoryParams) -> f64 {
    params.p * params.s_size as f64 / params.v_size as f64 * params.yield_per_positive_seed()
}

/// Validity level at which precision stops decreasing in `h`.
pub fn precision_threshold(q1: f64, q2: f64, d: usize) -> f64 {
    (2.0 * q1 - q2) / (1.0 + (q2 - q1) * d as f64)
}

/// `(|S₁|, |S₂|)`: vertices of `N(S₊) \ S₊` adjacent to one and two positive seeds.
pub fn s1_s2_counts(h: f64, d: usize, s_plus: f64) -> Result<(f64, f64), TheoryError> {
    let d_f = d as f64;
    if !(h >= 1.0 && h <= d_f + 1.0) {
        return Err(TheoryError::Invalid(format!("h must be in [1, {}], got {h}", d + 1)));
    }
    let s1 = (2.0 * h - d_f - 2.0) * s_plus;
    if s1 < 0.0 {
        return Err(TheoryError::Infeasible {
            h,
            d,
            bound: (d_f + 2.0) / 2.0,
        });
    }
    Ok((s1, (d_f + 1.0 - h) * s_plus))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub n: usize,
    pub d: usize,
    pub s_size: usize,
    pub p: f64,
    pub q1: f64,
    /// Aim for this expansion ratio; accepted within `H_TOLERANCE`.
    pub h_target: Option<f64>,
    pub rng_seed: u64,
    pub max_retries: usize,
}

pub const H_TOLERANCE: f64 = 0.25;

impl PlantConfig {
    pub fn new(n: usize, d: usize, s_size: usize, p: f64, q1: f64, rng_seed: u64) -> Self {
        PlantConfig {
            n,
            d,
            s_size,
            p,
            q1,
            h_target: None,
            rng_seed,
            max_retries: 100,
        }
    }

    fn validate(&self) -> Result<(), TheoryError> {
        let bad = |m: String| Err(TheoryError::Invalid(m));
        if self.d == 0 || self.d >= self.n {
            return bad(format!("need 0 < d < n, got d = {}, n = {}", self.d, self.n));
        }
        if !(self.n * self.d).is_multiple_of(2) {
            return bad(format!("n*d must be even, got n = {}, d = {}", self.n, self.d));
        }
        if self.s_size == 0 || self.s_size * (self.d + 1) > self.n {
            return bad(format!("need 0 < |S| and |S|*(d+1) <= n, got |S| = {}", self.s_size));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return bad(format!("p must be in [0, 1], got {}", self.p));
        }
        q2_from_q1(self.q1)?;
        if let Some(h) = self.h_target {
            s1_s2_counts(h, self.d, 1.0)?;
        }
        if self.max_retries == 0 {
            return bad("max_retries must be positive".into());
        }
        Ok(())
    }
}

/// A d-regular simple graph with a planted seed set and realized labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedGraph {
    pub n: usize,
    pub d: usize,
    pub adjacency: Vec<Vec<usize>>,
    /// Seed vertices in placement order.
    pub seeds: Vec<usize>,
    /// Coin outcome of each seed, aligned with `seeds`.
    pub seed_positive: Vec<bool>,
    pub labels: Vec<bool>,
    pub q1: f64,
    pub q2: f64,
}

impl PlantedGraph {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n * self.d / 2);
        for (u, nbrs) in self.adjacency.iter().enumerate() {
            out.extend(nbrs.iter().filter(|&&v| u < v).map(|&v| (u, v)));
        }
        out
    }

    pub fn s_plus(&self) -> Vec<usize> {
        self.seeds
            .iter()
            .zip(&self.seed_positive)
            .filter(|(_, &pos)| pos)
            .map(|(&s, _)| s)
            .collect()
    }

    /// Number of positive seeds adjacent to each vertex.
    pub fn positive_seed_counts(&self) -> Vec<u8> {
        let mut count = vec![0u8; self.n];
        for s in self.s_plus() {
            for &v in &self.adjacency[s] {
                count[v] += 1;
            }
        }
        count
    }

    /// `(|S₁|, |S₂|)` by enumeration.
    pub fn s1_s2(&self) -> (usize, usize) {
        let counts = self.positive_seed_counts();
        let s1 = counts.iter().filter(|&&c| c == 1).count();
        let s2 = counts.iter().filter(|&&c| c == 2).count();
        (s1, s2)
    }

    /// `|N(S₊)|`, closed.
    pub fn closed_neighborhood_size(&self) -> usize {
        let (s1, s2) = self.s1_s2();
        self.s_plus().len() + s1 + s2
    }

    pub fn measured_p(&self) -> f64 {
        self.s_plus().len() as f64 / self.seeds.len() as f64
    }

    /// `|N(S₊)| / |S₊|`; `NaN` without positive seeds.
    pub fn measured_h(&self) -> f64 {
        self.closed_neighborhood_size() as f64 / self.s_plus().len() as f64
    }

    /// `|Q| = |S₋| + |N(S₊)|`.
    pub fn query_size(&self) -> usize {
        self.seeds.len() - self.s_plus().len() + self.closed_neighborhood_size()
    }

    /// Positives inside the query set under the current labels.
    pub fn positives_in_query(&self) -> usize {
        let counts = self.positive_seed_counts();
        let seeds_pos = self.s_plus().len();
        seeds_pos + (0..self.n).filter(|&v| counts[v] > 0 && self.labels[v]).count()
    }

    /// Checks every structural and labeling invariant by enumeration.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.adjacency.len() != self.n || self.labels.len() != self.n {
            return Err("size mismatch".into());
        }
        for (u, nbrs) in self.adjacency.iter().enumerate() {
            if nbrs.len() != self.d {
                return Err(format!("vertex {u} has degree {}", nbrs.len()));
            }
            let mut sorted = nbrs.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != nbrs.len() {
                return Err(format!("vertex {u} has a multi-edge"));
            }
            for &v in nbrs {
                if v == u {
                    return Err(format!("vertex {u} has a self-loop"));
                }
                if !self.adjacency[v].contains(&u) {
                    return Err(format!("edge {u}-{v} is not symmetric"));
                }
            }
        }
        let mut in_s = vec![false; self.n];
        for &s in &self.seeds {
            if std::mem::replace(&mut in_s[s], true) {
                return Err(format!("seed {s} repeated"));
            }
        }
        let mut s_count = vec![0usize; self.n];
        for &s in &self.seeds {
            for &v in &self.adjacency[s] {
                if in_s[v] {
                    return Err(format!("seeds {s} and {v} are adjacent"));
                }
                s_count[v] += 1;
            }
        }
        if let Some(v) = (0..self.n).find(|&v| s_count[v] > 2) {
            return Err(format!("vertex {v} touches {} seeds", s_count[v]));
        }
        for (&s, &pos) in self.seeds.iter().zip(&self.seed_positive) {
            if self.labels[s] != pos {
                return Err(format!("seed {s} label differs from its coin"));
            }
        }
        let counts = self.positive_seed_counts();
        for v in 0..self.n {
            if !in_s[v] && counts[v] == 0 && self.labels[v] {
                return Err(format!("vertex {v} is positive without a positive seed neighbor"));
            }
        }
        Ok(())
    }

    /// Redraws the labels of `N(S₊) \ S₊` with probabilities `q1`/`q2`.
    pub fn realize_labels<R: Rng>(&mut self, rng: &mut R) {
        let counts = self.positive_seed_counts();
        let (q1, q2) = (self.q1, self.q2);
        for (label, c) in self.labels.iter_mut().zip(counts) {
            match c {
                1 => *label = rng.random_bool(q1),
                2 => *label = rng.random_bool(q2),
                _ => {}
            }
        }
    }
}

/// Random d-regular simple graph by the pairing model: stubs are paired one
/// edge at a time, pairs that would form a loop or a repeated edge are
/// redrawn, and a dead end restarts the whole construction.
pub fn random_regular_graph<R: Rng>(n: usize, d: usize, rng: &mut R, max_restarts: usize) -> Option<Vec<Vec<usize>>> {
    'restart: for _ in 0..max_restarts {
        let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
        let mut adj: Vec<Vec<usize>> = vec![Vec::with_capacity(d); n];
        while !stubs.is_empty() {
            let mut paired = false;
            for _ in 0..64 {
                let i = rng.random_range(0..stubs.len());
                let j = rng.random_range(0..stubs.len());
                let (u, v) = (stubs[i], stubs[j]);
                if i != j && u != v && !adj[u].contains(&v) {
                    adj[u].push(v);
                    adj[v].push(u);
                    let (hi, lo) = if i > j { (i, j) } else { (j, i) };
                    stubs.swap_remove(hi);
                    stubs.swap_remove(lo);
                    paired = true;
                    break;
                }
            }
            if !paired {
                // Few stubs left: look for any valid pair before giving up.
                let valid: Vec<(usize, usize)> = (0..stubs.len())
                    .flat_map(|i| (i + 1..stubs.len()).map(move |j| (i, j)))
                    .filter(|&(i, j)| stubs[i] != stubs[j] && !adj[stubs[i]].contains(&stubs[j]))
                    .collect();
                if valid.is_empty() {
                    continue 'restart;
                }
                let (i, j) = valid[rng.random_range(0..valid.len())];
                let (u, v) = (stubs[i], stubs[j]);
                adj[u].push(v);
                adj[v].push(u);
                stubs.swap_remove(j);
                stubs.swap_remove(i);
            }
        }
        return Some(adj);
    }
    None
}

/// Tracks how many seeds touch each vertex while seeds are placed.
struct Placement<'a> {
    adj: &'a [Vec<usize>],
    in_s: Vec<bool>,
    s_count: Vec<u8>,
    plus_count: Vec<u8>,
    shared: usize,
}

impl<'a> Placement<'a> {
    fn new(adj: &'a [Vec<usize>]) -> Self {
        let n = adj.len();
        Placement {
            adj,
            in_s: vec![false; n],
            s_count: vec![0; n],
            plus_count: vec![0; n],
            shared: 0,
        }
    }

    fn admissible(&self, v: usize) -> bool {
        !self.in_s[v] && self.s_count[v] == 0 && self.adj[v].iter().all(|&w| self.s_count[w] < 2 && !self.in_s[w])
    }

    /// Shared vertices `v` would add as a positive seed.
    fn new_shared(&self, v: usize) -> usize {
        self.adj[v].iter().filter(|&&w| self.plus_count[w] == 1).count()
    }

    fn place(&mut self, v: usize, positive: bool) {
        self.in_s[v] = true;
        for &w in self.adj[v].iter() {
            self.s_count[w] += 1;
            if positive {
                self.plus_count[w] += 1;
                if self.plus_count[w] == 2 {
                    self.shared += 1;
                }
            }
        }
    }
}

/// Greedy placement of `coins.len()` seeds; positive seeds first. With a
/// target, positive seeds are steered toward (or away from) vertices already
/// touching a positive seed until the shared count reaches `target_shared`.
fn place_seeds<R: Rng>(adj: &[Vec<usize>], coins: &[bool], target_shared: Option<usize>, rng: &mut R) -> Option<Vec<usize>> {
    let n = adj.len();
    let mut st = Placement::new(adj);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut seeds = Vec::with_capacity(coins.len());
    let n_plus = coins.iter().filter(|&&c| c).count();
    for _ in 0..n_plus {
        let v = match target_shared {
            None => order.iter().copied().find(|&v| st.admissible(v))?,
            Some(t) if st.shared < t => {
                // Vertices two steps from a positive seed through a vertex only
                // it touches; take one adding the most shared vertices without
                // overshooting.
                let room = t - st.shared;
                let mut best: Option<(usize, usize)> = None;
                for &u in &seeds {
                    for &w in &adj[u] {
                        if st.plus_count[w] != 1 {
                            continue;
                        }
                        for &v in &adj[w] {
                            if !st.admissible(v) {
                                continue;
                            }
                            let gain = st.new_shared(v);
                            if gain <= room && best.is_none_or(|(g, _)| gain > g) {
                                best = Some((gain, v));
                            }
                        }
                    }
                }
                match best {
                    Some((_, v)) => v,
                    None => order
                        .iter()
                        .copied()
                        .find(|&v| st.admissible(v) && st.new_shared(v) == 0)
                        .or_else(|| order.iter().copied().find(|&v| st.admissible(v)))?,
                }
            }
            Some(_) => order
                .iter()
                .copied()
                .find(|&v| st.admissible(v) && st.new_shared(v) == 0)?,
        };
        st.place(v, true);
        seeds.push(v);
    }
    for _ in n_plus..coins.len() {
        let v = order.iter().copied().find(|&v| st.admissible(v))?;
        st.place(v, false);
        seeds.push(v);
    }
    Some(seeds)
}

/// Builds a planted graph. Seed coins are drawn first, so two configs that
/// differ only in `h_target` share the same `S₊` size.
pub fn generate_planted(cfg: &PlantConfig) -> Result<PlantedGraph, TheoryError> {
    cfg.validate()?;
    let q2 = q2_from_q1(cfg.q1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut coins: Vec<bool> = (0..cfg.s_size).map(|_| rng.random_bool(cfg.p)).collect();
    // Positive seeds are placed first; the seed list keeps that order.
    coins.sort_unstable_by(|a, b| b.cmp(a));
    let n_plus = coins.iter().filter(|&&c| c).count();
    let target_shared = cfg
        .h_target
        .map(|h| ((cfg.d as f64 + 1.0 - h) * n_plus as f64).round().max(0.0) as usize);

    let mut last_reason = String::new();
    for _ in 0..cfg.max_retries {
        let Some(adj) = random_regular_graph(cfg.n, cfg.d, &mut rng, cfg.max_retries) else {
            last_reason = "pairing model kept dead-ending".into();
            continue;
        };
        let Some(seeds) = place_seeds(&adj, &coins, target_shared, &mut rng) else {
            last_reason = "ran out of admissible seed vertices".into();
            continue;
        };
        let mut labels = vec![false; cfg.n];
        for (&s, &c) in seeds.iter().zip(&coins) {
            labels[s] = c;
        }
        let mut g = PlantedGraph {
            n: cfg.n,
            d: cfg.d,
            adjacency: adj,
            seeds,
            seed_positive: coins.clone(),
            labels,
            q1: cfg.q1,
            q2,
        };
        if let Some(h) = cfg.h_target {
            if n_plus > 0 && (g.measured_h() - h).abs() > H_TOLERANCE {
                last_reason = format!("measured h {:.3} missed target {h}", g.measured_h());
                continue;
            }
        }
        g.realize_labels(&mut rng);
        debug_assert_eq!(g.check_invariants(), Ok(()));
        return Ok(g);
    }
    Err(TheoryError::Generation {
        seed: cfg.rng_seed,
        attempts: cfg.max_retries,
        reason: last_reason,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub trials: usize,
    pub precision_mean: f64,
    pub precision_se: f64,
    pub recall_mean: f64,
    pub recall_se: f64,
    pub measured_h: f64,
    pub measured_p: f64,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Repeats label realization on a fixed planted graph and seed split. Trial
/// `i` draws from stream `i` of `rng_seed`, so results do not depend on
/// scheduling.
pub fn monte_carlo(graph: &PlantedGraph, trials: usize, rng_seed: u64) -> Result<MonteCarloResult, TheoryError> {
    if trials == 0 {
        return Err(TheoryError::Invalid("trials must be positive".into()));
    }
    if graph.s_plus().is_empty() {
        return Err(TheoryError::Invalid("the planted seed set has no positive seeds".into()));
    }
    let q = graph.query_size() as f64;
    let v = graph.n as f64;
    let samples: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(t as u64);
            let mut g = graph.clone();
            g.realize_labels(&mut rng);
            let p = g.positives_in_query() as f64;
            (p / q, p / v)
        })
        .collect();
    let (prec, rec): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
    let (precision_mean, precision_se) = mean_se(&prec);
    let (recall_mean, recall_se) = mean_se(&rec);
    Ok(MonteCarloResult {
        trials,
        precision_mean,
        precision_se,
        recall_mean,
        recall_se,
        measured_h: graph.measured_h(),
        measured_p: graph.measured_p(),
    })
}

/// One row of a theory simulation: the closed forms at the measured `p` and
/// `h` next to the empirical means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub n: usize,
    pub d: usize,
    pub s_size: usize,
    pub p: f64,
    pub q1: f64,
    pub q2: f64,
    pub trials: usize,
    pub measured_p: f64,
    pub measured_h: f64,
    pub expected_precision: f64,
    pub precision_mean: f64,
    pub precision_se: f64,
    pub expected_recall: f64,
    pub recall_mean: f64,
    pub recall_se: f64,
}

impl CellResult {
    /// Both empirical means within `k` standard errors of the closed forms.
    pub fn agrees_within(&self, k: f64) -> bool {
        (self.precision_mean - self.expected_precision).abs() <= k * self.precision_se + 1e-12
            && (self.recall_mean - self.expected_recall).abs() <= k * self.recall_se + 1e-12
    }

    pub fn params(&self) -> TheoryParams {
        TheoryParams {
            d: self.d,
            p: self.measured_p,
            q1: self.q1,
            q2: self.q2,
            h: self.measured_h,
            s_size: self.s_size,
            v_size: self.n,
        }
    }
}

pub fn simulate_cell(plant: &PlantConfig, trials: usize, rng_seed: u64) -> Result<CellResult, TheoryError> {
    let g = generate_planted(plant)?;
    let mc = monte_carlo(&g, trials, rng_seed)?;
    let params = TheoryParams {
        d: plant.d,
        p: mc.measured_p,
        q1: g.q1,
        q2: g.q2,
        h: mc.measured_h,
        s_size: plant.s_size,
        v_size: plant.n,
    };
    params.validate()?;
    Ok(CellResult {
        n: plant.n,
        d: plant.d,
        s_size: plant.s_size,
        p: plant.p,
        q1: g.q1,
        q2: g.q2,
        trials,
        measured_p: mc.measured_p,
        measured_h: mc.measured_h,
        expected_precision: expected_precision(&params),
        precision_mean: mc.precision_mean,
        precision_se: mc.precision_se,
        expected_recall: expected_recall(&params),
        recall_mean: mc.recall_mean,
        recall_se: mc.recall_se,
    })
}

pub fn write_cells_csv<W: std::io::Write>(cells: &[CellResult], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(d: usize, p: f64, q1: f64, q2: f64, h: f64) -> TheoryParams {
        TheoryParams {
            d,
            p,
            q1,
            q2,
            h,
            s_size: 50,
            v_size: 1000,
        }
    }

    #[test]
    fn q2_derivation() {
        assert_eq!(q2_from_q1(0.5).unwrap(), 0.75);
        assert!((q2_from_q1(1e-4).unwrap() - 1.9999e-4).abs() < 1e-8);
        assert!(q2_from_q1(1.0).is_err());
        assert!(q2_from_q1(0.0).is_err());
    }

    #[test]
    fn worked_example() {
        let pr = params(10, 1.0, 0.5, 0.75, 11.0);
        // |S₂| = 0 and |S₁| = 10 per seed: 1 + 0.5·10 = 6 positives over 11 queried.
        assert!((expected_precision(&pr) - 6.0 / 11.0).abs() < 1e-12);
        assert!((expected_precision_unsimplified(&pr) - 6.0 / 11.0).abs() < 1e-12);
        assert!((expected_recall(&pr) - 0.3).abs() < 1e-12);
        assert_eq!(expected_recall(&TheoryParams { p: 0.0, ..pr }), 0.0);
        assert!((precision_threshold(0.5, 0.75, 10) - 0.25 / 3.5).abs() < 1e-12);
    }

    #[test]
    fn maximal_diversity_uses_only_q1() {
        for d in 2..12 {
            for &q1 in &[0.1, 0.3, 0.6] {
                let q2 = q2_from_q1(q1).unwrap();
                let pr = params(d, 1.0, q1, q2, d as f64 + 1.0);
                let want = (1.0 + q1 * d as f64) / (1.0 + d as f64);
                assert!((expected_precision(&pr) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn counting_identities() {
        assert_eq!(s1_s2_counts(11.0, 10, 50.0).unwrap(), (500.0, 0.0));
        assert_eq!(s1_s2_counts(7.0, 10, 10.0).unwrap(), (20.0, 40.0));
        assert!(matches!(s1_s2_counts(5.0, 10, 1.0), Err(TheoryError::Infeasible { bound, .. }) if bound == 6.0));
        for d in 1..30usize {
            for h2 in (d + 2)..=(2 * d + 2) {
                // h on a half-integer grid
                let h = h2 as f64 / 2.0;
                for sp in 0..40 {
                    let (s1, s2) = s1_s2_counts(h, d, sp as f64).unwrap();
                    assert_eq!(sp as f64 + s1 + s2, h * sp as f64);
                }
            }
        }
    }

    #[test]
    fn threshold_flips_sign_of_h_dependence() {
        let dh = 1e-3;
        for d in [4usize, 6, 10] {
            for &q1 in &[0.2, 0.3, 0.5, 0.7] {
                let q2 = q2_from_q1(q1).unwrap();
                let ps = precision_threshold(q1, q2, d);
                let h = (d as f64 + 2.0) / 2.0 + 1.0;
                for &p in &[ps * 0.5, ps * 0.9, ps * 1.1, ps * 2.0, 1.0] {
                    if p <= 0.0 || p > 1.0 {
                        continue;
                    }
                    let at = |h| expected_precision(&params(d, p, q1, q2, h));
                    let slope = (at(h + dh) - at(h - dh)) / (2.0 * dh);
                    if p > ps {
                        assert!(slope < 0.0, "d={d} q1={q1} p={p}");
                    } else {
                        assert!(slope > 0.0, "d={d} q1={q1} p={p}");
                    }
                }
            }
        }
    }

    #[test]
    fn threshold_decreases_in_d() {
        for &q1 in &[0.1, 0.5, 0.9] {
            let q2 = q2_from_q1(q1).unwrap();
            for d in 1..20 {
                assert!(precision_threshold(q1, q2, d + 1) < precision_threshold(q1, q2, d));
            }
        }
        assert!(precision_threshold(0.3, 0.6 - 1e-12, 10).abs() < 1e-10);
    }

    #[test]
    fn validation() {
        assert!(params(10, 1.0, 0.5, 0.5, 11.0).validate().is_err());
        assert!(params(10, 1.0, 0.5, 1.0, 11.0).validate().is_err());
        assert!(params(10, 1.0, 0.5, 0.75, 12.0).validate().is_err());
        assert!(params(10, 1.0, 0.5, 0.75, 0.5).validate().is_err());
        assert!(params(10, 1.0, 0.5, 0.75, 5.0).validate().is_ok());
        assert!(params(10, 1.0, 0.5, 0.75, 5.0).check_feasible().is_err());
        assert!(TheoryParams::derived(10, 0.7, 0.5, 9.0, 50, 2000).is_ok());
    }

    #[test]
    fn pairing_model_gives_regular_simple_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, d) in [(10, 3), (50, 4), (200, 10), (7, 6)] {
            let adj = random_regular_graph(n, d, &mut rng, 100).unwrap();
            for (u, nb) in adj.iter().enumerate() {
                assert_eq!(nb.len(), d);
                assert!(!nb.contains(&u));
                for &v in nb {
                    assert_eq!(adj[v].iter().filter(|&&w| w == u).count(), 1);
                }
            }
        }
    }

    #[test]
    fn planted_graph_invariants_by_enumeration() {
        let mut cfg = PlantConfig::new(200, 4, 10, 0.7, 0.5, 7);
        let g = generate_planted(&cfg).unwrap();
        assert_eq!(g.check_invariants(), Ok(()));
        assert_eq!(g.seeds.len(), 10);
        assert_eq!(g.edges().len(), 400);
        let (s1, s2) = g.s1_s2();
        let sp = g.s_plus().len();
        // Edge count out of S₊ and the definition of h.
        assert_eq!(s1 + 2 * s2, 4 * sp);
        assert_eq!(sp + s1 + s2, g.closed_neighborhood_size());

        cfg.s_size = 1;
        assert_eq!(generate_planted(&cfg).unwrap().check_invariants(), Ok(()));
    }

    #[test]
    fn planting_rejects_bad_configs() {
        assert!(generate_planted(&PlantConfig::new(201, 3, 10, 0.5, 0.5, 1)).is_err());
        assert!(generate_planted(&PlantConfig::new(100, 4, 30, 0.5, 0.5, 1)).is_err());
        let mut cfg = PlantConfig::new(100, 4, 10, 0.5, 0.5, 1);
        cfg.h_target = Some(2.0);
        assert!(matches!(generate_planted(&cfg), Err(TheoryError::Infeasible { .. })));
    }

    #[test]
    fn h_target_is_met() {
        for (d, h) in [(6usize, 7.0), (6, 5.0), (10, 9.0), (10, 11.0)] {
            let mut cfg = PlantConfig::new(2000, d, 50, 0.7, 0.5, 3);
            cfg.h_target = Some(h);
            let g = generate_planted(&cfg).unwrap();
            assert_eq!(g.check_invariants(), Ok(()));
            assert!((g.measured_h() - h).abs() <= H_TOLERANCE, "d={d} h={h} got {}", g.measured_h());
        }
    }

    #[test]
    fn monte_carlo_is_deterministic_and_agrees() {
        let cfg = PlantConfig::new(2000, 10, 50, 1.0, 0.5, 11);
        let a = simulate_cell(&cfg, 400, 5).unwrap();
        let b = simulate_cell(&cfg, 400, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.agrees_within(3.0), "{a:?}");
        // Exact recall expectation for a fixed seed split: E[P] / |V|.
        let g = generate_planted(&cfg).unwrap();
        let (s1, s2) = g.s1_s2();
        let ep = g.s_plus().len() as f64 + 0.5 * s1 as f64 + 0.75 * s2 as f64;
        assert!((ep / 2000.0 - a.expected_recall).abs() < 1e-12);
        assert!((ep / g.query_size() as f64 - a.expected_precision).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn precision_forms_agree(d in 1usize..40, p in 0.001f64..=1.0, q1 in 0.01f64..0.99, frac in 0.0f64..=1.0, hfrac in 0.0f64..=1.0) {
            let q2 = q1 + (frac * 0.98 + 0.01) * (q1.min(1.0 - q1));
            let h = 1.0 + hfrac * d as f64;
            let pr = params(d, p, q1, q2, h);
            proptest::prop_assume!(pr.validate().is_ok());
            let a = expected_precision(&pr);
            let b = expected_precision_unsimplified(&pr);
            proptest::prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }

        #[test]
        fn precision_increases_in_p(d in 2usize..20, q1 in 0.05f64..0.9, hfrac in 0.0f64..=1.0, p in 0.05f64..0.95) {
            let q2 = q2_from_q1(q1).unwrap();
            let h = (d as f64 + 2.0) / 2.0 + hfrac * (d as f64 / 2.0);
            let lo = expected_precision(&params(d, p, q1, q2, h));
            let hi = expected_precision(&params(d, p + 0.05, q1, q2, h));
            proptest::prop_assert!(hi > lo);
            let rlo = expected_recall(&params(d, p, q1, q2, h));
            let rhi = expected_recall(&params(d, p + 0.05, q1, q2, h));
            proptest::prop_assert!(rhi > rlo);
            let rh = expected_recall(&params(d, p, q1, q2, (h + 0.1).min(d as f64 + 1.0)));
            proptest::prop_assert!(rh >= rlo);
        }
    }
}
