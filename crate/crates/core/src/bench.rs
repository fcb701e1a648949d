//! Generated clustered corpora for end-to-end comparisons when no real
//! embedded corpus is at hand.
//!
//! Real records are drawn around class cluster centers; the synthetic pool is
//! drawn around the positive centers only, with more noise and a skewed
//! (Zipf-like) preference for some clusters, imitating generated examples
//! that over-represent a few themes. Some negative centers are placed at the
//! largest allowed cosine to a positive center to create hard negatives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Corpus, DatasetError, Label, Record, Source};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n: usize,
    pub dim: usize,
    pub positive_rate: f64,
    pub positive_clusters: usize,
    pub negative_clusters: usize,
    /// Fraction of negative centers placed at `max_center_cosine` to some
    /// positive center.
    pub hard_negative_fraction: f64,
    pub max_center_cosine: f64,
    /// Norm of the isotropic noise added to a unit center before normalizing.
    pub noise: f64,
    pub synthetic_size: usize,
    pub synthetic_noise: f64,
    /// Cluster `j` of the synthetic pool has weight `1 / (j+1)^zipf_exponent`.
    pub zipf_exponent: f64,
    pub rng_seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n: 10_000,
            dim: 64,
            positive_rate: 0.1,
            positive_clusters: 20,
            negative_clusters: 60,
            hard_negative_fraction: 0.5,
            max_center_cosine: 0.3,
            noise: 1.5,
            synthetic_size: 2_000,
            synthetic_noise: 1.8,
            zipf_exponent: 1.0,
            rng_seed: 7,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid benchmark config: {0}")]
    Config(String),
    #[error("could not place {0} negative centers under the cosine bound")]
    Centers(usize),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone)]
pub struct Bench {
    pub pool: Corpus,
    pub synthetic: Corpus,
    pub positive_centers: Vec<Vec<f64>>,
    pub negative_centers: Vec<Vec<f64>>,
}

impl Bench {
    /// Largest cosine between a positive and a negative center.
    pub fn max_inter_class_cosine(&self) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for p in &self.positive_centers {
            for q in &self.negative_centers {
                best = best.max(dot64(p, q));
            }
        }
        best
    }
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot64(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn gaussian<R: Rng>(dim: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

fn unit<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    let mut v = gaussian(dim, 1.0, rng);
    normalize(&mut v);
    v
}

fn around<R: Rng>(center: &[f64], noise: f64, rng: &mut R) -> Vec<f32> {
    let dim = center.len();
    let g = gaussian(dim, noise / (dim as f64).sqrt(), rng);
    let mut v: Vec<f64> = center.iter().zip(&g).map(|(c, e)| c + e).collect();
    normalize(&mut v);
    v.into_iter().map(|x| x as f32).collect()
}

impl BenchConfig {
    fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config(m.into()));
        if self.n == 0 || self.dim < 2 {
            return bad("need n > 0 and dim >= 2");
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return bad("positive_rate must be in (0, 1)");
        }
        if self.positive_clusters == 0 || self.negative_clusters == 0 {
            return bad("need at least one cluster per class");
        }
        if !(0.0..=1.0).contains(&self.hard_negative_fraction) {
            return bad("hard_negative_fraction must be in [0, 1]");
        }
        if !(self.max_center_cosine > -1.0 && self.max_center_cosine < 1.0) {
            return bad("max_center_cosine must be in (-1, 1)");
        }
        if self.noise < 0.0 || self.synthetic_noise < 0.0 || self.zipf_exponent < 0.0 {
            return bad("noise levels and zipf_exponent must be nonnegative");
        }
        Ok(())
    }
}

pub fn generate_clustered(cfg: &BenchConfig) -> Result<Bench, BenchError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let positive_centers: Vec<Vec<f64>> = (0..cfg.positive_clusters).map(|_| unit(cfg.dim, &mut rng)).collect();
    let ok = |c: &[f64]| positive_centers.iter().all(|p| dot64(p, c) <= cfg.max_center_cosine + 1e-12);

    let n_hard = (cfg.negative_clusters as f64 * cfg.hard_negative_fraction).round() as usize;
    let mut negative_centers = Vec::with_capacity(cfg.negative_clusters);
    let mut attempts = 0usize;
    while negative_centers.len() < cfg.negative_clusters {
        attempts += 1;
        if attempts > 10_000 * cfg.negative_clusters {
            return Err(BenchError::Centers(cfg.negative_clusters));
        }
        let c = if negative_centers.len() < n_hard {
            // cos(c, p) = max_center_cosine exactly, for a chosen positive p.
            let p = &positive_centers[negative_centers.len() % cfg.positive_clusters];
            let mut u = unit(cfg.dim, &mut rng);
            let along = dot64(&u, p);
            u.iter_mut().zip(p).for_each(|(x, y)| *x -= along * y);
            normalize(&mut u);
            let a = cfg.max_center_cosine;
            let s = (1.0 - a * a).sqrt();
            p.iter().zip(&u).map(|(x, y)| a * x + s * y).collect()
        } else {
            unit(cfg.dim, &mut rng)
        };
        if ok(&c) {
            negative_centers.push(c);
        }
    }

    let n_pos = (cfg.n as f64 * cfg.positive_rate).round() as usize;
    let mut records = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let (center, truth) = if i < n_pos {
            (&positive_centers[i % cfg.positive_clusters], Label::Positive)
        } else {
            (&negative_centers[(i - n_pos) % cfg.negative_clusters], Label::Negative)
        };
        records.push(Record {
            id: String::new(),
            text: None,
            embedding: around(center, cfg.noise, &mut rng),
            truth: Some(truth),
            source: Source::Real,
        });
    }
    // Shuffle so ids carry no class information.
    use rand::seq::SliceRandom;
    records.shuffle(&mut rng);
    for (i, r) in records.iter_mut().enumerate() {
        r.id = format!("r{i:05}");
    }

    let weights: Vec<f64> = (0..cfg.positive_clusters)
        .map(|j| 1.0 / ((j + 1) as f64).powf(cfg.zipf_exponent))
        .collect();
    let pick = WeightedIndex::new(&weights).map_err(|e| BenchError::Config(e.to_string()))?;
    let synthetic: Vec<Record> = (0..cfg.synthetic_size)
        .map(|i| Record {
            id: format!("syn{i:05}"),
            text: None,
            embedding: around(&positive_centers[pick.sample(&mut rng)], cfg.synthetic_noise, &mut rng),
            truth: Some(Label::Positive),
            source: Source::Synthetic,
        })
        .collect();

    Ok(Bench {
        pool: Corpus::from_records(records)?,
        synthetic: Corpus::from_records(synthetic)?,
        positive_centers,
        negative_centers,
    })
}

/// Mean cosine between records of `corpus` and their nearest center; a quick
/// check of how tight the generated clusters are.
pub fn mean_center_cosine(corpus: &Corpus, centers: &[Vec<f64>]) -> f64 {
    let total: f64 = corpus
        .records()
        .iter()
        .map(|r| {
            let e: Vec<f64> = r.embedding.iter().map(|&x| x as f64).collect();
            centers.iter().map(|c| dot64(c, &e)).fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    total / corpus.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchConfig {
        BenchConfig {
            n: 1000,
            synthetic_size: 200,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn shape_and_constraints() {
        let b = generate_clustered(&small()).unwrap();
        assert_eq!(b.pool.len(), 1000);
        assert_eq!(b.pool.dimension(), 64);
        assert_eq!(b.pool.positive_count(), 100);
        assert_eq!(b.synthetic.len(), 200);
        assert!(b.max_inter_class_cosine() <= 0.3 + 1e-9);
        for r in b.pool.records().iter().chain(b.synthetic.records()) {
            let n = crate::dataset::norm(&r.embedding);
            assert!((n - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate_clustered(&small()).unwrap();
        let b = generate_clustered(&small()).unwrap();
        assert_eq!(a.pool.records(), b.pool.records());
        let c = generate_clustered(&BenchConfig { rng_seed: 8, ..small() }).unwrap();
        assert_ne!(a.pool.records(), c.pool.records());
    }

    #[test]
    fn synthetic_pool_is_skewed() {
        let b = generate_clustered(&small()).unwrap();
        let mut counts = vec![0usize; b.positive_centers.len()];
        for r in b.synthetic.records() {
            let e: Vec<f64> = r.embedding.iter().map(|&x| x as f64).collect();
            let j = (0..counts.len())
                .max_by(|&i, &j| dot64(&b.positive_centers[i], &e).total_cmp(&dot64(&b.positive_centers[j], &e)))
                .unwrap();
            counts[j] += 1;
        }
        assert!(counts[0] > counts[counts.len() - 1] * 3, "{counts:?}");
    }
}
