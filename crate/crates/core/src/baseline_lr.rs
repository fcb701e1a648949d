//! Logistic-regression active-learning baseline.
//!
//! The model is trained by full-batch gradient descent on the mean log-loss
//! plus `l2/2 * |w|^2` (the bias is not penalized). Each round scores a
//! uniform sample of at most `B` unlabeled pool items (or the whole remaining
//! pool without a budget), sends the top `K` to the oracle, and retrains.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Corpus, Label};
use crate::labelprop::{adaptive_k_from_counts, select_top_k};
use crate::oracle::{LabelBatch, Oracle};
use crate::runlog::{resolve_seeds, IterationRecord, RunError, RunLog, Strategy};

/// The inference budgets of the reference benchmark grid.
pub const BUDGET_GRID: [usize; 4] = [1_000, 4_000, 8_000, 16_000];

#[derive(Debug, Error)]
pub enum LrError {
    #[error("training data is empty")]
    Empty,
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("feature dimension {found} does not match model dimension {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("{features} feature rows but {labels} labels")]
    Misaligned { features: usize, labels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    /// Start each retraining from the previous weights instead of zeros.
    #[serde(default)]
    pub warm_start: bool,
}

impl Default for LrHyper {
    fn default() -> Self {
        LrHyper {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
            warm_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub hyper: LrHyper,
    /// Training loss before each epoch, then after the last one.
    pub loss_history: Vec<f64>,
}

impl LrModel {
    pub fn zeros(dimension: usize, hyper: LrHyper) -> Self {
        LrModel {
            weights: vec![0.0; dimension],
            bias: 0.0,
            hyper,
            loss_history: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, x: &[f32]) -> f64 {
        let mut z = self.bias;
        for (w, v) in self.weights.iter().zip(x) {
            z += w * f64::from(*v);
        }
        z
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Regularized mean log-loss and its gradient at `params = [w..., b]`.
pub fn loss_and_gradient(params: &[f64], features: &[&[f32]], labels: &[bool], l2: f64) -> (f64, Vec<f64>) {
    let d = params.len() - 1;
    let (w, b) = (&params[..d], params[d]);
    let n = features.len() as f64;
    let mut grad = vec![0.0; d + 1];
    let mut loss = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let mut z = b;
        for (wi, xi) in w.iter().zip(x.iter()) {
            z += wi * f64::from(*xi);
        }
        let y = if y { 1.0 } else { 0.0 };
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, xi) in grad[..d].iter_mut().zip(x.iter()) {
            *g += r * f64::from(*xi);
        }
        grad[d] += r;
    }
    for g in &mut grad {
        *g /= n;
    }
    loss /= n;
    let mut penalty = 0.0;
    for (g, wi) in grad[..d].iter_mut().zip(w) {
        *g += l2 * wi;
        penalty += wi * wi;
    }
    (loss + 0.5 * l2 * penalty, grad)
}

fn check_training_set(features: &[&[f32]], labels: &[bool]) -> Result<usize, LrError> {
    if features.len() != labels.len() {
        return Err(LrError::Misaligned {
            features: features.len(),
            labels: labels.len(),
        });
    }
    let d = features.first().ok_or(LrError::Empty)?.len();
    if let Some(x) = features.iter().find(|x| x.len() != d) {
        return Err(LrError::Dimension {
            expected: d,
            found: x.len(),
        });
    }
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(LrError::SingleClass);
    }
    Ok(d)
}

pub fn train_logistic(features: &[&[f32]], labels: &[bool], hyper: LrHyper) -> Result<LrModel, LrError> {
    let d = check_training_set(features, labels)?;
    train_from(LrModel::zeros(d, hyper), features, labels)
}

/// Gradient descent starting from `start`'s weights.
pub fn train_from(start: LrModel, features: &[&[f32]], labels: &[bool]) -> Result<LrModel, LrError> {
    let d = check_training_set(features, labels)?;
    if d != start.dimension() {
        return Err(LrError::Dimension {
            expected: start.dimension(),
            found: d,
        });
    }
    let hyper = start.hyper;
    let mut params = start.weights;
    params.push(start.bias);
    let mut history = Vec::with_capacity(hyper.epochs + 1);
    for _ in 0..hyper.epochs {
        let (loss, grad) = loss_and_gradient(&params, features, labels, hyper.l2);
        history.push(loss);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= hyper.learning_rate * g;
        }
    }
    history.push(loss_and_gradient(&params, features, labels, hyper.l2).0);
    let bias = params.pop().unwrap();
    Ok(LrModel {
        weights: params,
        bias,
        hyper,
        loss_history: history,
    })
}

pub fn predict_proba(model: &LrModel, features: &[&[f32]]) -> Result<Vec<f64>, LrError> {
    features
        .iter()
        .map(|x| {
            if x.len() != model.dimension() {
                Err(LrError::Dimension {
                    expected: model.dimension(),
                    found: x.len(),
                })
            } else {
                Ok(sigmoid(model.logit(x)))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrBaselineConfig {
    /// Inference budget per round; `None` scores the whole remaining pool.
    pub budget: Option<usize>,
    pub k0: usize,
    pub k_max: Option<usize>,
    pub rounds: usize,
    pub n_init_negatives: usize,
    pub rng_seed: u64,
    pub hyper: LrHyper,
}

impl Default for LrBaselineConfig {
    fn default() -> Self {
        LrBaselineConfig {
            budget: None,
            k0: 100,
            k_max: None,
            rounds: 20,
            n_init_negatives: 19,
            rng_seed: 7,
            hyper: LrHyper::default(),
        }
    }
}

impl LrBaselineConfig {
    pub fn k_max(&self) -> usize {
        self.k_max.unwrap_or(10 * self.k0)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.k0 == 0 {
            return Err(RunError::Config("k0 must be at least 1".into()));
        }
        if let Some(b) = self.budget {
            if b < self.k0 {
                return Err(RunError::Config(format!("budget {b} is below k0 {}", self.k0)));
            }
        }
        if self.n_init_negatives == 0 {
            return Err(RunError::Config("the baseline needs at least one initial negative".into()));
        }
        Ok(())
    }
}

pub fn run_lr_baseline<O: Oracle>(
    pool: &Corpus,
    synthetic: &Corpus,
    seed_ids: &[String],
    cfg: &LrBaselineConfig,
    mut oracle: O,
) -> Result<RunLog, RunError> {
    cfg.validate()?;
    let seeds = resolve_seeds(pool, synthetic, seed_ids)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let negatives: Vec<usize> = (0..pool.len())
        .filter(|&p| pool.record(p).truth == Some(Label::Negative))
        .collect();
    if negatives.len() < cfg.n_init_negatives {
        return Err(RunError::Config(format!(
            "pool has {} known negatives, {} requested",
            negatives.len(),
            cfg.n_init_negatives
        )));
    }
    let init_neg: Vec<usize> = rand::seq::index::sample(&mut rng, negatives.len(), cfg.n_init_negatives)
        .into_iter()
        .map(|i| negatives[i])
        .collect();

    let mut train_x: Vec<&[f32]> = seeds.iter().map(|r| r.embedding.as_slice()).collect();
    let mut train_y: Vec<bool> = vec![true; train_x.len()];
    let mut known = vec![false; pool.len()];
    for &p in &init_neg {
        train_x.push(pool.embedding(p));
        train_y.push(false);
        known[p] = true;
    }

    let mut log = RunLog::new(Strategy::Lr);
    log.initial_negatives = init_neg.iter().map(|&p| pool.record(p).id.clone()).collect();
    let mut model = train_logistic(&train_x, &train_y, cfg.hyper)?;
    let mut k = cfg.k0;
    let k_max = cfg.k_max();

    for iteration in 1..=cfg.rounds {
        let unlabeled: Vec<usize> = (0..pool.len()).filter(|&p| !known[p]).collect();
        if unlabeled.is_empty() {
            break;
        }
        let scored: Vec<usize> = match cfg.budget {
            Some(b) if b < unlabeled.len() => {
                let mut s: Vec<usize> = rand::seq::index::sample(&mut rng, unlabeled.len(), b)
                    .into_iter()
                    .map(|i| unlabeled[i])
                    .collect();
                s.sort_unstable();
                s
            }
            _ => unlabeled,
        };
        let feats: Vec<&[f32]> = scored.iter().map(|&p| pool.embedding(p)).collect();
        let probs = predict_proba(&model, &feats)?;
        let names: Vec<&str> = scored.iter().map(|&p| pool.record(p).id.as_str()).collect();
        let picks: Vec<usize> = select_top_k(&probs, &names, k, &vec![true; scored.len()])
            .into_iter()
            .map(|i| scored[i])
            .collect();
        let ids: Vec<String> = picks.iter().map(|&p| pool.record(p).id.clone()).collect();
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
            known[p] = true;
            train_x.push(pool.embedding(p));
            train_y.push(l.is_positive());
        }
        let record = IterationRecord {
            iteration,
            batch: ids,
            labels,
            k: Some(k),
            scored: Some(scored.len()),
        };
        k = adaptive_k_from_counts(cfg.k0, record.positives(), record.batch.len(), k_max);
        log.iterations.push(record);
        model = if cfg.hyper.warm_start {
            train_from(model, &train_x, &train_y)?
        } else {
            train_logistic(&train_x, &train_y, cfg.hyper)?
        };
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn as_slices(v: &[Vec<f32>]) -> Vec<&[f32]> {
        v.iter().map(Vec::as_slice).collect()
    }

    /// Two blobs either side of the line x + y = 0, margin at least 0.2.
    fn separable() -> (Vec<Vec<f32>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..40 {
            let y = i % 2 == 0;
            let c = if y { 0.6 } else { -0.6 };
            xs.push(vec![c + rng.random_range(-0.3..0.3), c + rng.random_range(-0.3..0.3)]);
            ys.push(y);
        }
        (xs, ys)
    }

    #[test]
    fn separable_fixture_trains_to_full_accuracy() {
        let (xs, ys) = separable();
        let x = as_slices(&xs);
        let m = train_logistic(&x, &ys, LrHyper::default()).unwrap();
        let p = predict_proba(&m, &x).unwrap();
        assert!(p.iter().zip(&ys).all(|(p, &y)| (*p > 0.5) == y));
        assert!(m.loss_history.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn single_class_is_rejected() {
        let xs = [vec![1.0f32, 0.0], vec![0.0, 1.0]];
        assert!(matches!(
            train_logistic(&as_slices(&xs), &[true, true], LrHyper::default()),
            Err(LrError::SingleClass)
        ));
    }

    #[test]
    fn duplicating_the_data_does_not_change_the_model() {
        let (xs, ys) = separable();
        let m1 = train_logistic(&as_slices(&xs), &ys, LrHyper::default()).unwrap();
        let xs2: Vec<Vec<f32>> = xs.iter().chain(&xs).cloned().collect();
        let ys2: Vec<bool> = ys.iter().chain(&ys).copied().collect();
        let m2 = train_logistic(&as_slices(&xs2), &ys2, LrHyper::default()).unwrap();
        for (a, b) in m1.weights.iter().zip(&m2.weights) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((m1.bias - m2.bias).abs() < 1e-9);
    }

    #[test]
    fn predict_proba_edge_cases() {
        let zero = LrModel::zeros(2, LrHyper::default());
        assert_eq!(predict_proba(&zero, &[&[3.0, -1.0]]).unwrap(), vec![0.5]);
        let huge = LrModel {
            weights: vec![1e6, 0.0],
            ..zero.clone()
        };
        assert!(predict_proba(&huge, &[&[1.0, 0.0]]).unwrap()[0] >= 1.0 - 1e-9);
        let hand = LrModel {
            weights: vec![0.5, -2.0],
            bias: 0.25,
            ..zero.clone()
        };
        // 0.5 * 2 - 2 * 0.5 + 0.25 = 0.25
        let expected = 1.0 / (1.0 + (-0.25f64).exp());
        assert!((predict_proba(&hand, &[&[2.0, 0.5]]).unwrap()[0] - expected).abs() < 1e-15);
        assert!(predict_proba(&hand, &[&[1.0]]).is_err());
    }

    #[test]
    fn sigmoid_is_monotone() {
        let zs = [-800.0, -30.0, -1.0, 0.0, 1e-3, 2.0, 40.0, 800.0];
        for w in zs.windows(2) {
            assert!(sigmoid(w[0]) <= sigmoid(w[1]));
        }
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
