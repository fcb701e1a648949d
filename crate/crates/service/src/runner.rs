//! Executes a configured run: loads data, picks seeds, wires the oracle
//! through the ledger, runs the strategy and writes the output files.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use raremine::baseline_lr::run_lr_baseline;
use raremine::dataset::{load_corpus, Corpus, DatasetError, Label, Source};
use raremine::ibg::run_ibg;
use raremine::labelprop::run_lp;
use raremine::ledger::{Ledger, LedgerError};
use raremine::metrics::{evaluate, render_report, EvalPoint, MetricsError, ReportFormat};
use raremine::oracle::{HumanOracle, HumanQueue, LabelBatch, LabelSource, LedgerOracle, NoisyOracle, Oracle, OracleError, TruthOracle};
use raremine::runlog::{IterationRecord, RunError, RunLog, Strategy};
use raremine::seeding::{read_seed_file, select_seeds, SeedError};
use serde::Serialize;

use crate::config::{OracleKind, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> ServiceError {
    let context = context.into();
    move |source| ServiceError::Io { context, source }
}

/// Corpora and seed ids a run works on.
pub struct RunInputs {
    pub pool: Corpus,
    pub synthetic: Corpus,
    pub seeds: Vec<String>,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<RunInputs, ServiceError> {
    let pool = load_corpus(&cfg.data.pool, Source::Real)?;
    let synthetic = load_corpus(&cfg.data.synthetic, Source::Synthetic)?;
    let seeds = match &cfg.data.seeds {
        Some(path) => read_seed_file(path)?,
        None => select_seeds(&synthetic, &cfg.seed_config())?,
    };
    Ok(RunInputs { pool, synthetic, seeds })
}

/// Every pool record carries a truth label, so metrics can be computed.
pub fn has_full_truth(pool: &Corpus) -> bool {
    pool.records().iter().all(|r| r.truth.is_some())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Created,
    Propagating,
    AwaitingLabels,
    Done,
    Failed,
}

impl RunState {
    /// `created → propagating ↔ awaiting_labels → done | failed`.
    pub fn can_become(self, next: RunState) -> bool {
        use RunState::*;
        matches!(
            (self, next),
            (Created, Propagating)
                | (Created, Failed)
                | (Propagating, AwaitingLabels)
                | (AwaitingLabels, Propagating)
                | (Propagating, Done)
                | (Propagating, Failed)
                | (AwaitingLabels, Failed)
        )
    }
}

/// What the outside world can see of a run while it executes.
#[derive(Debug, Clone)]
pub struct Progress {
    pub state: RunState,
    pub iteration: usize,
    /// Answered batches in the order the strategy received them.
    pub log: RunLog,
    pub error: Option<String>,
}

impl Progress {
    pub fn new(strategy: Strategy) -> Self {
        Progress {
            state: RunState::Created,
            iteration: 0,
            log: RunLog::new(strategy),
            error: None,
        }
    }

    /// Moves to `next` if the transition is legal; returns whether it moved.
    pub fn transition(&mut self, next: RunState) -> bool {
        if self.state.can_become(next) {
            self.state = next;
            true
        } else {
            false
        }
    }
}

pub type SharedProgress = Arc<Mutex<Progress>>;

/// Records each answered batch into [`Progress`] and flips the state around
/// human waits.
struct Observed<O> {
    inner: O,
    progress: SharedProgress,
    human: bool,
}

impl<O: Oracle> Oracle for Observed<O> {
    fn source(&self) -> LabelSource {
        self.inner.source()
    }

    fn label(&mut self, batch: &LabelBatch) -> Result<Vec<Label>, OracleError> {
        {
            let mut p = self.progress.lock().unwrap();
            p.iteration = batch.iteration;
            if self.human {
                p.transition(RunState::AwaitingLabels);
            }
        }
        let labels = self.inner.label(batch)?;
        let mut p = self.progress.lock().unwrap();
        p.log.iterations.push(IterationRecord {
            iteration: batch.iteration,
            batch: batch.ids().map(str::to_string).collect(),
            labels: labels.clone(),
            k: None,
            scored: None,
        });
        if self.human {
            p.transition(RunState::Propagating);
        }
        Ok(labels)
    }
}

pub fn ledger_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join(format!("{}.ledger.jsonl", cfg.run_name()))
}

pub fn report_path(cfg: &RunConfig) -> PathBuf {
    let ext = match cfg.report_format {
        ReportFormat::Csv => "csv",
        ReportFormat::Json => "json",
    };
    cfg.output_dir.join(format!("{}.report.{ext}", cfg.run_name()))
}

pub fn runlog_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join(format!("{}.runlog.json", cfg.run_name()))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: RunLog,
    /// `None` when the pool lacks complete ground truth.
    pub points: Option<Vec<EvalPoint>>,
    pub ledger: PathBuf,
    pub report: Option<PathBuf>,
    pub runlog: PathBuf,
}

fn run_strategy<O: Oracle>(cfg: &RunConfig, inputs: &RunInputs, oracle: O) -> Result<RunLog, RunError> {
    let RunInputs { pool, synthetic, seeds } = inputs;
    match cfg.strategy {
        Strategy::Ibg => run_ibg(pool, synthetic, seeds, &cfg.ibg_config(), oracle),
        Strategy::Lp => run_lp(pool, synthetic, seeds, &cfg.lp_config(), oracle),
        Strategy::Lr => run_lr_baseline(pool, synthetic, seeds, &cfg.lr_config(), oracle),
    }
}

/// Runs `cfg` to completion. Labels already in the ledger are replayed, so a
/// rerun after an interruption resumes where it stopped. `queue` is required
/// for human-oracle runs.
pub fn execute(
    cfg: &RunConfig,
    inputs: &RunInputs,
    progress: &SharedProgress,
    queue: Option<Arc<HumanQueue>>,
) -> Result<RunOutput, ServiceError> {
    progress.lock().unwrap().transition(RunState::Propagating);
    let result = execute_inner(cfg, inputs, progress, queue);
    let mut p = progress.lock().unwrap();
    match &result {
        Ok(_) => {
            p.transition(RunState::Done);
        }
        Err(e) => {
            p.transition(RunState::Failed);
            p.error = Some(e.to_string());
        }
    }
    result
}

fn execute_inner(
    cfg: &RunConfig,
    inputs: &RunInputs,
    progress: &SharedProgress,
    queue: Option<Arc<HumanQueue>>,
) -> Result<RunOutput, ServiceError> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(io(format!("creating {}", cfg.output_dir.display())))?;
    let ledger_file = ledger_path(cfg);
    let ledger = Ledger::open(&ledger_file, &cfg.run_name())?;
    let pool = &inputs.pool;
    let inner: Box<dyn Oracle + '_> = match cfg.oracle.kind {
        OracleKind::Truth => Box::new(TruthOracle::new(pool)),
        OracleKind::Noisy => Box::new(NoisyOracle::new(pool, cfg.oracle.flip_prob, cfg.rng_seed)?),
        OracleKind::Human => {
            let q = queue.ok_or(OracleError::Cancelled)?;
            Box::new(HumanOracle::new(q))
        }
    };
    let oracle = Observed {
        inner: LedgerOracle::new(inner, ledger),
        progress: Arc::clone(progress),
        human: cfg.oracle.kind == OracleKind::Human,
    };
    let log = match run_strategy(cfg, inputs, oracle) {
        Ok(log) => log,
        Err(RunError::Oracle { source, iteration, log }) => {
            let _ = write_runlog(&runlog_path(cfg), &log);
            return Err(RunError::Oracle { source, iteration, log }.into());
        }
        Err(e) => return Err(e.into()),
    };
    {
        let mut p = progress.lock().unwrap();
        p.log.warnings = log.warnings.clone();
        p.log.initial_negatives = log.initial_negatives.clone();
    }
    write_runlog(&runlog_path(cfg), &log)?;

    let (points, report) = if has_full_truth(pool) {
        let points = evaluate(&log, pool)?;
        let path = report_path(cfg);
        std::fs::write(&path, render_report(&points, cfg.report_format)).map_err(io(format!("writing {}", path.display())))?;
        (Some(points), Some(path))
    } else {
        (None, None)
    };
    Ok(RunOutput {
        log,
        points,
        ledger: ledger_file,
        report,
        runlog: runlog_path(cfg),
    })
}

fn write_runlog(path: &Path, log: &RunLog) -> Result<(), ServiceError> {
    let mut bytes = serde_json::to_vec_pretty(log).expect("run logs serialize");
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(io(format!("writing {}", path.display())))
}

/// Convenience for callers without a live observer.
pub fn execute_standalone(cfg: &RunConfig) -> Result<RunOutput, ServiceError> {
    let inputs = load_inputs(cfg)?;
    let progress = Arc::new(Mutex::new(Progress::new(cfg.strategy)));
    execute(cfg, &inputs, &progress, None)
}
