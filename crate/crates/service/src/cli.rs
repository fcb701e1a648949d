//! Command-line entry points. Every verb accepts `--config`; flags given on
//! the command line override the matching config values.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use raremine::bench::{generate_clustered, BenchConfig};
use raremine::dataset::{load_corpus, normalize_unit, Corpus, Source};
use raremine::ledger::{read_ledger, run_log_from_rows};
use raremine::metrics::{evaluate, render_report, ReportFormat};
use raremine::runlog::Strategy;
use raremine::seeding::{select_seeds, write_seed_file, SeedConfig, SeedMethod};
use raremine::simgraph::{build_bipartite, build_lsh_index, build_similarity_graph, LshMode};
use raremine::theory::{simulate_cell, write_cells_csv, PlantConfig};
use serde_json::{json, Value};

use crate::api::{self, AppState, BIND_ENV, DEFAULT_BIND};
use crate::config::{ConfigError, RunConfig};
use crate::runner::{self, RunState};

#[derive(Debug, Parser)]
#[command(name = "raremine", version, about = "Rare-class discovery from synthetic seeds")]
pub struct Cli {
    /// Run configuration (JSON). Paths inside it resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate embedding files.
    Ingest(IngestArgs),
    /// Select seed ids from the synthetic corpus.
    Seed(SeedArgs),
    /// Build a similarity graph and write its dump.
    BuildGraph(GraphArgs),
    /// Iterative bipartite graph expansion.
    RunIbg(RunArgs),
    /// Label propagation with adaptive batch size.
    RunLp(RunArgs),
    /// Logistic-regression active-learning baseline.
    RunLr(RunArgs),
    /// Monte Carlo check of the single-iteration precision and recall formulas.
    SimulateTheory(TheoryArgs),
    /// Evaluate a ledger against pool ground truth.
    Report(ReportArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Write a generated clustered benchmark (pool and synthetic corpora).
    GenBench(GenBenchArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Real pool embeddings.
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// Synthetic corpus embeddings.
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Seed embeddings (a synthetic corpus).
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    /// Also require nonzero norms and matching dimensions across files.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Seed selection method: acs or random.
    #[arg(long)]
    pub method: Option<SeedMethod>,
    /// Number of seeds.
    #[arg(long)]
    pub k: Option<usize>,
    /// Coverage fraction for acs.
    #[arg(long)]
    pub c: Option<f64>,
    /// RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file.
    #[arg(long, default_value = "seeds.txt")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GraphKind {
    /// Seeds to pool items.
    Bipartite,
    /// Pool and seeds together, as label propagation uses it.
    Similarity,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Seed id file; without it seeds are selected per the config.
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    /// Graph to build.
    #[arg(long, value_enum, default_value = "bipartite")]
    pub kind: GraphKind,
    /// Cosine threshold in [0, 1).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Neighbors kept per seed (bipartite).
    #[arg(long)]
    pub dmax: Option<usize>,
    /// Neighbors kept per node (similarity graph).
    #[arg(long)]
    pub knn_cap: Option<usize>,
    /// Candidate generation: auto, on, or off.
    #[arg(long)]
    pub lsh: Option<LshMode>,
    /// RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file.
    #[arg(long, default_value = "graph.jsonl")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Seed id file; without it seeds are selected per the config.
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    /// Run name; selects the ledger file.
    #[arg(long)]
    pub name: Option<String>,
    /// Cosine threshold in [0, 1).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Neighbors kept per seed (bipartite).
    #[arg(long)]
    pub dmax: Option<usize>,
    /// Neighbors kept per node (similarity graph).
    #[arg(long)]
    pub knn_cap: Option<usize>,
    /// Candidate generation: auto, on, or off.
    #[arg(long)]
    pub lsh: Option<LshMode>,
    /// Number of rounds.
    #[arg(long = "T", visible_alias = "rounds")]
    pub rounds: Option<usize>,
    /// Initial batch size.
    #[arg(long)]
    pub k0: Option<usize>,
    /// Largest batch size; defaults to 10 * k0.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Label budget (LR baseline).
    #[arg(long)]
    pub budget: Option<usize>,
    /// Initial known negatives (LR baseline).
    #[arg(long)]
    pub init_negs: Option<usize>,
    /// truth, noisy, human, or http (same as human).
    #[arg(long)]
    pub oracle: Option<String>,
    /// Flip probability of the noisy oracle.
    #[arg(long)]
    pub flip_prob: Option<f64>,
    /// RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for the ledger and reports.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write the report here; the format follows the extension.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Address for human-oracle runs; defaults to $RAREMINE_BIND.
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    /// Vertices.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Degrees; a comma-separated list runs one cell per value.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub d: Vec<usize>,
    /// Seeds.
    #[arg(long, default_value_t = 50)]
    pub s: usize,
    /// Seed validities; a comma-separated list.
    #[arg(long, value_delimiter = ',', default_value = "0.7")]
    pub p: Vec<f64>,
    /// Positive rate next to one positive seed.
    #[arg(long, default_value_t = 0.5)]
    pub q1: f64,
    /// Target expansion ratios; omitted means unconstrained placement.
    #[arg(long, value_delimiter = ',')]
    pub h_target: Vec<f64>,
    /// Label redraws per cell.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// RNG seed.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Ledger file of the run.
    #[arg(long)]
    pub run: PathBuf,
    /// Pool with ground-truth labels.
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, default_value = "csv")]
    pub format: ReportFormat,
    #[arg(long, default_value = "lp")]
    pub strategy: Strategy,
    /// Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Overrides $RAREMINE_BIND.
    #[arg(long)]
    pub bind: Option<String>,
    /// Directory relative config paths resolve against.
    #[arg(long, default_value = ".")]
    pub base_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenBenchArgs {
    /// Directory for the ledger and reports.
    #[arg(long, default_value = "bench")]
    pub out_dir: PathBuf,
    /// Vertices.
    #[arg(long)]
    pub n: Option<usize>,
    /// RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Failure of a CLI verb; usage problems exit with 2, everything else with 1.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: message.into(),
    }
}

fn config_error(e: ConfigError) -> CliError {
    usage(e.to_string())
}

/// Parses `std::env::args` and runs the verb; returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Ingest(a) => ingest(config, a),
        Command::Seed(a) => seed(config, a),
        Command::BuildGraph(a) => build_graph(config, a),
        Command::RunIbg(a) => run(config, Strategy::Ibg, a),
        Command::RunLp(a) => run(config, Strategy::Lp, a),
        Command::RunLr(a) => run(config, Strategy::Lr, a),
        Command::SimulateTheory(a) => simulate_theory(a),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve(a),
        Command::GenBench(a) => gen_bench(a),
    }
}

/// The config file as a JSON document plus the directory its paths are
/// relative to. Without a file, paths are relative to the working directory.
fn load_config_value(path: Option<&Path>) -> Result<(Value, PathBuf), CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            let value: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            if !value.is_object() {
                return Err(usage(format!("{}: config must be a JSON object", p.display())));
            }
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((value, base))
        }
        None => Ok((json!({}), PathBuf::new())),
    }
}

fn set(value: &mut Value, pointer: &str, v: Value) {
    let mut cur = value;
    for key in pointer.trim_start_matches('/').split('/') {
        if !cur.is_object() {
            *cur = json!({});
        }
        cur = cur.as_object_mut().unwrap().entry(key).or_insert(Value::Null);
    }
    *cur = v;
}

fn cwd_path(p: &Path) -> Value {
    let abs = if p.is_relative() {
        std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf())
    } else {
        p.to_path_buf()
    };
    json!(abs)
}

/// Merges data flags into the config document. Command-line paths are
/// relative to the working directory, so they are made absolute here.
fn apply_data(value: &mut Value, data: &DataArgs, seeds: Option<&Path>) {
    if let Some(p) = &data.real {
        set(value, "/data/pool", cwd_path(p));
    }
    if let Some(p) = &data.synthetic {
        set(value, "/data/synthetic", cwd_path(p));
    }
    if let Some(p) = seeds {
        set(value, "/data/seeds", cwd_path(p));
    }
}

fn finish_config(mut value: Value, base: &Path, strategy: Option<Strategy>) -> Result<RunConfig, CliError> {
    if let Some(s) = strategy {
        set(&mut value, "/strategy", json!(s));
    } else if value.get("strategy").is_none() {
        set(&mut value, "/strategy", json!(Strategy::Lp));
    }
    RunConfig::from_value(value, base).map_err(config_error)
}

fn ingest(config: Option<&Path>, a: IngestArgs) -> Result<(), CliError> {
    let (value, base) = load_config_value(config)?;
    let from_cfg = |key: &str| value.pointer(key).and_then(Value::as_str).map(|s| base.join(s));
    let real = a.data.real.clone().or_else(|| from_cfg("/data/pool"));
    let seeds = a.seeds.clone().or(a.data.synthetic.clone()).or_else(|| from_cfg("/data/synthetic"));
    if real.is_none() && seeds.is_none() {
        return Err(usage("nothing to ingest: pass --real and/or --seeds"));
    }
    let mut summary = serde_json::Map::new();
    let mut loaded: Vec<Corpus> = Vec::new();
    for (key, path, source) in [("real", real, Source::Real), ("seeds", seeds, Source::Synthetic)] {
        let Some(path) = path else { continue };
        let corpus = load_corpus(&path, source)?;
        let labeled = corpus.records().iter().filter(|r| r.truth.is_some()).count();
        summary.insert(
            key.into(),
            json!({
                "path": path,
                "records": corpus.len(),
                "dimension": corpus.dimension(),
                "labeled": labeled,
                "positives": corpus.positive_count(),
            }),
        );
        loaded.push(corpus);
    }
    if a.check {
        if let [x, y] = loaded.as_slice() {
            if x.dimension() != y.dimension() {
                return Err(CliError {
                    code: 1,
                    message: format!("dimension mismatch: pool has {}, seeds have {}", x.dimension(), y.dimension()),
                });
            }
            if let Some(id) = x.ids().find(|id| y.position(id).is_some()) {
                return Err(CliError {
                    code: 1,
                    message: format!("id {id:?} appears in both files"),
                });
            }
        }
        for c in loaded {
            normalize_unit(c)?;
        }
        summary.insert("check".into(), json!("ok"));
    }
    println!("{}", serde_json::to_string_pretty(&Value::Object(summary)).unwrap());
    Ok(())
}

fn seed(config: Option<&Path>, a: SeedArgs) -> Result<(), CliError> {
    let (mut value, base) = load_config_value(config)?;
    apply_data(&mut value, &a.data, None);
    if let Some(m) = a.method {
        set(&mut value, "/seeding/method", json!(m));
    }
    if let Some(k) = a.k {
        set(&mut value, "/seeding/k", json!(k));
    }
    if let Some(c) = a.c {
        set(&mut value, "/seeding/c", json!(c));
    }
    if let Some(s) = a.seed {
        set(&mut value, "/rng_seed", json!(s));
    }
    let synthetic = value
        .pointer("/data/synthetic")
        .and_then(Value::as_str)
        .map(|s| base.join(s))
        .ok_or_else(|| usage("no synthetic corpus: pass --synthetic or a config"))?;
    // Seed selection needs only the synthetic corpus, so the pool may be absent.
    if value.pointer("/data/pool").is_none() {
        set(&mut value, "/data/pool", cwd_path(&synthetic));
    }
    let cfg = finish_config(value, &base, None)?;
    let corpus = load_corpus(&synthetic, Source::Synthetic)?;
    let sc: SeedConfig = cfg.seed_config();
    let ids = select_seeds(&corpus, &sc)?;
    write_seed_file(&ids, &a.out)?;
    eprintln!("wrote {} seeds to {}", ids.len(), a.out.display());
    Ok(())
}

fn build_graph(config: Option<&Path>, a: GraphArgs) -> Result<(), CliError> {
    let (mut value, base) = load_config_value(config)?;
    apply_data(&mut value, &a.data, a.seeds.as_deref());
    if let Some(t) = a.tau {
        set(&mut value, "/graph/tau", json!(t));
    }
    if let Some(d) = a.dmax {
        set(&mut value, "/graph/d_max", json!(d));
    }
    if let Some(k) = a.knn_cap {
        set(&mut value, "/graph/knn_cap", json!(k));
    }
    if let Some(l) = a.lsh {
        set(&mut value, "/graph/lsh", json!(l));
    }
    if let Some(s) = a.seed {
        set(&mut value, "/rng_seed", json!(s));
    }
    let cfg = finish_config(value, &base, None)?;
    let inputs = runner::load_inputs(&cfg)?;
    let seed_records = inputs
        .seeds
        .iter()
        .map(|id| {
            inputs
                .synthetic
                .get(id)
                .cloned()
                .ok_or_else(|| CliError {
                    code: 1,
                    message: format!("seed {id:?} is not in the synthetic corpus"),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let seeds = Corpus::from_records(seed_records)?;
    let g = &cfg.graph;
    match a.kind {
        GraphKind::Bipartite => {
            let index = if g.lsh.use_lsh(inputs.pool.len()) {
                Some(build_lsh_index(&inputs.pool, g.lsh_tables, g.lsh_bits, cfg.rng_seed)?)
            } else {
                None
            };
            let graph = build_bipartite(&seeds, &inputs.pool, g.tau, g.d_max, index.as_ref())?;
            graph.write_dump(&a.out)?;
            eprintln!(
                "{} edges, {} pool items reached; wrote {}",
                graph.edge_count(),
                graph.connected_right().len(),
                a.out.display()
            );
        }
        GraphKind::Similarity => {
            let all = inputs.pool.concat(&seeds)?;
            let index = if g.lsh.use_lsh(all.len()) {
                Some(build_lsh_index(&all, g.lsh_tables, g.lsh_bits, cfg.rng_seed)?)
            } else {
                None
            };
            let graph = build_similarity_graph(&all, g.tau, g.knn_cap, index.as_ref())?;
            graph.write_dump(&a.out)?;
            eprintln!("{} nodes, {} edges; wrote {}", graph.len(), graph.edge_count(), a.out.display());
        }
    }
    Ok(())
}

/// Applies the run flags to a config document.
pub fn apply_run_args(value: &mut Value, a: &RunArgs) -> Result<(), CliError> {
    apply_data(value, &a.data, a.seeds.as_deref());
    let mut put = |ptr: &str, v: Option<Value>| {
        if let Some(v) = v {
            set(value, ptr, v);
        }
    };
    put("/name", a.name.as_ref().map(|x| json!(x)));
    put("/graph/tau", a.tau.map(|x| json!(x)));
    put("/graph/d_max", a.dmax.map(|x| json!(x)));
    put("/graph/knn_cap", a.knn_cap.map(|x| json!(x)));
    put("/graph/lsh", a.lsh.map(|x| json!(x)));
    put("/loop/rounds", a.rounds.map(|x| json!(x)));
    put("/loop/k0", a.k0.map(|x| json!(x)));
    put("/loop/k_max", a.k_max.map(|x| json!(x)));
    put("/lr/budget", a.budget.map(|x| json!(x)));
    put("/lr/init_negatives", a.init_negs.map(|x| json!(x)));
    put("/oracle/flip_prob", a.flip_prob.map(|x| json!(x)));
    put("/rng_seed", a.seed.map(|x| json!(x)));
    put("/output_dir", a.out_dir.as_deref().map(cwd_path));
    if let Some(o) = &a.oracle {
        let kind = match o.as_str() {
            "truth" | "noisy" | "human" => o.as_str(),
            "http" => "human",
            other => return Err(usage(format!("--oracle must be truth|noisy|human|http, got {other:?}"))),
        };
        set(value, "/oracle/kind", json!(kind));
    }
    if let Some(r) = &a.report {
        set(value, "/report_format", json!(format_for(r)));
    }
    Ok(())
}

fn format_for(path: &Path) -> ReportFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => ReportFormat::Json,
        _ => ReportFormat::Csv,
    }
}

fn run(config: Option<&Path>, strategy: Strategy, a: RunArgs) -> Result<(), CliError> {
    let (mut value, base) = load_config_value(config)?;
    apply_run_args(&mut value, &a)?;
    let cfg = finish_config(value, &base, Some(strategy))?;
    let output = if cfg.oracle.kind == crate::config::OracleKind::Human {
        run_human(cfg.clone(), a.bind.clone())?;
        None
    } else {
        Some(runner::execute_standalone(&cfg)?)
    };
    let log_points = match output {
        Some(out) => {
            eprintln!(
                "{} rounds, {} labeled, {} positives; ledger {}",
                out.log.iterations.len(),
                out.log.labeled_count(),
                out.log.positives_found(),
                out.ledger.display()
            );
            out.points
        }
        None => {
            let pool = load_corpus(&cfg.data.pool, Source::Real)?;
            if runner::has_full_truth(&pool) {
                let rows = read_ledger(&runner::ledger_path(&cfg))?;
                Some(evaluate(&run_log_from_rows(&rows, cfg.strategy), &pool)?)
            } else {
                None
            }
        }
    };
    if let Some(path) = &a.report {
        let points = log_points.ok_or_else(|| CliError {
            code: 1,
            message: "the pool lacks ground truth, so no report can be written".into(),
        })?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, render_report(&points, format_for(path)))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn bind_address(flag: Option<String>) -> String {
    flag.or_else(|| std::env::var(BIND_ENV).ok()).unwrap_or_else(|| DEFAULT_BIND.to_string())
}

/// Serves the API for a single human-oracle run until it finishes.
fn run_human(cfg: RunConfig, bind: Option<String>) -> Result<(), CliError> {
    let inputs = runner::load_inputs(&cfg)?;
    let state = AppState::new(std::env::current_dir()?);
    let handle = state.start_run(cfg, inputs).map_err(|e| CliError {
        code: 1,
        message: e.body.to_string(),
    })?;
    eprintln!("run {} is waiting for labels at /runs/{}/batch", handle.id, handle.id);
    let addr = bind_address(bind);
    let progress = Arc::clone(&handle.progress);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let finished = async move {
            loop {
                if matches!(progress.lock().unwrap().state, RunState::Done | RunState::Failed) {
                    break;
                }
                tokio::time::sleep(std::time::Duration::from_millis(100)).await;
            }
        };
        api::serve_until(Arc::clone(&state), &addr, finished).await
    })?;
    let p = handle.progress.lock().unwrap();
    match (p.state, &p.error) {
        (RunState::Done, _) => Ok(()),
        (_, Some(e)) => Err(CliError {
            code: 1,
            message: e.clone(),
        }),
        _ => Err(CliError {
            code: 1,
            message: "interrupted before the run finished".into(),
        }),
    }
}

fn simulate_theory(a: TheoryArgs) -> Result<(), CliError> {
    let h_targets: Vec<Option<f64>> = if a.h_target.is_empty() {
        vec![None]
    } else {
        a.h_target.iter().copied().map(Some).collect()
    };
    let mut cells = Vec::new();
    for &d in &a.d {
        for &p in &a.p {
            for &h in &h_targets {
                let plant = PlantConfig {
                    h_target: h,
                    ..PlantConfig::new(a.n, d, a.s, p, a.q1, a.seed)
                };
                let cell = simulate_cell(&plant, a.trials, a.seed)?;
                let z = (cell.precision_mean - cell.expected_precision) / cell.precision_se.max(f64::MIN_POSITIVE);
                eprintln!(
                    "d={d} p={p} h={:.3}: precision {:.4} vs {:.4} (z = {z:.2}), recall {:.4} vs {:.4}",
                    cell.measured_h, cell.precision_mean, cell.expected_precision, cell.recall_mean, cell.expected_recall
                );
                cells.push(cell);
            }
        }
    }
    match &a.out {
        Some(path) => write_cells_csv(&cells, std::fs::File::create(path)?)?,
        None => write_cells_csv(&cells, std::io::stdout().lock())?,
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let rows = read_ledger(&a.run)?;
    let pool = load_corpus(&a.pool, Source::Real)?;
    let points = evaluate(&run_log_from_rows(&rows, a.strategy), &pool)?;
    let bytes = render_report(&points, a.format);
    match &a.out {
        Some(path) => std::fs::write(path, bytes)?,
        None => {
            use std::io::Write;
            std::io::stdout().lock().write_all(&bytes)?;
        }
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let addr = bind_address(a.bind);
    let base = std::fs::canonicalize(&a.base_dir)?;
    let state = AppState::new(base);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(api::serve(state, &addr))?;
    Ok(())
}

fn gen_bench(a: GenBenchArgs) -> Result<(), CliError> {
    let defaults = BenchConfig::default();
    let cfg = BenchConfig {
        n: a.n.unwrap_or(defaults.n),
        rng_seed: a.seed.unwrap_or(defaults.rng_seed),
        ..defaults
    };
    let bench = generate_clustered(&cfg)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let pool = a.out_dir.join("pool.jsonl");
    let synthetic = a.out_dir.join("synthetic.jsonl");
    bench.pool.write_jsonl(&pool)?;
    bench.synthetic.write_jsonl(&synthetic)?;
    eprintln!(
        "wrote {} ({} records, {} positive) and {} ({} records)",
        pool.display(),
        bench.pool.len(),
        bench.pool.positive_count(),
        synthetic.display(),
        bench.synthetic.len()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn run_flags_override_config() {
        let cli = Cli::try_parse_from([
            "raremine", "run-lp", "--tau", "0.5", "--k0", "7", "--T", "3", "--oracle", "http", "--report", "x.json",
        ])
        .unwrap();
        let Command::RunLp(a) = cli.command else { panic!() };
        let mut v = json!({"graph": {"tau": 0.9, "d_max": 4}});
        apply_run_args(&mut v, &a).unwrap();
        assert_eq!(v["graph"]["tau"], 0.5);
        assert_eq!(v["graph"]["d_max"], 4);
        assert_eq!(v["loop"]["k0"], 7);
        assert_eq!(v["loop"]["rounds"], 3);
        assert_eq!(v["oracle"]["kind"], "human");
        assert_eq!(v["report_format"], "json");
    }

    #[test]
    fn bad_oracle_is_a_usage_error() {
        let cli = Cli::try_parse_from(["raremine", "run-ibg", "--oracle", "llm"]).unwrap();
        let Command::RunIbg(a) = cli.command else { panic!() };
        assert_eq!(apply_run_args(&mut json!({}), &a).unwrap_err().code, 2);
    }

    #[test]
    fn theory_lists() {
        let cli = Cli::try_parse_from(["raremine", "simulate-theory", "--d", "4,10", "--p", "0.3,0.7"]).unwrap();
        let Command::SimulateTheory(a) = cli.command else { panic!() };
        assert_eq!(a.d, vec![4, 10]);
        assert_eq!(a.p, vec![0.3, 0.7]);
        assert!(a.h_target.is_empty());
    }
}
