//! Run configuration: one JSON document describing a discovery run.
//!
//! Parsing goes through `serde_path_to_error` so that type errors and unknown
//! keys are reported with a JSON pointer; range checks after parsing use the
//! same pointer form.

use std::fmt;
use std::path::{Path, PathBuf};

use raremine::baseline_lr::{LrBaselineConfig, LrHyper};
use raremine::ibg::IbgConfig;
use raremine::labelprop::LpRunConfig;
use raremine::metrics::ReportFormat;
use raremine::runlog::Strategy;
use raremine::seeding::{SeedConfig, SeedMethod};
use raremine::simgraph::{LshMode, DEFAULT_LSH_BITS, DEFAULT_LSH_TABLES};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// JSON pointer to the offending value; empty for the document root.
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "invalid config at {at}: {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(pointer: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Written into every ledger row; defaults to the strategy name.
    #[serde(default)]
    pub name: Option<String>,
    pub strategy: Strategy,
    pub data: DataConfig,
    #[serde(default)]
    pub seeding: SeedingConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default, rename = "loop")]
    pub loop_: LoopConfig,
    #[serde(default)]
    pub lr: LrConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default = "default_rng_seed")]
    pub rng_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_report_format")]
    pub report_format: ReportFormat,
}

fn default_rng_seed() -> u64 {
    7
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_report_format() -> ReportFormat {
    ReportFormat::Csv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Real, unlabeled pool (truth labels optional).
    pub pool: PathBuf,
    /// Synthetic seed candidates.
    pub synthetic: PathBuf,
    /// Seed ids, one per line. Without it seeds are selected per `seeding`.
    #[serde(default)]
    pub seeds: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedingConfig {
    pub method: SeedMethod,
    pub k: usize,
    pub c: f64,
    pub min_radius: f64,
}

impl Default for SeedingConfig {
    fn default() -> Self {
        SeedingConfig {
            method: SeedMethod::Acs,
            k: 100,
            c: 0.5,
            min_radius: -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub tau: f64,
    pub d_max: usize,
    pub knn_cap: Option<usize>,
    pub lsh: LshMode,
    pub lsh_tables: usize,
    pub lsh_bits: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            tau: 0.8,
            d_max: 32,
            knn_cap: None,
            lsh: LshMode::Auto,
            lsh_tables: DEFAULT_LSH_TABLES,
            lsh_bits: DEFAULT_LSH_BITS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// Defaults to 10 for IBG and 20 otherwise.
    pub rounds: Option<usize>,
    pub k0: usize,
    pub k_max: Option<usize>,
    pub t_prop: usize,
    pub eps: f64,
    pub stop_on_empty_batch: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            rounds: None,
            k0: 100,
            k_max: None,
            t_prop: 50,
            eps: 1e-6,
            stop_on_empty_batch: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrConfig {
    pub budget: Option<usize>,
    pub init_negatives: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub warm_start: bool,
}

impl Default for LrConfig {
    fn default() -> Self {
        let h = LrHyper::default();
        LrConfig {
            budget: None,
            init_negatives: 19,
            learning_rate: h.learning_rate,
            epochs: h.epochs,
            l2: h.l2,
            warm_start: h.warm_start,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Truth,
    Noisy,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub kind: OracleKind,
    /// Flip probability of the noisy oracle.
    pub flip_prob: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            kind: OracleKind::Truth,
            flip_prob: 0.0,
        }
    }
}

/// Converts a deserializer path into a JSON pointer.
fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } | Segment::Enum { variant: key } => {
                out.push_str(&key.replace('~', "~0").replace('/', "~1"))
            }
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

impl RunConfig {
    /// Parses and validates a config document. Relative data paths and the
    /// output directory are resolved against `base_dir`.
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<RunConfig, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError {
            pointer: pointer_of(e.path()),
            message: e.inner().to_string(),
        })?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(value: serde_json::Value, base_dir: &Path) -> Result<RunConfig, ConfigError> {
        let mut cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| ConfigError {
            pointer: pointer_of(e.path()),
            message: e.inner().to_string(),
        })?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.pool);
        fix(&mut self.data.synthetic);
        if let Some(s) = &mut self.data.seeds {
            fix(s);
        }
        fix(&mut self.output_dir);
    }

    pub fn run_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.strategy.as_str().to_string())
    }

    pub fn rounds(&self) -> usize {
        self.loop_.rounds.unwrap_or(match self.strategy {
            Strategy::Ibg => 10,
            Strategy::Lp | Strategy::Lr => 20,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(n) = &self.name {
            if n.trim().is_empty() {
                return Err(err("/name", "must not be empty"));
            }
        }
        for (ptr, path) in [("/data/pool", Some(&self.data.pool)), ("/data/synthetic", Some(&self.data.synthetic)), ("/data/seeds", self.data.seeds.as_ref())] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(err(ptr, format!("file {} does not exist", p.display())));
                }
            }
        }

        let s = &self.seeding;
        if s.k == 0 {
            return Err(err("/seeding/k", "must be at least 1"));
        }
        if !(s.c > 0.0 && s.c <= 1.0) {
            return Err(err("/seeding/c", format!("must be in (0, 1], got {}", s.c)));
        }
        if !(-1.0..=1.0).contains(&s.min_radius) {
            return Err(err("/seeding/min_radius", format!("must be in [-1, 1], got {}", s.min_radius)));
        }

        let g = &self.graph;
        if !(0.0..1.0).contains(&g.tau) {
            return Err(err("/graph/tau", format!("must be in [0, 1), got {}", g.tau)));
        }
        if g.d_max == 0 {
            return Err(err("/graph/d_max", "must be at least 1"));
        }
        if g.knn_cap == Some(0) {
            return Err(err("/graph/knn_cap", "must be at least 1 when set"));
        }
        if g.lsh_tables == 0 {
            return Err(err("/graph/lsh_tables", "must be at least 1"));
        }
        if !(1..=64).contains(&g.lsh_bits) {
            return Err(err("/graph/lsh_bits", format!("must be in [1, 64], got {}", g.lsh_bits)));
        }

        let l = &self.loop_;
        if l.rounds == Some(0) {
            return Err(err("/loop/rounds", "must be at least 1"));
        }
        if l.k0 == 0 {
            return Err(err("/loop/k0", "must be at least 1"));
        }
        if let Some(k) = l.k_max {
            if k < l.k0 {
                return Err(err("/loop/k_max", format!("must be at least k0 = {}, got {k}", l.k0)));
            }
        }
        if l.t_prop == 0 {
            return Err(err("/loop/t_prop", "must be at least 1"));
        }
        if !(l.eps >= 0.0 && l.eps.is_finite()) {
            return Err(err("/loop/eps", format!("must be a nonnegative number, got {}", l.eps)));
        }

        let lr = &self.lr;
        if let Some(b) = lr.budget {
            if b < l.k0 {
                return Err(err("/lr/budget", format!("must be at least k0 = {}, got {b}", l.k0)));
            }
        }
        if lr.init_negatives == 0 {
            return Err(err("/lr/init_negatives", "must be at least 1"));
        }
        if !(lr.learning_rate > 0.0 && lr.learning_rate.is_finite()) {
            return Err(err("/lr/learning_rate", format!("must be positive, got {}", lr.learning_rate)));
        }
        if lr.epochs == 0 {
            return Err(err("/lr/epochs", "must be at least 1"));
        }
        if !(lr.l2 >= 0.0 && lr.l2.is_finite()) {
            return Err(err("/lr/l2", format!("must be nonnegative, got {}", lr.l2)));
        }

        if !(0.0..0.5).contains(&self.oracle.flip_prob) {
            return Err(err("/oracle/flip_prob", format!("must be in [0, 0.5), got {}", self.oracle.flip_prob)));
        }
        Ok(())
    }

    pub fn seed_config(&self) -> SeedConfig {
        SeedConfig {
            k: self.seeding.k,
            c: self.seeding.c,
            method: self.seeding.method,
            rng_seed: self.rng_seed,
            min_radius: self.seeding.min_radius,
        }
    }

    pub fn ibg_config(&self) -> IbgConfig {
        IbgConfig {
            tau: self.graph.tau,
            d_max: self.graph.d_max,
            rounds: self.rounds(),
            stop_on_empty_batch: self.loop_.stop_on_empty_batch,
            lsh: self.graph.lsh,
            lsh_tables: self.graph.lsh_tables,
            lsh_bits: self.graph.lsh_bits,
            lsh_seed: self.rng_seed,
        }
    }

    pub fn lp_config(&self) -> LpRunConfig {
        LpRunConfig {
            k0: self.loop_.k0,
            k_max: self.loop_.k_max,
            rounds: self.rounds(),
            t_prop: self.loop_.t_prop,
            eps: self.loop_.eps,
            tau: self.graph.tau,
            knn_cap: self.graph.knn_cap,
            lsh: self.graph.lsh,
            lsh_tables: self.graph.lsh_tables,
            lsh_bits: self.graph.lsh_bits,
            lsh_seed: self.rng_seed,
        }
    }

    pub fn lr_config(&self) -> LrBaselineConfig {
        LrBaselineConfig {
            budget: self.lr.budget,
            k0: self.loop_.k0,
            k_max: self.loop_.k_max,
            rounds: self.rounds(),
            n_init_negatives: self.lr.init_negatives,
            rng_seed: self.rng_seed,
            hyper: LrHyper {
                learning_rate: self.lr.learning_rate,
                epochs: self.lr.epochs,
                l2: self.lr.l2,
                warm_start: self.lr.warm_start,
            },
        }
    }
}

/// Reads, parses and validates the config file at `path`.
pub fn validate_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| err("", format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    RunConfig::from_json_str(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir_with_data() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("pool.jsonl"), "").unwrap();
        std::fs::write(dir.path().join("syn.jsonl"), "").unwrap();
        dir
    }

    const MINIMAL: &str = r#"{"strategy": "lp", "data": {"pool": "pool.jsonl", "synthetic": "syn.jsonl"}}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let dir = dir_with_data();
        let cfg = RunConfig::from_json_str(MINIMAL, dir.path()).unwrap();
        assert_eq!(cfg.graph.tau, 0.8);
        assert_eq!(cfg.graph.d_max, 32);
        assert_eq!(cfg.loop_.k0, 100);
        assert_eq!(cfg.rounds(), 20);
        assert_eq!(cfg.oracle.kind, OracleKind::Truth);
        assert_eq!(cfg.seeding.method, SeedMethod::Acs);
        assert_eq!(cfg.data.pool, dir.path().join("pool.jsonl"));
        assert_eq!(cfg.output_dir, dir.path().join("out"));
        assert_eq!(cfg.run_name(), "lp");
        assert_eq!(cfg.lp_config().k_max(), 1000);
    }

    fn with(dir: &Path, patch: &str) -> Result<RunConfig, ConfigError> {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        let p: serde_json::Value = serde_json::from_str(patch).unwrap();
        for (k, val) in p.as_object().unwrap() {
            v[k] = val.clone();
        }
        RunConfig::from_value(v, dir)
    }

    #[test]
    fn range_errors_carry_pointers() {
        let dir = dir_with_data();
        let e = with(dir.path(), r#"{"graph": {"tau": 1.5}}"#).unwrap_err();
        assert_eq!(e.pointer, "/graph/tau");
        let e = with(dir.path(), r#"{"loop": {"k0": 10, "k_max": 5}}"#).unwrap_err();
        assert_eq!(e.pointer, "/loop/k_max");
        let e = with(dir.path(), r#"{"oracle": {"kind": "noisy", "flip_prob": 0.5}}"#).unwrap_err();
        assert_eq!(e.pointer, "/oracle/flip_prob");
        let e = with(dir.path(), r#"{"graph": {"d_max": "many"}}"#).unwrap_err();
        assert_eq!(e.pointer, "/graph/d_max");
        let e = with(dir.path(), r#"{"data": {"pool": "missing.jsonl", "synthetic": "syn.jsonl"}}"#).unwrap_err();
        assert_eq!(e.pointer, "/data/pool");
    }

    #[test]
    fn unknown_keys_are_named() {
        let dir = dir_with_data();
        let e = with(dir.path(), r#"{"colour": 1}"#).unwrap_err();
        assert!(e.message.contains("colour"), "{e}");
        let e = with(dir.path(), r#"{"graph": {"taux": 0.5}}"#).unwrap_err();
        assert!(e.message.contains("taux"), "{e}");
        assert_eq!(e.pointer, "/graph/taux");
    }

    #[test]
    fn strategy_specific_rounds() {
        let dir = dir_with_data();
        assert_eq!(with(dir.path(), r#"{"strategy": "ibg"}"#).unwrap().rounds(), 10);
        assert_eq!(with(dir.path(), r#"{"loop": {"rounds": 3}}"#).unwrap().rounds(), 3);
        assert!(with(dir.path(), r#"{"strategy": "svm"}"#).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = dir_with_data();
        let path = dir.path().join("run.json");
        std::fs::write(&path, MINIMAL).unwrap();
        let cfg = validate_config(&path).unwrap();
        assert_eq!(cfg.data.synthetic, dir.path().join("syn.jsonl"));
        assert!(validate_config(&dir.path().join("nope.json")).is_err());
    }
}
