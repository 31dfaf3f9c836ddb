//! Run configuration: a TOML file whose every key is optional, overridden by
//! command-line flags.

use std::path::{Path, PathBuf};

use alphasharpe_core::data::{FoldSpec, PriceLayout};
use alphasharpe_core::evaluation::FitnessWeights;
use alphasharpe_core::evolution::{EvolutionConfig, GeneratorKind};
use alphasharpe_core::portfolio::{AllocatorParams, EntropyMode, ErcParams};
use alphasharpe_core::{Error, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

pub const DEFAULT_FRACTIONS: [f64; 4] = [0.10, 0.15, 0.20, 0.25];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSection {
    pub population_size: usize,
    pub n_generations: usize,
    pub top_k: usize,
    pub crossover_count: usize,
    pub mutation_count: usize,
    pub generator: GeneratorKind,
    pub guidance: String,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        let d = EvolutionConfig::default();
        Self {
            population_size: d.population_size,
            n_generations: d.n_generations,
            top_k: d.top_k,
            crossover_count: d.crossover_count,
            mutation_count: d.mutation_count,
            generator: d.generator,
            guidance: d.guidance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub url: Option<String>,
    pub timeout_secs: f64,
    /// Prompt template file; a built-in template is used when unset.
    pub template: Option<PathBuf>,
    pub max_inflight: usize,
    pub attempts: usize,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            url: None,
            timeout_secs: 30.0,
            template: None,
            max_inflight: 2,
            attempts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Price CSV (wide or long) or `.asrm` return cache.
    pub data: Option<PathBuf>,
    /// Forces the price CSV layout instead of detecting it from the header.
    pub layout: Option<PriceLayout>,
    /// JSON synthetic-market spec; its seed is replaced by `seed`.
    pub synthetic: Option<PathBuf>,
    /// `metrics.json` registry that named metrics are looked up in first.
    pub registry: Option<PathBuf>,
    pub rf: f64,
    pub frequency: f64,
    pub max_missing_frac: f64,
    pub metrics: Vec<String>,
    pub fractions: Vec<f64>,
    pub ndcg_fraction: f64,
    pub seed: u64,
    /// Worker threads; 0 uses every logical core.
    pub threads: usize,
    pub out: PathBuf,
    /// Seeds evolution with the future-Sharpe diagnostic metric.
    pub plant_oracle: bool,
    pub folds: FoldSpec,
    pub fitness: FitnessWeights,
    pub allocator: AllocatorParams,
    pub erc: ErcParams,
    pub evolution: EvolutionSection,
    pub llm: LlmSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            layout: None,
            synthetic: None,
            registry: None,
            rf: 0.0,
            frequency: 252.0,
            max_missing_frac: 0.10,
            metrics: ["sharpe", "psr", "alpha_s1", "alpha_s2", "alpha_s3", "alpha_s4"]
                .map(String::from)
                .to_vec(),
            fractions: DEFAULT_FRACTIONS.to_vec(),
            ndcg_fraction: 0.25,
            seed: 7,
            threads: 0,
            out: PathBuf::from("out"),
            plant_oracle: false,
            folds: FoldSpec::default(),
            fitness: FitnessWeights::default(),
            allocator: AllocatorParams::default(),
            erc: ErcParams::default(),
            evolution: EvolutionSection::default(),
            llm: LlmSection::default(),
        }
    }
}

/// Flags shared by every subcommand; each one overrides its config-file key.
#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// TOML config file
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Price CSV (wide or long layout) or .asrm return cache
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Synthetic market spec (JSON)
    #[arg(long, value_name = "SPEC.json")]
    pub synthetic: Option<PathBuf>,
    /// Per-period risk-free log rate
    #[arg(long, value_name = "FLOAT", allow_negative_numbers = true)]
    pub rf: Option<f64>,
    /// Comma-separated metric names
    #[arg(long, value_name = "LIST")]
    pub metrics: Option<String>,
    /// Comma-separated top fractions for backtests
    #[arg(long, value_name = "LIST")]
    pub fractions: Option<String>,
    /// Fraction of periods held out at the end
    #[arg(long, value_name = "FLOAT")]
    pub holdout: Option<f64>,
    #[arg(long, value_name = "INT")]
    pub folds: Option<usize>,
    #[arg(long, value_name = "INT")]
    pub train_len: Option<usize>,
    #[arg(long, value_name = "INT")]
    pub future_len: Option<usize>,
    #[arg(long, value_name = "INT")]
    pub stride: Option<usize>,
    #[arg(long, value_name = "INT")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "INT")]
    pub threads: Option<usize>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "scalar|per_asset")]
    pub entropy_mode: Option<String>,
    #[arg(long, value_name = "builtin|external")]
    pub generator: Option<String>,
    #[arg(long, value_name = "URL")]
    pub llm_url: Option<String>,
    #[arg(long, value_name = "SECS")]
    pub llm_timeout: Option<f64>,
}

fn parse_list<T: std::str::FromStr>(what: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("invalid {what} entry `{s}`")))
        })
        .collect()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// File values (or defaults) with the flags applied on top, validated.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut c = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(p) = &o.data {
            c.data = Some(p.clone());
            c.synthetic = None;
        }
        if let Some(p) = &o.synthetic {
            c.synthetic = Some(p.clone());
            c.data = None;
        }
        if let Some(v) = o.rf {
            c.rf = v;
        }
        if let Some(v) = &o.metrics {
            c.metrics = parse_list("metric", v)?;
        }
        if let Some(v) = &o.fractions {
            c.fractions = parse_list("fraction", v)?;
        }
        if let Some(v) = o.holdout {
            c.folds.holdout_frac = v;
        }
        if let Some(v) = o.folds {
            c.folds.n_folds = v;
        }
        if let Some(v) = o.train_len {
            c.folds.train_len = v;
        }
        if let Some(v) = o.future_len {
            c.folds.future_len = v;
        }
        if let Some(v) = o.stride {
            c.folds.stride = v;
        }
        if let Some(v) = o.seed {
            c.seed = v;
        }
        if let Some(v) = o.threads {
            c.threads = v;
        }
        if let Some(v) = &o.out {
            c.out = v.clone();
        }
        if let Some(v) = &o.entropy_mode {
            c.allocator.entropy_mode = v.parse::<EntropyMode>()?;
        }
        if let Some(v) = &o.generator {
            c.evolution.generator = v.parse::<GeneratorKind>()?;
        }
        if let Some(v) = &o.llm_url {
            c.llm.url = Some(v.clone());
        }
        if let Some(v) = o.llm_timeout {
            c.llm.timeout_secs = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.is_some() && self.synthetic.is_some() {
            return Err(Error::Config("set either `data` or `synthetic`, not both".into()));
        }
        if !self.rf.is_finite() {
            return Err(Error::Config(format!("rf must be finite, got {}", self.rf)));
        }
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::Config(format!(
                "frequency must be positive, got {}",
                self.frequency
            )));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("no metrics selected".into()));
        }
        if self.fractions.is_empty() || self.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::Config(format!(
                "fractions must lie in (0, 1], got {:?}",
                self.fractions
            )));
        }
        if !(self.ndcg_fraction > 0.0 && self.ndcg_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "ndcg_fraction {} outside (0, 1]",
                self.ndcg_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.folds.holdout_frac) {
            return Err(Error::Config(format!(
                "holdout fraction {} outside [0, 1)",
                self.folds.holdout_frac
            )));
        }
        self.fitness.validate()?;
        self.evolution_config().validate()
    }

    pub fn evolution_config(&self) -> EvolutionConfig {
        let e = &self.evolution;
        EvolutionConfig {
            population_size: e.population_size,
            n_generations: e.n_generations,
            top_k: e.top_k,
            crossover_count: e.crossover_count,
            mutation_count: e.mutation_count,
            fitness: self.fitness,
            seed: self.seed,
            generator: e.generator,
            guidance: e.guidance.clone(),
        }
    }
}
