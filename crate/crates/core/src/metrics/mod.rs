//! Baseline and AlphaSharpe risk-adjusted scores, metric descriptors and
//! universe-wide scoring.

mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use stats::{
    alpha_s1, alpha_s2, alpha_s3, alpha_s3_with, alpha_s4, alpha_s4_with, downside_risk, forecast_vol, max_drawdown,
    mean_excess, moments, prob_sharpe, risk_components, sharpe, MomentDivisors, MomentSet, ProbSharpe, RiskComponents,
    DEFAULT_EPS, DEFAULT_REGIME_BONUS, SHARPE_EPS,
};

use crate::data::ReturnMatrix;
use crate::error::{Error, Result};

/// Per-asset scores in asset order; `None` marks an asset the metric could not score.
pub type ScoreVector = Vec<Option<f64>>;

/// Parameter keys understood by the built-in kinds.
pub mod param {
    pub const EPS: &str = "eps";
    pub const KURT_DIV: &str = "kurt_div";
    pub const SKEW_DIV: &str = "skew_div";
    pub const BONUS: &str = "bonus";
    pub const SR_BENCHMARK: &str = "sr_benchmark";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Sharpe,
    Psr,
    AlphaS1,
    AlphaS2,
    AlphaS3,
    AlphaS4,
    Custom,
}

impl MetricKind {
    pub const BUILTIN: [MetricKind; 6] = [
        MetricKind::Sharpe,
        MetricKind::Psr,
        MetricKind::AlphaS1,
        MetricKind::AlphaS2,
        MetricKind::AlphaS3,
        MetricKind::AlphaS4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Sharpe => "sharpe",
            MetricKind::Psr => "psr",
            MetricKind::AlphaS1 => "alpha_s1",
            MetricKind::AlphaS2 => "alpha_s2",
            MetricKind::AlphaS3 => "alpha_s3",
            MetricKind::AlphaS4 => "alpha_s4",
            MetricKind::Custom => "custom",
        }
    }

    /// Minimum series length the kind can score.
    pub fn min_len(self) -> usize {
        match self {
            MetricKind::Sharpe | MetricKind::AlphaS1 | MetricKind::Custom => 2,
            MetricKind::Psr => 3,
            MetricKind::AlphaS2 | MetricKind::AlphaS3 | MetricKind::AlphaS4 => 4,
        }
    }

    /// Parameters (with defaults) the kind reads.
    pub fn default_params(self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            MetricKind::Sharpe | MetricKind::Custom => &[],
            MetricKind::Psr => &[(param::SR_BENCHMARK, 0.0)],
            MetricKind::AlphaS1 | MetricKind::AlphaS2 => &[(param::EPS, DEFAULT_EPS)],
            MetricKind::AlphaS3 => &[
                (param::EPS, DEFAULT_EPS),
                (param::KURT_DIV, 12.0),
                (param::SKEW_DIV, 6.0),
            ],
            MetricKind::AlphaS4 => &[
                (param::EPS, DEFAULT_EPS),
                (param::KURT_DIV, 12.0),
                (param::SKEW_DIV, 6.0),
                (param::BONUS, DEFAULT_REGIME_BONUS),
            ],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    /// Next member of the alpha family (`s1 -> s2 -> s3 -> s4 -> s1`); the
    /// baselines step into `alpha_s1`; custom kinds have no successor.
    pub fn successor(self) -> Option<MetricKind> {
        match self {
            MetricKind::Sharpe | MetricKind::Psr | MetricKind::AlphaS4 => Some(MetricKind::AlphaS1),
            MetricKind::AlphaS1 => Some(MetricKind::AlphaS2),
            MetricKind::AlphaS2 => Some(MetricKind::AlphaS3),
            MetricKind::AlphaS3 => Some(MetricKind::AlphaS4),
            MetricKind::Custom => None,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::BUILTIN
            .into_iter()
            .chain([MetricKind::Custom])
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric kind `{s}`")))
    }
}

/// A named, parameterized scoring function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDescriptor {
    pub name: String,
    pub kind: MetricKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl MetricDescriptor {
    /// Built-in kind with its default parameters, named after the kind.
    pub fn builtin(kind: MetricKind) -> Self {
        Self {
            name: kind.as_str().to_string(),
            kind,
            params: kind.default_params(),
        }
    }

    pub fn custom(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: MetricKind::Custom,
            params: BTreeMap::new(),
        }
    }

    /// Parameter value, falling back to the kind's default.
    pub fn param(&self, key: &str) -> f64 {
        self.params
            .get(key)
            .copied()
            .or_else(|| self.kind.default_params().get(key).copied())
            .unwrap_or(f64::NAN)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Config("metric name must not be empty".into()));
        }
        if let Some((k, v)) = self.params.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Config(format!(
                "metric `{}`: parameter {k} = {v} is not finite",
                self.name
            )));
        }
        if self.kind != MetricKind::Custom && self.kind.default_params().contains_key(param::EPS) {
            let eps = self.param(param::EPS);
            if !(eps > 0.0) {
                return Err(Error::Config(format!(
                    "metric `{}`: eps must be positive, got {eps}",
                    self.name
                )));
            }
        }
        for key in [param::KURT_DIV, param::SKEW_DIV] {
            if self.kind.default_params().contains_key(key) && self.param(key) == 0.0 {
                return Err(Error::Config(format!("metric `{}`: {key} must be non-zero", self.name)));
            }
        }
        Ok(())
    }

    /// Identity used for de-duplication and caching: the kind and parameters, plus
    /// the name for custom kinds (whose behavior the name selects).
    pub fn identity_key(&self) -> String {
        let mut key = String::from(self.kind.as_str());
        if self.kind == MetricKind::Custom {
            key.push(':');
            key.push_str(&self.name);
        }
        for (k, v) in &self.params {
            key.push_str(&format!("|{k}={:016x}", v.to_bits()));
        }
        key
    }

    /// Scores one asset's history with a built-in kind.
    pub fn score_series(&self, x: &[f64], rf: f64) -> Result<f64> {
        let eps = || self.param(param::EPS);
        let div = || MomentDivisors {
            kurtosis: self.param(param::KURT_DIV),
            skewness: self.param(param::SKEW_DIV),
        };
        match self.kind {
            MetricKind::Sharpe => sharpe(x, rf),
            MetricKind::Psr => prob_sharpe(x, rf, self.param(param::SR_BENCHMARK)).map(|p| p.probability),
            MetricKind::AlphaS1 => alpha_s1(x, rf, eps()),
            MetricKind::AlphaS2 => alpha_s2(x, rf, eps()),
            MetricKind::AlphaS3 => alpha_s3_with(x, rf, eps(), div()),
            MetricKind::AlphaS4 => alpha_s4_with(x, rf, eps(), div(), self.param(param::BONUS)),
            MetricKind::Custom => Err(Error::Config(format!(
                "custom metric `{}` cannot be scored without a resolver",
                self.name
            ))),
        }
    }
}

/// Named collection of metric descriptors, persisted as a JSON array (`metrics.json`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricRegistry {
    metrics: Vec<MetricDescriptor>,
}

impl MetricRegistry {
    /// Sharpe, PSR and the four alpha metrics with default parameters.
    pub fn baselines() -> Self {
        Self {
            metrics: MetricKind::BUILTIN.into_iter().map(MetricDescriptor::builtin).collect(),
        }
    }

    pub fn from_descriptors(metrics: Vec<MetricDescriptor>) -> Result<Self> {
        let mut reg = Self::default();
        for m in metrics {
            reg.insert(m)?;
        }
        Ok(reg)
    }

    pub fn insert(&mut self, m: MetricDescriptor) -> Result<()> {
        m.validate()?;
        if self.get(&m.name).is_some() {
            return Err(Error::Config(format!("duplicate metric name `{}`", m.name)));
        }
        self.metrics.push(m);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&MetricDescriptor> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MetricDescriptor> {
        self.metrics.iter()
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let metrics: Vec<MetricDescriptor> = serde_json::from_str(&text)?;
        Self::from_descriptors(metrics)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Where a score request looks: the scoring window and, for diagnostics that
/// need it, the realized window that follows.
#[derive(Debug, Clone)]
pub struct ScoreContext<'a> {
    pub returns: &'a ReturnMatrix,
    pub window: Range<usize>,
    pub future: Option<Range<usize>>,
    pub rf: f64,
}

/// A scoring function registered under a custom metric name.
pub trait CustomMetric: Send + Sync {
    fn score(&self, ctx: &ScoreContext<'_>, descriptor: &MetricDescriptor) -> Result<ScoreVector>;
}

/// Diagnostic metric that scores each asset by its realized Sharpe ratio on the
/// future window. It peeks at the outcome, so it only serves as a perfect-
/// alignment reference for the evaluation and evolution machinery.
#[derive(Debug, Clone, Copy, Default)]
pub struct FutureSharpeOracle;

impl FutureSharpeOracle {
    pub const NAME: &'static str = "oracle";
}

impl CustomMetric for FutureSharpeOracle {
    fn score(&self, ctx: &ScoreContext<'_>, _: &MetricDescriptor) -> Result<ScoreVector> {
        let future = ctx
            .future
            .clone()
            .ok_or_else(|| Error::Config("oracle metric needs a future window".into()))?;
        Ok(ctx
            .returns
            .columns()
            .map(|c| sharpe(&c[future.clone()], ctx.rf).ok().filter(|v| v.is_finite()))
            .collect())
    }
}

/// Resolves descriptors to scores: built-in kinds directly, custom kinds through
/// registered implementations keyed by descriptor name.
#[derive(Clone, Default)]
pub struct MetricResolver {
    customs: BTreeMap<String, Arc<dyn CustomMetric>>,
}

impl fmt::Debug for MetricResolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricResolver")
            .field("customs", &self.customs.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl MetricResolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_custom(mut self, name: impl Into<String>, metric: Arc<dyn CustomMetric>) -> Self {
        self.customs.insert(name.into(), metric);
        self
    }

    pub fn has_custom(&self, name: &str) -> bool {
        self.customs.contains_key(name)
    }

    pub fn score(&self, descriptor: &MetricDescriptor, ctx: &ScoreContext<'_>) -> Result<ScoreVector> {
        let scores = match descriptor.kind {
            MetricKind::Custom => {
                let metric = self.customs.get(&descriptor.name).ok_or_else(|| {
                    Error::Config(format!(
                        "no implementation registered for custom metric `{}`",
                        descriptor.name
                    ))
                })?;
                let mut s = metric.score(ctx, descriptor)?;
                for v in &mut s {
                    *v = v.filter(|x| x.is_finite());
                }
                s
            }
            _ => score_window(ctx.returns, ctx.window.clone(), descriptor, ctx.rf)?,
        };
        if scores.iter().all(Option::is_none) {
            return Err(Error::EmptyScores(descriptor.name.clone()));
        }
        Ok(scores)
    }
}

/// Applies a built-in metric to every asset over `window`. Assets whose
/// history is too short or whose score is not finite get `None`.
pub fn score_window(r: &ReturnMatrix, window: Range<usize>, m: &MetricDescriptor, rf: f64) -> Result<ScoreVector> {
    m.validate()?;
    if m.kind == MetricKind::Custom {
        return Err(Error::Config(format!(
            "custom metric `{}` cannot be scored without a resolver",
            m.name
        )));
    }
    if window.end > r.n_periods() || window.start > window.end {
        return Err(Error::Validation(format!(
            "window {window:?} outside a series of {} periods",
            r.n_periods()
        )));
    }
    let scores: ScoreVector = (0..r.n_assets())
        .into_par_iter()
        .map(|i| {
            let x = r.column_window(i, window.clone());
            if x.iter().any(|v| !v.is_finite()) {
                return None;
            }
            m.score_series(x, rf).ok().filter(|v| v.is_finite())
        })
        .collect();
    if scores.iter().all(Option::is_none) {
        return Err(Error::EmptyScores(m.name.clone()));
    }
    Ok(scores)
}

/// Applies a built-in metric to every asset over the full history.
pub fn score_universe(r: &ReturnMatrix, m: &MetricDescriptor, rf: f64) -> Result<ScoreVector> {
    score_window(r, 0..r.n_periods(), m, rf)
}
