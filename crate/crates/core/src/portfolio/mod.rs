//! Top-fraction selection, allocators and out-of-sample backtests.

mod alloc;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use alloc::{
    alphasharpe_from_cov, alphasharpe_trace, alphasharpe_weights, contribution_spread, erc_from_cov, erc_weights,
    risk_contributions, risk_parity_weights, AllocatorParams, AlphaSharpeTrace, CovModel, EntropyMode, ErcParams,
};

use crate::data::{top_count, ReturnMatrix};
use crate::error::{Error, Result};
use crate::metrics::{max_drawdown, sharpe};

/// Tolerance on `sum(w) = 1`.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Long-only weights over named assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    assets: Vec<String>,
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(assets: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if assets.len() != weights.len() {
            return Err(Error::Validation(format!(
                "{} assets but {} weights",
                assets.len(),
                weights.len()
            )));
        }
        if assets.is_empty() {
            return Err(Error::EmptyUniverse("weight vector with no assets".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::Numerical(format!("weight {w} is negative or non-finite")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Numerical(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { assets, weights })
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn get(&self, asset: &str) -> Option<f64> {
        self.assets.iter().position(|a| a == asset).map(|i| self.weights[i])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("asset,weight\n");
        for (a, w) in self.assets.iter().zip(&self.weights) {
            let _ = writeln!(out, "{a},{w}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Equal weights over `assets`.
pub fn equal_weight(assets: &[String]) -> Result<WeightVector> {
    let w = 1.0 / assets.len().max(1) as f64;
    WeightVector::new(assets.to_vec(), vec![w; assets.len()])
}

/// Indices (ascending) of the best `ceil(fraction * N)` scored assets, where `N`
/// counts assets that have a score. Score ties go to the lower index; unscored
/// assets are never selected.
pub fn select_top_fraction(scores: &[Option<f64>], fraction: f64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("selection fraction {fraction} outside (0, 1]")));
    }
    let mut scored: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.filter(|v| v.is_finite()).map(|v| (i, v)))
        .collect();
    if scored.is_empty() {
        return Err(Error::EmptyScores("no asset has a score to select on".into()));
    }
    let k = top_count(fraction, scored.len()).max(1);
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut picked: Vec<usize> = scored[..k].iter().map(|(i, _)| *i).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Per-period portfolio log returns `ln(sum_i w_i exp(x_it))` over `r`, with
/// the weights held at their targets every period.
pub fn portfolio_returns(w: &WeightVector, r: &ReturnMatrix) -> Result<Vec<f64>> {
    let mut missing = Vec::new();
    let mut columns = Vec::with_capacity(w.len());
    for a in w.assets() {
        match r.asset_index(a) {
            Some(i) => columns.push(i),
            None => missing.push(a.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingAssets(missing));
    }
    let mut gross = vec![0.0; r.n_periods()];
    for (&c, &wi) in columns.iter().zip(w.weights()) {
        if wi == 0.0 {
            continue;
        }
        for (g, x) in gross.iter_mut().zip(r.column(c)) {
            *g += wi * x.exp();
        }
    }
    Ok(gross.into_iter().map(f64::ln).collect())
}

/// Out-of-sample performance of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub strategy: String,
    /// Annualized Sharpe ratio of the portfolio log returns.
    pub sharpe: f64,
    /// Annualized mean log return over maximum drawdown; `inf` without drawdown.
    #[serde(with = "crate::float_serde")]
    pub calmar: f64,
    pub max_drawdown: f64,
    pub annual_return: f64,
    pub n_periods: usize,
}

pub fn backtest(strategy: impl Into<String>, w: &WeightVector, r: &ReturnMatrix, rf: f64) -> Result<PerfReport> {
    let series = portfolio_returns(w, r)?;
    perf_report(strategy, &series, r.frequency(), rf)
}

pub fn perf_report(strategy: impl Into<String>, series: &[f64], frequency: f64, rf: f64) -> Result<PerfReport> {
    let sr = sharpe(series, rf)? * frequency.sqrt();
    let annual_return = series.iter().sum::<f64>() / series.len() as f64 * frequency;
    let mdd = max_drawdown(series);
    let calmar = if mdd > 0.0 {
        annual_return / mdd
    } else if annual_return >= 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    if !sr.is_finite() {
        return Err(Error::Numerical(
            "portfolio returns produced a non-finite Sharpe ratio".into(),
        ));
    }
    Ok(PerfReport {
        strategy: strategy.into(),
        sharpe: sr,
        calmar,
        max_drawdown: mdd,
        annual_return,
        n_periods: series.len(),
    })
}

/// `100 * (s - b) / |b|`; undefined for a zero or non-finite benchmark.
pub fn delta_pct(strategy: f64, benchmark: f64) -> Option<f64> {
    if benchmark == 0.0 || !benchmark.is_finite() || !strategy.is_finite() {
        return None;
    }
    Some(100.0 * (strategy - benchmark) / benchmark.abs())
}

pub fn format_delta(d: Option<f64>) -> String {
    match d {
        Some(v) => format!("{:+.2}%", v + 0.0),
        None => "n/a".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub sharpe: f64,
    #[serde(with = "crate::float_serde")]
    pub calmar: f64,
    pub delta_sharpe_pct: Option<f64>,
    pub delta_calmar_pct: Option<f64>,
}

/// Strategies set against one benchmark row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub title: String,
    pub benchmark: String,
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_strategies(
    title: impl Into<String>,
    reports: &[PerfReport],
    benchmark: &str,
) -> Result<ComparisonTable> {
    let base = reports
        .iter()
        .find(|r| r.strategy == benchmark)
        .ok_or_else(|| Error::Validation(format!("benchmark `{benchmark}` is not among the strategies")))?;
    let rows = reports
        .iter()
        .map(|r| {
            let is_base = r.strategy == benchmark;
            ComparisonRow {
                strategy: r.strategy.clone(),
                sharpe: r.sharpe,
                calmar: r.calmar,
                delta_sharpe_pct: if is_base {
                    Some(0.0)
                } else {
                    delta_pct(r.sharpe, base.sharpe)
                },
                delta_calmar_pct: if is_base {
                    Some(0.0)
                } else {
                    delta_pct(r.calmar, base.calmar)
                },
            }
        })
        .collect();
    Ok(ComparisonTable {
        title: title.into(),
        benchmark: benchmark.to_string(),
        rows,
    })
}

fn fmt_stat(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else if v > 0.0 {
        "inf".into()
    } else if v < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

impl ComparisonTable {
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.strategy.len()).max().unwrap_or(0).max(8);
        let mut out = format!("{}\n", self.title);
        let _ = writeln!(
            out,
            "{:<width$}  {:>10}  {:>10}  {:>12}  {:>12}",
            "strategy", "sharpe", "calmar", "d_sharpe", "d_calmar"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>10}  {:>10}  {:>12}  {:>12}",
                r.strategy,
                fmt_stat(r.sharpe),
                fmt_stat(r.calmar),
                format_delta(r.delta_sharpe_pct),
                format_delta(r.delta_calmar_pct)
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,sharpe,calmar,delta_sharpe_pct,delta_calmar_pct\n");
        let opt = |d: Option<f64>| d.map_or_else(|| "NA".to_string(), |v| v.to_string());
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.strategy,
                r.sharpe,
                fmt_stat(r.calmar).replace("inf", "Inf"),
                opt(r.delta_sharpe_pct),
                opt(r.delta_calmar_pct)
            );
        }
        out
    }
}
