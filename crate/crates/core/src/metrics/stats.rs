//! Scalar risk and performance statistics of a single log-return series.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Default stability constant for the alpha metrics.
pub const DEFAULT_EPS: f64 = 1e-8;

/// Guard added to the Sharpe denominator.
pub const SHARPE_EPS: f64 = 1e-12;

fn require(what: &'static str, x: &[f64], required: usize) -> Result<()> {
    if x.len() < required {
        Err(Error::Size {
            what,
            required,
            available: x.len(),
        })
    } else {
        Ok(())
    }
}

/// Mean computed around the first element, exact for constant series.
fn mean(x: &[f64]) -> f64 {
    let x0 = x[0];
    x0 + x.iter().map(|v| v - x0).sum::<f64>() / x.len() as f64
}

/// Mean of `x - rf`.
pub fn mean_excess(x: &[f64], rf: f64) -> f64 {
    x.iter().map(|v| v - rf).sum::<f64>() / x.len() as f64
}

fn population_std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Population moments of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub mean: f64,
    pub variance: f64,
    pub std: f64,
    /// `m3 / m2^(3/2)`
    pub skewness: f64,
    /// `m4 / m2^2 - 3`
    pub excess_kurtosis: f64,
    pub n: usize,
}

/// Mean, population variance, skewness and excess kurtosis. A zero-variance
/// series has skewness and excess kurtosis 0.
pub fn moments(x: &[f64]) -> Result<MomentSet> {
    require("moments", x, 2)?;
    let n = x.len() as f64;
    let mean = mean(x);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    Ok(MomentSet {
        mean,
        variance: m2,
        std: m2.sqrt(),
        skewness,
        excess_kurtosis,
        n: x.len(),
    })
}

/// Per-period Sharpe ratio `mean(x - rf) / (std(x) + 1e-12)` with the population std.
pub fn sharpe(x: &[f64], rf: f64) -> Result<f64> {
    require("sharpe", x, 2)?;
    Ok(mean_excess(x, rf) / (population_std(x) + SHARPE_EPS))
}

/// Probabilistic Sharpe ratio with its degeneracy flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbSharpe {
    pub probability: f64,
    /// Set when the variance term of the Sharpe estimator is non-positive; the
    /// probability is then reported as 0.5.
    pub degenerate: bool,
}

/// Probability that the true Sharpe ratio exceeds `sr_benchmark`, accounting
/// for sample length, skewness and kurtosis of the returns.
pub fn prob_sharpe(x: &[f64], rf: f64, sr_benchmark: f64) -> Result<ProbSharpe> {
    require("probabilistic sharpe", x, 3)?;
    let sr = sharpe(x, rf)?;
    let m = moments(x)?;
    let kurtosis = m.excess_kurtosis + 3.0;
    let radicand = 1.0 - m.skewness * sr + (kurtosis - 1.0) / 4.0 * sr * sr;
    if !(radicand > 0.0) {
        return Ok(ProbSharpe {
            probability: 0.5,
            degenerate: true,
        });
    }
    let z = (sr - sr_benchmark) * ((x.len() - 1) as f64).sqrt() / radicand.sqrt();
    let std_normal = Normal::standard();
    Ok(ProbSharpe {
        probability: std_normal.cdf(z),
        degenerate: false,
    })
}

/// Downside risk `(std(R-) + sqrt(N-) * std(R)) / (N- + eps)`, where `R-` are the
/// strictly negative returns and `std(R-)` is 0 with fewer than two of them.
pub fn downside_risk(x: &[f64], eps: f64) -> Result<f64> {
    require("downside risk", x, 2)?;
    let negatives: Vec<f64> = x.iter().copied().filter(|&v| v < 0.0).collect();
    let n_neg = negatives.len() as f64;
    let neg_std = if negatives.len() >= 2 {
        population_std(&negatives)
    } else {
        0.0
    };
    Ok((neg_std + n_neg.sqrt() * population_std(x)) / (n_neg + eps))
}

/// Forecast volatility: squared deviations from the full-series mean, summed
/// over the window starting at `floor(n/4)`, divided by the full length `n`.
pub fn forecast_vol(x: &[f64]) -> Result<f64> {
    require("forecast volatility", x, 4)?;
    let n = x.len();
    let m = mean(x);
    let ss: f64 = x[n / 4..].iter().map(|v| (v - m) * (v - m)).sum();
    Ok((ss / n as f64).sqrt())
}

/// Largest fractional peak-to-trough loss of `exp(cumsum(x))`, starting from wealth 1.
pub fn max_drawdown(x: &[f64]) -> f64 {
    let mut cum = 0.0;
    let mut peak = 1.0f64;
    let mut mdd = 0.0f64;
    for v in x {
        cum += v;
        let wealth = cum.exp();
        peak = peak.max(wealth);
        mdd = mdd.max((peak - wealth) / peak);
    }
    mdd
}

/// Downside, forecast-volatility and drawdown components of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskComponents {
    pub dr: f64,
    pub v: f64,
    pub mdd: f64,
    pub n_neg: usize,
}

pub fn risk_components(x: &[f64], eps: f64) -> Result<RiskComponents> {
    Ok(RiskComponents {
        dr: downside_risk(x, eps)?,
        v: forecast_vol(x)?,
        mdd: max_drawdown(x),
        n_neg: x.iter().filter(|&&v| v < 0.0).count(),
    })
}

/// `exp(mean(x - rf)) / sqrt((var + eps) * (std + eps))`
pub fn alpha_s1(x: &[f64], rf: f64, eps: f64) -> Result<f64> {
    require("alpha_s1", x, 2)?;
    let sigma = population_std(x);
    Ok(mean_excess(x, rf).exp() / ((sigma * sigma + eps) * (sigma + eps)).sqrt())
}

/// `exp(mean(x - rf)) / (sqrt(var + eps) + DR + V)`
pub fn alpha_s2(x: &[f64], rf: f64, eps: f64) -> Result<f64> {
    require("alpha_s2", x, 4)?;
    let sigma = population_std(x);
    let denom = (sigma * sigma + eps).sqrt() + downside_risk(x, eps)? + forecast_vol(x)?;
    Ok(mean_excess(x, rf).exp() / denom)
}

/// Divisors applied to the higher-moment adjustment of `alpha_s3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentDivisors {
    pub kurtosis: f64,
    pub skewness: f64,
}

impl Default for MomentDivisors {
    fn default() -> Self {
        Self {
            kurtosis: 12.0,
            skewness: 6.0,
        }
    }
}

/// `alpha_s2 * (1 - K/12) * (1 + S/6) / (1 + MDD)` with K the excess kurtosis.
/// Not clamped: heavy tails (K > 12) or strong negative skew (S < -6) make it negative.
pub fn alpha_s3(x: &[f64], rf: f64, eps: f64) -> Result<f64> {
    alpha_s3_with(x, rf, eps, MomentDivisors::default())
}

pub fn alpha_s3_with(x: &[f64], rf: f64, eps: f64, div: MomentDivisors) -> Result<f64> {
    let base = alpha_s2(x, rf, eps)?;
    let m = moments(x)?;
    let mdd = max_drawdown(x);
    Ok(base * (1.0 - m.excess_kurtosis / div.kurtosis) * (1.0 + m.skewness / div.skewness) / (1.0 + mdd))
}

/// Regime bonus used by `alpha_s4`.
pub const DEFAULT_REGIME_BONUS: f64 = 0.1;

/// `alpha_s3 * (1 + bonus)` when the mean excess return is strictly positive,
/// `alpha_s3` otherwise.
pub fn alpha_s4(x: &[f64], rf: f64, eps: f64, bonus: f64) -> Result<f64> {
    alpha_s4_with(x, rf, eps, MomentDivisors::default(), bonus)
}

pub fn alpha_s4_with(x: &[f64], rf: f64, eps: f64, div: MomentDivisors, bonus: f64) -> Result<f64> {
    let base = alpha_s3_with(x, rf, eps, div)?;
    Ok(if mean_excess(x, rf) > 0.0 {
        base * (1.0 + bonus)
    } else {
        base
    })
}
