//! Regime-switching Student-t market generator.
//!
//! Each regime draws a drift and a volatility per asset once, then emits
//! `drift + vol * noise` where the noise is Student-t rescaled to unit variance.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use super::ReturnMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub duration: usize,
    pub drift_mean: f64,
    pub drift_dispersion: f64,
    pub vol_mean: f64,
    pub vol_dispersion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_assets: usize,
    pub n_periods: usize,
    pub regimes: Vec<Regime>,
    pub tail_df: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// Five years of daily data: a calm advance, a short crash, then a recovery.
    fn default() -> Self {
        let regime = |duration, drift_mean, drift_dispersion, vol_mean, vol_dispersion| Regime {
            duration,
            drift_mean,
            drift_dispersion,
            vol_mean,
            vol_dispersion,
        };
        Self {
            n_assets: 100,
            n_periods: 1260,
            regimes: vec![
                regime(756, 3e-4, 4e-4, 0.015, 0.006),
                regime(63, -2.5e-3, 1.5e-3, 0.040, 0.012),
                regime(441, 6e-4, 5e-4, 0.020, 0.008),
            ],
            tail_df: 4.0,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    /// Single-regime spec spanning `n_periods`.
    pub fn single_regime(n_assets: usize, n_periods: usize, regime: Regime, tail_df: f64, seed: u64) -> Self {
        Self {
            n_assets,
            n_periods,
            regimes: vec![Regime {
                duration: n_periods,
                ..regime
            }],
            tail_df,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total: usize = self.regimes.iter().map(|r| r.duration).sum();
        if total != self.n_periods {
            return Err(Error::Config(format!(
                "regime durations sum to {total}, expected {}",
                self.n_periods
            )));
        }
        if self.tail_df.is_nan() || self.tail_df <= 2.0 {
            return Err(Error::Config(format!("tail_df must exceed 2, got {}", self.tail_df)));
        }
        if self.n_assets == 0 {
            return Err(Error::Config("synthetic universe needs at least one asset".into()));
        }
        for (k, r) in self.regimes.iter().enumerate() {
            let ok = [r.drift_mean, r.drift_dispersion, r.vol_mean, r.vol_dispersion]
                .iter()
                .all(|v| v.is_finite())
                && r.drift_dispersion >= 0.0
                && r.vol_dispersion >= 0.0;
            if !ok {
                return Err(Error::Config(format!("regime {k} has invalid parameters: {r:?}")));
            }
        }
        Ok(())
    }
}

/// Consecutive weekdays starting on the first Monday of 2000.
fn business_days(n: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().unwrap();
    }
    out
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<ReturnMatrix> {
    spec.validate()?;
    let (n, t) = (spec.n_assets, spec.n_periods);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = StudentT::new(spec.tail_df).map_err(|e| Error::Config(e.to_string()))?;
    let scale = ((spec.tail_df - 2.0) / spec.tail_df).sqrt();

    let mut values = vec![0.0; n * t];
    let mut drift = vec![0.0; n];
    let mut vol = vec![0.0; n];
    let mut start = 0;
    for regime in &spec.regimes {
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            drift[i] = regime.drift_mean + regime.drift_dispersion * z;
            let z: f64 = rng.sample(StandardNormal);
            vol[i] = (regime.vol_mean + regime.vol_dispersion * z).abs();
        }
        for p in start..start + regime.duration {
            for i in 0..n {
                let e: f64 = noise.sample(&mut rng);
                values[i * t + p] = drift[i] + vol[i] * (scale * e);
            }
        }
        start += regime.duration;
    }

    let assets = (0..n).map(|i| format!("SYN{i:05}")).collect();
    ReturnMatrix::from_column_major(business_days(t), assets, values)
}
