//! Chronological train/future fold geometry.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::top_count;
use crate::error::{Error, Result};

/// One cross-validation fold: scores are computed on `train`, compared against
/// realized performance on `future`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fold {
    pub train: Range<usize>,
    pub future: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FoldSet {
    pub folds: Vec<Fold>,
    pub holdout: Option<Range<usize>>,
    pub n_periods: usize,
}

impl FoldSet {
    /// Periods available for fitting: everything before the holdout.
    pub fn training_prefix(&self) -> Range<usize> {
        0..self.holdout.as_ref().map_or(self.n_periods, |h| h.start)
    }

    /// Stable 64-bit digest of the geometry (FNV-1a over the range bounds).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: usize| {
            for b in (v as u64).to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.n_periods);
        for f in &self.folds {
            for v in [f.train.start, f.train.end, f.future.start, f.future.end] {
                eat(v);
            }
        }
        match &self.holdout {
            Some(r) => {
                eat(1);
                eat(r.start);
                eat(r.end);
            }
            None => eat(0),
        }
        h
    }

    /// Checks the geometry against a series of `n_periods`.
    pub fn validate(&self, n_periods: usize) -> Result<()> {
        if self.n_periods != n_periods {
            return Err(Error::Validation(format!(
                "fold set built for {} periods applied to {n_periods}",
                self.n_periods
            )));
        }
        let prefix = self.training_prefix();
        for (k, f) in self.folds.iter().enumerate() {
            if f.train.is_empty() || f.future.is_empty() || f.train.end > f.future.start || f.future.end > prefix.end {
                return Err(Error::Validation(format!("fold {k} has an invalid geometry: {f:?}")));
            }
        }
        if let Some(h) = &self.holdout {
            if h.end != n_periods || h.is_empty() {
                return Err(Error::Validation(format!("holdout {h:?} must be a non-empty suffix")));
            }
        }
        Ok(())
    }
}

/// Rolling-window fold parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FoldSpec {
    pub holdout_frac: f64,
    pub n_folds: usize,
    pub train_len: usize,
    pub future_len: usize,
    pub stride: usize,
}

impl Default for FoldSpec {
    fn default() -> Self {
        Self {
            holdout_frac: 0.2,
            n_folds: 4,
            train_len: 252,
            future_len: 126,
            stride: 126,
        }
    }
}

/// Splits `n_periods` into a final holdout of `ceil(holdout_frac * T)` periods
/// and `n_folds` rolling windows advancing by `stride` within the remainder.
pub fn split_time_series(n_periods: usize, spec: &FoldSpec) -> Result<FoldSet> {
    if !(0.0..1.0).contains(&spec.holdout_frac) {
        return Err(Error::Config(format!(
            "holdout fraction {} outside [0, 1)",
            spec.holdout_frac
        )));
    }
    if spec.stride == 0 || spec.n_folds == 0 || spec.train_len == 0 || spec.future_len == 0 {
        return Err(Error::Config(
            "fold count, train length, future length and stride must all be at least 1".into(),
        ));
    }
    let holdout_len = top_count(spec.holdout_frac, n_periods);
    let usable = n_periods - holdout_len;
    let required = (spec.n_folds - 1) * spec.stride + spec.train_len + spec.future_len;
    if required > usable {
        return Err(Error::Size {
            what: "time-series folds",
            required,
            available: usable,
        });
    }
    let folds = (0..spec.n_folds)
        .map(|k| {
            let start = k * spec.stride;
            let split = start + spec.train_len;
            Fold {
                train: start..split,
                future: split..split + spec.future_len,
            }
        })
        .collect();
    Ok(FoldSet {
        folds,
        holdout: (holdout_len > 0).then_some(usable..n_periods),
        n_periods,
    })
}
