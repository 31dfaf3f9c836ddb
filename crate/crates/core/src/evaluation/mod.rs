//! How well a metric's historical scores line up with realized future Sharpe
//! ratios, fold by fold.

mod rank;

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use rank::{average_ranks, kendall, ndcg_at, spearman, tau_b};

use crate::data::{FoldSet, ReturnMatrix};
use crate::error::{Error, Result};
use crate::metrics::{sharpe, MetricDescriptor, MetricResolver, ScoreContext};

/// Knobs shared by every evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    /// Per-period risk-free log rate.
    pub rf: f64,
    /// Top fraction of the universe NDCG looks at.
    pub ndcg_fraction: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            rf: 0.0,
            ndcg_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub spearman: f64,
    pub kendall: f64,
    pub ndcg: f64,
    pub n_assets: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    #[serde(flatten)]
    pub stats: SplitStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StatTriple {
    pub spearman: f64,
    pub kendall: f64,
    pub ndcg: f64,
}

/// Mean and population standard deviation across folds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: StatTriple,
    pub std: StatTriple,
}

impl Aggregate {
    pub fn from_folds(folds: &[FoldRecord]) -> Self {
        let pick = |f: fn(&SplitStats) -> f64| -> (f64, f64) {
            let n = folds.len() as f64;
            if folds.is_empty() {
                return (f64::NAN, f64::NAN);
            }
            let mean = folds.iter().map(|r| f(&r.stats)).sum::<f64>() / n;
            let var = folds.iter().map(|r| (f(&r.stats) - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        let (sm, ss) = pick(|s| s.spearman);
        let (km, ks) = pick(|s| s.kendall);
        let (nm, ns) = pick(|s| s.ndcg);
        Self {
            mean: StatTriple {
                spearman: sm,
                kendall: km,
                ndcg: nm,
            },
            std: StatTriple {
                spearman: ss,
                kendall: ks,
                ndcg: ns,
            },
        }
    }
}

/// Cross-validated alignment of one metric with future Sharpe ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub folds: Vec<FoldRecord>,
    pub aggregate: Aggregate,
    /// Scores on the whole pre-holdout prefix against the holdout.
    pub holdout: Option<SplitStats>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Flat CSV: one `fold` row per fold, `agg` rows for mean and std, and a
    /// `holdout` row when present.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,fold,spearman,kendall,ndcg,n_assets\n");
        for f in &self.folds {
            let s = &f.stats;
            let _ = writeln!(
                out,
                "fold,{},{},{},{},{}",
                f.fold, s.spearman, s.kendall, s.ndcg, s.n_assets
            );
        }
        for (label, t) in [("mean", &self.aggregate.mean), ("std", &self.aggregate.std)] {
            let _ = writeln!(out, "agg,{label},{},{},{},", t.spearman, t.kendall, t.ndcg);
        }
        if let Some(h) = &self.holdout {
            let _ = writeln!(out, "holdout,,{},{},{},{}", h.spearman, h.kendall, h.ndcg, h.n_assets);
        }
        out
    }

    pub fn write(&self, json_path: impl AsRef<Path>, csv_path: impl AsRef<Path>) -> Result<()> {
        let (jp, cp) = (json_path.as_ref(), csv_path.as_ref());
        std::fs::write(jp, self.to_json()?).map_err(|e| Error::io(jp, e))?;
        std::fs::write(cp, self.to_csv()).map_err(|e| Error::io(cp, e))
    }
}

/// Convex weights combining the three mean statistics into one fitness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitnessWeights {
    pub spearman: f64,
    pub kendall: f64,
    pub ndcg: f64,
}

impl Default for FitnessWeights {
    fn default() -> Self {
        Self {
            spearman: 0.4,
            kendall: 0.3,
            ndcg: 0.3,
        }
    }
}

impl FitnessWeights {
    pub fn new(spearman: f64, kendall: f64, ndcg: f64) -> Result<Self> {
        let w = Self {
            spearman,
            kendall,
            ndcg,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.spearman, self.kendall, self.ndcg];
        if parts.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "fitness weights must be non-negative and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }
}

/// `w_s * mean(spearman) + w_k * mean(kendall) + w_n * mean(ndcg)`.
pub fn fitness(report: &EvalReport, w: &FitnessWeights) -> f64 {
    let m = &report.aggregate.mean;
    w.spearman * m.spearman + w.kendall * m.kendall + w.ndcg * m.ndcg
}

/// Evaluates a built-in metric over every fold (and the holdout, if any).
pub fn evaluate_metric(
    m: &MetricDescriptor,
    r: &ReturnMatrix,
    folds: &FoldSet,
    settings: &EvalSettings,
) -> Result<EvalReport> {
    evaluate_with(m, r, folds, settings, &MetricResolver::default())
}

/// Like [`evaluate_metric`], resolving custom kinds through `resolver`.
pub fn evaluate_with(
    m: &MetricDescriptor,
    r: &ReturnMatrix,
    folds: &FoldSet,
    settings: &EvalSettings,
    resolver: &MetricResolver,
) -> Result<EvalReport> {
    folds.validate(r.n_periods())?;
    let records = folds
        .folds
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            evaluate_split(
                m,
                r,
                f.train.clone(),
                f.future.clone(),
                settings,
                resolver,
                &k.to_string(),
            )
            .map(|stats| FoldRecord { fold: k, stats })
        })
        .collect::<Result<Vec<_>>>()?;
    let holdout = match &folds.holdout {
        Some(h) => Some(evaluate_split(
            m,
            r,
            folds.training_prefix(),
            h.clone(),
            settings,
            resolver,
            "holdout",
        )?),
        None => None,
    };
    Ok(EvalReport {
        metric: m.name.clone(),
        aggregate: Aggregate::from_folds(&records),
        folds: records,
        holdout,
    })
}

/// Realized Sharpe ratio of every asset over `window`; `None` where undefined.
pub fn future_sharpe(r: &ReturnMatrix, window: Range<usize>, rf: f64) -> Vec<Option<f64>> {
    r.columns()
        .map(|c| {
            let x = &c[window.clone()];
            if x.iter().any(|v| !v.is_finite()) {
                return None;
            }
            sharpe(x, rf).ok().filter(|v| v.is_finite())
        })
        .collect()
}

/// Scores on `train`, future Sharpe on `future`, both restricted to the assets
/// for which both values exist.
pub fn evaluate_split(
    m: &MetricDescriptor,
    r: &ReturnMatrix,
    train: Range<usize>,
    future: Range<usize>,
    settings: &EvalSettings,
    resolver: &MetricResolver,
    label: &str,
) -> Result<SplitStats> {
    let ctx = ScoreContext {
        returns: r,
        window: train,
        future: Some(future.clone()),
        rf: settings.rf,
    };
    let scores = resolver.score(m, &ctx)?;
    let realized = future_sharpe(r, future, settings.rf);
    let (a, b): (Vec<f64>, Vec<f64>) = scores
        .iter()
        .zip(&realized)
        .filter_map(|(s, f)| Some(((*s)?, (*f)?)))
        .unzip();
    if a.len() < 3 {
        return Err(Error::FoldDegenerate {
            fold: label.to_string(),
            n_assets: a.len(),
        });
    }
    Ok(SplitStats {
        spearman: spearman(&a, &b)?,
        kendall: kendall(&a, &b)?,
        ndcg: ndcg_at(&a, &b, settings.ndcg_fraction)?,
        n_assets: a.len(),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::{generate_synthetic, split_time_series, FoldSpec, SyntheticSpec};
    use crate::metrics::{CustomMetric, FutureSharpeOracle, MetricKind, ScoreVector};

    fn market() -> ReturnMatrix {
        generate_synthetic(&SyntheticSpec {
            n_assets: 20,
            n_periods: 200,
            regimes: vec![crate::data::Regime {
                duration: 200,
                drift_mean: 2e-4,
                drift_dispersion: 8e-4,
                vol_mean: 0.02,
                vol_dispersion: 0.005,
            }],
            tail_df: 5.0,
            seed: 3,
        })
        .unwrap()
    }

    fn folds(n_folds: usize) -> FoldSet {
        split_time_series(
            200,
            &FoldSpec {
                holdout_frac: 0.2,
                n_folds,
                train_len: 60,
                future_len: 40,
                stride: 30,
            },
        )
        .unwrap()
    }

    struct NegatedOracle;

    impl CustomMetric for NegatedOracle {
        fn score(&self, ctx: &ScoreContext<'_>, d: &MetricDescriptor) -> Result<ScoreVector> {
            Ok(FutureSharpeOracle
                .score(ctx, d)?
                .into_iter()
                .map(|v| v.map(|x| -x))
                .collect())
        }
    }

    #[test]
    fn oracle_scores_align_perfectly() {
        let r = market();
        let resolver = MetricResolver::new().with_custom("oracle", Arc::new(FutureSharpeOracle));
        let rep = evaluate_with(
            &MetricDescriptor::custom("oracle"),
            &r,
            &folds(1),
            &EvalSettings::default(),
            &resolver,
        )
        .unwrap();
        let s = rep.folds[0].stats;
        assert_eq!((s.spearman, s.kendall, s.ndcg), (1.0, 1.0, 1.0));
        assert!((fitness(&rep, &FitnessWeights::default()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negated_oracle_is_perfectly_anti_aligned() {
        let r = market();
        let resolver = MetricResolver::new().with_custom("neg", Arc::new(NegatedOracle));
        let rep = evaluate_with(
            &MetricDescriptor::custom("neg"),
            &r,
            &folds(1),
            &EvalSettings::default(),
            &resolver,
        )
        .unwrap();
        assert!((rep.folds[0].stats.spearman + 1.0).abs() < 1e-12);
    }

    #[test]
    fn aggregates_recompose_from_independent_splits() {
        let r = market();
        let fs = folds(2);
        let m = MetricDescriptor::builtin(MetricKind::AlphaS2);
        let settings = EvalSettings::default();
        let rep = evaluate_metric(&m, &r, &fs, &settings).unwrap();
        let mut sum = 0.0;
        for f in &fs.folds {
            let scores = crate::metrics::score_window(&r, f.train.clone(), &m, 0.0).unwrap();
            let fut = future_sharpe(&r, f.future.clone(), 0.0);
            let a: Vec<f64> = scores.iter().map(|v| v.unwrap()).collect();
            let b: Vec<f64> = fut.iter().map(|v| v.unwrap()).collect();
            sum += spearman(&a, &b).unwrap();
        }
        assert!((rep.aggregate.mean.spearman - sum / 2.0).abs() < 1e-15);
        assert!(rep.holdout.is_some());
        assert_eq!(rep.to_csv().lines().count(), 1 + 2 + 2 + 1);
    }

    #[test]
    fn degenerate_fold_is_named() {
        let r = market().select_assets(&[0, 1]);
        let m = MetricDescriptor::builtin(MetricKind::Sharpe);
        match evaluate_metric(&m, &r, &folds(1), &EvalSettings::default()) {
            Err(Error::FoldDegenerate { fold, n_assets }) => assert_eq!((fold.as_str(), n_assets), ("0", 2)),
            other => panic!("expected degenerate fold, got {other:?}"),
        }
    }

    #[test]
    fn fitness_arithmetic() {
        let rep = EvalReport {
            metric: "x".into(),
            folds: vec![],
            aggregate: Aggregate {
                mean: StatTriple {
                    spearman: 0.4,
                    kendall: 0.3,
                    ndcg: 0.6,
                },
                std: StatTriple::default(),
            },
            holdout: None,
        };
        assert!((fitness(&rep, &FitnessWeights::default()) - 0.43).abs() < 1e-15);
        assert_eq!(fitness(&rep, &FitnessWeights::new(1.0, 0.0, 0.0).unwrap()), 0.4);
        assert!(FitnessWeights::new(0.5, 0.5, 0.5).is_err());
        assert!(FitnessWeights::new(1.5, -0.5, 0.0).is_err());
    }
}
