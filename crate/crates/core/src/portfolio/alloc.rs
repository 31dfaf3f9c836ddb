//! Long-only allocators: the AlphaSharpe allocation, inverse-volatility risk
//! parity and equal risk contribution.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::WeightVector;
use crate::data::ReturnMatrix;
use crate::error::{Error, Result};

/// Mean vector and ridge-regularized sample covariance of a return matrix.
#[derive(Debug, Clone)]
pub struct CovModel {
    pub assets: Vec<String>,
    pub mu: DVector<f64>,
    /// Sample covariance (divisor `T - 1`) plus `lambda * I`.
    pub sigma: DMatrix<f64>,
    pub lambda: f64,
}

impl CovModel {
    pub fn estimate(r: &ReturnMatrix, lambda: f64) -> Result<Self> {
        let (t, n) = (r.n_periods(), r.n_assets());
        if n == 0 {
            return Err(Error::EmptyUniverse("covariance of an empty universe".into()));
        }
        if t < 2 {
            return Err(Error::Size {
                what: "covariance",
                required: 2,
                available: t,
            });
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "ridge lambda must be a non-negative number, got {lambda}"
            )));
        }
        if !r.is_clean() {
            return Err(Error::Validation("covariance input contains non-finite returns".into()));
        }
        if t <= n {
            tracing::warn!(
                periods = t,
                assets = n,
                "fewer periods than assets; covariance relies on the ridge"
            );
        }
        let mu = DVector::from_iterator(n, r.columns().map(|c| c.iter().sum::<f64>() / t as f64));
        let mut centered = DMatrix::from_column_slice(t, n, r.as_column_major());
        for (i, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mu[i]);
        }
        let transposed = centered.transpose();
        let mut sigma = DMatrix::zeros(n, n);
        sigma.gemm(1.0 / (t - 1) as f64, &transposed, &centered, 0.0);
        drop(transposed);
        // exact symmetry regardless of kernel blocking
        for j in 0..n {
            for i in j + 1..n {
                let v = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
                sigma[(i, j)] = v;
                sigma[(j, i)] = v;
            }
            sigma[(j, j)] += lambda;
        }
        Ok(Self {
            assets: r.assets().to_vec(),
            mu,
            sigma,
            lambda,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }
}

/// How the entropy factor enters the AlphaSharpe weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    /// `w' = softmax(r') * exp(-H)`; the common factor cancels in the final normalization.
    #[default]
    Scalar,
    /// `w'_i = w_i * exp(-H * w_i)`, which does shrink the largest weights.
    PerAsset,
}

impl FromStr for EntropyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scalar" => Ok(Self::Scalar),
            "per_asset" => Ok(Self::PerAsset),
            other => Err(Error::Config(format!(
                "unknown entropy mode `{other}` (expected scalar|per_asset)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AllocatorParams {
    pub lambda: f64,
    pub epsilon: f64,
    pub entropy_mode: EntropyMode,
}

impl Default for AllocatorParams {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epsilon: 1e-8,
            entropy_mode: EntropyMode::Scalar,
        }
    }
}

/// Every intermediate of the AlphaSharpe allocation.
#[derive(Debug, Clone)]
pub struct AlphaSharpeTrace {
    /// Solution of `sigma * z = mu`.
    pub z: Vec<f64>,
    /// `max(0, z)`
    pub clipped: Vec<f64>,
    /// `(1 + std(clipped) * clipped) / sqrt(diag(sigma) + eps)`
    pub adjusted: Vec<f64>,
    pub softmax: Vec<f64>,
    pub entropy: f64,
    pub regularized: Vec<f64>,
    pub weights: Vec<f64>,
}

fn population_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt()
}

/// Runs the four AlphaSharpe steps on an estimated covariance model.
pub fn alphasharpe_trace(cov: &CovModel, params: &AllocatorParams) -> Result<AlphaSharpeTrace> {
    let eps = params.epsilon;
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("epsilon must be non-negative, got {eps}")));
    }
    let chol = nalgebra::Cholesky::new(cov.sigma.clone()).ok_or_else(|| {
        Error::Numerical(format!(
            "covariance is not positive definite with ridge {}; increase lambda",
            cov.lambda
        ))
    })?;
    let z: Vec<f64> = chol.solve(&cov.mu).iter().copied().collect();
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "inverse-covariance solve produced non-finite values; increase lambda".into(),
        ));
    }

    let clipped: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
    let spread = population_std(&clipped);
    let adjusted: Vec<f64> = clipped
        .iter()
        .enumerate()
        .map(|(i, v)| (1.0 + spread * v) / (cov.sigma[(i, i)] + eps).sqrt())
        .collect();

    let top = adjusted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = adjusted.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    let softmax: Vec<f64> = exps.iter().map(|e| e / total).collect();

    let entropy = -softmax.iter().map(|w| w * (w + eps).ln()).sum::<f64>();
    let regularized: Vec<f64> = match params.entropy_mode {
        EntropyMode::Scalar => {
            let factor = (-entropy).exp();
            softmax.iter().map(|w| w * factor).collect()
        }
        EntropyMode::PerAsset => softmax.iter().map(|w| w * (-entropy * w).exp()).collect(),
    };

    let positive: f64 = regularized.iter().map(|w| w.max(0.0)).sum();
    if !(positive > 0.0) {
        return Err(Error::Numerical(
            "AlphaSharpe weights vanished after regularization".into(),
        ));
    }
    let weights = regularized.iter().map(|w| w.max(0.0) / positive).collect();
    Ok(AlphaSharpeTrace {
        z,
        clipped,
        adjusted,
        softmax,
        entropy,
        regularized,
        weights,
    })
}

/// AlphaSharpe weights from a matrix of excess log returns.
pub fn alphasharpe_weights(excess: &ReturnMatrix, params: &AllocatorParams) -> Result<WeightVector> {
    let cov = CovModel::estimate(excess, params.lambda)?;
    alphasharpe_from_cov(&cov, params)
}

pub fn alphasharpe_from_cov(cov: &CovModel, params: &AllocatorParams) -> Result<WeightVector> {
    let trace = alphasharpe_trace(cov, params)?;
    WeightVector::new(cov.assets.clone(), trace.weights)
}

/// Inverse-volatility weights. Assets with zero sample volatility are left out.
pub fn risk_parity_weights(r: &ReturnMatrix) -> Result<WeightVector> {
    let t = r.n_periods();
    if t < 2 {
        return Err(Error::Size {
            what: "risk parity",
            required: 2,
            available: t,
        });
    }
    let mut assets = Vec::new();
    let mut inv = Vec::new();
    for (id, c) in r.assets().iter().zip(r.columns()) {
        let m = c.iter().sum::<f64>() / t as f64;
        let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (t - 1) as f64).sqrt();
        if sd > 0.0 && sd.is_finite() {
            assets.push(id.clone());
            inv.push(1.0 / sd);
        } else {
            tracing::warn!(asset = %id, "zero-volatility asset excluded from risk parity");
        }
    }
    if assets.is_empty() {
        return Err(Error::EmptyUniverse("every asset has zero volatility".into()));
    }
    let total: f64 = inv.iter().sum();
    WeightVector::new(assets, inv.into_iter().map(|v| v / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErcParams {
    /// Maximum relative spread `(max - min) / mean` of risk contributions.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ErcParams {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

/// Risk contributions `w_i * (sigma w)_i`.
pub fn risk_contributions(sigma: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    let sw = sigma * DVector::from_column_slice(w);
    w.iter().zip(sw.iter()).map(|(a, b)| a * b).collect()
}

/// `(max - min) / mean` of the risk contributions.
pub fn contribution_spread(sigma: &DMatrix<f64>, w: &[f64]) -> f64 {
    let rc = risk_contributions(sigma, w);
    let lo = rc.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = rc.iter().sum::<f64>() / rc.len() as f64;
    (hi - lo) / mean
}

/// Equal-risk-contribution weights on the ridge-regularized sample covariance.
pub fn erc_weights(r: &ReturnMatrix, lambda: f64, params: &ErcParams) -> Result<WeightVector> {
    let cov = CovModel::estimate(r, lambda)?;
    erc_from_cov(&cov.assets, &cov.sigma, params)
}

/// Cyclical coordinate descent on `0.5 w'Sw - (1/N) sum ln w_i`, started from
/// equal weights; its minimizer has equal risk contributions.
pub fn erc_from_cov(assets: &[String], sigma: &DMatrix<f64>, params: &ErcParams) -> Result<WeightVector> {
    let n = assets.len();
    if n == 0 {
        return Err(Error::EmptyUniverse(
            "equal risk contribution of an empty universe".into(),
        ));
    }
    if sigma.nrows() != n || sigma.ncols() != n {
        return Err(Error::Validation(
            "covariance shape does not match the asset list".into(),
        ));
    }
    if (0..n).any(|i| !(sigma[(i, i)] > 0.0)) {
        return Err(Error::Numerical("covariance has a non-positive diagonal entry".into()));
    }
    let budget = 1.0 / n as f64;
    let mut w = vec![budget; n];
    let mut spread = f64::INFINITY;
    for _ in 0..params.max_iter {
        let mut sw: Vec<f64> = (sigma * DVector::from_column_slice(&w)).iter().copied().collect();
        for i in 0..n {
            let s_ii = sigma[(i, i)];
            let c = sw[i] - s_ii * w[i];
            let next = (-c + (c * c + 4.0 * s_ii * budget).sqrt()) / (2.0 * s_ii);
            let delta = next - w[i];
            if delta != 0.0 {
                for (acc, s) in sw.iter_mut().zip(sigma.column(i).iter()) {
                    *acc += delta * s;
                }
                w[i] = next;
            }
        }
        let total: f64 = w.iter().sum();
        let normalized: Vec<f64> = w.iter().map(|v| v / total).collect();
        spread = contribution_spread(sigma, &normalized);
        if spread <= params.tol {
            return WeightVector::new(assets.to_vec(), normalized);
        }
        if !spread.is_finite() {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: params.max_iter,
        spread,
    })
}
