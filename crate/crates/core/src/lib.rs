//! Risk-metric and portfolio analytics: the AlphaSharpe metric family, rank-based
//! predictive-power evaluation, long-only allocators with their baselines, and an
//! evolutionary loop that refines metric candidates.
//!
//! The crate is organized bottom-up:
//!
//! - [`data`]: price ingestion, log returns, cleaning, fold geometry, synthetic markets
//! - [`metrics`]: per-asset scores (Sharpe, PSR, `alpha_s1`..`alpha_s4`)
//! - [`evaluation`]: Spearman, Kendall tau-b, NDCG and cross-validated reports
//! - [`portfolio`]: top-fraction selection, allocators and backtests
//! - [`evolution`]: crossover / mutation / scoring / selection over descriptors

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod evaluation;
pub mod evolution;
mod float_serde;
pub mod metrics;
pub mod portfolio;

pub use error::{Error, ErrorClass, Result};
