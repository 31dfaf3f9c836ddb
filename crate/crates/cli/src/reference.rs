//! Published reference figures from a 3,246-asset, 15-year daily equity study.
//! That dataset is not distributed, so these numbers cannot be reproduced here;
//! they are kept for side-by-side reading of reports only.

/// Cross-validated Spearman correlation with future Sharpe, Sharpe ratio as the ranking metric.
pub const SPEARMAN_SHARPE: f64 = 0.130;
/// Cross-validated Spearman correlation with future Sharpe, `alpha_s4` as the ranking metric.
pub const SPEARMAN_ALPHA_S4: f64 = 0.409;
/// Out-of-sample Sharpe improvement (%) of the `alpha_s2` top-25% portfolio over Sharpe's.
pub const DELTA_SHARPE_ALPHA_S2_TOP25: f64 = 93.97;
/// Sharpe and Calmar improvement (%) of the AlphaSharpe allocation over equal weight.
pub const DELTA_SHARPE_ALLOCATOR: f64 = 71.04;
pub const DELTA_CALMAR_ALLOCATOR: f64 = 116.31;
/// Sharpe and Calmar improvement (%) of inverse-volatility risk parity over equal weight.
pub const DELTA_SHARPE_RISK_PARITY: f64 = 38.32;
pub const DELTA_CALMAR_RISK_PARITY: f64 = 10.36;
/// Sharpe and Calmar improvement (%) of equal risk contribution over equal weight.
pub const DELTA_SHARPE_ERC: f64 = 38.55;
pub const DELTA_CALMAR_ERC: f64 = 10.44;
