//! Price and return containers, ingestion, cleaning, fold splitting and the
//! synthetic market generator.
//!
//! Both matrices are stored column-major (one contiguous slice per asset) since
//! every metric consumes a single asset's history at a time. Missing entries are
//! carried as `NaN` until [`clean`] removes them.

mod folds;
mod io;
mod synthetic;

use std::collections::HashSet;
use std::ops::Range;

use chrono::NaiveDate;

use crate::error::{Error, Result};

pub use folds::{split_time_series, Fold, FoldSet, FoldSpec};
pub use io::{
    load_price_csv, read_return_cache, read_return_csv, write_return_cache, write_return_csv, PriceLayout, CACHE_MAGIC,
};
pub use synthetic::{generate_synthetic, Regime, SyntheticSpec};

/// Default periods-per-year used for annualized display values.
pub const DEFAULT_FREQUENCY: f64 = 252.0;

/// Adjusted prices on a dense `[time x asset]` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    timestamps: Vec<NaiveDate>,
    assets: Vec<String>,
    prices: Vec<f64>,
}

impl PriceTable {
    /// Builds a table from per-asset price columns; `None` marks a missing price.
    pub fn new(timestamps: Vec<NaiveDate>, assets: Vec<String>, columns: Vec<Vec<Option<f64>>>) -> Result<Self> {
        check_axes(&timestamps, &assets)?;
        if columns.len() != assets.len() {
            return Err(Error::Validation(format!(
                "{} price columns for {} assets",
                columns.len(),
                assets.len()
            )));
        }
        let t = timestamps.len();
        let mut prices = Vec::with_capacity(t * assets.len());
        for (asset, column) in assets.iter().zip(&columns) {
            if column.len() != t {
                return Err(Error::Validation(format!(
                    "asset {asset}: {} prices for {t} timestamps",
                    column.len()
                )));
            }
            for (date, p) in timestamps.iter().zip(column) {
                match *p {
                    Some(p) if !(p.is_finite() && p > 0.0) => {
                        return Err(Error::Validation(format!(
                            "non-positive price {p} for {asset} on {date}"
                        )))
                    }
                    Some(p) => prices.push(p),
                    None => prices.push(f64::NAN),
                }
            }
        }
        Ok(Self {
            timestamps,
            assets,
            prices,
        })
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn n_periods(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// Price column for asset `i`; missing prices are `NaN`.
    pub fn column(&self, i: usize) -> &[f64] {
        let t = self.n_periods();
        &self.prices[i * t..(i + 1) * t]
    }

    pub fn price(&self, t: usize, i: usize) -> Option<f64> {
        let p = self.column(i)[t];
        (!p.is_nan()).then_some(p)
    }
}

/// Per-period log returns on a dense `[time x asset]` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    timestamps: Vec<NaiveDate>,
    assets: Vec<String>,
    values: Vec<f64>,
    frequency: f64,
}

impl ReturnMatrix {
    /// Builds a matrix from per-asset return columns.
    pub fn from_columns(timestamps: Vec<NaiveDate>, assets: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let t = timestamps.len();
        if columns.len() != assets.len() || columns.iter().any(|c| c.len() != t) {
            return Err(Error::Validation(format!(
                "return columns do not match a {t} x {} grid",
                assets.len()
            )));
        }
        Self::from_column_major(timestamps, assets, columns.concat())
    }

    /// Builds a matrix from a column-major buffer of length `T * N`.
    pub fn from_column_major(timestamps: Vec<NaiveDate>, assets: Vec<String>, values: Vec<f64>) -> Result<Self> {
        check_axes(&timestamps, &assets)?;
        if values.len() != timestamps.len() * assets.len() {
            return Err(Error::Validation(format!(
                "buffer of {} values does not match a {} x {} grid",
                values.len(),
                timestamps.len(),
                assets.len()
            )));
        }
        Ok(Self {
            timestamps,
            assets,
            values,
            frequency: DEFAULT_FREQUENCY,
        })
    }

    pub fn with_frequency(mut self, frequency: f64) -> Self {
        self.frequency = frequency;
        self
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn n_periods(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let t = self.n_periods();
        &self.values[i * t..(i + 1) * t]
    }

    /// Asset `i` restricted to the periods in `window`.
    pub fn column_window(&self, i: usize, window: Range<usize>) -> &[f64] {
        &self.column(i)[window]
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.n_assets()).map(move |i| self.column(i))
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.column(i)[t]
    }

    pub fn asset_index(&self, id: &str) -> Option<usize> {
        self.assets.iter().position(|a| a == id)
    }

    /// Raw column-major storage.
    pub fn as_column_major(&self) -> &[f64] {
        &self.values
    }

    /// True when every entry is finite.
    pub fn is_clean(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Copy restricted to the periods in `window`.
    pub fn slice_periods(&self, window: Range<usize>) -> Self {
        let values = self.columns().flat_map(|c| c[window.clone()].iter().copied()).collect();
        Self {
            timestamps: self.timestamps[window].to_vec(),
            assets: self.assets.clone(),
            values,
            frequency: self.frequency,
        }
    }

    /// Copy keeping the assets at `indices`, in that order.
    pub fn select_assets(&self, indices: &[usize]) -> Self {
        let values = indices.iter().flat_map(|&i| self.column(i).iter().copied()).collect();
        Self {
            timestamps: self.timestamps.clone(),
            assets: indices.iter().map(|&i| self.assets[i].clone()).collect(),
            values,
            frequency: self.frequency,
        }
    }

    /// Copy with `offset` subtracted from every entry (e.g. a per-period risk-free rate).
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            timestamps: self.timestamps.clone(),
            assets: self.assets.clone(),
            values: self.values.iter().map(|v| v - offset).collect(),
            frequency: self.frequency,
        }
    }
}

fn check_axes(timestamps: &[NaiveDate], assets: &[String]) -> Result<()> {
    if let Some(w) = timestamps.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::Validation(format!(
            "timestamps not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    let mut seen = HashSet::with_capacity(assets.len());
    if let Some(dup) = assets.iter().find(|a| !seen.insert(a.as_str())) {
        return Err(Error::Validation(format!("duplicate asset identifier `{dup}`")));
    }
    Ok(())
}

/// Log returns `ln(p[t+1] / p[t])`; an entry is `NaN` where either price is missing.
pub fn to_log_returns(prices: &PriceTable) -> Result<ReturnMatrix> {
    let t = prices.n_periods();
    if t < 2 {
        return Err(Error::Size {
            what: "log returns",
            required: 2,
            available: t,
        });
    }
    let mut values = Vec::with_capacity((t - 1) * prices.n_assets());
    for i in 0..prices.n_assets() {
        let col = prices.column(i);
        values.extend(col.windows(2).map(|w| (w[1] / w[0]).ln()));
    }
    ReturnMatrix::from_column_major(prices.timestamps[1..].to_vec(), prices.assets.clone(), values)
}

/// Missing-data policy: drop assets whose missing fraction exceeds the threshold,
/// then zero-fill whatever gaps remain.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CleanPolicy {
    pub max_missing_frac: f64,
}

impl Default for CleanPolicy {
    fn default() -> Self {
        Self { max_missing_frac: 0.10 }
    }
}

pub fn clean(r: &ReturnMatrix, policy: CleanPolicy) -> Result<ReturnMatrix> {
    let theta = policy.max_missing_frac;
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Config(format!("missing-data threshold {theta} outside [0, 1]")));
    }
    let t = r.n_periods();
    let keep: Vec<usize> = (0..r.n_assets())
        .filter(|&i| {
            let missing = r.column(i).iter().filter(|v| !v.is_finite()).count();
            t == 0 || (missing as f64 / t as f64) <= theta
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyUniverse(format!(
            "every asset exceeds the missing-data threshold {theta}"
        )));
    }
    let dropped = r.n_assets() - keep.len();
    if dropped > 0 {
        tracing::warn!(dropped, theta, "dropped assets with too many missing returns");
    }
    let mut out = r.select_assets(&keep);
    for v in &mut out.values {
        if !v.is_finite() {
            *v = 0.0;
        }
    }
    Ok(out)
}

/// Number of items making up the top `fraction` of `n`, i.e. `ceil(fraction * n)`,
/// with products that land within rounding noise of an integer treated as exact.
pub fn top_count(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * x.abs().max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (k.max(0.0) as usize).min(n)
}
