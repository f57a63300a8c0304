//! Empirical Value-at-Risk and Conditional Value-at-Risk.
//!
//! VaR is the order statistic `J_(k)` with `k = max(1, ceil(γ·M))`, which is
//! exactly `inf{x : (1/M) Σ 1{J ≤ x} ≥ γ}`. Ties need no special handling:
//! the order statistic picks one of the tied values and the tail correction
//! of CVaR is unaffected by which one.
//!
//! CVaR is `V + (1/(M(1−γ))) Σ (J − V)⁺`. When `M(1−γ) < 1` the estimator
//! degenerates toward the sample maximum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("no samples")]
    NoSamples,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("risk level must lie in the open interval (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("cost matrix shape {rows}x{cols} does not match {len} values")]
    Shape { rows: usize, cols: usize, len: usize },
}

/// Risk level γ in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub fn new(gamma: f64) -> Result<Self, RiskError> {
        if gamma > 0.0 && gamma < 1.0 {
            Ok(RiskLevel(gamma))
        } else {
            Err(RiskError::InvalidLevel(gamma))
        }
    }

    pub fn gamma(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for RiskLevel {
    type Error = RiskError;
    fn try_from(v: f64) -> Result<Self, RiskError> {
        RiskLevel::new(v)
    }
}

impl From<RiskLevel> for f64 {
    fn from(l: RiskLevel) -> f64 {
        l.0
    }
}

impl Default for RiskLevel {
    fn default() -> Self {
        RiskLevel(0.9)
    }
}

/// Row-major `N×M` matrix of trajectory costs: row `n` is a policy draw,
/// column `m` an uncertainty realization.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSamples {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostSamples {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, RiskError> {
        if rows == 0 || cols == 0 {
            return Err(RiskError::NoSamples);
        }
        if values.len() != rows * cols {
            return Err(RiskError::Shape { rows, cols, len: values.len() });
        }
        check_finite(&values)?;
        Ok(CostSamples { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, RiskError> {
        let cols = rows.first().map_or(0, Vec::len);
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(RiskError::Shape { rows: rows.len(), cols, len: values.len() });
        }
        CostSamples::new(rows.len(), cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.cols..(n + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Mean, VaR and CVaR of one cost list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    pub mean: f64,
    #[serde(rename = "var")]
    pub var_hat: f64,
    #[serde(rename = "cvar")]
    pub cvar_hat: f64,
}

fn check_finite(costs: &[f64]) -> Result<(), RiskError> {
    match costs.iter().position(|c| !c.is_finite()) {
        Some(i) => Err(RiskError::NonFinite(i)),
        None => Ok(()),
    }
}

fn validate(costs: &[f64]) -> Result<(), RiskError> {
    if costs.is_empty() {
        return Err(RiskError::NoSamples);
    }
    check_finite(costs)
}

/// Smallest `k ≥ 1` with `k/M ≥ γ`, evaluated with the same floating-point
/// comparison as the counting definition.
pub(crate) fn quantile_rank(m: usize, gamma: f64) -> usize {
    let mf = m as f64;
    let mut k = ((gamma * mf).ceil() as usize).clamp(1, m);
    while k > 1 && (k - 1) as f64 / mf >= gamma {
        k -= 1;
    }
    while k < m && (k as f64) / mf < gamma {
        k += 1;
    }
    k
}

/// Lower empirical `level`-quantile of arbitrary finite values (the VaR rule
/// without the risk-level range restriction). Input order is not modified.
pub fn empirical_quantile(values: &[f64], level: f64) -> Result<f64, RiskError> {
    validate(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[quantile_rank(sorted.len(), level) - 1])
}

pub fn empirical_var(costs: &[f64], level: RiskLevel) -> Result<f64, RiskError> {
    empirical_quantile(costs, level.gamma())
}

pub fn empirical_cvar(costs: &[f64], level: RiskLevel) -> Result<f64, RiskError> {
    let var = empirical_var(costs, level)?;
    Ok(var + tail_excess(costs, var, level))
}

fn tail_excess(costs: &[f64], threshold: f64, level: RiskLevel) -> f64 {
    let excess: f64 = costs.iter().map(|&c| (c - threshold).max(0.0)).sum();
    excess / (costs.len() as f64 * (1.0 - level.gamma()))
}

/// CVaR through its minimization form `min_t t + E[(J − t)⁺]/(1−γ)`.
///
/// The objective is piecewise linear and convex in `t` with breakpoints at the
/// samples, so scanning every sample value as a candidate finds the exact
/// minimum. This is an independent check on [`empirical_cvar`] and is
/// quadratic in the sample count.
pub fn cvar_oracle_min_form(costs: &[f64], level: RiskLevel) -> Result<f64, RiskError> {
    validate(costs)?;
    let scale = 1.0 / (costs.len() as f64 * (1.0 - level.gamma()));
    let best = costs
        .iter()
        .map(|&t| {
            let tail: f64 = costs.iter().map(|&c| if c > t { c - t } else { 0.0 }).sum();
            t + scale * tail
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}

pub fn mean(costs: &[f64]) -> Result<f64, RiskError> {
    validate(costs)?;
    Ok(costs.iter().sum::<f64>() / costs.len() as f64)
}

pub fn risk_summary(costs: &[f64], level: RiskLevel) -> Result<RiskSummary, RiskError> {
    let mean = mean(costs)?;
    let var_hat = empirical_var(costs, level)?;
    let cvar_hat = var_hat + tail_excess(costs, var_hat, level);
    Ok(RiskSummary { mean, var_hat, cvar_hat })
}
