//! Shape functions applied to the negated CVaR of each sampled policy.
//!
//! Only the normalized weights `S(y_n) / Σ S(y_m)` enter the parameter update,
//! so each kind is free to rescale its raw output. The exponential kind
//! subtracts the batch maximum before exponentiating; the identity kind
//! shifts by the batch minimum so that its outputs are strictly positive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::risk;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("no values to shape")]
    Empty,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("invalid shape parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    /// `S(y) = y`, shifted to be positive.
    Identity,
    /// `S(y) = exp(κ y)`.
    Exponential { kappa: f64 },
    /// `S(y) = (y − y_lb) / (1 + exp(−κ (y − φ)))` with `φ` the batch
    /// `(1−ρ)`-quantile. `y_lb` defaults to the batch minimum.
    Sigmoid {
        kappa: f64,
        elite_fraction: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lower_bound: Option<f64>,
    },
}

impl Default for ShapeSpec {
    fn default() -> Self {
        ShapeSpec::Exponential { kappa: 1.0 }
    }
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<(), ShapeError> {
        match *self {
            ShapeSpec::Identity => Ok(()),
            ShapeSpec::Exponential { kappa } => check_kappa(kappa),
            ShapeSpec::Sigmoid { kappa, elite_fraction, lower_bound } => {
                check_kappa(kappa)?;
                if !(elite_fraction > 0.0 && elite_fraction < 1.0) {
                    return Err(ShapeError::InvalidParameter(format!(
                        "elite_fraction must lie in (0, 1), got {elite_fraction}"
                    )));
                }
                if lower_bound.is_some_and(|b| !b.is_finite()) {
                    return Err(ShapeError::InvalidParameter("lower_bound must be finite".into()));
                }
                Ok(())
            }
        }
    }
}

fn check_kappa(kappa: f64) -> Result<(), ShapeError> {
    if kappa > 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(ShapeError::InvalidParameter(format!("kappa must be positive, got {kappa}")))
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Nonnegative, not-all-zero weights `S(y_n)` for the values `y_n = −Ĉ_n`.
pub fn shape_weights(values: &[f64], spec: &ShapeSpec) -> Result<Vec<f64>, ShapeError> {
    spec.validate()?;
    if values.is_empty() {
        return Err(ShapeError::Empty);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(ShapeError::NonFinite(i));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eps = 1e-12 * (1.0 + (hi - lo));

    let mut weights: Vec<f64> = match *spec {
        ShapeSpec::Identity => values.iter().map(|&y| y - lo + eps).collect(),
        ShapeSpec::Exponential { kappa } => values.iter().map(|&y| (kappa * (y - hi)).exp()).collect(),
        ShapeSpec::Sigmoid { kappa, elite_fraction, lower_bound } => {
            let threshold = risk::empirical_quantile(values, 1.0 - elite_fraction)
                .map_err(|e| ShapeError::InvalidParameter(e.to_string()))?;
            let floor = lower_bound.map_or(lo, |b| b.min(lo));
            values
                .iter()
                .map(|&y| (y - floor + eps) * logistic(kappa * (y - threshold)))
                .collect()
        }
    };

    // Sigmoid weights can all underflow for extreme κ; equal weights are the
    // only choice consistent with monotonicity in that case.
    if !weights.iter().any(|&w| w > 0.0) || weights.iter().any(|w| !w.is_finite()) {
        weights.iter_mut().for_each(|w| *w = 1.0);
    }
    Ok(weights)
}

/// Weights divided by their sum.
pub fn normalize(weights: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    Some(weights.iter().map(|w| w / total).collect())
}
