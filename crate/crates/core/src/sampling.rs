//! Fixed-variance Gaussian sampling of open-loop control sequences.
//!
//! For a Gaussian with fixed covariance `Σ` the natural parameter is `Σ⁻¹μ`.
//! [`NaturalParams`] stores and updates the mean `μ` directly: a step in
//! natural-parameter space is a mean-space step preconditioned by the constant
//! `Σ`, which the step size absorbs.
//!
//! Box constraints are enforced by sampling every entry from its own
//! one-dimensional truncated normal through the inverse CDF. With a diagonal
//! covariance this is exactly the truncated multivariate normal.

use std::f64::consts::SQRT_2;

use rand::Rng;
use rand_distr::Open01;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use thiserror::Error;

use crate::seeds::SeedPath;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("control dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("control box needs lower < upper in every dimension (dimension {0})")]
    EmptyBox(usize),
    #[error("sampling standard deviation must be positive and finite (dimension {0})")]
    BadStd(usize),
    #[error("non-finite mean at step {step}, dimension {dim}")]
    NonFiniteMean { step: usize, dim: usize },
    #[error("requested zero policy draws")]
    NoDraws,
}

/// A `steps × dim` row-major matrix of controls (or of per-step parameters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSeq {
    steps: usize,
    dim: usize,
    data: Vec<f64>,
}

impl ControlSeq {
    pub fn zeros(steps: usize, dim: usize) -> Self {
        ControlSeq { steps, dim, data: vec![0.0; steps * dim] }
    }

    pub fn filled(steps: usize, dim: usize, value: f64) -> Self {
        ControlSeq { steps, dim, data: vec![value; steps * dim] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, SamplingError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(SamplingError::Dimension { expected: dim, got: bad.len() });
        }
        Ok(ControlSeq { steps: rows.len(), dim, data: rows.concat() })
    }

    pub fn from_vec(steps: usize, dim: usize, data: Vec<f64>) -> Result<Self, SamplingError> {
        if data.len() != steps * dim {
            return Err(SamplingError::Dimension { expected: steps * dim, got: data.len() });
        }
        Ok(ControlSeq { steps, dim, data })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.data[t * self.dim + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.steps)
    }

    /// Euclidean norm of the flattened matrix.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Per-dimension admissible control interval `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SamplingError> {
        let b = ControlBox { lower, upper };
        b.validate()?;
        Ok(b)
    }

    /// `[-limit, limit]` in every one of `dim` dimensions.
    pub fn symmetric(dim: usize, limit: f64) -> Self {
        ControlBox { lower: vec![-limit; dim], upper: vec![limit; dim] }
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.lower.len() != self.upper.len() {
            return Err(SamplingError::Dimension { expected: self.lower.len(), got: self.upper.len() });
        }
        match self.lower.iter().zip(&self.upper).position(|(l, u)| !(l < u)) {
            Some(j) => Err(SamplingError::EmptyBox(j)),
            None => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter().enumerate().all(|(j, v)| *v >= self.lower[j] && *v <= self.upper[j])
    }

    /// Clamp in place; returns whether any component moved.
    pub fn clamp(&self, u: &mut [f64]) -> bool {
        let mut moved = false;
        for (j, v) in u.iter_mut().enumerate() {
            let c = v.clamp(self.lower[j], self.upper[j]);
            if c != *v {
                moved = true;
                *v = c;
            }
        }
        moved
    }
}

/// Sampling-distribution parameters: one mean row per horizon step plus a
/// fixed per-dimension standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalParams {
    pub means: ControlSeq,
    pub fixed_std: Vec<f64>,
}

impl NaturalParams {
    pub fn new(means: ControlSeq, fixed_std: Vec<f64>) -> Result<Self, SamplingError> {
        let p = NaturalParams { means, fixed_std };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(horizon: usize, fixed_std: Vec<f64>) -> Result<Self, SamplingError> {
        NaturalParams::new(ControlSeq::zeros(horizon, fixed_std.len()), fixed_std)
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.fixed_std.len() != self.means.dim() {
            return Err(SamplingError::Dimension { expected: self.means.dim(), got: self.fixed_std.len() });
        }
        if let Some(j) = self.fixed_std.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(SamplingError::BadStd(j));
        }
        if let Some(i) = self.means.as_slice().iter().position(|m| !m.is_finite()) {
            let dim = self.means.dim();
            return Err(SamplingError::NonFiniteMean { step: i / dim, dim: i % dim });
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.means.steps()
    }

    pub fn control_dim(&self) -> usize {
        self.means.dim()
    }
}

/// One sampled open-loop control sequence `η`; the policy applies `u_t = η_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDraw {
    pub controls: ControlSeq,
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn std_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Result of one truncated-normal draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedDraw {
    pub value: f64,
    /// The truncated mass underflowed and the value was clamped to a bound.
    pub clamped: bool,
}

/// Inverse-CDF draw from `N(mean, std²)` truncated to `[lower, upper]`, using
/// the uniform variate `u ∈ (0, 1)`.
///
/// Intervals lying entirely above the mean are mapped to the lower tail
/// first, where the CDF keeps full relative precision.
pub fn truncated_normal(mean: f64, std: f64, lower: f64, upper: f64, u: f64) -> TruncatedDraw {
    let mut a = (lower - mean) / std;
    let mut b = (upper - mean) / std;
    let flip = a > 0.0;
    if flip {
        (a, b) = (-b, -a);
    }
    let pa = std_normal_cdf(a);
    let pb = std_normal_cdf(b);
    if !(pb > pa) {
        let value = if mean <= lower { lower } else { upper };
        return TruncatedDraw { value, clamped: true };
    }
    let mut z = std_normal_quantile(pa + u * (pb - pa));
    if flip {
        z = -z;
    }
    let value = (mean + std * z).clamp(lower, upper);
    if value.is_finite() {
        TruncatedDraw { value, clamped: false }
    } else {
        // Only reachable with infinite bounds and a quantile at 0 or 1.
        TruncatedDraw { value: mean.clamp(lower, upper), clamped: true }
    }
}

fn sample_one(params: &NaturalParams, bounds: &ControlBox, seed: SeedPath) -> (PolicyDraw, usize) {
    let mut rng = seed.rng();
    let mut controls = params.means.clone();
    let mut clamps = 0;
    for t in 0..params.horizon() {
        for (j, value) in controls.row_mut(t).iter_mut().enumerate() {
            let u: f64 = rng.sample(Open01);
            let d = truncated_normal(*value, params.fixed_std[j], bounds.lower[j], bounds.upper[j], u);
            clamps += usize::from(d.clamped);
            *value = d.value;
        }
    }
    (PolicyDraw { controls }, clamps)
}

/// Draw `count` control sequences. Draw `n` consumes the stream
/// `seeds.child(n)` alone, so the result is independent of thread count.
pub fn sample_policies(
    params: &NaturalParams,
    bounds: &ControlBox,
    count: usize,
    seeds: SeedPath,
) -> Result<Vec<PolicyDraw>, SamplingError> {
    if count == 0 {
        return Err(SamplingError::NoDraws);
    }
    params.validate()?;
    bounds.validate()?;
    if bounds.dim() != params.control_dim() {
        return Err(SamplingError::Dimension { expected: params.control_dim(), got: bounds.dim() });
    }
    let results: Vec<(PolicyDraw, usize)> = (0..count)
        .into_par_iter()
        .map(|n| sample_one(params, bounds, seeds.child(n as u64)))
        .collect();
    let clamps: usize = results.iter().map(|r| r.1).sum();
    if clamps > 0 {
        log::warn!("{clamps} sampled controls clamped to the box: truncated mass underflowed");
    }
    Ok(results.into_iter().map(|r| r.0).collect())
}

/// `T(η) = η` for the fixed-variance Gaussian.
pub fn sufficient_statistic(draw: &PolicyDraw) -> ControlSeq {
    draw.controls.clone()
}

/// `∇A(θ) = E[T(η)]`, the untruncated mean.
pub fn grad_log_partition(params: &NaturalParams) -> ControlSeq {
    params.means.clone()
}
