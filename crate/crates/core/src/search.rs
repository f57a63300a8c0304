//! Risk-sensitive stochastic search over open-loop control sequences.
//!
//! One iteration samples `N` control sequences from the current
//! [`NaturalParams`], rolls each out against the same `M` uncertainty samples
//! (initial state and parameters) with independent control-noise realizations
//! per `(n, m)`, estimates each sequence's CVaR from its `M` costs and moves
//! the means along
//!
//! ```text
//! g_t = Σ_n w_n (η_t^n − μ_t),   w_n = S(−Ĉ_n) / Σ_m S(−Ĉ_m)
//! μ_t ← μ_t + α_k g_t
//! ```
//!
//! which is the score-function gradient of `ln E[S(−CVaR)]`. The logarithm
//! only contributes the denominator of the weights, so there is nothing else
//! to evaluate for it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynamicsError, EnvSpec, QuadraticCost};
use crate::risk::{self, CostSamples, RiskError, RiskLevel};
use crate::sampling::{self, ControlBox, ControlSeq, NaturalParams, PolicyDraw, SamplingError};
use crate::seeds::SeedPath;
use crate::shaping::{self, ShapeError, ShapeSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("rollout failed: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("all shape weights are zero")]
    AllWeightsZero,
    #[error("expected {expected} uncertainty samples, got {got}")]
    SampleCount { expected: usize, got: usize },
    #[error("every rollout diverged in iteration {iteration}")]
    AllRolloutsDiverged { iteration: usize },
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
}

/// Step sizes `α_k`, `k = 1, 2, …`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    /// `α_k = a / (b + k)^c`; positive, decreasing to zero, with divergent sum
    /// for `c ∈ (0.5, 1]`.
    Harmonic { a: f64, b: f64, c: f64 },
    /// Fixed step, common in receding-horizon use. Does not satisfy the
    /// stochastic-approximation conditions.
    Constant { alpha: f64 },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Harmonic { a: 1.0, b: 10.0, c: 0.6 }
    }
}

impl StepSchedule {
    pub fn validate(&self) -> Result<(), SearchError> {
        let ok = match *self {
            StepSchedule::Harmonic { a, b, c } => a > 0.0 && b >= 0.0 && c > 0.5 && c <= 1.0 && a.is_finite() && b.is_finite(),
            StepSchedule::Constant { alpha } => alpha > 0.0 && alpha.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(SearchError::InvalidConfig(format!("step schedule {self:?} needs a > 0, b ≥ 0, c ∈ (0.5, 1]")))
        }
    }

    /// Step size for iteration `k ≥ 1`.
    pub fn alpha(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Harmonic { a, b, c } => a / (b + k as f64).powf(c),
            StepSchedule::Constant { alpha } => alpha,
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    /// `N`, sampled control sequences per iteration.
    pub n_policies: usize,
    /// `M`, uncertainty samples each sequence is evaluated against.
    pub n_uncertainty: usize,
    /// `K`, inner iterations.
    pub iterations: usize,
    #[serde(default)]
    pub level: RiskLevel,
    #[serde(default)]
    pub shape: ShapeSpec,
    #[serde(default)]
    pub schedule: StepSchedule,
    #[serde(default = "default_true")]
    pub polyak: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n_policies: 64,
            n_uncertainty: 32,
            iterations: 4,
            level: RiskLevel::default(),
            shape: ShapeSpec::default(),
            schedule: StepSchedule::default(),
            polyak: true,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.n_policies < 2 {
            return Err(SearchError::InvalidConfig("n_policies must be at least 2".into()));
        }
        if self.n_uncertainty < 1 {
            return Err(SearchError::InvalidConfig("n_uncertainty must be at least 1".into()));
        }
        self.shape.validate()?;
        self.schedule.validate()
    }

    /// `M(1−γ) < 5` leaves very few samples in the tail.
    pub fn tail_is_thin(&self) -> bool {
        self.n_uncertainty as f64 * (1.0 - self.level.gamma()) < 5.0
    }
}

/// One uncertainty realization: an initial state and a parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySample {
    pub x: Vec<f64>,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub cvars: Vec<f64>,
    /// Shannon entropy of the normalized weights (nats).
    pub weight_entropy: f64,
    /// Norm of the change in the means.
    pub delta_norm: f64,
    /// Rollouts whose cost was non-finite and got replaced.
    pub nonfinite_replaced: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    /// Last iterate; this is what warm-starts the next receding-horizon step.
    pub iterate: NaturalParams,
    /// Arithmetic mean of the iterates produced in this call.
    pub polyak: NaturalParams,
    pub reports: Vec<IterationReport>,
}

/// Anything that can score a control sequence against one uncertainty sample.
pub trait RolloutEnv: Sync {
    fn control_box(&self) -> &ControlBox;

    /// Trajectory cost; may be non-finite when the dynamics diverge.
    fn rollout_cost(
        &self,
        controls: &ControlSeq,
        sample: &UncertaintySample,
        seed: SeedPath,
    ) -> Result<f64, DynamicsError>;
}

/// An environment paired with its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub env: EnvSpec,
    pub cost: QuadraticCost,
}

impl RolloutEnv for Task {
    fn control_box(&self) -> &ControlBox {
        &self.env.control_box
    }

    fn rollout_cost(&self, controls: &ControlSeq, sample: &UncertaintySample, seed: SeedPath) -> Result<f64, DynamicsError> {
        let nx = self.env.state_dim();
        if sample.x.len() != nx {
            return Err(DynamicsError::Dimension { what: "sample state", expected: nx, got: sample.x.len() });
        }
        let np = self.env.uncertain_params.len();
        if sample.params.len() != np {
            return Err(DynamicsError::Dimension { what: "sample parameters", expected: np, got: sample.params.len() });
        }
        let mut rng = seed.rng();
        Ok(self.env.rollout_cost(&self.cost, controls, &sample.x, &sample.params, &mut rng))
    }
}

/// `Ĉ_n`: the empirical CVaR of each row.
pub fn evaluate_policy_cvars(costs: &CostSamples, level: RiskLevel) -> Result<Vec<f64>, RiskError> {
    (0..costs.rows()).map(|n| risk::empirical_cvar(costs.row(n), level)).collect()
}

/// Shape the negated CVaRs and normalize.
pub fn policy_weights(cvars: &[f64], shape: &ShapeSpec) -> Result<Vec<f64>, SearchError> {
    let y: Vec<f64> = cvars.iter().map(|c| -c).collect();
    let raw = shaping::shape_weights(&y, shape)?;
    shaping::normalize(&raw).ok_or(SearchError::AllWeightsZero)
}

/// `g_t = Σ_n w_n (T(η_t^n) − ∇A(θ_t))` for already-normalized weights. The
/// sum runs over `n` in order.
pub fn weighted_gradient(params: &NaturalParams, draws: &[PolicyDraw], weights: &[f64]) -> ControlSeq {
    let expected = sampling::grad_log_partition(params);
    let mut grad = ControlSeq::zeros(params.horizon(), params.control_dim());
    for (draw, &w) in draws.iter().zip(weights) {
        let stat = sampling::sufficient_statistic(draw);
        for ((g, s), e) in grad.as_mut_slice().iter_mut().zip(stat.as_slice()).zip(expected.as_slice()) {
            *g += w * (s - e);
        }
    }
    grad
}

/// The Monte Carlo gradient of `ln E[S(−CVaR)]` with respect to the means.
pub fn estimate_gradient(
    params: &NaturalParams,
    draws: &[PolicyDraw],
    cvars: &[f64],
    shape: &ShapeSpec,
) -> Result<ControlSeq, SearchError> {
    check_draws(params, draws, cvars.len())?;
    let w = policy_weights(cvars, shape)?;
    Ok(weighted_gradient(params, draws, &w))
}

fn check_draws(params: &NaturalParams, draws: &[PolicyDraw], n: usize) -> Result<(), SearchError> {
    if draws.len() != n || draws.is_empty() {
        return Err(SearchError::SampleCount { expected: draws.len(), got: n });
    }
    for d in draws {
        if d.controls.steps() != params.horizon() || d.controls.dim() != params.control_dim() {
            return Err(SamplingError::Dimension {
                expected: params.horizon() * params.control_dim(),
                got: d.controls.steps() * d.controls.dim(),
            }
            .into());
        }
    }
    Ok(())
}

/// Update the means with raw (unnormalized) shape outputs.
pub fn apply_weights(
    params: &NaturalParams,
    draws: &[PolicyDraw],
    raw_weights: &[f64],
    alpha: f64,
) -> Result<NaturalParams, SearchError> {
    check_draws(params, draws, raw_weights.len())?;
    let w = shaping::normalize(raw_weights).ok_or(SearchError::AllWeightsZero)?;
    Ok(step_means(params, &weighted_gradient(params, draws, &w), alpha))
}

fn step_means(params: &NaturalParams, grad: &ControlSeq, alpha: f64) -> NaturalParams {
    let mut next = params.clone();
    for (m, g) in next.means.as_mut_slice().iter_mut().zip(grad.as_slice()) {
        *m += alpha * g;
    }
    next
}

/// One gradient-ascent step `μ ← μ + α g`.
pub fn gradient_step(
    params: &NaturalParams,
    draws: &[PolicyDraw],
    cvars: &[f64],
    shape: &ShapeSpec,
    alpha: f64,
) -> Result<NaturalParams, SearchError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(SearchError::InvalidConfig(format!("step size must be positive, got {alpha}")));
    }
    let grad = estimate_gradient(params, draws, cvars, shape)?;
    Ok(step_means(params, &grad, alpha))
}

/// Arithmetic mean of a nonempty history of mean matrices.
pub fn polyak_average(history: &[ControlSeq]) -> Option<ControlSeq> {
    let first = history.first()?;
    let mut sum = ControlSeq::zeros(first.steps(), first.dim());
    for h in history {
        for (s, v) in sum.as_mut_slice().iter_mut().zip(h.as_slice()) {
            *s += v;
        }
    }
    let n = history.len() as f64;
    sum.as_mut_slice().iter_mut().for_each(|s| *s /= n);
    Some(sum)
}

fn entropy(weights: &[f64]) -> f64 {
    -weights.iter().filter(|&&w| w > 0.0).map(|w| w * w.ln()).sum::<f64>()
}

/// Replace non-finite costs by ten times the largest finite one.
fn repair_costs(costs: &mut [f64], iteration: usize) -> Result<usize, SearchError> {
    let max_finite = costs.iter().copied().filter(|c| c.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if max_finite == f64::NEG_INFINITY {
        return Err(SearchError::AllRolloutsDiverged { iteration });
    }
    let penalty = 10.0 * max_finite.max(1.0);
    let mut replaced = 0;
    for c in costs.iter_mut().filter(|c| !c.is_finite()) {
        *c = penalty;
        replaced += 1;
    }
    Ok(replaced)
}

/// Run `K` search iterations against a fixed set of `M` uncertainty samples.
///
/// Randomness is keyed by `seeds`: iteration `k` draws its sequences from
/// `seeds.key([k, 0])` and the rollout `(n, m)` uses `seeds.key([k, 1, n, m])`.
pub fn optimize<E: RolloutEnv + ?Sized>(
    config: &SearchConfig,
    params: &NaturalParams,
    samples: &[UncertaintySample],
    env: &E,
    seeds: SeedPath,
) -> Result<OptimizeOutcome, SearchError> {
    optimize_with(config, params, |_| samples, env, seeds)
}

/// As [`optimize`], but with a possibly different sample set per iteration.
pub fn optimize_with<'s, E, F>(
    config: &SearchConfig,
    params: &NaturalParams,
    samples_for: F,
    env: &E,
    seeds: SeedPath,
) -> Result<OptimizeOutcome, SearchError>
where
    E: RolloutEnv + ?Sized,
    F: Fn(usize) -> &'s [UncertaintySample],
{
    config.validate()?;
    params.validate()?;
    let (n, m) = (config.n_policies, config.n_uncertainty);
    let mut iterate = params.clone();
    let mut history = Vec::with_capacity(config.iterations);
    let mut reports = Vec::with_capacity(config.iterations);

    for k in 1..=config.iterations {
        let samples = samples_for(k);
        if samples.len() != m {
            return Err(SearchError::SampleCount { expected: m, got: samples.len() });
        }
        let iter_seeds = seeds.child(k as u64);
        let draws = sampling::sample_policies(&iterate, env.control_box(), n, iter_seeds.child(0))?;
        let rollout_seeds = iter_seeds.child(1);
        let mut costs = (0..n * m)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / m, idx % m);
                env.rollout_cost(&draws[i].controls, &samples[j], rollout_seeds.key(&[i as u64, j as u64]))
            })
            .collect::<Result<Vec<f64>, DynamicsError>>()?;
        let replaced = repair_costs(&mut costs, k)?;
        let matrix = CostSamples::new(n, m, costs)?;
        let cvars = evaluate_policy_cvars(&matrix, config.level)?;
        let weights = policy_weights(&cvars, &config.shape)?;
        let grad = weighted_gradient(&iterate, &draws, &weights);
        let next = step_means(&iterate, &grad, config.schedule.alpha(k));
        let delta = config.schedule.alpha(k) * grad.norm();
        reports.push(IterationReport {
            iteration: k,
            cvars,
            weight_entropy: entropy(&weights),
            delta_norm: delta,
            nonfinite_replaced: replaced,
        });
        iterate = next;
        history.push(iterate.means.clone());
    }

    let polyak = match (config.polyak, polyak_average(&history)) {
        (true, Some(means)) => NaturalParams { means, fixed_std: iterate.fixed_std.clone() },
        _ => iterate.clone(),
    };
    Ok(OptimizeOutcome { iterate, polyak, reports })
}
