//! Receding-horizon control: sample the belief, optimize, execute `τ`
//! controls on the true system, filter, shift, repeat.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{self, BeliefError, FilterConfig, GaussianPrior, ParticleSet};
use crate::dynamics::{DynamicsError, EnvSpec, Model, QuadraticCost, MAX_CONTROL_DIM};
use crate::sampling::{self, ControlSeq, NaturalParams, SamplingError};
use crate::search::{self, SearchConfig, SearchError, Task, UncertaintySample};
use crate::seeds::SeedPath;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),
    #[error("shift by {tau} exceeds horizon {horizon}")]
    ShiftTooLong { tau: usize, horizon: usize },
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// How the trailing rows are re-initialized after a shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftFill {
    #[default]
    CopyLast,
    Zeros,
}

/// Which control sequence is applied to the true system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecuteMode {
    #[default]
    PolyakMean,
    /// One fresh draw from the Polyak-averaged distribution.
    Sample,
}

/// Drop the first `tau` rows and refill the tail.
pub fn shift(params: &NaturalParams, tau: usize, fill: ShiftFill) -> Result<NaturalParams, MpcError> {
    let horizon = params.horizon();
    if tau > horizon {
        return Err(MpcError::ShiftTooLong { tau, horizon });
    }
    let dim = params.control_dim();
    let old = &params.means;
    let mut means = ControlSeq::zeros(horizon, dim);
    for t in 0..horizon - tau {
        means.row_mut(t).copy_from_slice(old.row(t + tau));
    }
    if fill == ShiftFill::CopyLast && horizon > 0 {
        let last = old.row(horizon - 1).to_vec();
        for t in horizon - tau..horizon {
            means.row_mut(t).copy_from_slice(&last);
        }
    }
    Ok(NaturalParams { means, fixed_std: params.fixed_std.clone() })
}

fn default_tau() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    /// Planning horizon `T`.
    pub horizon: usize,
    /// Controls executed per optimization, `τ`.
    #[serde(default = "default_tau")]
    pub execute_steps: usize,
    pub episode_length: usize,
    #[serde(default = "default_true")]
    pub warm_start: bool,
    /// Per-dimension standard deviation of the sampling distribution.
    pub fixed_std: Vec<f64>,
    /// Cold-start mean for every horizon row; zeros when empty.
    #[serde(default)]
    pub initial_control: Vec<f64>,
    #[serde(default)]
    pub execute: ExecuteMode,
    /// Draw fresh uncertainty samples for every inner iteration.
    #[serde(default)]
    pub redraw_per_iteration: bool,
    #[serde(default)]
    pub shift_fill: ShiftFill,
    #[serde(default)]
    pub search: SearchConfig,
    /// Inner iterations for the first decision, which starts cold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_iterations: Option<usize>,
}

impl MpcConfig {
    pub fn validate(&self, control_dim: usize) -> Result<(), MpcError> {
        if self.horizon == 0 {
            return Err(MpcError::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.execute_steps == 0 || self.execute_steps > self.horizon {
            return Err(MpcError::InvalidConfig(format!(
                "execute_steps must lie in 1..={}, got {}",
                self.horizon, self.execute_steps
            )));
        }
        if self.fixed_std.len() != control_dim {
            return Err(MpcError::InvalidConfig(format!(
                "fixed_std needs {control_dim} entries, got {}",
                self.fixed_std.len()
            )));
        }
        if !self.initial_control.is_empty() && self.initial_control.len() != control_dim {
            return Err(MpcError::InvalidConfig(format!(
                "initial_control needs {control_dim} entries, got {}",
                self.initial_control.len()
            )));
        }
        self.search.validate()?;
        if self.first_iterations == Some(0) {
            return Err(MpcError::InvalidConfig("first_iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// The cold-start sampling distribution.
    pub fn initial_params(&self, control_dim: usize) -> Result<NaturalParams, MpcError> {
        let mut means = ControlSeq::zeros(self.horizon, control_dim);
        if !self.initial_control.is_empty() {
            for t in 0..self.horizon {
                means.row_mut(t).copy_from_slice(&self.initial_control);
            }
        }
        Ok(NaturalParams::new(means, self.fixed_std.clone())?)
    }
}

/// Where the optimizer's uncertainty samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    /// Exact state and parameters.
    Exact,
    /// Particle filter over `[x, φ]` with noisy full-state observations.
    Filter { config: FilterConfig, prior: GaussianPrior },
    /// Particle filter over `x` only; the model uses the prior mean of `φ`
    /// and the optimizer draws `φ` from the prior. `config.process_noise`
    /// may cover `[x, φ]`; only its state part is used.
    FilterPriorParams { config: FilterConfig, prior: GaussianPrior },
}

/// Everything recorded along one episode. Belief vectors cover `[x, φ]` and
/// are sampled before each decision plus once after the final step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub observations: Vec<Vec<f64>>,
    pub belief_mean: Vec<Vec<f64>>,
    pub belief_sigma3: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
    pub terminal_cost: f64,
    pub total_cost: f64,
    /// Steps where the commanded control left the box.
    pub clamp_count: usize,
}

impl EpisodeRecord {
    pub fn steps(&self) -> usize {
        self.controls.len()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map_or(&[], |x| x.as_slice())
    }

    /// Recompute the total from the logged path.
    pub fn recompute_total(&self, cost: &QuadraticCost) -> f64 {
        cost.path_cost(&self.states, &self.controls)
    }
}

/// A failed episode with the steps completed before the failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("episode failed at step {step}: {error}")]
pub struct EpisodeFailure {
    pub step: usize,
    pub error: MpcError,
    pub partial: Box<EpisodeRecord>,
}

/// `x' = f(x, u; φ̄)` with fixed parameters, exposed as a parameter-free model.
struct FixedParams<'a> {
    env: &'a EnvSpec,
    params: Vec<f64>,
}

impl Model for FixedParams<'_> {
    fn state_dim(&self) -> usize {
        self.env.state_dim()
    }

    fn control_dim(&self) -> usize {
        self.env.control_dim()
    }

    fn param_dim(&self) -> usize {
        0
    }

    fn transition(&self, x: &[f64], u: &[f64], _: &[f64], next: &mut [f64]) {
        self.env.transition(x, u, &self.params, next);
    }

    fn angle_indices(&self) -> &[usize] {
        self.env.angle_indices()
    }
}

enum Belief<'a> {
    Exact,
    Filter { set: ParticleSet, config: FilterConfig },
    PriorParams { set: ParticleSet, config: FilterConfig, prior: GaussianPrior, model: FixedParams<'a> },
}

impl<'a> Belief<'a> {
    fn new(estimator: &Estimator, env: &'a EnvSpec, seeds: SeedPath) -> Result<Self, MpcError> {
        let nx = env.state_dim();
        let np = env.uncertain_params.len();
        let mut rng = seeds.rng();
        Ok(match estimator {
            Estimator::Exact => Belief::Exact,
            Estimator::Filter { config, prior } => {
                check_prior(prior, nx, np)?;
                Belief::Filter { set: belief::init(prior, config, &mut rng)?, config: config.clone() }
            }
            Estimator::FilterPriorParams { config, prior } => {
                check_prior(prior, nx, np)?;
                let mut state_config = config.clone();
                state_config.process_noise.truncate(nx);
                let state_prior = GaussianPrior {
                    state_mean: prior.state_mean.clone(),
                    state_var: prior.state_var.clone(),
                    param_mean: vec![],
                    param_var: vec![],
                };
                let set = belief::init(&state_prior, &state_config, &mut rng)?;
                let model = FixedParams { env, params: prior.param_mean.clone() };
                Belief::PriorParams { set, config: state_config, prior: prior.clone(), model }
            }
        })
    }

    fn samples<R: Rng>(&self, x: &[f64], phi: &[f64], m: usize, rng: &mut R) -> Result<Vec<UncertaintySample>, MpcError> {
        Ok(match self {
            Belief::Exact => vec![UncertaintySample { x: x.to_vec(), params: phi.to_vec() }; m],
            Belief::Filter { set, .. } => set.draw_uncertainty_samples(m, rng)?,
            Belief::PriorParams { set, config, prior, .. } => {
                let mut draws = set.draw_uncertainty_samples(m, rng)?;
                for d in &mut draws {
                    d.params = prior.sample_params(rng);
                    if config.reflect_params {
                        d.params.iter_mut().for_each(|v| *v = v.abs());
                    }
                }
                draws
            }
        })
    }

    fn advance<R: Rng>(&mut self, env: &EnvSpec, u: &[f64], z: &[f64], rng: &mut R) -> Result<(), MpcError> {
        match self {
            Belief::Exact => {}
            Belief::Filter { set, config } => {
                set.predict(u, env, config, rng)?;
                set.update(z, env, config, rng)?;
            }
            Belief::PriorParams { set, config, model, .. } => {
                set.predict(u, model, config, rng)?;
                set.update(z, model, config, rng)?;
            }
        }
        Ok(())
    }

    fn measurement_noise(&self) -> Option<&[f64]> {
        match self {
            Belief::Exact => None,
            Belief::Filter { config, .. } | Belief::PriorParams { config, .. } => Some(&config.measurement_noise),
        }
    }

    /// Mean and 3σ over `[x, φ]`.
    fn summary(&self, env: &EnvSpec, x: &[f64], phi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let three = |s: Vec<f64>| s.into_iter().map(|v| 3.0 * v).collect();
        match self {
            Belief::Exact => {
                let mean: Vec<f64> = x.iter().chain(phi).copied().collect();
                let zeros = vec![0.0; mean.len()];
                (mean, zeros)
            }
            Belief::Filter { set, .. } => {
                let s = set.summary(env);
                (s.mean, three(s.std))
            }
            Belief::PriorParams { set, prior, .. } => {
                let s = set.summary(env);
                let mut mean = s.mean;
                mean.extend(&prior.param_mean);
                let mut std = s.std;
                std.extend(prior.param_var.iter().map(|v| v.sqrt()));
                (mean, three(std))
            }
        }
    }
}

fn check_prior(prior: &GaussianPrior, nx: usize, np: usize) -> Result<(), MpcError> {
    prior.validate()?;
    if prior.state_mean.len() != nx || prior.param_mean.len() != np {
        return Err(MpcError::InvalidConfig(format!(
            "prior must cover {nx} states and {np} parameters, got {} and {}",
            prior.state_mean.len(),
            prior.param_mean.len()
        )));
    }
    Ok(())
}

/// Run one closed-loop episode against the true system `truth`, whose
/// current parameter values are the true `φ`.
///
/// Randomness per decision step `s` is keyed by `seeds.child(1).child(s)`.
pub fn run_episode(
    truth: &EnvSpec,
    cost: &QuadraticCost,
    x0: &[f64],
    mpc: &MpcConfig,
    estimator: &Estimator,
    seeds: SeedPath,
) -> Result<EpisodeRecord, EpisodeFailure> {
    let mut record = EpisodeRecord::default();
    let fail = |step: usize, error: MpcError, record: &EpisodeRecord| EpisodeFailure {
        step,
        error,
        partial: Box::new(record.clone()),
    };

    let setup = || -> Result<_, MpcError> {
        truth.validate()?;
        let nx = truth.state_dim();
        let nu = truth.control_dim();
        cost.validate(nx, nu)?;
        if x0.len() != nx {
            return Err(DynamicsError::Dimension { what: "x0", expected: nx, got: x0.len() }.into());
        }
        mpc.validate(nu)?;
        Ok(())
    };
    setup().map_err(|e| fail(0, e, &record))?;

    let nx = truth.state_dim();
    let nu = truth.control_dim();
    let phi = truth.nominal_params();
    let task = Task { env: truth.clone(), cost: cost.clone() };
    let mut belief = Belief::new(estimator, truth, seeds.child(0)).map_err(|e| fail(0, e, &record))?;
    let mut params = mpc.initial_params(nu).map_err(|e| fail(0, e, &record))?;
    let step_seeds = seeds.child(1);
    let m = mpc.search.n_uncertainty;

    let mut x = x0.to_vec();
    record.states.push(x.clone());
    let (mean, sigma3) = belief.summary(truth, &x, &phi);
    record.belief_mean.push(mean);
    record.belief_sigma3.push(sigma3);

    let mut t = 0;
    let mut decision = 0u64;
    while t < mpc.episode_length {
        let s = step_seeds.child(decision);
        let mut search_config = mpc.search.clone();
        if decision == 0 {
            search_config.iterations = mpc.first_iterations.unwrap_or(search_config.iterations);
        }
        let plan = |belief: &Belief, params: &NaturalParams, x: &[f64]| -> Result<_, MpcError> {
            let outcome = if mpc.redraw_per_iteration {
                let per_iter = (1..=search_config.iterations)
                    .map(|k| belief.samples(x, &phi, m, &mut s.child(0).child(k as u64).rng()))
                    .collect::<Result<Vec<_>, _>>()?;
                search::optimize_with(&search_config, params, |k| &per_iter[k - 1], &task, s.child(1))?
            } else {
                let samples = belief.samples(x, &phi, m, &mut s.child(0).rng())?;
                search::optimize(&search_config, params, &samples, &task, s.child(1))?
            };
            let executed = match mpc.execute {
                ExecuteMode::PolyakMean => outcome.polyak.means.clone(),
                ExecuteMode::Sample => {
                    let draws = sampling::sample_policies(&outcome.polyak, &truth.control_box, 1, s.child(5))?;
                    draws.into_iter().next().expect("one draw").controls
                }
            };
            Ok((outcome, executed))
        };
        let (outcome, executed) = plan(&belief, &params, &x).map_err(|e| fail(t, e, &record))?;

        let mut noise_rng = s.child(2).rng();
        let mut obs_rng = s.child(3).rng();
        let mut filter_rng = s.child(4).rng();
        let chunk = mpc.execute_steps.min(mpc.episode_length - t);
        for row in 0..chunk {
            let u = executed.row(row);
            let noise: Vec<f64> = (0..nu).map(|_| noise_rng.sample(StandardNormal)).collect();
            let mut next = vec![0.0; nx];
            let mut applied = [0.0; MAX_CONTROL_DIM];
            let info = truth.step(&x, u, &phi, &noise, &mut next, &mut applied[..nu]);
            if !info.finite {
                return Err(fail(t, DynamicsError::NonFinite { step: t }.into(), &record));
            }
            record.clamp_count += usize::from(info.clamped);
            record.stage_costs.push(cost.stage(&x, &applied[..nu]));
            record.controls.push(applied[..nu].to_vec());
            x = next;
            let z = match belief.measurement_noise() {
                Some(var) => belief::observe(&x, var, &mut obs_rng),
                None => x.clone(),
            };
            belief.advance(truth, u, &z, &mut filter_rng).map_err(|e| fail(t, e, &record))?;
            record.observations.push(z);
            record.states.push(x.clone());
            let (mean, sigma3) = belief.summary(truth, &x, &phi);
            record.belief_mean.push(mean);
            record.belief_sigma3.push(sigma3);
            t += 1;
        }

        params = if mpc.warm_start {
            shift(&outcome.iterate, mpc.execute_steps, mpc.shift_fill).map_err(|e| fail(t, e, &record))?
        } else {
            mpc.initial_params(nu).map_err(|e| fail(t, e, &record))?
        };
        decision += 1;
    }

    record.terminal_cost = cost.terminal(&x);
    record.total_cost = record.stage_costs.iter().sum::<f64>() + record.terminal_cost;
    Ok(record)
}
