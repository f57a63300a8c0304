//! Bootstrap particle filter over the augmented vector `y = [x, φ]`.
//!
//! Particles are propagated through the noise-free model with their own
//! parameters; artificial Gaussian noise is then added to every augmented
//! component, so parameters follow a random walk `φ' = φ + w`. Weights are
//! updated in the log domain against a full-state observation with additive
//! Gaussian noise, and the set is resampled systematically when the effective
//! sample size drops below a fraction of the particle count.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::Model;
use crate::search::UncertaintySample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("every particle became non-finite")]
    Collapsed,
    #[error("requested zero uncertainty samples")]
    NoSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    pub weight: f64,
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub particle_count: usize,
    /// Diagonal variance of the artificial noise over `[x, φ]`.
    pub process_noise: Vec<f64>,
    /// Diagonal variance of the observation noise over `x`.
    pub measurement_noise: Vec<f64>,
    /// Resample when `ESS < resample_threshold · particle_count`.
    #[serde(default = "default_threshold")]
    pub resample_threshold: f64,
    /// Reflect parameters at zero after each prediction.
    #[serde(default)]
    pub reflect_params: bool,
}

impl FilterConfig {
    pub fn validate(&self, state_dim: usize, param_dim: usize) -> Result<(), BeliefError> {
        if self.particle_count < 2 {
            return Err(BeliefError::InvalidConfig("particle_count must be at least 2".into()));
        }
        if self.process_noise.len() != state_dim + param_dim {
            return Err(BeliefError::Dimension {
                what: "process_noise",
                expected: state_dim + param_dim,
                got: self.process_noise.len(),
            });
        }
        if self.measurement_noise.len() != state_dim {
            return Err(BeliefError::Dimension {
                what: "measurement_noise",
                expected: state_dim,
                got: self.measurement_noise.len(),
            });
        }
        if self.process_noise.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(BeliefError::InvalidConfig("process_noise variances must be nonnegative".into()));
        }
        if self.measurement_noise.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(BeliefError::InvalidConfig("measurement_noise variances must be positive".into()));
        }
        if !(self.resample_threshold > 0.0 && self.resample_threshold <= 1.0) {
            return Err(BeliefError::InvalidConfig("resample_threshold must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Independent Gaussian prior over the initial state and the parameters,
/// given as means and variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPrior {
    pub state_mean: Vec<f64>,
    pub state_var: Vec<f64>,
    #[serde(default)]
    pub param_mean: Vec<f64>,
    #[serde(default)]
    pub param_var: Vec<f64>,
}

impl GaussianPrior {
    pub fn validate(&self) -> Result<(), BeliefError> {
        if self.state_mean.len() != self.state_var.len() {
            return Err(BeliefError::Dimension {
                what: "prior state_var",
                expected: self.state_mean.len(),
                got: self.state_var.len(),
            });
        }
        if self.param_mean.len() != self.param_var.len() {
            return Err(BeliefError::Dimension {
                what: "prior param_var",
                expected: self.param_mean.len(),
                got: self.param_var.len(),
            });
        }
        if self.state_var.iter().chain(&self.param_var).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(BeliefError::InvalidConfig("prior variances must be nonnegative".into()));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(mean: &[f64], var: &[f64], rng: &mut R) -> Vec<f64> {
        mean.iter()
            .zip(var)
            .map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        Self::draw(&self.state_mean, &self.state_var, rng)
    }

    pub fn sample_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        Self::draw(&self.param_mean, &self.param_var, rng)
    }
}

/// Outcome of a measurement update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateInfo {
    /// Effective sample size before any resampling.
    pub ess: f64,
    pub resampled: bool,
    /// All likelihoods vanished; weights were reset to uniform.
    pub degenerate: bool,
}

/// Weighted mean and standard deviation of every augmented component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSummary {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    particles: Vec<Particle>,
    state_dim: usize,
    param_dim: usize,
}

/// Draw `config.particle_count` equally weighted particles from the prior.
pub fn init<R: Rng + ?Sized>(prior: &GaussianPrior, config: &FilterConfig, rng: &mut R) -> Result<ParticleSet, BeliefError> {
    prior.validate()?;
    let (nx, np) = (prior.state_mean.len(), prior.param_mean.len());
    config.validate(nx, np)?;
    let w = 1.0 / config.particle_count as f64;
    let particles = (0..config.particle_count)
        .map(|_| {
            let x = prior.sample_state(rng);
            let phi = prior.sample_params(rng);
            Particle { x, phi, weight: w }
        })
        .collect();
    Ok(ParticleSet { particles, state_dim: nx, param_dim: np })
}

impl ParticleSet {
    pub fn from_particles(particles: Vec<Particle>) -> Result<Self, BeliefError> {
        let first = particles.first().ok_or(BeliefError::InvalidConfig("no particles".into()))?;
        let (nx, np) = (first.x.len(), first.phi.len());
        if let Some(p) = particles.iter().find(|p| p.x.len() != nx || p.phi.len() != np) {
            return Err(BeliefError::Dimension { what: "particle", expected: nx + np, got: p.x.len() + p.phi.len() });
        }
        let mut set = ParticleSet { particles, state_dim: nx, param_dim: np };
        if !set.normalize() {
            return Err(BeliefError::Collapsed);
        }
        Ok(set)
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.particles.iter().map(|p| p.weight * p.weight).sum::<f64>()
    }

    fn normalize(&mut self) -> bool {
        let total: f64 = self.particles.iter().map(|p| p.weight).sum();
        if !(total > 0.0 && total.is_finite()) {
            return false;
        }
        self.particles.iter_mut().for_each(|p| p.weight /= total);
        true
    }

    fn check_model<M: Model + ?Sized>(&self, model: &M) -> Result<(), BeliefError> {
        if model.state_dim() != self.state_dim {
            return Err(BeliefError::Dimension { what: "model state", expected: self.state_dim, got: model.state_dim() });
        }
        if model.param_dim() != self.param_dim {
            return Err(BeliefError::Dimension { what: "model parameters", expected: self.param_dim, got: model.param_dim() });
        }
        Ok(())
    }

    /// Propagate every particle through the model with its own parameters and
    /// add the artificial noise.
    pub fn predict<M: Model + ?Sized, R: Rng + ?Sized>(
        &mut self,
        u: &[f64],
        model: &M,
        config: &FilterConfig,
        rng: &mut R,
    ) -> Result<(), BeliefError> {
        self.check_model(model)?;
        config.validate(self.state_dim, self.param_dim)?;
        let nx = self.state_dim;
        let std: Vec<f64> = config.process_noise.iter().map(|v| v.sqrt()).collect();
        let mut next = vec![0.0; nx];
        for p in &mut self.particles {
            model.transition(&p.x, u, &p.phi, &mut next);
            for (j, v) in next.iter_mut().enumerate() {
                if std[j] > 0.0 {
                    *v += std[j] * rng.sample::<f64, _>(StandardNormal);
                }
            }
            model.wrap_state(&mut next);
            p.x.copy_from_slice(&next);
            for (k, v) in p.phi.iter_mut().enumerate() {
                let s = std[nx + k];
                if s > 0.0 {
                    *v += s * rng.sample::<f64, _>(StandardNormal);
                }
                if config.reflect_params {
                    *v = v.abs();
                }
            }
            if !p.x.iter().chain(&p.phi).all(|v| v.is_finite()) {
                p.weight = 0.0;
            }
        }
        if self.normalize() {
            Ok(())
        } else {
            Err(BeliefError::Collapsed)
        }
    }

    /// Reweight by the observation likelihood and resample if needed.
    pub fn update<M: Model + ?Sized, R: Rng + ?Sized>(
        &mut self,
        z: &[f64],
        model: &M,
        config: &FilterConfig,
        rng: &mut R,
    ) -> Result<UpdateInfo, BeliefError> {
        self.check_model(model)?;
        config.validate(self.state_dim, self.param_dim)?;
        if z.len() != self.state_dim {
            return Err(BeliefError::Dimension { what: "observation", expected: self.state_dim, got: z.len() });
        }
        let mut diff = vec![0.0; self.state_dim];
        let log_w: Vec<f64> = self
            .particles
            .iter()
            .map(|p| {
                if !(p.weight > 0.0) || !p.x.iter().all(|v| v.is_finite()) {
                    return f64::NEG_INFINITY;
                }
                model.state_difference(z, &p.x, &mut diff);
                let quad: f64 = diff.iter().zip(&config.measurement_noise).map(|(d, r)| d * d / r).sum();
                p.weight.ln() - 0.5 * quad
            })
            .collect();
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut info = UpdateInfo::default();
        if max == f64::NEG_INFINITY || max.is_nan() {
            log::warn!("particle likelihoods vanished; resetting to uniform weights");
            let w = 1.0 / self.len() as f64;
            self.particles.iter_mut().for_each(|p| p.weight = w);
            info.degenerate = true;
        } else {
            for (p, lw) in self.particles.iter_mut().zip(&log_w) {
                p.weight = (lw - max).exp();
            }
            self.normalize();
        }
        info.ess = self.effective_sample_size();
        if info.degenerate || info.ess < config.resample_threshold * self.len() as f64 {
            self.resample_systematic(rng);
            info.resampled = true;
        }
        Ok(info)
    }

    /// Systematic resampling to equal weights.
    pub fn resample_systematic<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.len();
        let step = 1.0 / n as f64;
        let start: f64 = rng.random::<f64>() * step;
        let mut out = Vec::with_capacity(n);
        let mut i = 0;
        let mut cumulative = self.particles[0].weight;
        for k in 0..n {
            let target = start + k as f64 * step;
            while cumulative < target && i + 1 < n {
                i += 1;
                cumulative += self.particles[i].weight;
            }
            let mut p = self.particles[i].clone();
            p.weight = step;
            out.push(p);
        }
        self.particles = out;
    }

    /// `count` draws with replacement, proportional to the weights.
    pub fn draw_uncertainty_samples<R: Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<UncertaintySample>, BeliefError> {
        if count == 0 {
            return Err(BeliefError::NoSamples);
        }
        let mut cumulative = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for p in &self.particles {
            acc += p.weight;
            cumulative.push(acc);
        }
        Ok((0..count)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                let i = cumulative.partition_point(|&c| c <= u).min(self.len() - 1);
                let p = &self.particles[i];
                UncertaintySample { x: p.x.clone(), params: p.phi.clone() }
            })
            .collect())
    }

    /// Weighted mean and standard deviation over `[x, φ]`. Angular state
    /// components are averaged as wrapped offsets from the heaviest particle.
    pub fn summary<M: Model + ?Sized>(&self, model: &M) -> BeliefSummary {
        let nx = self.state_dim;
        let dim = nx + self.param_dim;
        let reference = self
            .particles
            .iter()
            .max_by(|a, b| a.weight.total_cmp(&b.weight))
            .expect("non-empty particle set");
        let mut diff = vec![0.0; nx];
        let mut offset = vec![0.0; dim];
        let mut second = vec![0.0; dim];
        for p in &self.particles {
            model.state_difference(&p.x, &reference.x, &mut diff);
            for j in 0..dim {
                let d = if j < nx { diff[j] } else { p.phi[j - nx] - reference.phi[j - nx] };
                offset[j] += p.weight * d;
                second[j] += p.weight * d * d;
            }
        }
        let mut mean: Vec<f64> = reference.x.iter().chain(&reference.phi).zip(&offset).map(|(r, o)| r + o).collect();
        model.wrap_state(&mut mean[..nx]);
        let std = offset.iter().zip(&second).map(|(o, s)| (s - o * o).max(0.0).sqrt()).collect();
        BeliefSummary { mean, std }
    }
}

/// One Gaussian observation `z = x + v` with diagonal variance `var`.
pub fn observe<R: Rng + ?Sized>(x: &[f64], var: &[f64], rng: &mut R) -> Vec<f64> {
    x.iter()
        .zip(var)
        .map(|(xi, v)| match Normal::new(0.0, v.sqrt()) {
            Ok(n) if *v > 0.0 => xi + n.sample(rng),
            _ => *xi,
        })
        .collect()
}
