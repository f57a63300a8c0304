//! Environments: discrete-time dynamics, quadratic costs and rollouts.
//!
//! Three uncertainty channels reach a rollout: the initial state, the
//! parameter vector `φ` (values for the parameters named in
//! [`EnvSpec::uncertain_params`]) and additive Gaussian noise on the control
//! channel, `u_eff = clamp(u + σ ⊙ ξ)`.

mod cartpole;
mod pendulum;
mod quadcopter;

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampling::{ControlBox, ControlSeq};

pub use cartpole::Cartpole;
pub use pendulum::Pendulum;
pub use quadcopter::Quadcopter;

/// Largest state dimension among the built-in systems.
pub const MAX_STATE_DIM: usize = 12;
/// Largest control dimension among the built-in systems.
pub const MAX_CONTROL_DIM: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("unknown system {0:?} (expected pendulum, cartpole or quadcopter)")]
    UnknownSystem(String),
    #[error("unknown parameter {name:?} for {system}")]
    UnknownParam { system: &'static str, name: String },
    #[error("invalid environment: {0}")]
    Invalid(String),
    #[error("non-finite state after step {step}")]
    NonFinite { step: usize },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
}

/// Wrap an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Deterministic transition model `x' = f(x, u; φ)`.
pub trait Model: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn transition(&self, x: &[f64], u: &[f64], params: &[f64], next: &mut [f64]);

    /// State components that are angles living on `(−π, π]`.
    fn angle_indices(&self) -> &[usize] {
        &[]
    }

    /// `a − b`, with angular components wrapped.
    fn state_difference(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = x - y;
        }
        for &i in self.angle_indices() {
            out[i] = wrap_angle(out[i]);
        }
    }

    /// Bring angular components back into `(−π, π]`.
    fn wrap_state(&self, x: &mut [f64]) {
        for &i in self.angle_indices() {
            x[i] = wrap_angle(x[i]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum System {
    Pendulum(Pendulum),
    Cartpole(Cartpole),
    Quadcopter(Quadcopter),
}

impl System {
    pub fn name(&self) -> &'static str {
        match self {
            System::Pendulum(_) => "pendulum",
            System::Cartpole(_) => "cartpole",
            System::Quadcopter(_) => "quadcopter",
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            System::Pendulum(_) => 2,
            System::Cartpole(_) => 4,
            System::Quadcopter(_) => 12,
        }
    }

    pub fn control_dim(&self) -> usize {
        match self {
            System::Pendulum(_) | System::Cartpole(_) => 1,
            System::Quadcopter(_) => 4,
        }
    }

    /// State components that are angles wrapped to `(−π, π]`.
    pub fn angle_indices(&self) -> &'static [usize] {
        match self {
            System::Pendulum(_) => &[0],
            System::Cartpole(_) => &[2],
            System::Quadcopter(_) => &[],
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            System::Pendulum(_) => Pendulum::PARAMS,
            System::Cartpole(_) => Cartpole::PARAMS,
            System::Quadcopter(_) => Quadcopter::PARAMS,
        }
    }

    fn param_slot(&mut self, name: &str) -> Option<&mut f64> {
        match self {
            System::Pendulum(p) => p.param_mut(name),
            System::Cartpole(c) => c.param_mut(name),
            System::Quadcopter(q) => q.param_mut(name),
        }
    }

    pub fn param(&self, name: &str) -> Result<f64, DynamicsError> {
        let mut copy = *self;
        copy.param_slot(name).map(|v| *v).ok_or_else(|| self.unknown(name))
    }

    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), DynamicsError> {
        let system = self.name();
        match self.param_slot(name) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(DynamicsError::UnknownParam { system, name: name.to_string() }),
        }
    }

    fn unknown(&self, name: &str) -> DynamicsError {
        DynamicsError::UnknownParam { system: self.name(), name: name.to_string() }
    }

    fn step(&self, x: &[f64], u: &[f64], dt: f64, next: &mut [f64]) {
        match self {
            System::Pendulum(p) => p.step(x, u, dt, next),
            System::Cartpole(c) => c.step(x, u, dt, next),
            System::Quadcopter(q) => q.step(x, u, dt, next),
        }
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        let positive: &[(&str, f64)] = match self {
            System::Pendulum(p) => &[("mass", p.mass), ("length", p.length), ("max_speed", p.max_speed)],
            System::Cartpole(c) => &[
                ("cart_mass", c.cart_mass),
                ("pole_mass", c.pole_mass),
                ("pole_half_length", c.pole_half_length),
            ],
            System::Quadcopter(q) => &[
                ("mass", q.mass),
                ("inertia_x", q.inertia[0]),
                ("inertia_y", q.inertia[1]),
                ("inertia_z", q.inertia[2]),
            ],
        };
        for (name, v) in positive {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(DynamicsError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// A fully specified environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub system: System,
    /// Integration step in seconds.
    pub dt: f64,
    pub control_box: ControlBox,
    /// Standard deviation of the additive control-channel noise.
    pub control_noise_std: Vec<f64>,
    /// Physical parameters supplied through `φ`, in order.
    #[serde(default)]
    pub uncertain_params: Vec<String>,
}

/// Bookkeeping for one [`EnvSpec::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepInfo {
    /// The commanded control was outside the box.
    pub clamped: bool,
    pub finite: bool,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        self.system.validate()?;
        let nu = self.system.control_dim();
        self.control_box
            .validate()
            .map_err(|e| DynamicsError::Invalid(format!("control_box: {e}")))?;
        if self.control_box.dim() != nu {
            return Err(DynamicsError::Dimension { what: "control_box", expected: nu, got: self.control_box.dim() });
        }
        if self.control_noise_std.len() != nu {
            return Err(DynamicsError::Dimension {
                what: "control_noise_std",
                expected: nu,
                got: self.control_noise_std.len(),
            });
        }
        if self.control_noise_std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(DynamicsError::Invalid("control_noise_std must be nonnegative".into()));
        }
        for name in &self.uncertain_params {
            self.system.param(name)?;
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.system.control_dim()
    }

    /// Current values of the uncertain parameters.
    pub fn nominal_params(&self) -> Vec<f64> {
        self.uncertain_params
            .iter()
            .map(|n| self.system.param(n).expect("validated parameter name"))
            .collect()
    }

    /// The physical system with `φ` substituted for the uncertain parameters.
    pub fn with_params(&self, params: &[f64]) -> System {
        let mut sys = self.system;
        for (name, &v) in self.uncertain_params.iter().zip(params) {
            if let Some(slot) = sys.param_slot(name) {
                *slot = v;
            }
        }
        sys
    }

    pub fn has_control_noise(&self) -> bool {
        self.control_noise_std.iter().any(|&s| s > 0.0)
    }

    /// Advance one step. `noise` holds standard-normal draws for the control
    /// channel; `applied` receives the clamped effective control.
    pub fn step(
        &self,
        x: &[f64],
        u: &[f64],
        params: &[f64],
        noise: &[f64],
        next: &mut [f64],
        applied: &mut [f64],
    ) -> StepInfo {
        let clamped = !self.control_box.contains(u);
        for j in 0..applied.len() {
            let n = noise.get(j).copied().unwrap_or(0.0);
            applied[j] = u[j] + n * self.control_noise_std[j];
        }
        self.control_box.clamp(applied);
        self.with_params(params).step(x, applied, self.dt, next);
        StepInfo { clamped, finite: next.iter().all(|v| v.is_finite()) }
    }

    /// Cost of one rollout without recording the path. Returns a non-finite
    /// value if the state diverges.
    pub fn rollout_cost<R: Rng + ?Sized>(
        &self,
        cost: &QuadraticCost,
        controls: &ControlSeq,
        x0: &[f64],
        params: &[f64],
        rng: &mut R,
    ) -> f64 {
        let nx = self.state_dim();
        let nu = self.control_dim();
        let sys = self.with_params(params);
        let noisy = self.has_control_noise();
        let mut x = [0.0; MAX_STATE_DIM];
        let mut next = [0.0; MAX_STATE_DIM];
        let mut u = [0.0; MAX_CONTROL_DIM];
        x[..nx].copy_from_slice(x0);
        let mut total = 0.0;
        for row in controls.rows() {
            for j in 0..nu {
                let n: f64 = if noisy { rng.sample(StandardNormal) } else { 0.0 };
                u[j] = row[j] + n * self.control_noise_std[j];
            }
            self.control_box.clamp(&mut u[..nu]);
            total += cost.stage(&x[..nx], &u[..nu]);
            sys.step(&x[..nx], &u[..nu], self.dt, &mut next[..nx]);
            if !next[..nx].iter().all(|v| v.is_finite()) {
                return f64::INFINITY;
            }
            x[..nx].copy_from_slice(&next[..nx]);
        }
        total + cost.terminal(&x[..nx])
    }
}

impl Model for EnvSpec {
    fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    fn control_dim(&self) -> usize {
        self.system.control_dim()
    }

    fn param_dim(&self) -> usize {
        self.uncertain_params.len()
    }

    fn transition(&self, x: &[f64], u: &[f64], params: &[f64], next: &mut [f64]) {
        let mut applied = [0.0; MAX_CONTROL_DIM];
        let nu = self.control_dim();
        applied[..nu].copy_from_slice(u);
        self.control_box.clamp(&mut applied[..nu]);
        self.with_params(params).step(x, &applied[..nu], self.dt, next);
    }

    fn angle_indices(&self) -> &[usize] {
        self.system.angle_indices()
    }
}

/// `l(x, u) = (x − x*)ᵀ Q (x − x*) + uᵀ R u` with diagonal `Q`, `R`; the
/// terminal cost is the state part of `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticCost {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub target: Vec<f64>,
    /// Components whose deviation from the target is wrapped to `(−π, π]`.
    #[serde(default)]
    pub angle_indices: Vec<usize>,
}

impl QuadraticCost {
    pub fn validate(&self, state_dim: usize, control_dim: usize) -> Result<(), DynamicsError> {
        if self.q.len() != state_dim {
            return Err(DynamicsError::Dimension { what: "cost.q", expected: state_dim, got: self.q.len() });
        }
        if self.target.len() != state_dim {
            return Err(DynamicsError::Dimension { what: "cost.target", expected: state_dim, got: self.target.len() });
        }
        if self.r.len() != control_dim {
            return Err(DynamicsError::Dimension { what: "cost.r", expected: control_dim, got: self.r.len() });
        }
        if self.q.iter().chain(&self.r).any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(DynamicsError::Invalid("cost weights must be nonnegative".into()));
        }
        if self.angle_indices.iter().any(|&i| i >= state_dim) {
            return Err(DynamicsError::Invalid("cost.angle_indices out of range".into()));
        }
        Ok(())
    }

    pub fn terminal(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, ((xi, ti), qi)) in x.iter().zip(&self.target).zip(&self.q).enumerate() {
            let mut d = xi - ti;
            if self.angle_indices.contains(&i) {
                d = wrap_angle(d);
            }
            total += qi * d * d;
        }
        total
    }

    pub fn stage(&self, x: &[f64], u: &[f64]) -> f64 {
        self.terminal(x) + u.iter().zip(&self.r).map(|(uj, rj)| rj * uj * uj).sum::<f64>()
    }

    /// `Σ_t l(x_t, u_t) + g(x_T)` over a recorded path.
    pub fn path_cost(&self, states: &[Vec<f64>], controls: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for (x, u) in states.iter().zip(controls) {
            total += self.stage(x, u);
        }
        total + states.last().map_or(0.0, |x| self.terminal(x))
    }
}

/// A recorded rollout. `controls` holds the applied (noisy, clamped) controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub cost: f64,
    pub clamp_count: usize,
}

/// Run a policy from `x0`, drawing control noise from `rng`.
pub fn rollout<R: Rng + ?Sized>(
    env: &EnvSpec,
    cost: &QuadraticCost,
    controls: &ControlSeq,
    x0: &[f64],
    params: &[f64],
    rng: &mut R,
) -> Result<Trajectory, DynamicsError> {
    let nx = env.state_dim();
    let nu = env.control_dim();
    if x0.len() != nx {
        return Err(DynamicsError::Dimension { what: "x0", expected: nx, got: x0.len() });
    }
    if controls.dim() != nu {
        return Err(DynamicsError::Dimension { what: "controls", expected: nu, got: controls.dim() });
    }
    let noisy = env.has_control_noise();
    let mut states = Vec::with_capacity(controls.steps() + 1);
    let mut applied_log = Vec::with_capacity(controls.steps());
    states.push(x0.to_vec());
    let mut clamp_count = 0;
    let mut noise = vec![0.0; nu];
    for (t, row) in controls.rows().enumerate() {
        if noisy {
            noise.iter_mut().for_each(|n| *n = rng.sample(StandardNormal));
        }
        let mut next = vec![0.0; nx];
        let mut applied = vec![0.0; nu];
        let info = env.step(&states[t], row, params, &noise, &mut next, &mut applied);
        clamp_count += usize::from(info.clamped);
        if !info.finite {
            return Err(DynamicsError::NonFinite { step: t });
        }
        states.push(next);
        applied_log.push(applied);
    }
    let total = cost.path_cost(&states, &applied_log);
    Ok(Trajectory { states, controls: applied_log, cost: total, clamp_count })
}

/// Shipped defaults for one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDefaults {
    pub env: EnvSpec,
    pub cost: QuadraticCost,
    pub initial_state: Vec<f64>,
}

/// Default environment, cost and start state for `pendulum`, `cartpole` or
/// `quadcopter`.
pub fn default_specs(system: &str) -> Result<SystemDefaults, DynamicsError> {
    let d = match system {
        "pendulum" => SystemDefaults {
            env: EnvSpec {
                system: System::Pendulum(Pendulum::default()),
                dt: 0.05,
                control_box: ControlBox::symmetric(1, 10.0),
                control_noise_std: vec![0.0],
                uncertain_params: vec![],
            },
            cost: QuadraticCost { q: vec![3.0, 0.01], r: vec![0.01], target: vec![0.0, 0.0], angle_indices: vec![0] },
            initial_state: vec![-PI, 0.0],
        },
        "cartpole" => SystemDefaults {
            env: EnvSpec {
                system: System::Cartpole(Cartpole::default()),
                dt: 0.02,
                control_box: ControlBox::symmetric(1, 15.0),
                control_noise_std: vec![0.0],
                uncertain_params: vec![],
            },
            cost: QuadraticCost {
                q: vec![0.01, 0.1, 1.0, 0.1],
                r: vec![0.001],
                target: vec![0.0; 4],
                angle_indices: vec![2],
            },
            initial_state: vec![0.0, 0.0, -PI, 0.0],
        },
        "quadcopter" => {
            let mut target = vec![0.0; 12];
            target[..3].copy_from_slice(&[2.0, 2.0, 2.0]);
            let q = vec![1.0, 1.0, 1.0, 0.1, 0.1, 0.1, 0.5, 0.5, 0.1, 0.01, 0.01, 0.01];
            SystemDefaults {
                env: EnvSpec {
                    system: System::Quadcopter(Quadcopter::default()),
                    dt: 0.02,
                    control_box: ControlBox {
                        lower: vec![0.0, -10.0, -10.0, -1.0],
                        upper: vec![20.0, 10.0, 10.0, 1.0],
                    },
                    control_noise_std: vec![0.0; 4],
                    uncertain_params: vec![],
                },
                cost: QuadraticCost { q, r: vec![0.0, 0.01, 0.01, 0.01], target, angle_indices: vec![] },
                initial_state: vec![0.0; 12],
            }
        }
        other => return Err(DynamicsError::UnknownSystem(other.to_string())),
    };
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pendulum() -> SystemDefaults {
        default_specs("pendulum").unwrap()
    }

    fn quiet_step(env: &EnvSpec, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; x.len()];
        let mut applied = vec![0.0; u.len()];
        env.step(x, u, &env.nominal_params(), &[], &mut next, &mut applied);
        next
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn pendulum_equilibria() {
        let env = pendulum().env;
        assert_eq!(quiet_step(&env, &[0.0, 0.0], &[0.0]), vec![0.0, 0.0]);
        let down = quiet_step(&env, &[PI, 0.0], &[0.0]);
        assert!((down[0] - PI).abs() < 1e-12 && down[1].abs() < 1e-12, "{down:?}");
    }

    #[test]
    fn pendulum_speed_is_clamped() {
        let env = pendulum().env;
        let x = quiet_step(&env, &[1.0, 7.9], &[10.0]);
        assert_eq!(x[1], 8.0);
    }

    #[test]
    fn pendulum_energy_drift_is_first_order() {
        // Semi-implicit Euler keeps the energy error bounded by O(dt); the
        // bound below is the recorded drift of 0.26 J over 400 steps from
        // θ = 2 rad, rounded up.
        let env = pendulum().env;
        let System::Pendulum(p) = env.system else { unreachable!() };
        let mut x = vec![2.0, 0.0];
        let e0 = p.energy(&x);
        let mut worst: f64 = 0.0;
        for _ in 0..400 {
            x = quiet_step(&env, &x, &[0.0]);
            worst = worst.max((p.energy(&x) - e0).abs());
        }
        assert!(worst < 0.3, "energy drift {worst}");
        assert!(worst < 10.0 * env.dt * p.mass * p.gravity * p.length);
    }

    #[test]
    fn cartpole_upright_equilibrium() {
        let env = default_specs("cartpole").unwrap().env;
        assert_eq!(quiet_step(&env, &[0.0; 4], &[0.0]), vec![0.0; 4]);
        let hanging = quiet_step(&env, &[0.0, 0.0, PI, 0.0], &[0.0]);
        assert!(hanging[3].abs() < 1e-12);
    }

    #[test]
    fn quadcopter_hover_is_stationary() {
        let d = default_specs("quadcopter").unwrap();
        let System::Quadcopter(q) = d.env.system else { unreachable!() };
        let x = vec![0.5, -1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0];
        let next = quiet_step(&d.env, &x, &[q.hover_thrust(), 0.0, 0.0, 0.0]);
        for (a, b) in next.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12, "{next:?}");
        }
    }

    #[test]
    fn quadcopter_drag_decelerates() {
        let d = default_specs("quadcopter").unwrap();
        let System::Quadcopter(q) = d.env.system else { unreachable!() };
        let mut x = vec![0.0; 12];
        x[3] = 1.0;
        let next = quiet_step(&d.env, &x, &[q.hover_thrust(), 0.0, 0.0, 0.0]);
        assert!((next[3] - (1.0 - d.env.dt * q.drag / q.mass)).abs() < 1e-12);
    }

    #[test]
    fn rollout_at_target_costs_nothing() {
        let d = pendulum();
        let controls = ControlSeq::zeros(10, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = rollout(&d.env, &d.cost, &controls, &[0.0, 0.0], &[], &mut rng).unwrap();
        assert_eq!(traj.cost, 0.0);
        let empty = ControlSeq::zeros(0, 1);
        let traj = rollout(&d.env, &d.cost, &empty, &[1.0, 2.0], &[], &mut rng).unwrap();
        assert_eq!(traj.cost, 3.0 * 1.0 + 0.01 * 4.0);
    }

    #[test]
    fn pendulum_cost_matches_hand_accumulator() {
        let d = pendulum();
        let controls = ControlSeq::from_rows(&(0..30).map(|t| vec![(t as f64 * 0.7).sin() * 9.0]).collect::<Vec<_>>())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let traj = rollout(&d.env, &d.cost, &controls, &d.initial_state, &[], &mut rng).unwrap();

        let mut hand = 0.0;
        for (x, u) in traj.states.iter().zip(&traj.controls) {
            let th = wrap_angle(x[0]);
            hand += 3.0 * th * th + 0.01 * x[1] * x[1] + 0.01 * u[0] * u[0];
        }
        let last = traj.states.last().unwrap();
        let th = wrap_angle(last[0]);
        hand += 3.0 * th * th + 0.01 * last[1] * last[1];
        assert_eq!(traj.cost, hand);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fast = d.env.rollout_cost(&d.cost, &controls, &d.initial_state, &[], &mut rng);
        assert_eq!(fast, traj.cost);
    }

    #[test]
    fn noisy_rollouts_match_between_paths_and_stay_in_box() {
        let mut d = default_specs("cartpole").unwrap();
        d.env.control_noise_std = vec![5.0];
        let controls = ControlSeq::filled(50, 1, 14.0);
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(4);
        let traj = rollout(&d.env, &d.cost, &controls, &d.initial_state, &[], &mut a).unwrap();
        let fast = d.env.rollout_cost(&d.cost, &controls, &d.initial_state, &[], &mut b);
        assert_eq!(traj.cost, fast);
        assert!(traj.controls.iter().all(|u| d.env.control_box.contains(u)));
        assert!(traj.cost >= 0.0);
    }

    #[test]
    fn uncertain_params_override_physics() {
        let mut env = pendulum().env;
        env.uncertain_params = vec!["mass".into()];
        env.validate().unwrap();
        assert_eq!(env.nominal_params(), vec![1.0]);
        let mut light = vec![0.0; 2];
        let mut heavy = vec![0.0; 2];
        env.transition(&[0.0, 0.0], &[1.0], &[1.0], &mut light);
        env.transition(&[0.0, 0.0], &[1.0], &[2.0], &mut heavy);
        assert!((light[1] - 2.0 * heavy[1]).abs() < 1e-12);
        env.uncertain_params = vec!["colour".into()];
        assert!(env.validate().is_err());
    }

    #[test]
    fn defaults_table() {
        let p = pendulum();
        let System::Pendulum(pp) = p.env.system else { panic!() };
        assert_eq!((pp.mass, pp.length), (1.0, 1.0));
        assert_eq!(p.env.control_box, ControlBox::symmetric(1, 10.0));
        assert_eq!(p.cost.q, vec![3.0, 0.01]);
        assert_eq!(p.cost.r, vec![0.01]);
        assert_eq!(p.initial_state, vec![-PI, 0.0]);
        assert_eq!(p.cost.target, vec![0.0, 0.0]);

        let c = default_specs("cartpole").unwrap();
        let System::Cartpole(cc) = c.env.system else { panic!() };
        assert_eq!((cc.cart_mass, cc.pole_mass, cc.pole_half_length), (1.0, 0.1, 0.5));
        assert_eq!(c.env.control_box, ControlBox::symmetric(1, 15.0));
        assert_eq!(c.cost.q, vec![0.01, 0.1, 1.0, 0.1]);
        assert_eq!(c.cost.r, vec![0.001]);

        let q = default_specs("quadcopter").unwrap();
        assert_eq!(q.env.control_box.lower, vec![0.0, -10.0, -10.0, -1.0]);
        assert_eq!(q.env.control_box.upper, vec![20.0, 10.0, 10.0, 1.0]);
        assert_eq!(&q.cost.target[..3], &[2.0, 2.0, 2.0]);
        assert_eq!(&q.initial_state[..3], &[0.0, 0.0, 0.0]);

        for d in [p, c, q] {
            d.env.validate().unwrap();
            d.cost.validate(d.env.state_dim(), d.env.control_dim()).unwrap();
        }
        assert!(matches!(default_specs("unicycle"), Err(DynamicsError::UnknownSystem(_))));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut env = pendulum().env;
        env.dt = 0.0;
        assert!(env.validate().is_err());
        let mut env = pendulum().env;
        env.system.set_param("mass", -1.0).unwrap();
        assert!(env.validate().is_err());
        let mut env = pendulum().env;
        env.control_noise_std = vec![1.0, 1.0];
        assert!(env.validate().is_err());
    }
}
