use serde::{Deserialize, Serialize};

use super::wrap_angle;

/// Rigid rod pendulum with the angle measured from upright.
///
/// The update follows the classic-control gym environment: the angular
/// velocity is advanced first and clamped, then the angle is advanced with the
/// new velocity and wrapped to `(−π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pendulum {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub max_speed: f64,
}

impl Default for Pendulum {
    fn default() -> Self {
        Pendulum { mass: 1.0, length: 1.0, gravity: 10.0, max_speed: 8.0 }
    }
}

impl Pendulum {
    pub const PARAMS: &'static [&'static str] = &["mass", "length", "gravity", "max_speed"];

    pub(super) fn param_mut(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "mass" => &mut self.mass,
            "length" => &mut self.length,
            "gravity" => &mut self.gravity,
            "max_speed" => &mut self.max_speed,
            _ => return None,
        })
    }

    pub fn step(&self, x: &[f64], u: &[f64], dt: f64, next: &mut [f64]) {
        let (theta, omega) = (x[0], x[1]);
        let ml2 = self.mass * self.length * self.length;
        let accel = 1.5 * self.gravity / self.length * theta.sin() + 3.0 / ml2 * u[0];
        let omega_next = (omega + accel * dt).clamp(-self.max_speed, self.max_speed);
        next[0] = wrap_angle(theta + omega_next * dt);
        next[1] = omega_next;
    }

    /// Kinetic plus potential energy of the rod (pivot inertia `m l²/3`,
    /// centre of mass at `l/2`).
    pub fn energy(&self, x: &[f64]) -> f64 {
        let inertia = self.mass * self.length * self.length / 3.0;
        0.5 * inertia * x[1] * x[1] + self.mass * self.gravity * 0.5 * self.length * x[0].cos()
    }
}
