use serde::{Deserialize, Serialize};

use super::wrap_angle;

/// Frictionless cart-pole with a continuous horizontal force, pole angle
/// measured from upright. State `[x, ẋ, θ, θ̇]`, explicit Euler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cartpole {
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Distance from the pivot to the pole's centre of mass.
    pub pole_half_length: f64,
    pub gravity: f64,
}

impl Default for Cartpole {
    fn default() -> Self {
        Cartpole { cart_mass: 1.0, pole_mass: 0.1, pole_half_length: 0.5, gravity: 9.8 }
    }
}

impl Cartpole {
    pub const PARAMS: &'static [&'static str] = &["cart_mass", "pole_mass", "pole_half_length", "gravity"];

    pub(super) fn param_mut(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "cart_mass" => &mut self.cart_mass,
            "pole_mass" => &mut self.pole_mass,
            "pole_half_length" => &mut self.pole_half_length,
            "gravity" => &mut self.gravity,
            _ => return None,
        })
    }

    pub fn step(&self, x: &[f64], u: &[f64], dt: f64, next: &mut [f64]) {
        let (pos, vel, theta, omega) = (x[0], x[1], x[2], x[3]);
        let (sin, cos) = theta.sin_cos();
        let total = self.cart_mass + self.pole_mass;
        let pml = self.pole_mass * self.pole_half_length;
        let temp = (u[0] + pml * omega * omega * sin) / total;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (self.pole_half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / total));
        let x_acc = temp - pml * theta_acc * cos / total;
        next[0] = pos + dt * vel;
        next[1] = vel + dt * x_acc;
        next[2] = wrap_angle(theta + dt * omega);
        next[3] = omega + dt * theta_acc;
    }
}
