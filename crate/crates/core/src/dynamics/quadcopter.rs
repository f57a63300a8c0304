use serde::{Deserialize, Serialize};

/// 12-state rigid-body quadrotor.
///
/// State: position `[x, y, z]`, linear velocity, ZYX Euler angles
/// `[roll, pitch, yaw]`, body angular rates `[p, q, r]`. Inputs: collective
/// thrust along body z and the three body torques. Translational drag is
/// linear, `−(drag/m)·v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quadcopter {
    pub mass: f64,
    pub inertia: [f64; 3],
    pub drag: f64,
    pub gravity: f64,
}

impl Default for Quadcopter {
    fn default() -> Self {
        Quadcopter { mass: 1.0, inertia: [0.5, 0.5, 1.0], drag: 0.1, gravity: 9.81 }
    }
}

impl Quadcopter {
    pub const PARAMS: &'static [&'static str] =
        &["mass", "drag", "gravity", "inertia_x", "inertia_y", "inertia_z"];

    pub(super) fn param_mut(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "mass" => &mut self.mass,
            "drag" => &mut self.drag,
            "gravity" => &mut self.gravity,
            "inertia_x" => &mut self.inertia[0],
            "inertia_y" => &mut self.inertia[1],
            "inertia_z" => &mut self.inertia[2],
            _ => return None,
        })
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn step(&self, x: &[f64], u: &[f64], dt: f64, next: &mut [f64]) {
        let (roll, pitch, yaw) = (x[6], x[7], x[8]);
        let (p, q, r) = (x[9], x[10], x[11]);
        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let (sy, cy) = yaw.sin_cos();

        // Body z axis expressed in the world frame.
        let thrust = u[0] / self.mass;
        let acc = [
            thrust * (cr * sp * cy + sr * sy),
            thrust * (cr * sp * sy - sr * cy),
            thrust * cr * cp - self.gravity,
        ];
        let damping = self.drag / self.mass;

        let tp = sp / cp;
        let euler_rates = [p + sr * tp * q + cr * tp * r, cr * q - sr * r, (sr * q + cr * r) / cp];

        let [ix, iy, iz] = self.inertia;
        let body_acc = [
            (u[1] - (iz - iy) * q * r) / ix,
            (u[2] - (ix - iz) * r * p) / iy,
            (u[3] - (iy - ix) * p * q) / iz,
        ];

        for k in 0..3 {
            next[k] = x[k] + dt * x[3 + k];
            next[3 + k] = x[3 + k] + dt * (acc[k] - damping * x[3 + k]);
            next[6 + k] = x[6 + k] + dt * euler_rates[k];
            next[9 + k] = x[9 + k] + dt * body_acc[k];
        }
    }
}
