//! Published experiment constants: measurement noise, artificial process
//! noise, initial-state spreads, parameter priors and true parameter values.

use std::f64::consts::PI;

use serde::Serialize;

use super::Mode;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PublishedNoise {
    /// Artificial process noise when parameters are estimated, over `[x, φ]`.
    pub process_estimating: &'static [f64],
    /// Artificial process noise otherwise. Entries past the state dimension
    /// are ignored.
    pub process_state_only: &'static [f64],
    pub measurement: &'static [f64],
    /// Measurement noise used in the parameter-estimation runs.
    pub measurement_estimating: &'static [f64],
}

pub fn published_noise(system: &str) -> Option<PublishedNoise> {
    Some(match system {
        "pendulum" => PublishedNoise {
            process_estimating: &[1e-5, 1e-5, 1e-9],
            process_state_only: &[0.2, 0.2, 0.0],
            measurement: &[0.7, 0.3],
            measurement_estimating: &[1.0, 1.0],
        },
        "cartpole" => PublishedNoise {
            process_estimating: &[0.001, 0.001, 0.001, 0.001, 1e-6],
            process_state_only: &[0.1, 0.3, 0.3, 0.2, 1e-6, 0.0],
            measurement: &[1.0, 1.0, 0.25, 0.25],
            measurement_estimating: &[1.0, 1.0, 0.25, 0.25],
        },
        "quadcopter" => PublishedNoise {
            process_estimating: &[0.02, 0.02, 0.02, 0.03, 0.03, 0.03, 0.04, 0.04, 0.04, 0.04, 0.04, 0.04, 0.001],
            process_state_only: &[0.05, 0.05, 0.05, 0.03, 0.03, 0.003, 0.04, 0.04, 0.04, 0.04, 0.04, 0.04, 1e-9],
            measurement: &[0.1, 0.1, 0.1, 0.01, 0.01, 0.01, 0.08, 0.08, 0.08, 0.01, 0.1, 0.01],
            measurement_estimating: &[0.1, 0.1, 0.1, 0.01, 0.01, 0.01, 0.08, 0.08, 0.08, 0.01, 0.1, 0.01],
        },
        _ => return None,
    })
}

/// Unknown parameter, its prior mean and variance, and its true value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PublishedParam {
    pub name: &'static str,
    pub prior_mean: f64,
    pub prior_var: f64,
    pub truth: f64,
}

pub fn published_param(system: &str) -> Option<PublishedParam> {
    Some(match system {
        "pendulum" => PublishedParam { name: "mass", prior_mean: 5.0, prior_var: 4.0, truth: 2.0 },
        "cartpole" => PublishedParam { name: "pole_mass", prior_mean: 5.0, prior_var: 5.0, truth: 0.1 },
        "quadcopter" => PublishedParam { name: "drag", prior_mean: 0.5, prior_var: 0.5, truth: 0.1 },
        _ => return None,
    })
}

/// Mean and diagonal variance of the initial state.
pub fn published_initial_state(system: &str, mode: Mode) -> Option<(Vec<f64>, Vec<f64>)> {
    Some(match (system, mode) {
        ("pendulum", Mode::ParameterEstimation) => (vec![PI, 0.0], vec![0.1, 0.1]),
        ("pendulum", _) => (vec![PI, 0.0], vec![0.5, 0.5]),
        ("cartpole", _) => (vec![0.0, 0.0, PI, 0.0], vec![0.5, 0.5, 0.08, 0.05]),
        ("quadcopter", Mode::ParameterEstimation) => (vec![0.0; 12], vec![0.0; 12]),
        ("quadcopter", _) => {
            let mut var = vec![0.2; 12];
            var[..3].copy_from_slice(&[0.3, 0.3, 0.3]);
            (vec![0.0; 12], var)
        }
        _ => return None,
    })
}

/// The first `len` entries of a published diagonal, padded with zeros.
pub fn fit_diagonal(values: &[f64], len: usize) -> Vec<f64> {
    (0..len).map(|i| values.get(i).copied().unwrap_or(0.0)).collect()
}
