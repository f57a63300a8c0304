//! Risk-sensitive stochastic search.
//!
//! The controller optimizes the conditional value-at-risk of trajectory cost
//! by gradient ascent on the parameters of a sampling distribution over
//! open-loop control sequences, re-planning in receding-horizon fashion.
//! Uncertainty in the initial state and model parameters comes from a
//! particle filter; uncertainty in the dynamics from additive control noise.
//!
//! | module | role |
//! |---|---|
//! | [`risk`] | empirical VaR/CVaR and a minimization-form oracle |
//! | [`shaping`] | shape functions turning negated CVaRs into weights |
//! | [`sampling`] | truncated Gaussian sequence sampler |
//! | [`search`] | the inner gradient loop |
//! | [`dynamics`] | pendulum, cartpole, quadcopter, quadratic costs |
//! | [`belief`] | particle filter over states and parameters |
//! | [`mpc`] | closed-loop episodes |
//! | [`harness`] | configured, seeded campaigns and their files |
//! | [`seeds`] | the seed tree every random stream hangs off |
//!
//! ```
//! use rs3::risk::{empirical_cvar, RiskLevel};
//!
//! let costs: Vec<f64> = (1..=10).map(f64::from).collect();
//! assert_eq!(empirical_cvar(&costs, RiskLevel::new(0.8).unwrap()).unwrap(), 9.5);
//! ```

pub mod belief;
pub mod dynamics;
pub mod harness;
pub mod mpc;
pub mod risk;
pub mod sampling;
pub mod search;
pub mod seeds;
pub mod shaping;

pub use harness::{run_campaign, ExperimentConfig};
pub use mpc::{run_episode, Estimator, MpcConfig};
pub use risk::RiskLevel;
pub use search::{optimize, SearchConfig};
pub use seeds::SeedPath;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/risk.md")]
    mod risk {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/belief.md")]
    mod belief {}
    #[doc = include_str!("../../../book/src/mpc.md")]
    mod mpc {}
    #[doc = include_str!("../../../book/src/campaigns.md")]
    mod campaigns {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
