//! Experiment campaigns: configuration, seeded execution and persistence.
//!
//! A campaign runs `episodes` closed-loop episodes for every control-noise
//! level in `noise_levels`. Each level is a cell with its own directory:
//!
//! ```text
//! <output_dir>/
//!   config.resolved.json   every default materialized; valid input to `run`
//!   manifest.json          seed ledger and per-cell status
//!   summary.json           Mean/VaR/CVaR of episode totals per cell
//!   cell_<i>/costs.csv     one episode total per line
//!   cell_<i>/summary.json
//!   cell_<i>/episodes/episode_<e>.csv
//! ```
//!
//! Episode `e` of cell `i` uses the seed path `root.key([i, e])`, so results
//! do not depend on the worker count.

pub mod defaults;
pub mod io;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{FilterConfig, GaussianPrior};
use crate::dynamics::{default_specs, EnvSpec, QuadraticCost, SystemDefaults};
use crate::mpc::{self, EpisodeRecord, Estimator, MpcConfig};
use crate::risk::{self, RiskSummary};
use crate::sampling::ControlBox;
use crate::seeds::SeedPath;

/// Overrides the relative `output_dir` root.
pub const OUTPUT_ROOT_ENV: &str = "RS3_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn config(field: impl Into<String>, message: impl ToString) -> Self {
        HarnessError::Config { field: field.into(), message: message.to_string() }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    /// Process exit code: 2 for configuration or input errors, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } | HarnessError::Input(_) => 2,
            HarnessError::Io { .. } | HarnessError::Runtime(_) => 3,
        }
    }
}

/// Which uncertainty the campaign exercises. Decides the default estimator
/// and whether the true initial state is drawn at random.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    ControlNoise,
    InitialState,
    ParameterEstimation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Exact state and parameters.
    Exact,
    /// Particle filter over states and uncertain parameters.
    Filter,
    /// Particle filter over states; parameters stay at their prior.
    FilterPriorParams,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_box: Option<ControlBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertain_params: Option<Vec<String>>,
    /// True physical parameter values by name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

fn default_levels() -> Vec<f64> {
    vec![0.0]
}

fn default_output() -> PathBuf {
    PathBuf::from("runs/out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: String,
    #[serde(default)]
    pub mode: Mode,
    /// Control-noise standard deviations, one cell each.
    #[serde(default = "default_levels")]
    pub noise_levels: Vec<f64>,
    /// Per-dimension multiplier on the noise level; ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<Vec<f64>>,
    pub episodes: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorKind>,
    #[serde(default)]
    pub env: EnvOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<QuadraticCost>,
    /// Start state, or the mean of the random start state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
    pub mpc: MpcConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<GaussianPrior>,
}

impl ExperimentConfig {
    /// Parse TOML, or JSON when the path ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::config(toml_field(&e), e.message()))
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::config("<json>", e))
    }

    fn defaults(&self) -> Result<SystemDefaults, HarnessError> {
        default_specs(&self.system).map_err(|e| HarnessError::config("system", e))
    }

    fn estimator_kind(&self) -> EstimatorKind {
        self.estimator.unwrap_or(match self.mode {
            Mode::ControlNoise => EstimatorKind::Exact,
            Mode::InitialState | Mode::ParameterEstimation => EstimatorKind::Filter,
        })
    }

    /// Materialize every default and validate the result.
    pub fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let d = self.defaults()?;
        let mut r = self.clone();
        let nx = d.env.state_dim();
        let nu = d.env.control_dim();
        let kind = self.estimator_kind();
        r.estimator = Some(kind);

        if self.episodes == 0 {
            return Err(HarnessError::config("episodes", "must be at least 1"));
        }
        if self.noise_levels.is_empty() || self.noise_levels.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(HarnessError::config("noise_levels", "need at least one finite, nonnegative level"));
        }
        let scale = self.noise_scale.clone().unwrap_or_else(|| vec![1.0; nu]);
        if scale.len() != nu {
            return Err(HarnessError::config("noise_scale", format!("needs {nu} entries, got {}", scale.len())));
        }
        r.noise_scale = Some(scale);

        let published = defaults::published_param(&self.system).expect("known system");
        let estimating = self.mode == Mode::ParameterEstimation;
        let uncertain = match &self.env.uncertain_params {
            Some(u) => u.clone(),
            None if estimating => vec![published.name.to_string()],
            None => vec![],
        };
        let mut params = BTreeMap::new();
        for name in d.env.system.param_names() {
            params.insert(name.to_string(), d.env.system.param(name).expect("listed parameter"));
        }
        if estimating && self.env.uncertain_params.is_none() {
            params.insert(published.name.to_string(), published.truth);
        }
        for (name, v) in &self.env.params {
            if d.env.system.param(name).is_err() {
                return Err(HarnessError::config(format!("env.params.{name}"), format!("unknown parameter for {}", self.system)));
            }
            params.insert(name.clone(), *v);
        }
        r.env = EnvOverrides {
            dt: Some(self.env.dt.unwrap_or(d.env.dt)),
            control_box: Some(self.env.control_box.clone().unwrap_or(d.env.control_box.clone())),
            uncertain_params: Some(uncertain.clone()),
            params,
        };
        r.cost = Some(self.cost.clone().unwrap_or(d.cost.clone()));

        let (pub_mean, pub_var) = defaults::published_initial_state(&self.system, self.mode).expect("known system");
        let x0 = self.initial_state.clone().unwrap_or_else(|| match self.mode {
            Mode::ControlNoise => d.initial_state.clone(),
            _ => pub_mean.clone(),
        });
        if x0.len() != nx {
            return Err(HarnessError::config("initial_state", format!("needs {nx} entries, got {}", x0.len())));
        }
        r.initial_state = Some(x0.clone());

        let needs_prior = kind != EstimatorKind::Exact || self.mode != Mode::ControlNoise;
        if needs_prior {
            let prior = self.prior.clone().unwrap_or_else(|| {
                let (param_mean, param_var) = uncertain
                    .iter()
                    .map(|n| if n == published.name { (published.prior_mean, published.prior_var) } else { (r.env.params[n], 0.0) })
                    .unzip();
                GaussianPrior { state_mean: x0.clone(), state_var: pub_var.clone(), param_mean, param_var }
            });
            if prior.state_mean.len() != nx || prior.param_mean.len() != uncertain.len() {
                return Err(HarnessError::config(
                    "prior",
                    format!("must cover {nx} states and {} uncertain parameters", uncertain.len()),
                ));
            }
            prior.validate().map_err(|e| HarnessError::config("prior", e))?;
            r.prior = Some(prior);
        } else {
            r.prior = None;
        }

        if kind != EstimatorKind::Exact {
            let noise = defaults::published_noise(&self.system).expect("known system");
            let filter = self.filter.clone().unwrap_or_else(|| {
                let np = uncertain.len();
                let (process, measurement) = if np > 0 && kind == EstimatorKind::Filter {
                    (defaults::fit_diagonal(noise.process_estimating, nx + np), noise.measurement_estimating)
                } else {
                    (defaults::fit_diagonal(noise.process_state_only, nx + np), noise.measurement)
                };
                FilterConfig {
                    particle_count: 1000,
                    process_noise: process,
                    measurement_noise: measurement.to_vec(),
                    resample_threshold: 0.5,
                    reflect_params: false,
                }
            });
            filter.validate(nx, uncertain.len()).map_err(|e| HarnessError::config("filter", e))?;
            r.filter = Some(filter);
        } else {
            r.filter = None;
        }

        let mut env = r.truth_env(0.0)?;
        env.control_noise_std = vec![0.0; nu];
        env.validate().map_err(|e| HarnessError::config("env", e))?;
        r.cost().validate(nx, nu).map_err(|e| HarnessError::config("cost", e))?;
        self.mpc.validate(nu).map_err(|e| HarnessError::config("mpc", e))?;
        if r.mpc.search.tail_is_thin() {
            log::warn!(
                "n_uncertainty·(1−γ) = {:.2} < 5: the CVaR estimate will be noisy",
                r.mpc.search.n_uncertainty as f64 * (1.0 - r.mpc.search.level.gamma())
            );
        }
        Ok(r)
    }

    fn cost(&self) -> &QuadraticCost {
        self.cost.as_ref().expect("resolved config")
    }

    /// The true system for one noise level. Call on a resolved config.
    pub fn truth_env(&self, level: f64) -> Result<EnvSpec, HarnessError> {
        let d = self.defaults()?;
        let mut system = d.env.system;
        for (name, v) in &self.env.params {
            system.set_param(name, *v).map_err(|e| HarnessError::config(format!("env.params.{name}"), e))?;
        }
        let scale = self.noise_scale.clone().unwrap_or_else(|| vec![1.0; d.env.control_dim()]);
        Ok(EnvSpec {
            system,
            dt: self.env.dt.unwrap_or(d.env.dt),
            control_box: self.env.control_box.clone().unwrap_or(d.env.control_box),
            control_noise_std: scale.iter().map(|s| s * level).collect(),
            uncertain_params: self.env.uncertain_params.clone().unwrap_or_default(),
        })
    }

    /// The estimator for a resolved config.
    pub fn estimator(&self) -> Estimator {
        match self.estimator_kind() {
            EstimatorKind::Exact => Estimator::Exact,
            EstimatorKind::Filter => Estimator::Filter {
                config: self.filter.clone().expect("resolved config"),
                prior: self.prior.clone().expect("resolved config"),
            },
            EstimatorKind::FilterPriorParams => Estimator::FilterPriorParams {
                config: self.filter.clone().expect("resolved config"),
                prior: self.prior.clone().expect("resolved config"),
            },
        }
    }

    /// True initial state of an episode: fixed under control noise, drawn
    /// from the prior otherwise.
    pub fn episode_start(&self, seeds: SeedPath) -> Vec<f64> {
        let x0 = self.initial_state.clone().expect("resolved config");
        match (&self.prior, self.mode) {
            (Some(prior), Mode::InitialState | Mode::ParameterEstimation) => {
                let mut rng = seeds.rng();
                prior
                    .state_mean
                    .iter()
                    .zip(&prior.state_var)
                    .map(|(m, v)| Normal::new(*m, v.sqrt()).map_or(*m, |n| n.sample(&mut rng)))
                    .collect()
            }
            _ => x0,
        }
    }
}

fn toml_field(e: &toml::de::Error) -> String {
    let msg = e.message();
    // serde reports `missing field `x`` and `unknown field `x`` in the message.
    for marker in ["missing field `", "unknown field `", "unknown variant `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    "<toml>".to_string()
}

/// Seed path of one episode.
pub fn episode_seeds(root: u64, cell: usize, episode: usize) -> SeedPath {
    SeedPath::root(root).key(&[cell as u64, episode as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub episode: usize,
    pub seed: u64,
    pub total_cost: f64,
    pub final_state: Vec<f64>,
    pub final_belief_mean: Vec<f64>,
    pub final_belief_sigma3: Vec<f64>,
    /// Largest `|x_i|` over the episode for every state component.
    pub peak_abs_state: Vec<f64>,
}

impl EpisodeOutcome {
    fn from_record(episode: usize, seed: SeedPath, rec: &EpisodeRecord) -> Self {
        let nx = rec.final_state().len();
        let peak_abs_state = (0..nx).map(|i| rec.states.iter().map(|x| x[i].abs()).fold(0.0, f64::max)).collect();
        EpisodeOutcome {
            episode,
            seed: seed.value(),
            total_cost: rec.total_cost,
            final_state: rec.final_state().to_vec(),
            final_belief_mean: rec.belief_mean.last().cloned().unwrap_or_default(),
            final_belief_sigma3: rec.belief_sigma3.last().cloned().unwrap_or_default(),
            peak_abs_state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub noise_level: f64,
    pub episodes: usize,
    pub gamma: f64,
    pub summary: RiskSummary,
    pub wall_clock_secs: f64,
    pub outcomes: Vec<EpisodeOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub system: String,
    pub output_dir: PathBuf,
    pub cells: Vec<CellSummary>,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEpisode {
    episode: usize,
    /// `[root, cell, episode]`.
    seed_path: [u64; 3],
    seed: u64,
    status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestCell {
    cell: usize,
    noise_level: f64,
    dir: String,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    episodes: Vec<ManifestEpisode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    root_seed: u64,
    cells: Vec<ManifestCell>,
}

/// `output_dir`, under `$RS3_OUTPUT_ROOT` when that is set and the path is
/// relative.
pub fn output_path(config: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if config.output_dir.is_relative() => PathBuf::from(root).join(&config.output_dir),
        _ => config.output_dir.clone(),
    }
}

/// Run a campaign from a config file.
pub fn run_campaign_file(path: &Path) -> Result<CampaignSummary, HarnessError> {
    run_campaign(&ExperimentConfig::load(path)?)
}

/// Run every cell and persist the artifacts. Cells that fail are marked in
/// the manifest; the call then returns a runtime error after the remaining
/// cells have completed.
pub fn run_campaign(config: &ExperimentConfig) -> Result<CampaignSummary, HarnessError> {
    let resolved = config.resolve()?;
    let out = output_path(&resolved);
    io::write_json(&out.join("config.resolved.json"), &resolved)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolved.workers)
        .build()
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;

    let started = Instant::now();
    let mut manifest = Manifest { root_seed: resolved.seed, cells: vec![] };
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for (cell, &level) in resolved.noise_levels.iter().enumerate() {
        let dir_name = format!("cell_{cell}");
        let dir = out.join(&dir_name);
        let (result, episodes) = pool.install(|| run_cell(&resolved, cell, level, &dir));
        let (status, error) = match &result {
            Ok(_) => ("ok".to_string(), None),
            Err(e) => ("failed".to_string(), Some(e.to_string())),
        };
        manifest.cells.push(ManifestCell { cell, noise_level: level, dir: dir_name, status, error, episodes });
        io::write_json(&out.join("manifest.json"), &manifest)?;
        match result {
            Ok(summary) => cells.push(summary),
            Err(e) => {
                log::error!("cell {cell} failed: {e}");
                failures.push(format!("cell {cell}: {e}"));
            }
        }
    }
    let summary = CampaignSummary {
        system: resolved.system.clone(),
        output_dir: out.clone(),
        cells,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    io::write_json(&out.join("summary.json"), &summary)?;
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(HarnessError::Runtime(failures.join("; ")))
    }
}

fn run_cell(
    config: &ExperimentConfig,
    cell: usize,
    level: f64,
    dir: &Path,
) -> (Result<CellSummary, HarnessError>, Vec<ManifestEpisode>) {
    let started = Instant::now();
    let truth = match config.truth_env(level) {
        Ok(t) => t,
        Err(e) => return (Err(e), vec![]),
    };
    let cost = config.cost().clone();
    let estimator = config.estimator();
    let nu = truth.control_dim();
    let params = truth.uncertain_params.clone();

    let results: Vec<(SeedPath, Result<EpisodeRecord, mpc::EpisodeFailure>)> = (0..config.episodes)
        .into_par_iter()
        .map(|e| {
            let seeds = episode_seeds(config.seed, cell, e);
            let x0 = config.episode_start(seeds.child(0));
            (seeds, mpc::run_episode(&truth, &cost, &x0, &config.mpc, &estimator, seeds.child(1)))
        })
        .collect();

    let mut ledger = Vec::with_capacity(results.len());
    let mut outcomes = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for (e, (seeds, result)) in results.iter().enumerate() {
        let path = dir.join("episodes").join(format!("episode_{e:04}.csv"));
        let (record, status) = match result {
            Ok(rec) => (rec, "ok".to_string()),
            Err(f) => {
                errors.push(format!("episode {e}: {f}"));
                (f.partial.as_ref(), format!("failed: {f}"))
            }
        };
        ledger.push(ManifestEpisode { episode: e, seed_path: [config.seed, cell as u64, e as u64], seed: seeds.value(), status });
        if let Err(err) = io::write_file(&path, &io::format_trajectory(record, nu, &params)) {
            return (Err(err), ledger);
        }
        if result.is_ok() {
            outcomes.push(EpisodeOutcome::from_record(e, *seeds, record));
        }
    }
    if !errors.is_empty() {
        return (Err(HarnessError::Runtime(errors.join("; "))), ledger);
    }

    let totals: Vec<f64> = outcomes.iter().map(|o| o.total_cost).collect();
    let finish = || -> Result<CellSummary, HarnessError> {
        io::write_file(&dir.join("costs.csv"), &io::format_costs(&totals))?;
        let level_gamma = config.mpc.search.level;
        let summary = risk::risk_summary(&totals, level_gamma).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        let cell_summary = CellSummary {
            cell,
            noise_level: level,
            episodes: totals.len(),
            gamma: level_gamma.gamma(),
            summary,
            wall_clock_secs: started.elapsed().as_secs_f64(),
            outcomes,
        };
        io::write_json(&dir.join("summary.json"), &cell_summary)?;
        Ok(cell_summary)
    };
    (finish(), ledger)
}

/// Defaults and published constants for a system, as pretty JSON.
pub fn describe(system: &str) -> Result<String, HarnessError> {
    let d = default_specs(system).map_err(|e| HarnessError::config("system", e))?;
    let noise = defaults::published_noise(system).expect("known system");
    let param = defaults::published_param(system).expect("known system");
    let (x_mean, x_var) = defaults::published_initial_state(system, Mode::InitialState).expect("known system");
    let value = serde_json::json!({
        "system": system,
        "env": d.env,
        "cost": d.cost,
        "initial_state": d.initial_state,
        "parameters": d.env.system.param_names().iter()
            .map(|n| (n.to_string(), d.env.system.param(n).expect("listed parameter")))
            .collect::<BTreeMap<_, _>>(),
        "initial_state_distribution": { "mean": x_mean, "var": x_var },
        "estimated_parameter": param,
        "filter_noise": noise,
    });
    serde_json::to_string_pretty(&value).map_err(|e| HarnessError::Runtime(e.to_string()))
}
