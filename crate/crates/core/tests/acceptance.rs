//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a criterion fails that is not listed as a known gap.
//!
//! The closed-loop campaigns take several minutes. Set
//! `RS3_ACCEPTANCE_QUICK=1` to skip them.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use rs3::belief::{self, FilterConfig, GaussianPrior};
use rs3::dynamics::{wrap_angle, Model};
use rs3::harness::io::TrajectoryTable;
use rs3::harness::{self, CampaignSummary, ExperimentConfig};
use rs3::risk::{self, CostSamples, RiskLevel};
use rs3::sampling::{self, ControlBox, ControlSeq, NaturalParams, PolicyDraw};
use rs3::search;
use rs3::seeds::SeedPath;
use rs3::shaping::ShapeSpec;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

struct Criterion {
    name: &'static str,
    campaign: bool,
    /// Reason a failure is expected; see the README's known gaps.
    known_gap: Option<&'static str>,
    run: fn() -> Verdict,
}

fn main() -> ExitCode {
    let quick = std::env::var_os("RS3_ACCEPTANCE_QUICK").is_some();
    let criteria = [
        Criterion { name: "estimator oracle equivalence", campaign: false, known_gap: None, run: oracle_equivalence },
        Criterion { name: "coherency", campaign: false, known_gap: None, run: coherency },
        Criterion { name: "gradient fidelity", campaign: false, known_gap: None, run: gradient_fidelity },
        Criterion { name: "MPPI reduction", campaign: false, known_gap: None, run: mppi_reduction },
        Criterion {
            name: "Kalman oracle",
            campaign: false,
            known_gap: Some("resampling inflates the particle-filter error beyond the iid standard error"),
            run: kalman_oracle,
        },
        Criterion { name: "pendulum swing-up under control noise", campaign: true, known_gap: None, run: pendulum },
        Criterion { name: "cartpole swing-up under control noise", campaign: true, known_gap: None, run: cartpole },
        Criterion { name: "pendulum mass estimation", campaign: true, known_gap: None, run: mass_estimation },
        Criterion { name: "quadcopter drag estimation", campaign: true, known_gap: None, run: quadcopter },
        Criterion { name: "determinism across worker counts", campaign: true, known_gap: None, run: determinism },
    ];

    let mut unexpected = 0;
    for c in &criteria {
        if quick && c.campaign {
            println!("SKIP {}: RS3_ACCEPTANCE_QUICK is set", c.name);
            continue;
        }
        let start = Instant::now();
        let v = (c.run)();
        let secs = start.elapsed().as_secs_f64();
        let status = if v.pass { "PASS" } else { "FAIL" };
        let note = match (v.pass, c.known_gap) {
            (false, Some(gap)) => format!(" [known gap: {gap}]"),
            _ => String::new(),
        };
        println!("{status} {}: {} ({secs:.1}s){note}", c.name, v.detail);
        if !v.pass && c.known_gap.is_none() {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        println!("{unexpected} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Average of the `(1−γ)M` largest values; valid when `γM` is an integer.
fn tail_mean(costs: &[f64], gamma: f64) -> f64 {
    let mut sorted = costs.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = ((1.0 - gamma) * costs.len() as f64).round() as usize;
    sorted[..k].iter().sum::<f64>() / k as f64
}

fn random_costs(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    match rng.random_range(0..4) {
        0 => (0..m).map(|_| rng.sample::<f64, _>(StandardNormal) * 50.0 + 100.0).collect(),
        1 => {
            let e = Exp::new(0.01).unwrap();
            (0..m).map(|_| rng.sample(e)).collect()
        }
        // Heavy ties.
        2 => (0..m).map(|_| f64::from(rng.random_range(0..5))).collect(),
        _ => (0..m).map(|_| rng.random_range(-1e3..1e3)).collect(),
    }
}

/// A size in `[4, 500]` with `γ·size` an integer.
fn compatible_size(rng: &mut ChaCha8Rng, gamma: f64) -> usize {
    let step = match gamma {
        0.5 => 2,
        0.75 => 4,
        0.9 => 10,
        _ => 20,
    };
    let lo = 4usize.div_ceil(step);
    step * rng.random_range(lo..=500 / step)
}

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gammas = [0.5, 0.75, 0.9, 0.95];
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let gamma = gammas[i % 4];
        let m = compatible_size(&mut rng, gamma);
        let costs = random_costs(&mut rng, m);
        let level = RiskLevel::new(gamma).unwrap();
        let cvar = risk::empirical_cvar(&costs, level).unwrap();
        let oracle = risk::cvar_oracle_min_form(&costs, level).unwrap();
        worst = worst.max(rel_diff(cvar, oracle)).max(rel_diff(cvar, tail_mean(&costs, gamma)));
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict::new(worst <= 1e-9 && secs < 5.0, format!("1000 vectors, worst relative gap {worst:.2e}, {secs:.2}s < 5s"))
}

fn coherency() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gammas = [0.5, 0.75, 0.9, 0.95];
    let (mut translation, mut homogeneity): (f64, f64) = (0.0, 0.0);
    let (mut monotone_violations, mut subadditive_violations) = (0, 0);
    for i in 0..10_000 {
        let gamma = gammas[i % 4];
        let level = RiskLevel::new(gamma).unwrap();
        let m = compatible_size(&mut rng, gamma).min(60);
        let x = random_costs(&mut rng, m);
        let y = random_costs(&mut rng, m);
        let cx = risk::empirical_cvar(&x, level).unwrap();

        let c: f64 = rng.random_range(-100.0..100.0);
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let scale = (cx.abs() + c.abs()).max(1.0);
        translation = translation.max((risk::empirical_cvar(&shifted, level).unwrap() - (cx + c)).abs() / scale);

        let lambda: f64 = rng.random_range(0.01..10.0);
        let scaled: Vec<f64> = x.iter().map(|v| v * lambda).collect();
        let scale = (lambda * cx).abs().max(1.0);
        homogeneity = homogeneity.max((risk::empirical_cvar(&scaled, level).unwrap() - lambda * cx).abs() / scale);

        let ox = risk::cvar_oracle_min_form(&x, level).unwrap();
        let dominated: Vec<f64> = x.iter().map(|v| v + rng.random_range(0.0..10.0)).collect();
        let tol = 1e-9 * ox.abs().max(1.0);
        if risk::cvar_oracle_min_form(&dominated, level).unwrap() < ox - tol {
            monotone_violations += 1;
        }
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let oy = risk::cvar_oracle_min_form(&y, level).unwrap();
        let tol = 1e-9 * (ox.abs() + oy.abs()).max(1.0);
        if risk::cvar_oracle_min_form(&sum, level).unwrap() > ox + oy + tol {
            subadditive_violations += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = translation <= 1e-12
        && homogeneity <= 1e-12
        && monotone_violations == 0
        && subadditive_violations == 0
        && secs < 10.0;
    Verdict::new(
        pass,
        format!(
            "10000 pairs, translation {translation:.1e}, homogeneity {homogeneity:.1e}, \
             monotonicity violations {monotone_violations}, sub-additivity violations {subadditive_violations}, {secs:.2}s < 10s"
        ),
    )
}

/// `ln((1/N) Σ exp(−κ J(μ + σ z_i)))` with `J(η) = (η − c)²`.
fn smoothed_objective(mu: f64, sigma: f64, z: &[f64], kappa: f64, c: f64) -> f64 {
    let v: Vec<f64> = z.iter().map(|zi| -kappa * (mu + sigma * zi - c).powi(2)).collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + (v.iter().map(|x| (x - max).exp()).sum::<f64>() / z.len() as f64).ln()
}

fn gradient_fidelity() -> Verdict {
    let start = Instant::now();
    let (mu, sigma, kappa, c, n) = (0.0, 1.0, 1.0, 2.0, 100_000);
    let params = NaturalParams::new(ControlSeq::filled(1, 1, mu), vec![sigma]).unwrap();
    let bounds = ControlBox::symmetric(1, 50.0);
    let draws = sampling::sample_policies(&params, &bounds, n, SeedPath::root(3)).unwrap();
    let costs: Vec<Vec<f64>> = draws.iter().map(|d| vec![(d.controls.get(0, 0) - c).powi(2)]).collect();
    let matrix = CostSamples::from_rows(&costs).unwrap();
    let cvars = search::evaluate_policy_cvars(&matrix, RiskLevel::new(0.9).unwrap()).unwrap();
    let shape = ShapeSpec::Exponential { kappa };
    let grad = search::estimate_gradient(&params, &draws, &cvars, &shape).unwrap().get(0, 0);

    // The estimator is the gradient in the natural parameter μ/σ², which is
    // σ² times the gradient in μ. Common random numbers: the same z for both
    // sides of the difference.
    let z: Vec<f64> = draws.iter().map(|d| (d.controls.get(0, 0) - mu) / sigma).collect();
    let h = 1e-4;
    let fd = sigma * sigma
        * (smoothed_objective(mu + h, sigma, &z, kappa, c) - smoothed_objective(mu - h, sigma, &z, kappa, c))
        / (2.0 * h);
    let analytic = sigma * sigma * (-2.0 * kappa * (mu - c) / (1.0 + 2.0 * kappa * sigma * sigma));
    let rel = rel_diff(grad, fd);
    let secs = start.elapsed().as_secs_f64();
    Verdict::new(
        rel <= 0.05 && secs < 30.0,
        format!(
            "N=1e5, Monte Carlo {grad:.5}, finite difference {fd:.5}, relative gap {:.2}% <= 5% (closed form {analytic:.5}), {secs:.2}s < 30s",
            100.0 * rel
        ),
    )
}

fn mppi_reduction() -> Verdict {
    let (horizon, dim, n, kappa) = (10, 2, 64, 0.7);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let means: Vec<Vec<f64>> = (0..horizon).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let params = NaturalParams::new(ControlSeq::from_rows(&means).unwrap(), vec![0.5, 1.5]).unwrap();
    let bounds = ControlBox::symmetric(dim, 3.0);
    let draws: Vec<PolicyDraw> = sampling::sample_policies(&params, &bounds, n, SeedPath::root(4)).unwrap();
    let costs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
    let matrix = CostSamples::new(n, 1, costs.clone()).unwrap();
    let cvars = search::evaluate_policy_cvars(&matrix, RiskLevel::new(0.9).unwrap()).unwrap();
    let shape = ShapeSpec::Exponential { kappa };

    let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = costs.iter().map(|j| (-kappa * (j - best)).exp()).collect();
    let total: f64 = raw.iter().sum();
    let mut worst: f64 = 0.0;
    for alpha in [1.0, 0.3] {
        let next = search::gradient_step(&params, &draws, &cvars, &shape, alpha).unwrap();
        for t in 0..horizon {
            for j in 0..dim {
                let softmax_mean: f64 = draws.iter().zip(&raw).map(|(d, w)| w / total * d.controls.get(t, j)).sum();
                let mu = params.means.get(t, j);
                let expected = mu + alpha * (softmax_mean - mu);
                worst = worst.max((next.means.get(t, j) - expected).abs());
            }
        }
    }
    Verdict::new(worst <= 1e-12, format!("M=1, largest deviation from the softmax-weighted mean {worst:.1e} <= 1e-12"))
}

struct Linear {
    a: f64,
}

impl Model for Linear {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        0
    }
    fn transition(&self, x: &[f64], u: &[f64], _: &[f64], next: &mut [f64]) {
        next[0] = self.a * x[0] + u[0];
    }
}

fn kalman_oracle() -> Verdict {
    let start = Instant::now();
    let (a, q, r, n, steps) = (0.9, 0.5, 1.0, 10_000, 200);
    let model = Linear { a };
    let config = FilterConfig {
        particle_count: n,
        process_noise: vec![q],
        measurement_noise: vec![r],
        resample_threshold: 0.5,
        reflect_params: false,
    };
    let prior = GaussianPrior { state_mean: vec![0.0], state_var: vec![1.0], param_mean: vec![], param_var: vec![] };
    let (mut outside, mut worst, mut sum_sq, mut count) = (0, 0.0f64, 0.0, 0.0);
    for seed in 0..20 {
        let root = SeedPath::root(seed);
        let mut world = root.child(0).rng();
        let mut filter_rng = root.child(1).rng();
        let mut set = belief::init(&prior, &config, &mut filter_rng).unwrap();
        let mut x: f64 = world.sample(StandardNormal);
        let (mut m, mut p) = (0.0, 1.0);
        for t in 1..=steps {
            let u = (0.1 * t as f64).sin();
            x = a * x + u + q.sqrt() * world.sample::<f64, _>(StandardNormal);
            let z = x + r.sqrt() * world.sample::<f64, _>(StandardNormal);

            m = a * m + u;
            p = a * a * p + q;
            let gain = p / (p + r);
            m += gain * (z - m);
            p *= 1.0 - gain;

            set.predict(&[u], &model, &config, &mut filter_rng).unwrap();
            set.update(&[z], &model, &config, &mut filter_rng).unwrap();
            let estimate = set.summary(&model).mean[0];
            let score = (estimate - m).abs() / (p / n as f64).sqrt();
            worst = worst.max(score);
            sum_sq += score * score;
            count += 1.0;
            outside += usize::from(score > 3.0);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict::new(
        outside == 0 && secs < 60.0,
        format!(
            "{outside} of {count} steps beyond 3 standard errors; worst {worst:.1}, rms {:.2} standard errors; {secs:.1}s < 60s",
            (sum_sq / count).sqrt()
        ),
    )
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// Load a shipped config and run it into a scratch directory.
fn run_shipped(name: &str, edit: impl FnOnce(&mut ExperimentConfig)) -> (CampaignSummary, tempfile::TempDir) {
    let mut config = ExperimentConfig::load(&config_path(name)).expect("shipped config");
    let dir = tempfile::tempdir().unwrap();
    config.output_dir = dir.path().to_path_buf();
    edit(&mut config);
    let summary = harness::run_campaign(&config).expect("campaign runs");
    (summary, dir)
}

fn ordered(s: &rs3::risk::RiskSummary) -> bool {
    s.cvar_hat >= s.var_hat && s.var_hat >= s.mean
}

fn pendulum() -> Verdict {
    let start = Instant::now();
    let (summary, _dir) = run_shipped("pendulum_control_noise.toml", |_| {});
    let cell = &summary.cells[0];
    let up = cell.outcomes.iter().filter(|o| wrap_angle(o.final_state[0]).abs() < 0.2).count();
    let n = cell.outcomes.len();
    let s = &cell.summary;
    let secs = start.elapsed().as_secs_f64();
    let pass = n == 100 && up * 10 >= n * 9 && ordered(s) && s.mean <= 220.0 && secs < 900.0;
    Verdict::new(
        pass,
        format!(
            "{up}/{n} final |θ| < 0.2 (need 90%); mean {:.1} <= 220, VaR {:.1}, CVaR {:.1} ordered",
            s.mean, s.var_hat, s.cvar_hat
        ),
    )
}

/// Best mean total cost observed at σ = 1 over the tuning sweeps.
const CARTPOLE_BEST_MEAN: f64 = 470.8;

/// Mean total cost with zero commanded control under the same noise.
fn cartpole_no_control(config: &ExperimentConfig, episodes: usize) -> f64 {
    let r = config.resolve().unwrap();
    let env = r.truth_env(1.0).unwrap();
    let cost = r.cost.clone().unwrap();
    let x0 = r.initial_state.clone().unwrap();
    let (nx, nu) = (env.state_dim(), env.control_dim());
    let phi = env.nominal_params();
    let zero = vec![0.0; nu];
    let mut total = 0.0;
    for e in 0..episodes {
        let mut rng = SeedPath::root(5).child(e as u64).rng();
        let mut x = x0.clone();
        let (mut next, mut applied) = (vec![0.0; nx], vec![0.0; nu]);
        for _ in 0..r.mpc.episode_length {
            let noise: Vec<f64> = (0..nu).map(|_| rng.sample(StandardNormal)).collect();
            env.step(&x, &zero, &phi, &noise, &mut next, &mut applied);
            total += cost.stage(&x, &applied);
            x.copy_from_slice(&next);
        }
        total += cost.terminal(&x);
    }
    total / episodes as f64
}

fn cartpole() -> Verdict {
    let start = Instant::now();
    let (summary, _dir) = run_shipped("cartpole_control_noise.toml", |c| c.noise_levels = vec![1.0]);
    let cell = &summary.cells[0];
    let n = cell.outcomes.len();
    let up = cell.outcomes.iter().filter(|o| wrap_angle(o.final_state[2]).abs() < 0.25).count();
    let config = ExperimentConfig::load(&config_path("cartpole_control_noise.toml")).unwrap();
    let baseline = cartpole_no_control(&config, n);
    let mean = cell.summary.mean;
    let secs = start.elapsed().as_secs_f64();
    let pass = n == 50 && up * 10 >= n * 8 && mean <= 1.5 * CARTPOLE_BEST_MEAN && baseline >= 3.0 * mean && secs < 1800.0;
    Verdict::new(
        pass,
        format!(
            "{up}/{n} upright |θ| < 0.25 (need 80%); mean {mean:.1} <= 1.5 x {CARTPOLE_BEST_MEAN}; no-control mean {baseline:.0} = {:.1}x",
            baseline / mean
        ),
    )
}

/// Peak wrapped `|θ|` over the 20 steps after the pendulum first comes
/// within 0.3 rad of upright; `π` when it never does.
fn arrival_overshoot(path: &Path) -> f64 {
    let table = TrajectoryTable::read(path).unwrap();
    let theta: Vec<f64> = table.column("x0").unwrap().into_iter().map(|t| wrap_angle(t).abs()).collect();
    match theta.iter().position(|&t| t < 0.3) {
        Some(i) => theta[i..(i + 20).min(theta.len())].iter().copied().fold(0.0, f64::max),
        None => PI,
    }
}

fn mean_overshoot(dir: &Path, episodes: usize) -> f64 {
    let total: f64 =
        (0..episodes).map(|e| arrival_overshoot(&dir.join(format!("cell_0/episodes/episode_{e:04}.csv")))).sum();
    total / episodes as f64
}

fn mass_estimation() -> Verdict {
    let start = Instant::now();
    let (est, est_dir) = run_shipped("pendulum_mass_estimation.toml", |_| {});
    let (_, abl_dir) = run_shipped("pendulum_mass_ablation.toml", |_| {});
    let outcomes = &est.cells[0].outcomes;
    let n = outcomes.len();
    let close = outcomes.iter().filter(|o| (o.final_belief_mean[2] - 2.0).abs() <= 0.3).count();
    let est_peak = mean_overshoot(est_dir.path(), n);
    let abl_peak = mean_overshoot(abl_dir.path(), n);
    let secs = start.elapsed().as_secs_f64();
    let pass = n == 20 && close * 10 >= n * 8 && abl_peak > est_peak && secs < 900.0;
    Verdict::new(
        pass,
        format!(
            "{close}/{n} mass within 2.0 ± 0.3 (need 80%); peak |θ| after arrival: ablation {abl_peak:.2} > estimating {est_peak:.2}"
        ),
    )
}

fn quadcopter() -> Verdict {
    let (summary, _dir) = run_shipped("quadcopter_drag_estimation.toml", |_| {});
    let outcomes = &summary.cells[0].outcomes;
    let n = outcomes.len();
    let distance = |x: &[f64]| x[..3].iter().map(|v| (v - 2.0).powi(2)).sum::<f64>().sqrt();
    let reached = outcomes.iter().filter(|o| distance(&o.final_state) < 0.3).count();
    let drag_ok = outcomes.iter().filter(|o| (o.final_belief_mean[12] - 0.1).abs() <= 0.1).count();
    let both = outcomes
        .iter()
        .filter(|o| distance(&o.final_state) < 0.3 && (o.final_belief_mean[12] - 0.1).abs() <= 0.1)
        .count();
    let mean_drag = outcomes.iter().map(|o| o.final_belief_mean[12]).sum::<f64>() / n as f64;
    let pass = n == 10 && both * 10 >= n * 7;
    Verdict::new(
        pass,
        format!(
            "{both}/{n} both within 0.3 of (2,2,2) and drag within 0.1 ± 0.1 (need 70%); \
             position {reached}/{n}, drag {drag_ok}/{n}, mean drag {mean_drag:.3}"
        ),
    )
}

fn determinism() -> Verdict {
    type Trim = fn(&mut ExperimentConfig);
    let campaigns: [(&str, Trim); 2] = [
        ("pendulum_control_noise.toml", |c| {
            c.noise_levels = vec![0.5, 1.0];
            c.episodes = 4;
            c.mpc.episode_length = 30;
        }),
        ("pendulum_mass_estimation.toml", |c| {
            c.episodes = 3;
            c.mpc.episode_length = 30;
        }),
    ];
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (name, edit) in campaigns {
        let mut files: Vec<Vec<Vec<u8>>> = Vec::new();
        for workers in [1, 2, 4] {
            let (summary, dir) = run_shipped(name, |c| {
                edit(c);
                c.workers = workers;
            });
            files.push(
                (0..summary.cells.len())
                    .map(|i| std::fs::read(dir.path().join(format!("cell_{i}/costs.csv"))).unwrap())
                    .collect(),
            );
        }
        for (workers, f) in [2, 4].iter().zip(&files[1..]) {
            compared += f.len();
            if f != &files[0] {
                mismatches.push(format!("{name} with {workers} workers"));
            }
        }
    }
    Verdict::new(
        mismatches.is_empty(),
        format!("{compared} cost files under 2 and 4 workers byte-identical to 1 worker; mismatches {mismatches:?}"),
    )
}
