//! Experiment orchestration: episodes, Bayesian-regret Monte Carlo, exponent
//! fitting, the adversarial arm coupling, and CSV/SVG/manifest export.
//!
//! Replications run in parallel; each derives its generator stream from
//! `(master seed, horizon, replication index)`, and aggregation is an ordered
//! reduction by replication index, so outputs are byte-identical across runs
//! and thread counts.

use crate::agent::{
    baseline_init, baseline_select, baseline_update, AgentError, BaselineKind, BaselineState,
    ParticleEnsemble,
};
use crate::bounds::{exponents, BoundsError};
use crate::funclass::{
    bump_instance, sample_prior_function, verify_membership, BumpInstance, FunClassError,
    FunctionClassSpec, GridFunction, PriorSpec,
};
use crate::noise::NoiseModel;
use crate::rngutil;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("exponent fit failed: {0}")]
    Fit(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    FunClass(#[from] FunClassError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

/// Which policy an experiment runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AgentConfig {
    ThompsonParticle {
        particles: usize,
        /// Working-likelihood variance; defaults to the noise model's σ².
        likelihood_sigma2: Option<f64>,
    },
    FixedGridUcb {
        arms: usize,
    },
    Zooming,
    UniformRandom,
    /// Plays the argmax of the mean reward; diagnostic only.
    Oracle,
}

impl AgentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AgentConfig::ThompsonParticle { .. } => "thompson-particle",
            AgentConfig::FixedGridUcb { .. } => "fixed-grid-ucb",
            AgentConfig::Zooming => "zooming",
            AgentConfig::UniformRandom => "uniform-random",
            AgentConfig::Oracle => "oracle",
        }
    }
}

/// One experiment: class, prior, noise, policy, horizons, replication count.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spec: FunctionClassSpec,
    pub prior: PriorSpec,
    pub noise: NoiseModel,
    pub agent: AgentConfig,
    pub horizon: u64,
    pub replications: u32,
    pub seed: u64,
    pub t_grid: Vec<u64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.replications < 1 {
            return Err(HarnessError::Config("replications must be >= 1".into()));
        }
        if !self.t_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(HarnessError::Config("t_grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Per-round record of an episode.
#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    pub t: u64,
    pub action: f64,
    pub reward: f64,
    pub instant_regret: f64,
    /// Ensemble-relative posterior width at the played action (0 for
    /// non-ensemble agents).
    pub width: f64,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub trace: Vec<TraceRow>,
    pub cumulative_regret: f64,
}

impl RunResult {
    /// CSV `t,action,reward,instant_regret,width`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,action,reward,instant_regret,width\n");
        for r in &self.trace {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.t, r.action, r.reward, r.instant_regret, r.width
            );
        }
        out
    }
}

/// Per-horizon replication means of the cumulative regret.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretCurve {
    pub horizons: Vec<u64>,
    pub mean_regret: Vec<f64>,
    pub stderr: Vec<f64>,
    pub replications: u32,
}

impl RegretCurve {
    /// CSV `T,mean,stderr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,mean,stderr\n");
        for i in 0..self.horizons.len() {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e}",
                self.horizons[i], self.mean_regret[i], self.stderr[i]
            );
        }
        out
    }
}

/// The environment an agent interacts with.
enum Environment<'a> {
    /// Additive noise on a fixed reward function.
    Additive {
        f0: &'a GridFunction,
        noise: &'a NoiseModel,
    },
    /// The Appendix-C Bernoulli coupling.
    Coupled(&'a AdversarialCoupling),
}

impl Environment<'_> {
    fn mean_reward(&self, x: f64) -> f64 {
        match self {
            Environment::Additive { f0, .. } => f0.eval(x),
            Environment::Coupled(c) => c.instance.nu.eval(x),
        }
    }

    // Regret is measured against the grid maximum: the grid is the action
    // space agents actually see.
    fn best_mean(&self) -> f64 {
        match self {
            Environment::Additive { f0, .. } => f0.max_value(),
            Environment::Coupled(c) => c.instance.nu.max_value(),
        }
    }

    fn best_action(&self) -> f64 {
        match self {
            Environment::Additive { f0, .. } => f0.spec().grid_x(f0.grid_argmax()),
            Environment::Coupled(c) => {
                let nu = &c.instance.nu;
                nu.spec().grid_x(nu.grid_argmax())
            }
        }
    }

    fn reward(&self, x: f64, rng: &mut ChaCha12Rng) -> f64 {
        match self {
            Environment::Additive { f0, noise } => f0.eval(x) + noise.sample(rng),
            Environment::Coupled(c) => adversarial_coupled_reward(c, x, rng),
        }
    }
}

enum AgentInstance {
    Thompson(ParticleEnsemble),
    Baseline(BaselineState),
    Oracle { action: f64 },
}

impl AgentInstance {
    fn build(
        cfg: &AgentConfig,
        spec: &FunctionClassSpec,
        prior: &PriorSpec,
        noise: &NoiseModel,
        horizon: u64,
        env: &Environment<'_>,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        Ok(match cfg {
            AgentConfig::ThompsonParticle {
                particles,
                likelihood_sigma2,
            } => {
                let sigma2 = likelihood_sigma2.unwrap_or(noise.sigma2).max(1e-12);
                AgentInstance::Thompson(ParticleEnsemble::from_prior(
                    prior, spec, *particles, sigma2, seed,
                )?)
            }
            AgentConfig::FixedGridUcb { arms } => AgentInstance::Baseline(baseline_init(
                BaselineKind::FixedGridUcb,
                horizon,
                *arms,
                noise.sigma2.max(0.25),
                0,
            )),
            AgentConfig::Zooming => AgentInstance::Baseline(baseline_init(
                BaselineKind::Zooming,
                horizon,
                0,
                noise.sigma2.max(0.25),
                spec.grid_n,
            )),
            AgentConfig::UniformRandom => AgentInstance::Baseline(baseline_init(
                BaselineKind::UniformRandom,
                horizon,
                0,
                0.25,
                0,
            )),
            AgentConfig::Oracle => AgentInstance::Oracle {
                action: env.best_action(),
            },
        })
    }

    fn select(&mut self, rng: &mut ChaCha12Rng) -> Result<f64, AgentError> {
        match self {
            AgentInstance::Thompson(e) => e.ts_select_action(rng),
            AgentInstance::Baseline(s) => Ok(baseline_select(s, rng)),
            AgentInstance::Oracle { action } => Ok(*action),
        }
    }

    fn observe(&mut self, a: f64, r: f64, rng: &mut ChaCha12Rng) {
        match self {
            AgentInstance::Thompson(e) => {
                e.update_posterior(a, r);
                e.maybe_resample(rng);
            }
            AgentInstance::Baseline(s) => baseline_update(s, a, r),
            AgentInstance::Oracle { .. } => {}
        }
    }

    fn width_at(&self, a: f64) -> f64 {
        match self {
            AgentInstance::Thompson(e) => e.posterior_width_at(a),
            _ => 0.0,
        }
    }
}

/// Simulates one episode of the configured agent against `f0` plus noise.
/// `f0` must pass the membership check for `config.spec`.
pub fn run_episode(
    config: &ExperimentConfig,
    f0: &GridFunction,
    seed: u64,
) -> Result<RunResult, HarnessError> {
    let report = verify_membership(f0, &config.spec, 0.0, config.spec.c)?;
    if !report.pass {
        return Err(HarnessError::Config(
            "f0 fails the membership check for the configured class".into(),
        ));
    }
    let env = Environment::Additive {
        f0,
        noise: &config.noise,
    };
    run_rounds(config, &env, config.horizon, seed, true)
}

fn run_rounds(
    config: &ExperimentConfig,
    env: &Environment<'_>,
    horizon: u64,
    seed: u64,
    keep_trace: bool,
) -> Result<RunResult, HarnessError> {
    let mut agent_rng = rngutil::stream(seed, 0xa6e1);
    let mut env_rng = rngutil::stream(seed, 0xe4b2);
    let pool_seed = rngutil::splitmix64(seed ^ 0x9001);
    let mut agent = AgentInstance::build(
        &config.agent,
        &config.spec,
        &config.prior,
        &config.noise,
        horizon,
        env,
        pool_seed,
    )?;
    let best = env.best_mean();
    let mut trace = Vec::with_capacity(if keep_trace { horizon as usize } else { 0 });
    let mut cumulative = 0.0;
    for t in 1..=horizon {
        let a = agent.select(&mut agent_rng)?;
        let r = env.reward(a, &mut env_rng);
        let instant = best - env.mean_reward(a);
        cumulative += instant;
        if keep_trace {
            trace.push(TraceRow {
                t,
                action: a,
                reward: r,
                instant_regret: instant,
                width: agent.width_at(a),
            });
        }
        agent.observe(a, r, &mut agent_rng);
    }
    Ok(RunResult {
        trace,
        cumulative_regret: cumulative,
    })
}

/// Bayesian-regret Monte Carlo: for each horizon in `t_grid`, draws a fresh
/// `f0` from the prior per replication, runs an episode, and aggregates mean
/// and standard error of the cumulative regret.
pub fn estimate_bayesian_regret(config: &ExperimentConfig) -> Result<RegretCurve, HarnessError> {
    config.validate()?;
    let mut mean_regret = Vec::with_capacity(config.t_grid.len());
    let mut stderr = Vec::with_capacity(config.t_grid.len());
    for &horizon in &config.t_grid {
        let regrets: Result<Vec<f64>, HarnessError> = (0..config.replications)
            .into_par_iter()
            .map(|rep| {
                let rep_seed = rngutil::splitmix64(
                    rngutil::splitmix64(config.seed)
                        ^ rngutil::splitmix64(horizon.wrapping_mul(0x517c_c1b7_2722_0a95))
                        ^ rngutil::splitmix64((rep as u64).wrapping_mul(0x2545_f491_4f6c_dd1d)),
                );
                let f0 = sample_prior_function(
                    &config.prior,
                    &config.spec,
                    rngutil::splitmix64(rep_seed ^ 0xf0),
                )?;
                let env = Environment::Additive {
                    f0: &f0,
                    noise: &config.noise,
                };
                Ok(run_rounds(config, &env, horizon, rep_seed, false)?.cumulative_regret)
            })
            .collect();
        let regrets = regrets?;
        let n = regrets.len() as f64;
        let mean = regrets.iter().sum::<f64>() / n;
        let var = if regrets.len() > 1 {
            regrets.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        mean_regret.push(mean);
        stderr.push((var / n).sqrt());
    }
    Ok(RegretCurve {
        horizons: config.t_grid.clone(),
        mean_regret,
        stderr,
        replications: config.replications,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct ExponentFit {
    pub slope: f64,
    pub stderr: f64,
}

/// OLS of `log mean_regret` on `log T` over the top `tail_fraction` of
/// horizons (at least three points required).
pub fn fit_exponent(curve: &RegretCurve, tail_fraction: f64) -> Result<ExponentFit, HarnessError> {
    let n = curve.horizons.len();
    let k = ((n as f64 * tail_fraction).ceil() as usize).min(n);
    if k < 3 {
        return Err(HarnessError::Fit(format!(
            "tail window has {k} points; need at least 3"
        )));
    }
    let start = n - k;
    let mut pts = Vec::with_capacity(k);
    for i in start..n {
        if curve.mean_regret[i] <= 0.0 {
            return Err(HarnessError::Fit(format!(
                "non-positive regret {} at T = {}",
                curve.mean_regret[i], curve.horizons[i]
            )));
        }
        pts.push(((curve.horizons[i] as f64).ln(), curve.mean_regret[i].ln()));
    }
    let kf = k as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / kf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / kf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let resid2: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - my - slope * (p.0 - mx);
            e * e
        })
        .sum();
    let stderr = if k > 2 {
        (resid2 / (kf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(ExponentFit { slope, stderr })
}

/// The Appendix-C coupling between the CAB instance and a `K`-armed Bernoulli
/// bandit: arms sit at `f_δ(a) = (2a-1)δ`, the bump peaks at arm `a_star`,
/// and rewards are coupled so `E[reward | x] = ν(x)`.
#[derive(Clone, Debug)]
pub struct AdversarialCoupling {
    pub k: u32,
    pub a_star: u32,
    pub delta: f64,
    pub instance: BumpInstance,
}

impl AdversarialCoupling {
    /// `K = (T/c0 · (2c1)^{-(2M+2)})^{1/(2M+3)}` and `δ = L (1/(2 c1 K))^{M+1}`.
    pub fn new(
        m: usize,
        horizon: u64,
        c0: f64,
        c1: f64,
        a_star: u32,
        l: f64,
        grid_n: usize,
    ) -> Result<Self, HarnessError> {
        if !(c0 > 0.0 && c1 > 0.0) {
            return Err(HarnessError::Config("c0 and c1 must be positive".into()));
        }
        let k = ((horizon as f64 / c0) * (2.0 * c1).powi(-(2 * m as i32 + 2)))
            .powf(1.0 / (2.0 * m as f64 + 3.0))
            .ceil()
            .max(2.0) as u32;
        let delta = l * (1.0 / (2.0 * c1 * k as f64)).powi(m as i32 + 1);
        if a_star < 1 || a_star > k {
            return Err(HarnessError::Config(format!("a_star {a_star} outside [1, {k}]")));
        }
        let x_star = (2.0 * a_star as f64 - 1.0) * delta;
        if !(0.0..=1.0).contains(&x_star) || (2.0 * k as f64 - 1.0) * delta > 1.0 {
            return Err(HarnessError::Config(format!(
                "arm map leaves [0,1]: K={k}, delta={delta}"
            )));
        }
        let instance = bump_instance(x_star, delta, m, l, grid_n)?;
        Ok(Self {
            k,
            a_star,
            delta,
            instance,
        })
    }

    pub fn arm_position(&self, a: u32) -> f64 {
        (2.0 * a as f64 - 1.0) * self.delta
    }

    /// Nearest arm to `x` under the arm map.
    pub fn arm_of(&self, x: f64) -> u32 {
        let raw = (x / (2.0 * self.delta) + 0.5).round();
        (raw.max(1.0) as u32).min(self.k)
    }

    /// Mean Bernoulli reward of arm `a`. The peak arm uses the exact
    /// construction height: the grid interpolation of `ν` never exceeds it,
    /// which keeps the coupling probability inside `[0,1]`.
    pub fn mu(&self, a: u32) -> f64 {
        if a == self.a_star {
            0.5 + self.delta
        } else {
            self.instance.nu.eval(self.arm_position(a))
        }
    }
}

/// Draws the coupled binary reward: with probability
/// `p_x = (0.5 - ν(x)) / (0.5 - μ_{a(x)})` the arm's Bernoulli reward,
/// otherwise an independent Bernoulli(0.5); `0/0` is read as `p_x = 1`.
/// The construction makes `E[reward | x] = ν(x)`.
pub fn adversarial_coupled_reward<R: Rng + ?Sized>(
    coupling: &AdversarialCoupling,
    x: f64,
    rng: &mut R,
) -> f64 {
    let a = coupling.arm_of(x);
    let mu = coupling.mu(a);
    let r = if rng.random::<f64>() < mu { 1.0 } else { 0.0 };
    let nu_x = coupling.instance.nu.eval(x);
    let p_x = if (0.5 - mu).abs() < 1e-14 {
        1.0
    } else {
        ((0.5 - nu_x) / (0.5 - mu)).clamp(0.0, 1.0)
    };
    if rng.random::<f64>() < p_x {
        r
    } else if rng.random::<f64>() < 0.5 {
        1.0
    } else {
        0.0
    }
}

/// Lower-bound study configuration knobs (the paper's unspecified universal
/// constants are exposed here).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LowerBoundConfig {
    pub c0: f64,
    pub c1: f64,
    pub l: f64,
    pub grid_n: usize,
}

impl Default for LowerBoundConfig {
    fn default() -> Self {
        Self {
            c0: 0.05,
            c1: 1.0,
            l: 1.0,
            grid_n: 1001,
        }
    }
}

/// Runs each algorithm on the adversarial family: per horizon and
/// replication the bump location is drawn uniformly over the arms, the
/// coupled instance is built, and the regret against `0.5 + δ` is recorded.
pub fn lower_bound_study(
    m: usize,
    algorithms: &[AgentConfig],
    t_grid: &[u64],
    replications: u32,
    seed: u64,
    cfg: &LowerBoundConfig,
) -> Result<Vec<(String, RegretCurve)>, HarnessError> {
    let mut out = Vec::with_capacity(algorithms.len());
    for (alg_idx, alg) in algorithms.iter().enumerate() {
        let mut mean_regret = Vec::with_capacity(t_grid.len());
        let mut stderr = Vec::with_capacity(t_grid.len());
        for &horizon in t_grid {
            let regrets: Result<Vec<f64>, HarnessError> = (0..replications)
                .into_par_iter()
                .map(|rep| {
                    let rep_seed = rngutil::splitmix64(
                        rngutil::splitmix64(seed ^ (alg_idx as u64) << 32)
                            ^ rngutil::splitmix64(horizon.wrapping_mul(0x9e37_79b9_7f4a_7c15))
                            ^ rngutil::splitmix64((rep as u64).wrapping_mul(0x2545_f491_4f6c_dd1d)),
                    );
                    // Uniform bump-feasible position: a* uniform over arms.
                    let probe = AdversarialCoupling::new(m, horizon, cfg.c0, cfg.c1, 1, cfg.l, cfg.grid_n)?;
                    let mut pick_rng = rngutil::stream(rep_seed, 0xa57a);
                    let a_star = 1 + (pick_rng.random::<f64>() * probe.k as f64).floor() as u32;
                    let coupling = AdversarialCoupling::new(
                        m,
                        horizon,
                        cfg.c0,
                        cfg.c1,
                        a_star.min(probe.k),
                        cfg.l,
                        cfg.grid_n,
                    )?;
                    // Instance-matched arm count for the fixed-grid baseline.
                    let alg = match alg {
                        AgentConfig::FixedGridUcb { arms } if *arms == 0 => AgentConfig::FixedGridUcb {
                            arms: coupling.k as usize,
                        },
                        other => other.clone(),
                    };
                    let config = ExperimentConfig {
                        spec: *coupling.instance.nu.spec(),
                        prior: PriorSpec::default_trig(),
                        noise: NoiseModel::bounded_uniform(0.5),
                        agent: alg,
                        horizon,
                        replications: 1,
                        seed: rep_seed,
                        t_grid: vec![horizon],
                    };
                    let env = Environment::Coupled(&coupling);
                    Ok(run_rounds(&config, &env, horizon, rep_seed, false)?.cumulative_regret)
                })
                .collect();
            let regrets = regrets?;
            let n = regrets.len() as f64;
            let mean = regrets.iter().sum::<f64>() / n;
            let var = if regrets.len() > 1 {
                regrets.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            mean_regret.push(mean);
            stderr.push((var / n).sqrt());
        }
        out.push((
            alg.name().to_string(),
            RegretCurve {
                horizons: t_grid.to_vec(),
                mean_regret,
                stderr,
                replications,
            },
        ));
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes one `T,mean,stderr` CSV per curve; an empty list writes nothing.
pub fn export_csv(
    curves: &[(String, RegretCurve)],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files = Vec::new();
    for (name, curve) in curves {
        let path = out_dir.join(format!("{name}.csv"));
        write_file(&path, &curve.to_csv())?;
        files.push(path);
    }
    Ok(files)
}

/// Log-log SVG plot of the curves with reference slope lines for the upper
/// and lower rate exponents of order `m`.
pub fn export_svg(
    curves: &[(String, RegretCurve)],
    m: u64,
    path: &Path,
) -> Result<Option<PathBuf>, HarnessError> {
    if curves.is_empty() {
        return Ok(None);
    }
    let (w, h, margin) = (720.0, 480.0, 60.0);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (_, c) in curves {
        for i in 0..c.horizons.len() {
            if c.mean_regret[i] > 0.0 {
                xs.push((c.horizons[i] as f64).ln());
                ys.push(c.mean_regret[i].ln());
            }
        }
    }
    if xs.is_empty() {
        return Ok(None);
    }
    let (x0, x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (y0, y1) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (x1, y1) = (x1.max(x0 + 1e-9), y1.max(y0 + 1e-9));
    let px = |x: f64| margin + (x - x0) / (x1 - x0) * (w - 2.0 * margin);
    let py = |y: f64| h - margin - (y - y0) / (y1 - y0) * (h - 2.0 * margin);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" font-size=\"14\">cumulative regret vs T (log-log)</text>\n",
        margin
    );
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    for (ci, (name, c)) in curves.iter().enumerate() {
        let color = colors[ci % colors.len()];
        let mut d = String::new();
        for i in 0..c.horizons.len() {
            if c.mean_regret[i] <= 0.0 {
                continue;
            }
            let cmd = if d.is_empty() { "M" } else { "L" };
            let _ = write!(d, "{cmd}{:.2},{:.2} ", px((c.horizons[i] as f64).ln()), py(c.mean_regret[i].ln()));
        }
        let _ = write!(
            svg,
            "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{name}</text>\n",
            w - margin - 150.0,
            30.0 + 14.0 * ci as f64,
        );
    }
    // Reference slope lines through the plot center.
    let exps = exponents(m);
    for (slope, label, dash) in [
        (exps.upper_f64(), format!("slope {} (upper)", exps.upper), "6,3"),
        (exps.lower_f64(), format!("slope {} (lower)", exps.lower), "2,3"),
    ] {
        let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
        let (xa, xb) = (x0, x1);
        let (ya, yb) = (cy + slope * (xa - cx), cy + slope * (xb - cx));
        let _ = write!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"gray\" stroke-dasharray=\"{dash}\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" fill=\"gray\">{label}</text>\n",
            px(xa), py(ya), px(xb), py(yb), px(xb) - 110.0, py(yb) - 4.0,
        );
    }
    svg.push_str("</svg>\n");
    write_file(path, &svg)?;
    Ok(Some(path.to_path_buf()))
}

/// Stable 64-bit FNV-1a over the canonical JSON encoding of a config.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).unwrap_or_default();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in json.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Run manifest written next to exported files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub wall_time_s: f64,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(config_hash: String, wall_time_s: f64, files: &[PathBuf]) -> Self {
        Self {
            config_hash,
            version: format!("cablab-{}", env!("CARGO_PKG_VERSION")),
            wall_time_s,
            files: files
                .iter()
                .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
                .collect(),
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, HarnessError> {
        let path = out_dir.join("manifest.json");
        write_file(&path, &serde_json::to_string_pretty(self).unwrap())?;
        Ok(path)
    }
}

/// One line of the verify battery; pass means `value <= threshold`.
#[derive(Clone, Debug)]
pub struct VerifyLine {
    pub check: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn line(check: &str, value: f64, threshold: f64) -> VerifyLine {
    VerifyLine {
        check: check.to_string(),
        value,
        threshold,
        pass: value <= threshold,
    }
}

#[derive(Debug)]
pub struct VerifyOutcome {
    pub lines: Vec<VerifyLine>,
    pub files: Vec<PathBuf>,
}

impl VerifyOutcome {
    pub fn all_pass(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,value,threshold,pass\n");
        for l in &self.lines {
            let _ = writeln!(out, "{},{:.16e},{:.16e},{}", l.check, l.value, l.threshold, l.pass);
        }
        out
    }
}

fn ols_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>()
}

/// Deterministic reduced property battery behind the `verify` subcommand:
/// exponent identities, the `B*` floors, the scaling laws, a witness
/// sandwich, concentration coverage at reduced replication counts, the
/// width-sum and regret-width inequalities, the composed bound pipeline, a
/// small TS study, and coupled-reward unbiasedness. Writes results plus the
/// exercised CSV/SVG artifacts into `out_dir`. Output bytes depend only on
/// `seed`, not on thread count.
pub fn verify_suite(seed: u64, out_dir: &Path) -> Result<VerifyOutcome, HarnessError> {
    use crate::bounds::{
        exponents, pipeline_to_csv, theorem2_pipeline, BoundParams, PipelineConfig,
    };
    use crate::eluder::{
        eluder_upper_bound, greedy_eluder_witness, min_region_b_star, DependenceMode,
        WITNESS_RESTARTS,
    };
    use num_traits::ToPrimitive;

    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut lines = Vec::new();
    let mut files = Vec::new();

    // Exponent identities (exact rationals).
    let dev_exact = [
        (exponents(0).upper_f64() - 5.0 / 6.0).abs(),
        (exponents(1).upper_f64() - 23.0 / 30.0).abs(),
        (exponents(0).lower_f64() - 2.0 / 3.0).abs(),
        (exponents(0).gap().to_f64().unwrap() - (exponents(0).upper_f64() - exponents(0).lower_f64())).abs(),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    lines.push(line("exponents-exact", dev_exact, 1e-12));
    lines.push(line(
        "exponents-limit-half",
        (exponents(1_000_000).upper_f64() - 0.5).abs(),
        1e-5,
    ));

    // B* floors, small (eps, L) grid.
    let mut worst = f64::NEG_INFINITY;
    for &eps in &[0.1, 0.3] {
        for &l in &[0.5, 1.0, 2.0] {
            let s0 = FunctionClassSpec::new(1.0, 0, l, 2001)?;
            let b0 = min_region_b_star(0.5, &s0, eps)?;
            worst = worst.max(eps / (3.0 * l) - b0);
            let s1 = FunctionClassSpec::new(1.0, 1, l, 2001)?;
            if let Ok(b1) = min_region_b_star(0.5, &s1, eps) {
                let floor = (2.0 * (2.0 * eps / (3.0 * l)).sqrt()).min(1.0);
                worst = worst.max(floor - b1);
            }
        }
    }
    lines.push(line("bstar-floors", worst, 2.0 / 2000.0));

    // Width scaling of the constructions (analytic geometry).
    let mut worst = 0.0f64;
    for (m, eps_grid) in [
        (0usize, [0.01, 0.03, 0.06, 0.1].as_slice()),
        (1, [0.01, 0.03, 0.06, 0.1].as_slice()),
        (2, [2e-4, 5e-4, 1e-3, 1.5e-3].as_slice()),
        (3, [4e-5, 8e-5, 1.5e-4, 2e-4].as_slice()),
    ] {
        let pts: Vec<(f64, f64)> = eps_grid
            .iter()
            .map(|&e| {
                let (_, d) = crate::funclass::extremal_geometry(m, 1.0, e).unwrap();
                (e.ln(), (2.0 * d).ln())
            })
            .collect();
        worst = worst.max((ols_slope(&pts) - 1.0 / (m as f64 + 1.0)).abs());
    }
    lines.push(line("region-scaling-slopes", worst, 0.05));

    // Witness sandwich and monotonicity at M = 0.
    let s = FunctionClassSpec::new(1.0, 0, 1.0, 801)?;
    let mut sandwich_margin = f64::NEG_INFINITY;
    let mut last_len = usize::MAX;
    let mut mono_ok = true;
    let mut witness_csv: Option<String> = None;
    for &eps in &[0.05f64, 0.1, 0.2] {
        let mut rng = rngutil::stream(seed, 0x77 ^ eps.to_bits());
        let w = greedy_eluder_witness(&s, eps, DependenceMode::Extremal, 2000, &mut rng)?;
        if !w.verify() {
            sandwich_margin = f64::INFINITY;
        }
        let ub = eluder_upper_bound(&s, eps)?;
        sandwich_margin = sandwich_margin.max(w.len() as f64 - ub);
        mono_ok &= w.len() <= last_len;
        last_len = w.len();
        if witness_csv.is_none() {
            witness_csv = Some(w.to_csv());
            let side = w.sidecar_json(DependenceMode::Extremal, WITNESS_RESTARTS);
            let p = out_dir.join("witness.json");
            write_file(&p, &side)?;
            files.push(p);
        }
    }
    let p = out_dir.join("witness.csv");
    write_file(&p, &witness_csv.unwrap_or_default())?;
    files.push(p);
    lines.push(line("witness-sandwich", sandwich_margin, 0.0));
    lines.push(line("witness-monotone", if mono_ok { 0.0 } else { 1.0 }, 0.0));

    // Martingale and coverage at reduced replication counts.
    let spec = FunctionClassSpec::new(1.0, 0, 5.0, 201)?;
    let f0 = GridFunction::constant(0.2, spec);
    let f = GridFunction::constant(0.7, spec);
    let actions: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
    let (delta, runs) = (0.1, 200);
    let frac = crate::agent::martingale_check(
        &f,
        &f0,
        &actions,
        &NoiseModel::gaussian(1.0),
        0.1,
        delta,
        runs,
        seed,
    )?;
    let se = (delta * (1.0 - delta) / runs as f64).sqrt();
    lines.push(line("martingale-pass-fraction", (1.0 - delta - 3.0 * se) - frac, 0.0));

    let cov = crate::agent::empirical_coverage(
        &PriorSpec::default_trig(),
        &spec,
        &NoiseModel::gaussian(0.5),
        100,
        0.1,
        0.0,
        0.25,
        120,
        seed ^ 0xc0,
        32,
    )?;
    let se = (0.2f64 * 0.8 / 120.0).sqrt();
    lines.push(line("coverage-fraction", (1.0 - 2.0 * 0.1 - 3.0 * se) - cov, 0.0));

    // Width-sum and regret-width inequalities on instrumented TS runs.
    let kappa = 300f64.powf(exponents(0).kappa_exp_f64());
    let dim = eluder_upper_bound(&FunctionClassSpec::new(1.0, 0, 5.0, 2001)?, kappa)?;
    let ccfg = crate::agent::ConfidenceRunConfig {
        spec,
        prior: PriorSpec::default_trig(),
        noise: NoiseModel::gaussian(0.5),
        horizon: 300,
        n_candidates: 48,
        likelihood_sigma2: 0.25,
        bound_params: BoundParams {
            alpha: 0.01,
            delta: 0.05,
            lambda: 0.25,
            kappa_value: kappa,
            covering_constant: 1.0,
            c: 1.0,
        },
        kappa_of_t: kappa,
        dim_value: dim,
    };
    let mut violations = 0usize;
    for i in 0..6u64 {
        let rep = crate::agent::confidence_run(&ccfg, seed ^ (0xd00d + i))?;
        if !rep.width_sum_ok || (rep.covered_all_rounds && !rep.regret_width_ok) {
            violations += 1;
        }
    }
    lines.push(line("widthsum-regret-inequalities", violations as f64, 0.0));

    // Composed Theorem-2 pipeline slope at the top decade.
    let horizons: Vec<u64> = (8..=20).map(|k| 1u64 << k).collect();
    let mut worst = 0.0f64;
    let mut pipeline_csv = String::new();
    for m in 0..=2usize {
        let cfg = PipelineConfig {
            m,
            c: 1e-3,
            l: 1.0,
            sigma2: 1e-6,
            b: 1e-9,
            lambda: 100.0,
            covering_constant: 1.0,
        };
        let pts = theorem2_pipeline(&cfg, &horizons)?;
        if m == 0 {
            pipeline_csv = pipeline_to_csv(&pts);
        }
        let top: Vec<(f64, f64)> = pts
            .iter()
            .filter(|p| p.t >= (1u64 << 17))
            .map(|p| ((p.t as f64).ln(), p.regret_bound.ln()))
            .collect();
        worst = worst.max((ols_slope(&top) - exponents(m as u64).upper_f64()).abs());
    }
    let p = out_dir.join("bound_pipeline.csv");
    write_file(&p, &pipeline_csv)?;
    files.push(p);
    lines.push(line("pipeline-slope", worst, 0.03));

    // Small TS study: sublinear regret curve.
    let ts_cfg = ExperimentConfig {
        spec: FunctionClassSpec::new(1.0, 0, 5.0, 201)?,
        prior: PriorSpec::default_trig(),
        noise: NoiseModel::gaussian(0.5),
        agent: AgentConfig::ThompsonParticle {
            particles: 128,
            likelihood_sigma2: None,
        },
        horizon: 2048,
        replications: 12,
        seed,
        t_grid: vec![256, 512, 1024, 2048],
    };
    let curve = estimate_bayesian_regret(&ts_cfg)?;
    let fit = fit_exponent(&curve, 1.0)?;
    lines.push(line("ts-regret-sublinear", fit.slope, 0.95));
    let curves = vec![("thompson-particle".to_string(), curve)];
    files.extend(export_csv(&curves, out_dir)?);
    if let Some(p) = export_svg(&curves, 0, &out_dir.join("regret.svg"))? {
        files.push(p);
    }

    // Coupled-reward unbiasedness.
    let coupling = AdversarialCoupling::new(0, 2000, 0.05, 1.0, 2, 1.0, 2001)?;
    let mut worst = f64::NEG_INFINITY;
    let n = 20_000;
    for i in 0..10 {
        let x = i as f64 / 9.0;
        let mut rng = rngutil::stream(seed, 0xb1a5 ^ i);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += adversarial_coupled_reward(&coupling, x, &mut rng);
        }
        let mean = sum / n as f64;
        let nu = coupling.instance.nu.eval(x);
        let se = (nu * (1.0 - nu) / n as f64).sqrt().max(1e-9);
        worst = worst.max((mean - nu).abs() - 3.0 * se);
    }
    lines.push(line("coupled-reward-unbiased", worst, 1e-9));

    let outcome = VerifyOutcome { lines, files };
    let p = out_dir.join("verify_results.csv");
    write_file(&p, &outcome.to_csv())?;
    let mut outcome = outcome;
    outcome.files.push(p);
    Ok(outcome)
}
