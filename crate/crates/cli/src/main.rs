//! Batch driver for the bandit lab.
//!
//! Subcommands: `simulate` (Bayesian-regret study), `eluder` (witness and
//! scaling study), `bounds` (bound-curve tables), `lower-bound` (adversarial
//! study), `verify` (property suite). One TOML/JSON config file via
//! `--config`; `--seed`, `--out-dir`, and `--threads` override it. Every run
//! writes CSV (plus SVG where applicable) and a JSON manifest with the config
//! hash, version string, and wall time.

use anyhow::{bail, Context, Result};
use cablab::agent::DEFAULT_PARTICLES;
use cablab::bounds::{pipeline_to_csv, theorem2_pipeline, PipelineConfig};
use cablab::eluder::{
    eluder_upper_bound, greedy_eluder_witness, DependenceMode, WITNESS_RESTARTS,
};
use cablab::funclass::{FunctionClassSpec, PriorSpec};
use cablab::harness::{
    config_hash, estimate_bayesian_regret, export_csv, export_svg, fit_exponent,
    lower_bound_study, verify_suite, AgentConfig, ExperimentConfig, LowerBoundConfig, RunManifest,
};
use cablab::noise::NoiseModel;
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "cablab", about = "Continuum-armed bandit lab", version)]
struct Cli {
    /// TOML or JSON config file (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bayesian-regret Monte Carlo for the configured agent.
    Simulate,
    /// Greedy eluder witnesses and the counting upper bound over an ε grid.
    Eluder,
    /// Composed upper-bound pipeline tables.
    Bounds,
    /// Adversarial lower-bound study on the coupled bump family.
    LowerBound,
    /// Full property suite; exits nonzero on any failed check.
    Verify,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
struct EluderStudyConfig {
    m: usize,
    l: f64,
    grid_n: usize,
    eps_grid: Vec<f64>,
    mode: String,
    max_len: usize,
}

impl Default for EluderStudyConfig {
    fn default() -> Self {
        Self {
            m: 0,
            l: 1.0,
            grid_n: 801,
            eps_grid: vec![0.2, 0.1, 0.05, 0.025],
            mode: "extremal".into(),
            max_len: 2000,
        }
    }
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
struct BoundsStudyConfig {
    pipeline: PipelineConfig,
    log2_t_min: u32,
    log2_t_max: u32,
}

impl Default for BoundsStudyConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig {
                m: 0,
                c: 1e-3,
                l: 1.0,
                sigma2: 1e-6,
                b: 1e-9,
                lambda: 100.0,
                covering_constant: 1.0,
            },
            log2_t_min: 8,
            log2_t_max: 20,
        }
    }
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
struct LowerBoundStudyConfig {
    m: usize,
    t_grid: Vec<u64>,
    replications: u32,
    instance: LowerBoundConfig,
    tail_fraction: f64,
}

impl Default for LowerBoundStudyConfig {
    fn default() -> Self {
        Self {
            m: 0,
            t_grid: vec![4000, 10000, 25000, 63000],
            replications: 50,
            instance: LowerBoundConfig::default(),
            tail_fraction: 1.0,
        }
    }
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
struct CliConfig {
    seed: u64,
    out_dir: PathBuf,
    simulate: ExperimentConfig,
    tail_fraction: f64,
    eluder: EluderStudyConfig,
    bounds: BoundsStudyConfig,
    lower_bound: LowerBoundStudyConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("out"),
            simulate: ExperimentConfig {
                spec: FunctionClassSpec::new(1.0, 0, 5.0, 401).unwrap(),
                prior: PriorSpec::default_trig(),
                noise: NoiseModel::gaussian(0.5),
                agent: AgentConfig::ThompsonParticle {
                    particles: DEFAULT_PARTICLES,
                    likelihood_sigma2: None,
                },
                horizon: 4096,
                replications: 50,
                seed: 42,
                t_grid: vec![512, 1024, 2048, 4096],
            },
            tail_fraction: 0.75,
            eluder: EluderStudyConfig::default(),
            bounds: BoundsStudyConfig::default(),
            lower_bound: LowerBoundStudyConfig::default(),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<CliConfig> {
    let Some(path) = path else {
        return Ok(CliConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text).context("parsing JSON config")?,
        _ => toml::from_str(&text).context("parsing TOML config")?,
    };
    Ok(cfg)
}

fn write_manifest<T: Serialize>(
    out_dir: &Path,
    config: &T,
    files: &[PathBuf],
    started: Instant,
) -> Result<()> {
    let manifest = RunManifest::new(
        config_hash(config),
        started.elapsed().as_secs_f64(),
        files,
    );
    manifest.write(out_dir)?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring thread pool")?;
    }
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.simulate.seed = seed;
    }
    if let Some(dir) = cli.out_dir {
        cfg.out_dir = dir;
    }
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let started = Instant::now();

    match cli.command {
        Command::Simulate => {
            let curve = estimate_bayesian_regret(&cfg.simulate)?;
            let name = cfg.simulate.agent.name().to_string();
            let curves = vec![(name.clone(), curve.clone())];
            let mut files = export_csv(&curves, &cfg.out_dir)?;
            if let Some(svg) =
                export_svg(&curves, cfg.simulate.spec.m as u64, &cfg.out_dir.join("regret.svg"))?
            {
                files.push(svg);
            }
            // One example trace at the top horizon.
            let f0 = cablab::funclass::sample_prior_function(
                &cfg.simulate.prior,
                &cfg.simulate.spec,
                cfg.seed ^ 0xf0,
            )?;
            let episode = cablab::harness::run_episode(&cfg.simulate, &f0, cfg.seed)?;
            let trace_path = cfg.out_dir.join("trace.csv");
            std::fs::write(&trace_path, episode.to_csv())?;
            files.push(trace_path);
            match fit_exponent(&curve, cfg.tail_fraction) {
                Ok(fit) => println!(
                    "{name}: fitted exponent {:.4} +- {:.4} over the top {:.0}% of horizons",
                    fit.slope,
                    fit.stderr,
                    100.0 * cfg.tail_fraction
                ),
                Err(e) => println!("{name}: exponent fit unavailable ({e})"),
            }
            write_manifest(&cfg.out_dir, &cfg.simulate, &files, started)?;
        }
        Command::Eluder => {
            let mode = match cfg.eluder.mode.as_str() {
                "ensemble" => DependenceMode::Ensemble,
                "extremal" => DependenceMode::Extremal,
                other => bail!("unknown dependence mode {other:?}"),
            };
            let spec = FunctionClassSpec::new(1.0, cfg.eluder.m, cfg.eluder.l, cfg.eluder.grid_n)?;
            let mut summary = String::from("eps,length,upper_bound\n");
            let mut files = Vec::new();
            for (i, &eps) in cfg.eluder.eps_grid.iter().enumerate() {
                let mut rng = cablab::seed_stream(cfg.seed, eps.to_bits());
                let w = greedy_eluder_witness(&spec, eps, mode, cfg.eluder.max_len, &mut rng)?;
                let ub = eluder_upper_bound(&spec, eps)?;
                println!(
                    "eps = {eps}: witness length {} (verified: {}), upper bound {ub:.2}",
                    w.len(),
                    w.verify()
                );
                summary.push_str(&format!("{eps},{},{ub:.6}\n", w.len()));
                let csv_path = cfg.out_dir.join(format!("witness_{i}.csv"));
                std::fs::write(&csv_path, w.to_csv())?;
                let side_path = cfg.out_dir.join(format!("witness_{i}.json"));
                std::fs::write(&side_path, w.sidecar_json(mode, WITNESS_RESTARTS))?;
                files.push(csv_path);
                files.push(side_path);
            }
            let sum_path = cfg.out_dir.join("eluder_summary.csv");
            std::fs::write(&sum_path, summary)?;
            files.push(sum_path);
            write_manifest(&cfg.out_dir, &cfg.eluder, &files, started)?;
        }
        Command::Bounds => {
            let horizons: Vec<u64> = (cfg.bounds.log2_t_min..=cfg.bounds.log2_t_max)
                .map(|k| 1u64 << k)
                .collect();
            let pts = theorem2_pipeline(&cfg.bounds.pipeline, &horizons)?;
            let path = cfg.out_dir.join("bound_pipeline.csv");
            std::fs::write(&path, pipeline_to_csv(&pts))?;
            let top: Vec<(f64, f64)> = pts
                .iter()
                .rev()
                .take(4)
                .map(|p| ((p.t as f64).ln(), p.regret_bound.ln()))
                .collect();
            let n = top.len() as f64;
            let mx = top.iter().map(|p| p.0).sum::<f64>() / n;
            let my = top.iter().map(|p| p.1).sum::<f64>() / n;
            let slope = top.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
                / top.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
            println!(
                "M = {}: top-decade bound slope {slope:.4} (rate exponent {:.4})",
                cfg.bounds.pipeline.m,
                cablab::bounds::exponents(cfg.bounds.pipeline.m as u64).upper_f64()
            );
            write_manifest(&cfg.out_dir, &cfg.bounds, &[path], started)?;
        }
        Command::LowerBound => {
            let algorithms = vec![
                AgentConfig::FixedGridUcb { arms: 0 },
                AgentConfig::UniformRandom,
            ];
            let curves = lower_bound_study(
                cfg.lower_bound.m,
                &algorithms,
                &cfg.lower_bound.t_grid,
                cfg.lower_bound.replications,
                cfg.seed,
                &cfg.lower_bound.instance,
            )?;
            let mut files = export_csv(&curves, &cfg.out_dir)?;
            if let Some(svg) = export_svg(
                &curves,
                cfg.lower_bound.m as u64,
                &cfg.out_dir.join("lower_bound.svg"),
            )? {
                files.push(svg);
            }
            for (name, curve) in &curves {
                match fit_exponent(curve, cfg.lower_bound.tail_fraction) {
                    Ok(fit) => println!("{name}: fitted exponent {:.4} +- {:.4}", fit.slope, fit.stderr),
                    Err(e) => println!("{name}: exponent fit unavailable ({e})"),
                }
            }
            write_manifest(&cfg.out_dir, &cfg.lower_bound, &files, started)?;
        }
        Command::Verify => {
            let outcome = verify_suite(cfg.seed, &cfg.out_dir)?;
            for l in &outcome.lines {
                println!(
                    "{}: {} (value {:.3e}, threshold {:.3e})",
                    l.check,
                    if l.pass { "pass" } else { "FAIL" },
                    l.value,
                    l.threshold
                );
            }
            write_manifest(&cfg.out_dir, &cfg.seed, &outcome.files, started)?;
            if !outcome.all_pass() {
                bail!("verification failed");
            }
            println!("all checks passed");
        }
    }
    Ok(())
}
