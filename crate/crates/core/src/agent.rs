//! Thompson sampling over a particle ensemble, least-squares confidence
//! sets, and baseline policies.
//!
//! The posterior is represented by a fixed pool of prior draws and per-slot
//! weights: exact posterior sampling is unavailable for generic priors, so a
//! Gaussian working likelihood reweights the pool and systematic resampling
//! controls degeneracy. Resampling permutes slot indices into the immutable
//! pool, so particle values are never copied.

use crate::bounds::{ball_width, BoundParams, BoundsError};
use crate::funclass::{sample_prior_function, FunClassError, FunctionClassSpec, GridFunction, PriorSpec};
use crate::noise::NoiseModel;
use crate::rngutil;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("ensemble weights are all zero")]
    DegenerateEnsemble,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    FunClass(#[from] FunClassError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

/// Append-only action/reward record.
#[derive(Clone, Debug, Default)]
pub struct History {
    actions: Vec<f64>,
    rewards: Vec<f64>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, action: f64, reward: f64) {
        self.actions.push(action);
        self.rewards.push(reward);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[f64] {
        &self.actions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }
}

/// Default particle count.
pub const DEFAULT_PARTICLES: usize = 2048;

/// Weighted sample of prior draws representing the working posterior.
#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    pool: Arc<Vec<GridFunction>>,
    /// Grid argmax location per pool entry (lowest index on ties).
    pool_argmax_x: Arc<Vec<f64>>,
    /// Slot -> pool index; resampling rewrites slots only.
    slots: Vec<u32>,
    /// Normalized per-slot log weights (log-sum-exp zero).
    log_weights: Vec<f64>,
    likelihood_sigma2: f64,
}

impl ParticleEnsemble {
    pub fn from_prior(
        prior: &PriorSpec,
        spec: &FunctionClassSpec,
        n_particles: usize,
        likelihood_sigma2: f64,
        seed: u64,
    ) -> Result<Self, AgentError> {
        let pool: Result<Vec<GridFunction>, FunClassError> = (0..n_particles)
            .map(|i| sample_prior_function(prior, spec, rngutil::splitmix64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9))))
            .collect();
        Ok(Self::from_pool(pool?, likelihood_sigma2))
    }

    /// Uniform weights over an explicit pool.
    pub fn from_pool(pool: Vec<GridFunction>, likelihood_sigma2: f64) -> Self {
        let n = pool.len();
        Self::with_log_weights(pool, vec![-(n as f64).ln(); n], likelihood_sigma2)
    }

    /// Explicit (unnormalized) log weights over a pool; one slot per entry.
    pub fn with_log_weights(
        pool: Vec<GridFunction>,
        log_weights: Vec<f64>,
        likelihood_sigma2: f64,
    ) -> Self {
        assert_eq!(pool.len(), log_weights.len());
        assert!(likelihood_sigma2 > 0.0);
        let pool_argmax_x: Vec<f64> = pool
            .iter()
            .map(|f| f.spec().grid_x(f.grid_argmax()))
            .collect();
        let mut out = Self {
            pool: Arc::new(pool),
            pool_argmax_x: Arc::new(pool_argmax_x),
            slots: (0..log_weights.len() as u32).collect(),
            log_weights,
            likelihood_sigma2,
        };
        out.normalize();
        out
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn pool(&self) -> &[GridFunction] {
        &self.pool
    }

    pub fn likelihood_sigma2(&self) -> f64 {
        self.likelihood_sigma2
    }

    /// Normalized slot weights (zeros if degenerate).
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights
            .iter()
            .map(|&lw| if lw.is_finite() { lw.exp() } else { 0.0 })
            .collect()
    }

    fn normalize(&mut self) {
        let max = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return; // degenerate; detected at selection time
        }
        let lse = max + self.log_weights.iter().map(|&lw| (lw - max).exp()).sum::<f64>().ln();
        for lw in &mut self.log_weights {
            *lw -= lse;
        }
    }

    /// Gaussian working-likelihood reweighting:
    /// `log w += -(f_i(a) - r)^2 / (2 likelihood_sigma2)`, then renormalize.
    pub fn update_posterior(&mut self, action: f64, reward: f64) {
        let vals: Vec<f64> = self.pool.iter().map(|f| f.eval(action)).collect();
        let inv = 1.0 / (2.0 * self.likelihood_sigma2);
        for (slot, lw) in self.slots.iter().zip(self.log_weights.iter_mut()) {
            let d = vals[*slot as usize] - reward;
            *lw -= d * d * inv;
        }
        self.normalize();
    }

    /// `(Σ w)² / Σ w²` with normalized weights; at least 1, at most `len`.
    pub fn effective_sample_size(&self) -> f64 {
        let sum_sq: f64 = self
            .log_weights
            .iter()
            .map(|&lw| if lw.is_finite() { (2.0 * lw).exp() } else { 0.0 })
            .sum();
        if sum_sq == 0.0 {
            0.0
        } else {
            1.0 / sum_sq
        }
    }

    /// Systematic resampling when the effective sample size drops below half
    /// the slot count. Returns whether a resample happened.
    pub fn maybe_resample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let n = self.slots.len();
        if self.effective_sample_size() >= n as f64 / 2.0 {
            return false;
        }
        let weights = self.weights();
        let u: f64 = rng.random();
        let mut new_slots = Vec::with_capacity(n);
        let mut cum = 0.0;
        let mut j = 0usize;
        for k in 0..n {
            let target = (k as f64 + u) / n as f64;
            while cum + weights[j] < target && j + 1 < n {
                cum += weights[j];
                j += 1;
            }
            new_slots.push(self.slots[j]);
        }
        self.slots = new_slots;
        self.log_weights = vec![-(n as f64).ln(); n];
        true
    }

    /// Ensemble-relative posterior width at `a`: value range over slots with
    /// positive weight.
    pub fn posterior_width_at(&self, a: f64) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut any = false;
        for (slot, lw) in self.slots.iter().zip(&self.log_weights) {
            if lw.is_finite() {
                let v = self.pool[*slot as usize].eval(a);
                lo = lo.min(v);
                hi = hi.max(v);
                any = true;
            }
        }
        if any {
            hi - lo
        } else {
            0.0
        }
    }

    /// Draws a slot proportionally to its weight and returns the grid argmax
    /// of that particle (lowest grid index on ties).
    pub fn ts_select_action<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64, AgentError> {
        let weights = self.weights();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(AgentError::DegenerateEnsemble);
        }
        let target: f64 = rng.random::<f64>() * total;
        let mut cum = 0.0;
        let mut chosen = self.slots.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            cum += w;
            if cum >= target {
                chosen = i;
                break;
            }
        }
        Ok(self.pool_argmax_x[self.slots[chosen] as usize])
    }
}

/// Index of the squared-error minimiser (lowest index on ties).
pub fn least_squares_index(candidates: &[GridFunction], history: &History) -> usize {
    assert!(!candidates.is_empty());
    let mut best = 0usize;
    let mut best_err = f64::INFINITY;
    for (i, f) in candidates.iter().enumerate() {
        let err: f64 = history
            .actions
            .iter()
            .zip(&history.rewards)
            .map(|(&a, &r)| {
                let d = f.eval(a) - r;
                d * d
            })
            .sum();
        if err < best_err {
            best_err = err;
            best = i;
        }
    }
    best
}

/// The least-squares estimate `argmin_f Σ (f(A_i) - R_i)²`.
pub fn least_squares_estimate<'a>(candidates: &'a [GridFunction], history: &History) -> &'a GridFunction {
    &candidates[least_squares_index(candidates, history)]
}

/// Least-squares confidence set: membership is
/// `Σ_i (center(A_i) - f(A_i))² <= beta`.
#[derive(Clone, Debug)]
pub struct ConfidenceSet {
    pub center: GridFunction,
    pub beta: f64,
    pub history_actions: Vec<f64>,
}

impl ConfidenceSet {
    pub fn contains(&self, f: &GridFunction) -> bool {
        let sum: f64 = self
            .history_actions
            .iter()
            .map(|&a| {
                let d = self.center.eval(a) - f.eval(a);
                d * d
            })
            .sum();
        sum <= self.beta
    }
}

pub fn confidence_set_membership(f: &GridFunction, set: &ConfidenceSet) -> bool {
    set.contains(f)
}

/// Ensemble-relative width `max f(a) - min f(a)` over members.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetWidth {
    pub width: f64,
    /// Set when the member list was empty.
    pub empty: bool,
}

/// Width over pre-filtered members (see [`confidence_set_membership`]);
/// zero with a flag for an empty list, zero for a single member.
pub fn set_width(set: &ConfidenceSet, members: &[&GridFunction], a: f64) -> SetWidth {
    debug_assert!(members.iter().all(|f| set.contains(f)));
    if members.is_empty() {
        return SetWidth {
            width: 0.0,
            empty: true,
        };
    }
    let vals: Vec<f64> = members.iter().map(|f| f.eval(a)).collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    SetWidth {
        width: if members.len() <= 1 { 0.0 } else { max - min },
        empty: false,
    }
}

fn check_lambda(lambda: f64, c: f64, b: f64) -> Result<(), AgentError> {
    if b > 0.0 && lambda.abs() > 1.0 / (2.0 * c * b) + 1e-15 {
        return Err(AgentError::Precondition(format!(
            "|lambda| = {} exceeds 1/(2Cb) = {}",
            lambda.abs(),
            1.0 / (2.0 * c * b)
        )));
    }
    Ok(())
}

/// Fraction of simulated runs in which the squared-error martingale
/// inequality holds for every prefix:
/// `L_{2,n+1}(f) >= L_{2,n+1}(f0) + (1-2λσ²) Σ (f-f0)² - log(1/δ)/λ`.
pub fn martingale_check(
    f: &GridFunction,
    f0: &GridFunction,
    actions: &[f64],
    noise: &NoiseModel,
    lambda: f64,
    delta: f64,
    runs: usize,
    seed: u64,
) -> Result<f64, AgentError> {
    if lambda <= 0.0 {
        return Err(AgentError::Precondition(format!(
            "lambda = {lambda} must be positive for the log(1/δ)/λ penalty"
        )));
    }
    let c = f0.spec().c;
    check_lambda(lambda, c, noise.b)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AgentError::Precondition(format!("delta = {delta} outside (0,1)")));
    }
    let sigma2 = noise.sigma2;
    let penalty = (1.0 / delta).ln() / lambda;
    let factor = 1.0 - 2.0 * lambda * sigma2;
    let f_vals: Vec<f64> = actions.iter().map(|&a| f.eval(a)).collect();
    let f0_vals: Vec<f64> = actions.iter().map(|&a| f0.eval(a)).collect();
    let gap_sq: Vec<f64> = f_vals
        .iter()
        .zip(&f0_vals)
        .map(|(&u, &v)| (u - v) * (u - v))
        .collect();

    let passes: usize = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = rngutil::replication_stream(seed, actions.len() as u64, run as u64);
            let mut lf = 0.0; // L_{2,n+1}(f)
            let mut lf0 = 0.0;
            let mut gap = 0.0;
            let mut ok = true;
            for i in 0..actions.len() {
                let eta = noise.sample(&mut rng);
                let r = f0_vals[i] + eta;
                lf += (f_vals[i] - r) * (f_vals[i] - r);
                lf0 += (f0_vals[i] - r) * (f0_vals[i] - r);
                gap += gap_sq[i];
                if lf < lf0 + factor * gap - penalty - 1e-12 {
                    ok = false;
                    break;
                }
            }
            usize::from(ok)
        })
        .sum();
    Ok(passes as f64 / runs as f64)
}

/// Fraction of TS runs in which the true function stayed inside every
/// least-squares confidence set `F_n`, `n <= T`, with `β_n` from
/// [`ball_width`] over the finite candidate pool.
#[allow(clippy::too_many_arguments)]
pub fn empirical_coverage(
    prior: &PriorSpec,
    spec: &FunctionClassSpec,
    noise: &NoiseModel,
    t: u64,
    delta: f64,
    alpha: f64,
    lambda: f64,
    runs: usize,
    seed: u64,
    n_candidates: usize,
) -> Result<f64, AgentError> {
    check_lambda(lambda, spec.c, noise.b)?;
    if !(delta > 0.0 && delta < 1.0) || alpha < 0.0 {
        return Err(AgentError::Precondition(
            "delta in (0,1) and alpha >= 0 required".into(),
        ));
    }
    let params = BoundParams {
        alpha,
        delta,
        lambda,
        kappa_value: 1.0,
        covering_constant: 1.0,
        c: spec.c,
    };
    params.validate(noise.sigma2, noise.b, None)?;
    let log_cover = (n_candidates as f64).ln();
    // β_n depends on n only; precompute.
    let betas: Vec<f64> = (1..=t)
        .map(|n| ball_width(n, log_cover, &params, noise.sigma2, noise.b))
        .collect::<Result<_, _>>()?;

    let covered: usize = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = rngutil::replication_stream(seed, t, run as u64);
            let f0_seed = rngutil::splitmix64(seed ^ 0xf0f0 ^ run as u64);
            let f0 = sample_prior_function(prior, spec, f0_seed).expect("prior draw");
            let mut pool = vec![f0.clone()];
            for i in 1..n_candidates {
                let s = rngutil::splitmix64(f0_seed ^ (i as u64).wrapping_mul(0x2545_f491));
                pool.push(sample_prior_function(prior, spec, s).expect("prior draw"));
            }
            let sigma2_work = noise.sigma2.max(1e-12);
            let mut ensemble = ParticleEnsemble::from_pool(pool.clone(), sigma2_work);
            let mut sq_err = vec![0.0f64; n_candidates];
            let mut vals_at_actions: Vec<Vec<f64>> = vec![Vec::new(); n_candidates];
            let mut covered = true;
            for round in 0..t as usize {
                let a = ensemble.ts_select_action(&mut rng).expect("ts action");
                let r = f0.eval(a) + noise.sample(&mut rng);
                for (i, f) in pool.iter().enumerate() {
                    let v = f.eval(a);
                    vals_at_actions[i].push(v);
                    sq_err[i] += (v - r) * (v - r);
                }
                ensemble.update_posterior(a, r);
                ensemble.maybe_resample(&mut rng);
                // Least-squares center and the Eq.-lssets membership of f0.
                let mut center = 0usize;
                for i in 1..n_candidates {
                    if sq_err[i] < sq_err[center] {
                        center = i;
                    }
                }
                let dist: f64 = vals_at_actions[center]
                    .iter()
                    .zip(&vals_at_actions[0])
                    .map(|(&u, &v)| (u - v) * (u - v))
                    .sum();
                if dist > betas[round] {
                    covered = false;
                    break;
                }
            }
            usize::from(covered)
        })
        .sum();
    Ok(covered as f64 / runs as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    FixedGridUcb,
    Zooming,
    UniformRandom,
}

#[derive(Clone, Debug)]
struct Arm {
    pos: f64,
    count: u64,
    sum: f64,
}

/// State for the baseline policies.
#[derive(Clone, Debug)]
pub struct BaselineState {
    kind: BaselineKind,
    horizon: u64,
    t: u64,
    sigma2_hat: f64,
    arms: Vec<Arm>,
    zoom_grid: Vec<f64>,
}

impl BaselineState {
    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn active_arms(&self) -> usize {
        self.arms.len()
    }
}

/// Initializes a baseline. `n_arms` is the fixed-grid arm count (centers
/// `(2j+1)/2K`); `zoom_grid_n` the zooming activation grid resolution.
pub fn baseline_init(
    kind: BaselineKind,
    horizon: u64,
    n_arms: usize,
    sigma2_hat: f64,
    zoom_grid_n: usize,
) -> BaselineState {
    let arms = match kind {
        BaselineKind::FixedGridUcb => (0..n_arms)
            .map(|j| Arm {
                pos: (2 * j + 1) as f64 / (2 * n_arms) as f64,
                count: 0,
                sum: 0.0,
            })
            .collect(),
        _ => Vec::new(),
    };
    let zoom_grid = match kind {
        BaselineKind::Zooming => (0..zoom_grid_n)
            .map(|i| i as f64 / (zoom_grid_n as f64 - 1.0))
            .collect(),
        _ => Vec::new(),
    };
    BaselineState {
        kind,
        horizon: horizon.max(2),
        t: 0,
        sigma2_hat,
        arms,
        zoom_grid,
    }
}

fn zoom_radius(horizon: u64, count: u64) -> f64 {
    if count == 0 {
        f64::INFINITY
    } else {
        (8.0 * (horizon as f64).ln() / count as f64).sqrt()
    }
}

/// Selects the next action. Fixed-grid UCB plays every arm once in index
/// order, then maximises `mean + sqrt(2 σ̂² log t / n_k)`. Zooming activates
/// the lowest uncovered grid point (confidence radius `sqrt(8 log T / n_k)`)
/// and plays the arm maximising `mean + 2 r_k`.
pub fn baseline_select<R: Rng + ?Sized>(state: &mut BaselineState, rng: &mut R) -> f64 {
    match state.kind {
        BaselineKind::UniformRandom => rng.random(),
        BaselineKind::FixedGridUcb => {
            if let Some(arm) = state.arms.iter().find(|a| a.count == 0) {
                return arm.pos;
            }
            let t = (state.t + 1) as f64;
            let mut best = 0usize;
            let mut best_idx = f64::NEG_INFINITY;
            for (i, arm) in state.arms.iter().enumerate() {
                let idx = arm.sum / arm.count as f64
                    + (2.0 * state.sigma2_hat * t.ln() / arm.count as f64).sqrt();
                if idx > best_idx {
                    best_idx = idx;
                    best = i;
                }
            }
            state.arms[best].pos
        }
        BaselineKind::Zooming => {
            // Activation rule: add an arm at the lowest uncovered grid point.
            let uncovered = state.zoom_grid.iter().copied().find(|&x| {
                !state
                    .arms
                    .iter()
                    .any(|arm| (x - arm.pos).abs() <= zoom_radius(state.horizon, arm.count))
            });
            if let Some(x) = uncovered {
                state.arms.push(Arm {
                    pos: x,
                    count: 0,
                    sum: 0.0,
                });
            }
            let mut best = 0usize;
            let mut best_idx = f64::NEG_INFINITY;
            for (i, arm) in state.arms.iter().enumerate() {
                let idx = if arm.count == 0 {
                    f64::INFINITY
                } else {
                    arm.sum / arm.count as f64 + 2.0 * zoom_radius(state.horizon, arm.count)
                };
                if idx > best_idx {
                    best_idx = idx;
                    best = i;
                }
            }
            state.arms[best].pos
        }
    }
}

/// Records the observed reward for the arm played at `a`.
pub fn baseline_update(state: &mut BaselineState, a: f64, reward: f64) {
    state.t += 1;
    if matches!(state.kind, BaselineKind::UniformRandom) {
        return;
    }
    if let Some(arm) = state
        .arms
        .iter_mut()
        .min_by(|x, y| (x.pos - a).abs().partial_cmp(&(y.pos - a).abs()).unwrap())
    {
        arm.count += 1;
        arm.sum += reward;
    }
}

/// Configuration for an instrumented TS run with confidence-set tracking.
#[derive(Clone, Debug)]
pub struct ConfidenceRunConfig {
    pub spec: FunctionClassSpec,
    pub prior: PriorSpec,
    pub noise: NoiseModel,
    pub horizon: u64,
    pub n_candidates: usize,
    pub likelihood_sigma2: f64,
    /// Ball-width parameters; `β_t = ball_width(t, ln |pool|, ...)`.
    pub bound_params: BoundParams,
    /// κ(T) for the width-sum inequality.
    pub kappa_of_t: f64,
    /// Theoretical eluder bound at κ(T).
    pub dim_value: f64,
}

/// Outcome of one instrumented run, with both Appendix-A inequalities.
#[derive(Clone, Debug)]
pub struct ConfidenceRunReport {
    pub widths: Vec<f64>,
    pub width_sum: f64,
    pub width_sum_bound: f64,
    pub width_sum_ok: bool,
    pub covered_all_rounds: bool,
    pub cumulative_regret: f64,
    /// `regret <= C + Σ widths`; meaningful on covered runs.
    pub regret_width_ok: bool,
}

/// Runs TS for `horizon` rounds tracking the least-squares confidence sets
/// `F_t` (center, `β_t`) over the pool, their widths at the played actions,
/// coverage of the truth, and the two Appendix-A inequalities.
pub fn confidence_run(cfg: &ConfidenceRunConfig, seed: u64) -> Result<ConfidenceRunReport, AgentError> {
    cfg.bound_params.validate(cfg.noise.sigma2, cfg.noise.b, None)?;
    let mut rng = rngutil::stream(seed, 0xc0f1);
    let f0_seed = rngutil::splitmix64(seed ^ 0xf00d);
    let f0 = sample_prior_function(&cfg.prior, &cfg.spec, f0_seed)?;
    let mut pool = vec![f0.clone()];
    for i in 1..cfg.n_candidates {
        let s = rngutil::splitmix64(f0_seed ^ (i as u64).wrapping_mul(0x517c_c1b7));
        pool.push(sample_prior_function(&cfg.prior, &cfg.spec, s)?);
    }
    let mut ensemble = ParticleEnsemble::from_pool(pool.clone(), cfg.likelihood_sigma2);
    let f0_max = f0.max_value();
    let log_cover = (cfg.n_candidates as f64).ln();

    let n = cfg.n_candidates;
    let mut sq_err = vec![0.0f64; n];
    let mut vals: Vec<Vec<f64>> = vec![Vec::new(); n];
    // Squared distance to the current center, maintained incrementally and
    // rebuilt when the LS argmin switches.
    let mut dist = vec![0.0f64; n];
    let mut center = 0usize;

    let mut widths = Vec::with_capacity(cfg.horizon as usize);
    let mut covered = true;
    let mut regret = 0.0;
    let mut beta_t = 0.0;
    for t in 1..=cfg.horizon {
        let a = ensemble.ts_select_action(&mut rng)?;
        let r = f0.eval(a) + cfg.noise.sample(&mut rng);
        regret += f0_max - f0.eval(a);
        for (i, f) in pool.iter().enumerate() {
            let v = f.eval(a);
            vals[i].push(v);
            sq_err[i] += (v - r) * (v - r);
        }
        ensemble.update_posterior(a, r);
        ensemble.maybe_resample(&mut rng);

        let new_center = (0..n).fold(0usize, |best, i| if sq_err[i] < sq_err[best] { i } else { best });
        let k = vals[0].len();
        if new_center != center || k == 1 {
            center = new_center;
            for i in 0..n {
                dist[i] = (0..k)
                    .map(|j| {
                        let d = vals[center][j] - vals[i][j];
                        d * d
                    })
                    .sum();
            }
        } else {
            for i in 0..n {
                let d = vals[center][k - 1] - vals[i][k - 1];
                dist[i] += d * d;
            }
        }

        beta_t = ball_width(t, log_cover, &cfg.bound_params, cfg.noise.sigma2, cfg.noise.b)?;
        if dist[0] > beta_t {
            covered = false;
        }
        // Ensemble-relative width of F_t at the played action.
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut members = 0usize;
        for i in 0..n {
            if dist[i] <= beta_t {
                members += 1;
                let v = vals[i][k - 1];
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        widths.push(if members <= 1 { 0.0 } else { hi - lo });
    }

    let width_sum: f64 = widths.iter().sum();
    let dim = cfg.dim_value;
    let width_sum_bound = cfg.horizon as f64 * cfg.kappa_of_t
        + dim * cfg.spec.c
        + 4.0 * (dim * beta_t * cfg.horizon as f64).sqrt();
    Ok(ConfidenceRunReport {
        width_sum,
        width_sum_bound,
        width_sum_ok: width_sum <= width_sum_bound,
        covered_all_rounds: covered,
        cumulative_regret: regret,
        regret_width_ok: regret <= cfg.spec.c + width_sum,
        widths,
    })
}
