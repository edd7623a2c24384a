//! Closed-form bound expressions: the ball-width function, covering numbers,
//! the general regret bound, rate exponents, the discretization-error bound,
//! and the finite / linear / GLM eluder specialisations.
//!
//! All sums are evaluated exactly (horizons at desk scale stay below 1e6
//! terms); nothing here draws random numbers.

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Free parameters of the ball-width function and regret bound.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundParams {
    /// Cover radius α (0 selects the finite-class limit path).
    pub alpha: f64,
    /// Failure probability δ in (0,1).
    pub delta: f64,
    /// MGF parameter λ.
    pub lambda: f64,
    /// κ(T), the width threshold.
    pub kappa_value: f64,
    /// Hidden constant of the Θ(α^{-1/(M+1)}) covering-number law.
    pub covering_constant: f64,
    /// Range bound C.
    pub c: f64,
}

impl BoundParams {
    /// Validates `|λ| <= 1/(2Cb)`, `1 - 2λσ² > 0`, `δ ∈ (0,1)`, `λ > 0`,
    /// and `δ <= 1/(2T)` when a horizon is supplied.
    pub fn validate(&self, sigma2: f64, b: f64, horizon: Option<u64>) -> Result<(), BoundsError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(BoundsError::Precondition(format!("delta = {} outside (0,1)", self.delta)));
        }
        if !(self.lambda > 0.0) {
            return Err(BoundsError::Precondition(format!("lambda = {} must be positive", self.lambda)));
        }
        if b > 0.0 && self.lambda.abs() > 1.0 / (2.0 * self.c * b) + 1e-15 {
            return Err(BoundsError::Precondition(format!(
                "|lambda| = {} exceeds 1/(2Cb) = {}",
                self.lambda.abs(),
                1.0 / (2.0 * self.c * b)
            )));
        }
        if 1.0 - 2.0 * self.lambda * sigma2 <= 0.0 {
            return Err(BoundsError::Precondition(format!(
                "1 - 2 lambda sigma2 = {} must be positive",
                1.0 - 2.0 * self.lambda * sigma2
            )));
        }
        if self.alpha < 0.0 {
            return Err(BoundsError::Precondition(format!("alpha = {} negative", self.alpha)));
        }
        if let Some(t) = horizon {
            if self.delta > 1.0 / (2.0 * t as f64) + 1e-15 {
                return Err(BoundsError::Precondition(format!(
                    "delta = {} exceeds 1/(2T) = {}",
                    self.delta,
                    1.0 / (2.0 * t as f64)
                )));
            }
        }
        Ok(())
    }
}

/// Per-step noise tail sums shared by the ball-width and discretization
/// bounds: the Gaussian branch runs to `floor(n0)` and the exponential
/// branch from `ceil(n0)`, `n0 = sqrt((δ/4) exp(σ²/2b²))` (infinite for
/// `b = 0`, leaving only the Gaussian branch).
fn tail_sums(n: u64, sigma2: f64, b: f64, delta: f64) -> (f64, f64) {
    let ln_n0 = if b == 0.0 {
        f64::INFINITY
    } else {
        0.5 * (delta / 4.0).ln() + sigma2 / (4.0 * b * b)
    };
    let (gauss_hi, exp_lo) = if ln_n0.is_infinite() || ln_n0 >= (n as f64).ln() {
        (n, n + 1) // second sum empty
    } else {
        let n0 = ln_n0.exp();
        (n0.floor() as u64, n0.ceil().max(1.0) as u64)
    };
    let mut gauss = 0.0;
    for i in 1..=gauss_hi.min(n) {
        gauss += (2.0 * sigma2 * (4.0 * (i * i) as f64 / delta).ln()).sqrt();
    }
    let mut exponential = 0.0;
    for i in exp_lo.max(1)..=n {
        exponential += 2.0 * b * (4.0 * (i * i) as f64 / delta).ln();
    }
    (gauss, exponential)
}

/// The ball-width function β*_n.
///
/// `log_cover` is `log N(α, F, ||·||_∞)`; the δ term is added internally.
/// With `α = 0` the finite-class limit `log(N/δ) / (λ(1-2λσ²))` is returned.
pub fn ball_width(
    n: u64,
    log_cover: f64,
    params: &BoundParams,
    sigma2: f64,
    b: f64,
) -> Result<f64, BoundsError> {
    params.validate(sigma2, b, None)?;
    let lam = params.lambda;
    let denom = 1.0 - 2.0 * lam * sigma2;
    let log_cover_with_delta = log_cover + (1.0 / params.delta).ln();
    if params.alpha == 0.0 {
        return Ok(log_cover_with_delta / (lam * denom));
    }
    let alpha = params.alpha;
    let (gauss, exponential) = tail_sums(n, sigma2, b, params.delta);
    let bracket = log_cover_with_delta / (2.0 * lam * alpha)
        + n as f64 * (4.0 * params.c + alpha) * (1.0 - lam * sigma2)
        + gauss
        + exponential;
    Ok(2.0 * alpha / denom * bracket)
}

/// Which covering-number law applies.
#[derive(Clone, Copy, Debug)]
pub enum ClassKind {
    /// `F_{C,M,L}`: `log N = Θ(α^{-1/(M+1)})`.
    Smooth { m: usize },
    /// Finite class: `log |F|`, independent of α.
    Finite { size: f64 },
    /// (Generalised) linear: `O(d log(1/α))`.
    Linear { d: u32 },
}

pub fn covering_number_log(alpha: f64, kind: ClassKind, covering_constant: f64) -> f64 {
    assert!(alpha > 0.0 || matches!(kind, ClassKind::Finite { .. }));
    match kind {
        ClassKind::Smooth { m } => covering_constant * alpha.powf(-1.0 / (m as f64 + 1.0)),
        ClassKind::Finite { size } => size.ln(),
        ClassKind::Linear { d } => (covering_constant * d as f64 * (1.0 / alpha).ln()).max(0.0),
    }
}

/// `T κ(T) + (dim + 1) C + 4 sqrt(dim β*_T T)`.
pub fn general_regret_bound(t: u64, dim_value: f64, beta_star_t: f64, kappa_t: f64, c: f64) -> f64 {
    assert!(dim_value >= 0.0 && beta_star_t >= 0.0 && kappa_t >= 0.0 && c >= 0.0);
    t as f64 * kappa_t + (dim_value + 1.0) * c + 4.0 * (dim_value * beta_star_t * t as f64).sqrt()
}

/// The rate exponents, exact as rationals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exponents {
    /// Bayesian-regret upper rate `(2M²+11M+10)/(4M²+14M+12)`.
    pub upper: Ratio<i64>,
    /// Lower rate `(M+2)/(2M+3)`.
    pub lower: Ratio<i64>,
    /// κ(T) exponent `-(1/2)(2M²+3M+2)/(2M²+7M+6)`.
    pub kappa_exp: Ratio<i64>,
    /// α(T) exponent `-(M+1)/(M+2)`.
    pub alpha_exp: Ratio<i64>,
}

impl Exponents {
    pub fn gap(&self) -> Ratio<i64> {
        self.upper - self.lower
    }
    pub fn upper_f64(&self) -> f64 {
        self.upper.to_f64().unwrap()
    }
    pub fn lower_f64(&self) -> f64 {
        self.lower.to_f64().unwrap()
    }
    pub fn kappa_exp_f64(&self) -> f64 {
        self.kappa_exp.to_f64().unwrap()
    }
    pub fn alpha_exp_f64(&self) -> f64 {
        self.alpha_exp.to_f64().unwrap()
    }
}

pub fn exponents(m: u64) -> Exponents {
    let m = m as i64;
    Exponents {
        upper: Ratio::new(2 * m * m + 11 * m + 10, 4 * m * m + 14 * m + 12),
        lower: Ratio::new(m + 2, 2 * m + 3),
        kappa_exp: -Ratio::new(2 * m * m + 3 * m + 2, 2 * (2 * m * m + 7 * m + 6)),
        alpha_exp: -Ratio::new(m + 1, m + 2),
    }
}

/// Discretization-error bound: `2αn(4C+α)(1-λσ²)` plus the `2α`-scaled noise
/// tail sums.
pub fn discretization_error_bound(
    n: u64,
    alpha: f64,
    c: f64,
    lambda: f64,
    sigma2: f64,
    b: f64,
    delta: f64,
) -> Result<f64, BoundsError> {
    if b > 0.0 && lambda.abs() > 1.0 / (2.0 * c * b) + 1e-15 {
        return Err(BoundsError::Precondition(format!(
            "|lambda| = {} exceeds 1/(2Cb)",
            lambda.abs()
        )));
    }
    if alpha < 0.0 || !(delta > 0.0 && delta < 1.0) {
        return Err(BoundsError::Precondition("alpha >= 0 and delta in (0,1) required".into()));
    }
    let (gauss, exponential) = tail_sums(n, sigma2, b, delta);
    Ok(2.0 * alpha * n as f64 * (4.0 * c + alpha) * (1.0 - lambda * sigma2)
        + 2.0 * alpha * (gauss + exponential))
}

/// Scalar parameters of the finite / linear / GLM specialisations.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ParametricClassParams {
    pub d: u32,
    pub s: f64,
    pub gamma: f64,
    pub h_lo: f64,
    pub h_hi: f64,
    pub r: f64,
    pub cardinality: u64,
}

impl ParametricClassParams {
    pub fn validate(&self) -> Result<(), BoundsError> {
        if self.h_lo > self.h_hi {
            return Err(BoundsError::Precondition("h_lo > h_hi".into()));
        }
        if self.r < 1.0 {
            return Err(BoundsError::Precondition("r must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParametricKind {
    Finite,
    Linear,
    Glm,
}

/// Eluder-dimension bounds for the parametric classes.
pub fn parametric_eluder_bound(kind: ParametricKind, p: &ParametricClassParams, eps: f64) -> f64 {
    assert!(eps > 0.0);
    let e_factor = std::f64::consts::E / (std::f64::consts::E - 1.0);
    match kind {
        ParametricKind::Finite => p.cardinality as f64,
        ParametricKind::Linear => {
            3.0 * p.d as f64 * e_factor * (3.0 + 3.0 * (2.0 * p.s / eps).powi(2)).ln() + 1.0
        }
        ParametricKind::Glm => {
            let r2 = p.r * p.r;
            3.0 * p.d as f64 * r2 * e_factor
                * (3.0 * r2 + 3.0 * r2 * (2.0 * p.s * p.h_hi / eps).powi(2)).ln()
                + 1.0
        }
    }
}

/// One row of the composed upper-bound pipeline.
#[derive(Clone, Copy, Debug)]
pub struct PipelinePoint {
    pub t: u64,
    pub alpha: f64,
    pub kappa: f64,
    pub beta_star: f64,
    pub dim_bound: f64,
    pub regret_bound: f64,
}

/// Configuration of the composed pipeline: covering law -> ball width ->
/// general bound, with the rate-optimal α(T) and κ(T) schedules.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub m: usize,
    pub c: f64,
    pub l: f64,
    pub sigma2: f64,
    pub b: f64,
    pub lambda: f64,
    pub covering_constant: f64,
}

/// Composes the Theorem-2 ingredients numerically: for each horizon, sets
/// `α(T) = T^{-(M+1)/(M+2)}`, `κ(T) = T^{kappa_exp}`, `δ(T) = 1/(2T)`, takes
/// the smooth-class covering law and the order-`(κ/L)^{-1/(M+1)}` eluder
/// bound, and evaluates the regret bound.
pub fn theorem2_pipeline(cfg: &PipelineConfig, horizons: &[u64]) -> Result<Vec<PipelinePoint>, BoundsError> {
    let exps = exponents(cfg.m as u64);
    let mut out = Vec::with_capacity(horizons.len());
    for &t in horizons {
        let tf = t as f64;
        let alpha = tf.powf(exps.alpha_exp_f64());
        let kappa = tf.powf(exps.kappa_exp_f64());
        let delta = 1.0 / (2.0 * tf);
        let params = BoundParams {
            alpha,
            delta,
            lambda: cfg.lambda,
            kappa_value: kappa,
            covering_constant: cfg.covering_constant,
            c: cfg.c,
        };
        params.validate(cfg.sigma2, cfg.b, Some(t))?;
        let log_cover = covering_number_log(alpha, ClassKind::Smooth { m: cfg.m }, cfg.covering_constant);
        let beta_star = ball_width(t, log_cover, &params, cfg.sigma2, cfg.b)?;
        let dim_bound = (kappa / cfg.l).powf(-1.0 / (cfg.m as f64 + 1.0));
        let regret_bound = general_regret_bound(t, dim_bound, beta_star, kappa, cfg.c);
        out.push(PipelinePoint {
            t,
            alpha,
            kappa,
            beta_star,
            dim_bound,
            regret_bound,
        });
    }
    Ok(out)
}

/// CSV `T,beta_star,dim_bound,regret_bound` for a pipeline sweep.
pub fn pipeline_to_csv(points: &[PipelinePoint]) -> String {
    let mut out = String::from("T,beta_star,dim_bound,regret_bound\n");
    for p in points {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e}\n",
            p.t, p.beta_star, p.dim_bound, p.regret_bound
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64, delta: f64, lambda: f64) -> BoundParams {
        BoundParams {
            alpha,
            delta,
            lambda,
            kappa_value: 1.0,
            covering_constant: 1.0,
            c: 1.0,
        }
    }

    #[test]
    fn finite_class_limit_value() {
        // |F| = 10, delta = 0.1, lambda = 0.25, sigma2 = 1:
        // log(100) / (0.25 * 0.5) = 36.84136148790474.
        let p = params(0.0, 0.1, 0.25);
        let b = ball_width(0, (10f64).ln(), &p, 1.0, 0.1).unwrap();
        assert!((b - 36.84136148790474).abs() < 1e-9, "{b}");
    }

    #[test]
    fn large_b_keeps_only_gaussian_branch() {
        // With b large, n0 >= n and the exponential branch is empty, so the
        // value is unchanged by pushing b higher.
        let p = params(0.1, 0.01, 0.05);
        let b1 = ball_width(100, 1.0, &p, 1.0, 1e-6).unwrap();
        let b2 = ball_width(100, 1.0, &p, 1.0, 1e-9).unwrap();
        assert!((b1 - b2).abs() < 1e-12);
    }

    #[test]
    fn ball_width_nondecreasing_in_n() {
        let p = params(0.05, 0.01, 0.1);
        let mut last = 0.0;
        for n in [0u64, 1, 2, 5, 10, 100, 1000] {
            let b = ball_width(n, 2.0, &p, 0.5, 0.3).unwrap();
            assert!(b >= last, "n={n}: {b} < {last}");
            last = b;
        }
    }

    #[test]
    fn ball_width_nondecreasing_in_b() {
        let p = params(0.05, 0.01, 0.1);
        let mut last = 0.0;
        for b in [0.0, 0.1, 0.5, 1.0, 2.0] {
            let v = ball_width(500, 2.0, &p, 0.5, b).unwrap();
            assert!(v >= last - 1e-9, "b={b}: {v} < {last}");
            last = v;
        }
    }

    #[test]
    fn precondition_errors() {
        // lambda beyond 1/(2Cb)
        let p = params(0.1, 0.01, 10.0);
        assert!(ball_width(10, 1.0, &p, 0.01, 1.0).is_err());
        // 1 - 2 lambda sigma2 <= 0
        let p = params(0.1, 0.01, 0.6);
        assert!(ball_width(10, 1.0, &p, 1.0, 0.0).is_err());
        // delta > 1/(2T)
        let p = params(0.1, 0.4, 0.1);
        assert!(p.validate(1.0, 0.0, Some(100)).is_err());
    }

    #[test]
    fn covering_laws() {
        assert!((covering_number_log(0.01, ClassKind::Smooth { m: 0 }, 1.0) - 100.0).abs() < 1e-12);
        // |F| = e gives exactly 1 for any alpha.
        let e = std::f64::consts::E;
        for alpha in [0.5, 0.01, 0.7] {
            assert!((covering_number_log(alpha, ClassKind::Finite { size: e }, 1.0) - 1.0).abs() < 1e-15);
        }
        // Halving alpha never decreases the value.
        for kind in [
            ClassKind::Smooth { m: 1 },
            ClassKind::Finite { size: 5.0 },
            ClassKind::Linear { d: 3 },
        ] {
            let mut alpha = 1.0;
            let mut last = covering_number_log(alpha, kind, 2.0);
            for _ in 0..10 {
                alpha /= 2.0;
                let v = covering_number_log(alpha, kind, 2.0);
                assert!(v >= last - 1e-12);
                last = v;
            }
        }
    }

    #[test]
    fn regret_bound_values() {
        // dim = 0 degenerates to T kappa + C.
        assert!((general_regret_bound(100, 0.0, 50.0, 0.01, 1.0) - 2.0).abs() < 1e-12);
        // Hand-evaluated: 1 + 11 + 4 sqrt(50000).
        let v = general_regret_bound(100, 10.0, 50.0, 0.01, 1.0);
        assert!((v - (12.0 + 4.0 * 50000f64.sqrt())).abs() < 1e-9);
        assert!((v - 906.4271909999159).abs() < 1e-9, "{v}");
    }

    #[test]
    fn regret_bound_monotone() {
        let base = general_regret_bound(100, 10.0, 50.0, 0.01, 1.0);
        assert!(general_regret_bound(200, 10.0, 50.0, 0.01, 1.0) >= base);
        assert!(general_regret_bound(100, 11.0, 50.0, 0.01, 1.0) >= base);
        assert!(general_regret_bound(100, 10.0, 51.0, 0.01, 1.0) >= base);
        assert!(general_regret_bound(100, 10.0, 50.0, 0.02, 1.0) >= base);
        assert!(general_regret_bound(100, 10.0, 50.0, 0.01, 1.1) >= base);
    }

    #[test]
    fn exponent_values_exact() {
        let e0 = exponents(0);
        assert_eq!(e0.upper, Ratio::new(5, 6));
        assert_eq!(e0.lower, Ratio::new(2, 3));
        assert_eq!(e0.kappa_exp, -Ratio::new(1, 6));
        assert_eq!(e0.alpha_exp, -Ratio::new(1, 2));
        let e1 = exponents(1);
        assert_eq!(e1.upper, Ratio::new(23, 30));
        let big = exponents(1_000_000);
        assert!((big.upper_f64() - 0.5).abs() < 1e-5);
    }

    #[test]
    fn gap_exponent_matches_closed_form() {
        for m in 0..=50u64 {
            let e = exponents(m);
            let mi = m as i64;
            let gap = Ratio::new(3 * mi + 2, 4 * mi * mi + 14 * mi + 12);
            assert_eq!(e.gap(), gap, "m={m}");
            assert!(e.upper > e.lower);
            assert!((e.gap().to_f64().unwrap() - (e.upper_f64() - e.lower_f64())).abs() < 1e-12);
        }
    }

    #[test]
    fn discretization_zero_alpha_is_zero() {
        assert_eq!(
            discretization_error_bound(100, 0.0, 1.0, 0.1, 1.0, 0.5, 0.05).unwrap(),
            0.0
        );
    }

    #[test]
    fn discretization_bound_holds_in_simulation() {
        // Monte-Carlo check of the discretization-error inequality: for
        // random f and a perturbation f^a within alpha in sup norm, the
        // absolute discretization error stays below the bound for every
        // prefix in at least (1 - delta - 3 SE) of runs.
        use crate::funclass::{sample_prior_function, FunctionClassSpec, PriorSpec};
        use crate::noise::NoiseModel;
        use rand::Rng;

        let spec = FunctionClassSpec::new(1.0, 0, 5.0, 201).unwrap();
        let noise = NoiseModel::gaussian(0.7);
        let (alpha, lambda, delta, c) = (0.05, 0.2, 0.1, 1.0);
        let n = 60u64;
        let bounds: Vec<f64> = (1..=n)
            .map(|i| discretization_error_bound(i, alpha, c, lambda, noise.sigma2, noise.b, delta).unwrap())
            .collect();
        let runs = 1000;
        let mut ok_runs = 0;
        for run in 0..runs {
            let mut rng = crate::rngutil::stream(0xd15c, run);
            let f = sample_prior_function(&PriorSpec::default_trig(), &spec, run).unwrap();
            let f0 = sample_prior_function(&PriorSpec::default_trig(), &spec, run + 5000).unwrap();
            // f^a: f shifted by a uniform offset within [-alpha, alpha].
            let shift = alpha * (2.0 * rng.random::<f64>() - 1.0);
            let factor = 1.0 - 2.0 * lambda * noise.sigma2;
            let (mut lf, mut lfa, mut gap) = (0.0f64, 0.0f64, 0.0f64);
            let mut ok = true;
            for i in 0..n as usize {
                let a: f64 = rng.random();
                let r = f0.eval(a) + noise.sample(&mut rng);
                let (v, va, v0) = (f.eval(a), (f.eval(a) + shift).clamp(0.0, 1.0), f0.eval(a));
                lf += (v - r) * (v - r);
                lfa += (va - r) * (va - r);
                gap += (va - v0) * (va - v0) - (v - v0) * (v - v0);
                let lhs = (lf - lfa + factor * gap).abs();
                if lhs > bounds[i] + 1e-12 {
                    ok = false;
                    break;
                }
            }
            ok_runs += usize::from(ok);
        }
        let frac = ok_runs as f64 / runs as f64;
        let se = (delta * (1.0 - delta) / runs as f64).sqrt();
        assert!(frac >= 1.0 - delta - 3.0 * se, "fraction {frac}");
    }

    #[test]
    fn discretization_linear_in_alpha() {
        // At fixed n the expression is exactly linear in alpha up to the
        // alpha^2 term inside (4C + alpha); check the two-point slope against
        // a third point at small alpha.
        let f = |a: f64| discretization_error_bound(50, a, 1.0, 0.1, 1.0, 0.5, 0.05).unwrap();
        let (a1, a2) = (1e-6, 2e-6);
        let slope = (f(a2) - f(a1)) / (a2 - a1);
        let predicted = f(3e-6) / 3e-6;
        assert!((slope - predicted).abs() / predicted < 1e-4);
    }

    #[test]
    fn parametric_bounds() {
        let p = ParametricClassParams {
            d: 1,
            s: 1.0,
            gamma: 1.0,
            h_lo: 1.0,
            h_hi: 1.0,
            r: 1.0,
            cardinality: 7,
        };
        p.validate().unwrap();
        assert_eq!(parametric_eluder_bound(ParametricKind::Finite, &p, 0.5), 7.0);
        let e = std::f64::consts::E;
        let lin = parametric_eluder_bound(ParametricKind::Linear, &p, 2.0);
        let want = 3.0 * e / (e - 1.0) * 6f64.ln() + 1.0;
        assert!((lin - want).abs() < 1e-12);
        assert!((lin - 9.50).abs() < 0.01, "{lin}");
        // Unit slope ratio collapses GLM to linear.
        let glm = parametric_eluder_bound(ParametricKind::Glm, &p, 2.0);
        assert!((glm - lin).abs() < 1e-12);
    }

    #[test]
    fn pipeline_runs_and_grows() {
        let cfg = PipelineConfig {
            m: 0,
            c: 1.0,
            l: 1.0,
            sigma2: 1.0,
            b: 1e-6,
            lambda: 0.25,
            covering_constant: 1.0,
        };
        let pts = theorem2_pipeline(&cfg, &[256, 1024, 4096]).unwrap();
        assert!(pts.windows(2).all(|w| w[1].regret_bound > w[0].regret_bound));
        assert!(pts.windows(2).all(|w| w[1].beta_star > w[0].beta_star));
    }
}
