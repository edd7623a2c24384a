//! `(σ², b)`-sub-exponential reward noise.
//!
//! A model certifies `E e^{λη} <= e^{λ²σ²/2}` for all `|λ| <= 1/b`, with
//! `b = 0` read as "all λ" (the sub-Gaussian case). Shipped certificates come
//! from standard MGF algebra and are themselves checked empirically by
//! [`verify_subexponential`].

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("invalid noise parameter: {0}")]
    InvalidParam(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "kebab-case")]
pub enum NoiseFamily {
    Gaussian { sigma: f64 },
    Laplace { scale: f64 },
    /// Exponential with the given rate, centred to mean zero.
    ShiftedExponential { rate: f64 },
    BoundedUniform { half_width: f64 },
}

/// A zero-mean noise family together with its `(σ², b)` certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(flatten)]
    pub family: NoiseFamily,
    pub sigma2: f64,
    pub b: f64,
}

/// Sentinel scale certifying "any λ" for the Gaussian family while keeping
/// the ball-width branch arithmetic finite.
pub const GAUSSIAN_B_SENTINEL: f64 = 1e-6;

impl NoiseModel {
    /// Gaussian(σ): exact equality in the MGF bound; `b` is a sentinel.
    pub fn gaussian(sigma: f64) -> Self {
        Self {
            family: NoiseFamily::Gaussian { sigma },
            sigma2: sigma * sigma,
            b: GAUSSIAN_B_SENTINEL,
        }
    }

    /// Laplace(c): MGF `1/(1-c²λ²) <= e^{2c²λ²}` for `|λ| <= 1/(c√2)`.
    pub fn laplace(scale: f64) -> Self {
        Self {
            family: NoiseFamily::Laplace { scale },
            sigma2: 4.0 * scale * scale,
            b: scale * 2f64.sqrt(),
        }
    }

    /// Centred Exponential(rate): `e^{-λ/r}/(1-λ/r) <= e^{2λ²/r²}` for
    /// `|λ| <= r/2`.
    pub fn shifted_exponential(rate: f64) -> Self {
        Self {
            family: NoiseFamily::ShiftedExponential { rate },
            sigma2: 4.0 / (rate * rate),
            b: 2.0 / rate,
        }
    }

    /// Uniform on `[-u, u]`: sub-Gaussian with `σ² = u²/3`
    /// (`sinh(x)/x <= e^{x²/6}`).
    pub fn bounded_uniform(half_width: f64) -> Self {
        Self {
            family: NoiseFamily::BoundedUniform { half_width },
            sigma2: half_width * half_width / 3.0,
            b: 0.0,
        }
    }

    /// Same family with a caller-supplied certificate (used to probe
    /// certificates that should fail verification).
    pub fn with_certificate(family: NoiseFamily, sigma2: f64, b: f64) -> Self {
        Self { family, sigma2, b }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let ok = match self.family {
            NoiseFamily::Gaussian { sigma } => sigma >= 0.0,
            NoiseFamily::Laplace { scale } => scale > 0.0,
            NoiseFamily::ShiftedExponential { rate } => rate > 0.0,
            NoiseFamily::BoundedUniform { half_width } => half_width >= 0.0,
        };
        if !ok || !(self.sigma2 > 0.0) && !matches!(self.family, NoiseFamily::BoundedUniform { .. }) {
            return Err(NoiseError::InvalidParam(format!("{self:?}")));
        }
        if self.b < 0.0 {
            return Err(NoiseError::InvalidParam("b must be nonnegative".into()));
        }
        Ok(())
    }

    /// One draw, deterministic under the generator stream.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            NoiseFamily::Gaussian { sigma } => {
                if sigma == 0.0 {
                    0.0
                } else {
                    Normal::new(0.0, sigma).unwrap().sample(rng)
                }
            }
            NoiseFamily::Laplace { scale } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
            }
            NoiseFamily::ShiftedExponential { rate } => {
                let u: f64 = rng.random();
                -((1.0 - u).max(f64::MIN_POSITIVE)).ln() / rate - 1.0 / rate
            }
            NoiseFamily::BoundedUniform { half_width } => {
                if half_width == 0.0 {
                    0.0
                } else {
                    half_width * (2.0 * rng.random::<f64>() - 1.0)
                }
            }
        }
    }

    /// Tail bound from the sub-exponential certificate:
    /// `2 exp(-x²/2σ²)` for `x <= σ²/b`, else `2 exp(-x/2b)`; the Gaussian
    /// branch everywhere when `b = 0`.
    pub fn tail_bound(&self, x: f64) -> f64 {
        assert!(x >= 0.0, "tail_bound needs x >= 0");
        if self.b == 0.0 || x <= self.sigma2 / self.b {
            2.0 * (-x * x / (2.0 * self.sigma2)).exp()
        } else {
            2.0 * (-x / (2.0 * self.b)).exp()
        }
    }
}

/// Per-λ comparison of the empirical log-MGF against `λ²σ²/2`.
#[derive(Clone, Debug)]
pub struct LambdaCheck {
    pub lambda: f64,
    /// False when `|λ| > 1/b`: flagged and skipped, not fatal.
    pub in_certified_range: bool,
    pub empirical_log_mgf: f64,
    pub bound: f64,
    pub mc_standard_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct VerificationReport {
    pub checks: Vec<LambdaCheck>,
    /// True when every in-range λ passes.
    pub pass: bool,
}

/// Estimates `log E e^{λη}` by log-sum-exp over `n_samples` draws and checks
/// it against the certified bound plus three Monte-Carlo standard errors.
pub fn verify_subexponential(
    model: &NoiseModel,
    lambda_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> VerificationReport {
    let mut rng = crate::rngutil::stream(seed, 0x6e73);
    let draws: Vec<f64> = (0..n_samples).map(|_| model.sample(&mut rng)).collect();

    let mut checks = Vec::with_capacity(lambda_grid.len());
    let mut pass = true;
    for &lambda in lambda_grid {
        let in_range = model.b == 0.0 || lambda.abs() <= 1.0 / model.b + 1e-12;
        let bound = lambda * lambda * model.sigma2 / 2.0;
        if !in_range {
            checks.push(LambdaCheck {
                lambda,
                in_certified_range: false,
                empirical_log_mgf: f64::NAN,
                bound,
                mc_standard_error: f64::NAN,
                pass: true,
            });
            continue;
        }
        let lse1 = log_sum_exp(draws.iter().map(|&e| lambda * e));
        let lse2 = log_sum_exp(draws.iter().map(|&e| 2.0 * lambda * e));
        let n = n_samples as f64;
        let log_mean = lse1 - n.ln();
        // relative variance of e^{λη}: exp(lse2 - 2 lse1 + ln n) - 1
        let rel_var = (lse2 - 2.0 * lse1 + n.ln()).exp() - 1.0;
        let se_log = (rel_var.max(0.0) / n).sqrt();
        let ok = log_mean <= bound + 3.0 * se_log;
        pass &= ok;
        checks.push(LambdaCheck {
            lambda,
            in_certified_range: true,
            empirical_log_mgf: log_mean,
            bound,
            mc_standard_error: se_log,
            pass: ok,
        });
    }
    VerificationReport { checks, pass }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Evenly spaced λ grid over the certified range `[-1/b, 1/b]` (clamped to
/// `[-cap, cap]` for `b = 0`).
pub fn certified_lambda_grid(model: &NoiseModel, points: usize, cap: f64) -> Vec<f64> {
    let lim = if model.b == 0.0 { cap } else { (1.0 / model.b).min(cap) };
    (0..points)
        .map(|i| -lim + 2.0 * lim * i as f64 / (points as f64 - 1.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_uniform_is_zero() {
        let m = NoiseModel::bounded_uniform(0.0);
        let mut rng = crate::rngutil::stream(0, 1);
        for _ in 0..100 {
            assert_eq!(m.sample(&mut rng), 0.0);
        }
    }

    #[test]
    fn gaussian_stream_reproducible() {
        let m = NoiseModel::gaussian(1.0);
        let a: Vec<f64> = {
            let mut rng = crate::rngutil::stream(42, 7);
            (0..50).map(|_| m.sample(&mut rng)).collect()
        };
        let b: Vec<f64> = {
            let mut rng = crate::rngutil::stream(42, 7);
            (0..50).map(|_| m.sample(&mut rng)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn laplace_variance_matches_closed_form() {
        // Var = 2 c^2 for Laplace(c); c = 0.5 gives 0.5.
        let m = NoiseModel::laplace(0.5);
        let mut rng = crate::rngutil::stream(3, 9);
        let n = 1_000_000usize;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = m.sample(&mut rng);
            s += x;
            s2 += x * x;
        }
        let var = s2 / n as f64 - (s / n as f64).powi(2);
        assert!((var - 0.5).abs() < 0.01, "var {var}");
    }

    #[test]
    fn samples_mean_zero_all_families() {
        for m in [
            NoiseModel::gaussian(1.0),
            NoiseModel::laplace(0.7),
            NoiseModel::shifted_exponential(2.0),
            NoiseModel::bounded_uniform(1.5),
        ] {
            let mut rng = crate::rngutil::stream(11, 13);
            let n = 1_000_000usize;
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let x = m.sample(&mut rng);
                s += x;
                s2 += x * x;
            }
            let mean = s / n as f64;
            let sd = (s2 / n as f64 - mean * mean).sqrt();
            let se = sd / (n as f64).sqrt();
            assert!(mean.abs() <= 4.0 * se, "{:?}: mean {mean} se {se}", m.family);
        }
    }

    #[test]
    fn shipped_certificates_verify() {
        // Spec invariant: 21-point λ grid spanning the certified range.
        for m in [
            NoiseModel::gaussian(1.0),
            NoiseModel::laplace(0.4),
            NoiseModel::shifted_exponential(1.5),
            NoiseModel::bounded_uniform(1.0),
        ] {
            let grid = certified_lambda_grid(&m, 21, 2.0);
            let rep = verify_subexponential(&m, &grid, 200_000, 5);
            assert!(rep.pass, "{:?}: {:#?}", m.family, rep.checks);
        }
    }

    #[test]
    fn understated_certificate_fails() {
        // Laplace with σ² = c²/10 understates the true MGF.
        let c = 0.5;
        let m = NoiseModel::with_certificate(
            NoiseFamily::Laplace { scale: c },
            c * c / 10.0,
            c * 2f64.sqrt(),
        );
        let grid = certified_lambda_grid(&m, 21, 10.0);
        let rep = verify_subexponential(&m, &grid, 200_000, 5);
        assert!(!rep.pass);
    }

    #[test]
    fn out_of_range_lambda_flagged_not_fatal() {
        let m = NoiseModel::laplace(1.0); // 1/b = 1/sqrt(2)
        let rep = verify_subexponential(&m, &[0.0, 0.5, 5.0], 10_000, 1);
        assert!(rep.checks[2].in_certified_range == false);
        assert!(rep.pass);
    }

    #[test]
    fn tail_bound_formula() {
        let m = NoiseModel::with_certificate(NoiseFamily::Gaussian { sigma: 1.0 }, 1.0, 0.5);
        assert_eq!(m.tail_bound(0.0), 2.0);
        // Branch switch at σ²/b = 2.
        assert!((m.tail_bound(2.0) - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!((m.tail_bound(3.0) - 2.0 * (-3.0f64).exp()).abs() < 1e-15);
        let g = NoiseModel::bounded_uniform(1.0);
        assert!((g.tail_bound(10.0) - 2.0 * (-100.0 / (2.0 / 3.0) / 2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn tail_frequencies_below_bound_on_grid() {
        // Ten-point x grid per family; empirical frequency never exceeds the
        // certified bound plus three binomial standard errors.
        for m in [
            NoiseModel::gaussian(1.0),
            NoiseModel::laplace(0.5),
            NoiseModel::shifted_exponential(1.0),
        ] {
            let mut rng = crate::rngutil::stream(17, 23);
            let n = 1_000_000usize;
            let draws: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
            for i in 1..=10 {
                let x = 0.4 * i as f64;
                let freq = draws.iter().filter(|v| v.abs() >= x).count() as f64 / n as f64;
                let bound = m.tail_bound(x);
                let se = (freq * (1.0 - freq) / n as f64).sqrt();
                assert!(
                    freq <= bound + 3.0 * se,
                    "{:?} x={x}: freq {freq} bound {bound}",
                    m.family
                );
            }
        }
    }

    #[test]
    fn json_shape_has_family_and_params() {
        let m = NoiseModel::laplace(0.5);
        let j = serde_json::to_value(m).unwrap();
        assert_eq!(j["family"], "laplace");
        assert_eq!(j["params"]["scale"], 0.5);
        assert!(j["sigma2"].as_f64().unwrap() > 0.0);
        let back: NoiseModel = serde_json::from_value(j).unwrap();
        assert_eq!(back, m);
    }
}
