//! Prior samplers over `F_{C,M,L}`.
//!
//! Three families, all rescaled so the draw provably passes the grid
//! membership check: a random trigonometric series with analytically capped
//! amplitudes, a random polynomial, and a natural cubic spline through random
//! knot values.

use super::{FunClassError, FunctionClassSpec, GridFunction};
use crate::rngutil;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PriorSpec {
    /// `f(x) = C/2 + sum_k c_k sin(2*pi*k*x + phi_k)` with
    /// `c_k <= amplitude * L / ((2*pi*k)^{M+1} K)`, then deviations rescaled
    /// into `[0, C]` if needed.
    RandomTrig { terms: usize, amplitude: f64 },
    /// Random polynomial of the given degree, deviations rescaled to meet the
    /// derivative and range constraints.
    RandomPoly { degree: usize },
    /// Natural cubic spline through uniform random knot values; supports
    /// classes with `M <= 2` only.
    SplineKnots { knots: usize },
}

impl PriorSpec {
    pub fn default_trig() -> Self {
        PriorSpec::RandomTrig {
            terms: 4,
            amplitude: 1.0,
        }
    }
}

pub(super) fn sample(
    prior: &PriorSpec,
    spec: &FunctionClassSpec,
    seed: u64,
) -> Result<GridFunction, FunClassError> {
    match *prior {
        PriorSpec::RandomTrig { terms, amplitude } => trig(spec, terms, amplitude, seed),
        PriorSpec::RandomPoly { degree } => poly(spec, degree, seed),
        PriorSpec::SplineKnots { knots } => spline(spec, knots, seed),
    }
}

fn trig(
    spec: &FunctionClassSpec,
    terms: usize,
    amplitude: f64,
    seed: u64,
) -> Result<GridFunction, FunClassError> {
    if !(0.0..=1.0).contains(&amplitude) {
        return Err(FunClassError::PriorInfeasible(format!(
            "trig amplitude multiplier {amplitude} outside [0,1]; caps beyond 1 break the L constraint"
        )));
    }
    if terms > 64 {
        return Err(FunClassError::PriorInfeasible(format!(
            "trig term count {terms} exceeds 64"
        )));
    }
    let mut rng = rngutil::stream(seed, 0x7419);
    let k_total = terms.max(1) as f64;
    let mut amps = Vec::with_capacity(terms);
    let mut phases = Vec::with_capacity(terms);
    for k in 1..=terms {
        // Cap guarantees the m-th derivative stays L-Lipschitz for all m <= M
        // even before rescaling.
        let cap = spec.l / ((TAU * k as f64).powi(spec.m as i32 + 1) * k_total);
        amps.push(amplitude * cap * rng.random::<f64>());
        phases.push(TAU * rng.random::<f64>());
    }
    let half = spec.c / 2.0;
    let mut values: Vec<f64> = (0..spec.grid_n)
        .map(|i| {
            let x = spec.grid_x(i);
            let dev: f64 = amps
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(j, (a, p))| a * (TAU * (j as f64 + 1.0) * x + p).sin())
                .sum();
            dev
        })
        .collect();
    // Clipped rescale: shrink deviations so the range stays inside [0, C].
    let maxdev = values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let scale = if maxdev > half {
        (half / maxdev) * (1.0 - 1e-12)
    } else {
        1.0
    };
    for v in &mut values {
        *v = half + scale * *v;
    }
    GridFunction::from_values(values, *spec)
}

fn poly(spec: &FunctionClassSpec, degree: usize, seed: u64) -> Result<GridFunction, FunClassError> {
    if degree > 16 {
        return Err(FunClassError::PriorInfeasible(format!(
            "polynomial degree {degree} exceeds 16 (factorial scaling overflows the rescale)"
        )));
    }
    let mut rng = rngutil::stream(seed, 0x9021);
    let coeffs: Vec<f64> = (0..=degree)
        .map(|i| if i == 0 { 0.0 } else { 2.0 * rng.random::<f64>() - 1.0 })
        .collect();

    // sup over [0,1] of |p^{(m+1)}| <= sum_{i >= m+1} |u_i| i!/(i-m-1)!.
    let mut worst_ratio: f64 = 0.0; // max over m of Lambda_m / L
    for m in 0..=spec.m {
        let mut lam = 0.0;
        for (i, &u) in coeffs.iter().enumerate() {
            if i >= m + 1 {
                let mut ff = 1.0;
                for j in 0..=m {
                    ff *= (i - j) as f64;
                }
                lam += u.abs() * ff;
            }
        }
        worst_ratio = worst_ratio.max(lam / spec.l);
    }

    let raw: Vec<f64> = (0..spec.grid_n)
        .map(|i| {
            let x = spec.grid_x(i);
            coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
        })
        .collect();
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mid = 0.5 * (lo + hi);
    let maxdev = 0.5 * (hi - lo);

    let mut scale = 1.0f64;
    if worst_ratio > 0.0 {
        scale = scale.min(0.9 / worst_ratio);
    }
    if maxdev > 0.0 {
        scale = scale.min(0.95 * spec.c / 2.0 / maxdev);
    }
    let half = spec.c / 2.0;
    let values = raw.iter().map(|&v| half + scale * (v - mid)).collect();
    GridFunction::from_values(values, *spec)
}

fn spline(spec: &FunctionClassSpec, knots: usize, seed: u64) -> Result<GridFunction, FunClassError> {
    if spec.m > 2 {
        return Err(FunClassError::PriorInfeasible(format!(
            "cubic splines have a piecewise-constant third derivative; order-{} Lipschitz checks fail",
            spec.m
        )));
    }
    if knots < 2 {
        return Err(FunClassError::PriorInfeasible(format!("need >= 2 knots, got {knots}")));
    }
    let mut rng = rngutil::stream(seed, 0x5713);
    let kv: Vec<f64> = (0..knots).map(|_| rng.random::<f64>()).collect();
    let hk = 1.0 / (knots as f64 - 1.0);

    // Natural cubic spline: second derivatives from the tridiagonal system.
    let mut m2 = vec![0.0; knots];
    if knots > 2 {
        let n = knots - 2;
        let mut diag = vec![2.0 * hk / 3.0; n];
        let off = hk / 6.0;
        let mut rhs: Vec<f64> = (1..=n)
            .map(|j| (kv[j + 1] - 2.0 * kv[j] + kv[j - 1]) / hk)
            .collect();
        for j in 1..n {
            let w = off / diag[j - 1];
            diag[j] -= w * off;
            rhs[j] -= w * rhs[j - 1];
        }
        m2[n] = rhs[n - 1] / diag[n - 1];
        for j in (1..n).rev() {
            m2[j] = (rhs[j - 1] - off * m2[j + 1]) / diag[j - 1];
        }
    }

    let raw: Vec<f64> = (0..spec.grid_n)
        .map(|i| {
            let x = spec.grid_x(i);
            let j = ((x / hk).floor() as usize).min(knots - 2);
            let (xl, xr) = (j as f64 * hk, (j + 1) as f64 * hk);
            let (a, b) = (xr - x, x - xl);
            m2[j] * a * a * a / (6.0 * hk)
                + m2[j + 1] * b * b * b / (6.0 * hk)
                + (kv[j] / hk - m2[j] * hk / 6.0) * a
                + (kv[j + 1] / hk - m2[j + 1] * hk / 6.0) * b
        })
        .collect();

    // Rescale using the same finite-difference estimates the membership
    // check applies, so the draw passes by construction.
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mid = 0.5 * (lo + hi);
    let maxdev = 0.5 * (hi - lo);
    let h = spec.spacing();
    let mut scale = 1.0f64;
    let mut level = raw.clone();
    for _m in 0..=spec.m {
        let next: Vec<f64> = level.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let est = next.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if est > 0.0 {
            scale = scale.min(0.9 * spec.l / est);
        }
        level = next;
    }
    if maxdev > 0.0 {
        scale = scale.min(0.95 * spec.c / 2.0 / maxdev);
    }
    let half = spec.c / 2.0;
    let values = raw.iter().map(|&v| half + scale * (v - mid)).collect();
    GridFunction::from_values(values, *spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funclass::verify_membership;

    #[test]
    fn zero_amplitude_trig_is_constant_half_c() {
        let s = FunctionClassSpec::new(2.0, 1, 5.0, 101).unwrap();
        let p = PriorSpec::RandomTrig {
            terms: 4,
            amplitude: 0.0,
        };
        for seed in [0u64, 7, 99] {
            let f = sample(&p, &s, seed).unwrap();
            assert!(f.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn same_seed_same_function() {
        let s = FunctionClassSpec::new(1.0, 0, 5.0, 201).unwrap();
        let p = PriorSpec::default_trig();
        let a = sample(&p, &s, 7).unwrap();
        let b = sample(&p, &s, 7).unwrap();
        assert_eq!(a.values(), b.values());
        let c = sample(&p, &s, 8).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn trig_seed7_is_member() {
        let s = FunctionClassSpec::new(1.0, 0, 5.0, 501).unwrap();
        let f = sample(&PriorSpec::default_trig(), &s, 7).unwrap();
        let r = verify_membership(&f, &s, 0.0, 1.0).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn poly_rescaled_is_member() {
        let s = FunctionClassSpec::new(1.0, 2, 10.0, 501).unwrap();
        for seed in 0..20 {
            let f = sample(&PriorSpec::RandomPoly { degree: 3 }, &s, seed).unwrap();
            let r = verify_membership(&f, &s, 0.0, 1.0).unwrap();
            assert!(r.pass, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn spline_rejects_m3() {
        let s = FunctionClassSpec::new(1.0, 3, 1.0, 101).unwrap();
        assert!(matches!(
            sample(&PriorSpec::SplineKnots { knots: 6 }, &s, 0),
            Err(FunClassError::PriorInfeasible(_))
        ));
    }

    #[test]
    fn infeasible_amplitude_rejected() {
        let s = FunctionClassSpec::new(1.0, 0, 1.0, 101).unwrap();
        let p = PriorSpec::RandomTrig {
            terms: 2,
            amplitude: 1.5,
        };
        assert!(matches!(
            sample(&p, &s, 0),
            Err(FunClassError::PriorInfeasible(_))
        ));
    }

    #[test]
    fn membership_fuzz_over_seeds() {
        // Spec invariant: every prior draw passes its own membership check.
        // Fuzzed over >= 1000 seeds across the three families.
        let cases = [
            (PriorSpec::default_trig(), FunctionClassSpec::new(1.0, 0, 5.0, 201).unwrap()),
            (
                PriorSpec::RandomTrig { terms: 6, amplitude: 1.0 },
                FunctionClassSpec::new(1.0, 2, 20.0, 201).unwrap(),
            ),
            (PriorSpec::RandomPoly { degree: 5 }, FunctionClassSpec::new(2.0, 1, 3.0, 201).unwrap()),
            (PriorSpec::SplineKnots { knots: 8 }, FunctionClassSpec::new(1.0, 1, 5.0, 201).unwrap()),
        ];
        let mut checked = 0usize;
        for (p, s) in &cases {
            for seed in 0..300u64 {
                let f = sample(p, s, seed).unwrap();
                let r = verify_membership(&f, s, 0.0, s.c).unwrap();
                assert!(r.pass, "{p:?} seed {seed}: {r:?}");
                checked += 1;
            }
        }
        assert!(checked >= 1000);
    }
}
