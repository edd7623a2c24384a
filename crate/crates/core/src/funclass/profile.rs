//! Extremal and bump constructions.
//!
//! Both constructions integrate a bang-bang top derivative. The unit profile
//! of order `m` lives on `[0,1]` (edge at 0, peak at 1): its `(m+1)`-th
//! derivative alternates between +1 and -1 across `ceil(m/2)` switch points
//! chosen so that every odd derivative vanishes at the peak. Integrating
//! `m+1` times from zero initial conditions makes the profile meet its
//! baseline with `m` vanishing derivatives at the edge, so the two-sided
//! mirror image is a valid class member on all of `[0,1]`.
//!
//! Scaling is exact: a profile of half-width `W` and top-derivative magnitude
//! `lip` has peak height `lip * W^{m+1} * unit_height`, which pins the
//! `(height/lip)^{1/(m+1)}` width law checked by the scaling tests.

use super::{FunClassError, FunctionClassSpec, GridFunction};
use crate::poly::PiecewisePoly;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Peak headroom so strict inequalities (`h(a) > eps`) hold exactly in f64.
const PEAK_HEADROOM: f64 = 1e-9;

#[derive(Debug)]
pub(crate) struct UnitProfile {
    pub switches: Vec<f64>,
    /// Peak value of the unit profile (zero jet at the edge, `(m+1)`-th
    /// derivative `±1`).
    pub unit_height: f64,
    /// Fraction `v` with `psi(v) = unit_height / (2 (1 + PEAK_HEADROOM))`,
    /// i.e. where the extremal function crosses `eps/3`.
    pub half_level_fraction: f64,
}

fn profile_cache() -> &'static Mutex<HashMap<usize, Arc<UnitProfile>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<UnitProfile>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

pub(crate) fn unit_profile(m: usize) -> Result<Arc<UnitProfile>, FunClassError> {
    if let Some(p) = profile_cache().lock().unwrap().get(&m) {
        return Ok(p.clone());
    }
    let p = Arc::new(build_unit_profile(m)?);
    profile_cache().lock().unwrap().insert(m, p.clone());
    Ok(p)
}

/// Moment `int_0^1 (1-x)^r q(x) dx` for the alternating sign pattern with the
/// given switch points (`q = +1` on the first block).
fn moment(switches: &[f64], r: u32) -> f64 {
    let prim = |x: f64| (1.0 - x).powi(r as i32 + 1) / (r as f64 + 1.0);
    let mut total = 0.0;
    let mut left = 0.0f64;
    for (i, &t) in switches.iter().chain(std::iter::once(&1.0)).enumerate() {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * (prim(left) - prim(t));
        left = t;
    }
    total
}

fn solve_linear(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Solves the switch points of the unit profile: the odd derivatives at the
/// peak vanish iff the moments of order `m-1, m-3, ...` vanish. Damped
/// Newton with the analytic Jacobian `dG_r/dt_k = 2 (-1)^k (1-t_k)^r`.
fn solve_switches(m: usize) -> Result<Vec<f64>, FunClassError> {
    let p = (m + 1) / 2;
    if p == 0 {
        return Ok(vec![]);
    }
    let powers: Vec<u32> = (1..=m)
        .step_by(2)
        .map(|k| (m - k) as u32)
        .collect();
    debug_assert_eq!(powers.len(), p);

    let residual = |t: &[f64]| -> Vec<f64> { powers.iter().map(|&r| moment(t, r)).collect() };
    let norm = |g: &[f64]| g.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let ordered = |t: &[f64]| {
        t.windows(2).all(|w| w[0] < w[1]) && t[0] > 1e-9 && t[p - 1] < 1.0 - 1e-9
    };

    let mut t: Vec<f64> = (1..=p).map(|k| k as f64 / (p as f64 + 1.0)).collect();
    for _ in 0..200 {
        let g = residual(&t);
        if norm(&g) < 1e-13 {
            return Ok(t);
        }
        let mut jac: Vec<Vec<f64>> = powers
            .iter()
            .map(|&r| {
                (0..p)
                    .map(|k| {
                        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                        2.0 * sign * (1.0 - t[k]).powi(r as i32)
                    })
                    .collect()
            })
            .collect();
        let mut rhs: Vec<f64> = g.iter().map(|&v| -v).collect();
        let step = solve_linear(&mut jac, &mut rhs)
            .ok_or_else(|| FunClassError::Construction("singular moment Jacobian".into()))?;
        let mut lambda = 1.0;
        let g0 = norm(&g);
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = t.iter().zip(&step).map(|(a, d)| a + lambda * d).collect();
            if ordered(&cand) && norm(&residual(&cand)) < g0 {
                t = cand;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(FunClassError::Construction(format!(
                "switch-point Newton stalled at order {m} (residual {g0:.3e})"
            )));
        }
    }
    Err(FunClassError::Construction(format!(
        "switch-point Newton did not converge at order {m}"
    )))
}

fn build_unit_profile(m: usize) -> Result<UnitProfile, FunClassError> {
    let switches = solve_switches(m)?;
    let mut breaks = Vec::with_capacity(switches.len() + 2);
    breaks.push(0.0);
    breaks.extend_from_slice(&switches);
    breaks.push(1.0);
    let signs: Vec<f64> = (0..breaks.len() - 1)
        .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let q = PiecewisePoly::piecewise_constant(breaks, &signs);

    let mut deriv1 = q;
    for _ in 0..m {
        deriv1 = deriv1.antiderivative(0.0);
    }
    // deriv1 is the profile's first derivative; require it nonnegative so the
    // profile is unimodal on the half-interval.
    let psi = deriv1.antiderivative(0.0);
    let unit_height = psi.eval(1.0);
    if !(unit_height > 0.0) {
        return Err(FunClassError::Construction(format!(
            "order-{m} profile has nonpositive height {unit_height}"
        )));
    }
    for i in 0..=400 {
        let v = deriv1.eval(i as f64 / 400.0);
        if v < -1e-9 * unit_height.max(1.0) {
            return Err(FunClassError::Construction(format!(
                "order-{m} profile is not monotone on the half-interval"
            )));
        }
    }
    let target = unit_height * 0.5 / (1.0 + PEAK_HEADROOM);
    let half_level_fraction = psi
        .solve_monotone(0.0, 1.0, target)
        .ok_or_else(|| FunClassError::Construction("half-level solve failed".into()))?;
    Ok(UnitProfile {
        switches,
        unit_height,
        half_level_fraction,
    })
}

/// Half-width so the profile with top derivative `lip` reaches `height`.
pub(crate) fn support_half_width(m: usize, lip: f64, height: f64) -> Result<f64, FunClassError> {
    let prof = unit_profile(m)?;
    Ok((height / (lip * prof.unit_height)).powf(1.0 / (m as f64 + 1.0)))
}

/// Two-sided profile in true coordinates: zero jet at `center ± half_width`,
/// peak `lip * half_width^{m+1} * unit_height` at `center`, `(m+1)`-th
/// derivative in `{-lip, +lip}`.
pub(crate) fn scaled_profile(
    m: usize,
    center: f64,
    half_width: f64,
    lip: f64,
) -> Result<PiecewisePoly, FunClassError> {
    let prof = unit_profile(m)?;
    let w = half_width;
    let mut breaks = Vec::with_capacity(2 * prof.switches.len() + 3);
    breaks.push(center - w);
    for &t in &prof.switches {
        breaks.push(center - w + w * t);
    }
    breaks.push(center);
    for &t in prof.switches.iter().rev() {
        breaks.push(center + w * (1.0 - t));
    }
    breaks.push(center + w);

    let left_blocks = prof.switches.len() + 1;
    let mirror_sign = if (m + 1) % 2 == 0 { 1.0 } else { -1.0 };
    let mut signs = Vec::with_capacity(2 * left_blocks);
    for i in 0..left_blocks {
        signs.push(lip * if i % 2 == 0 { 1.0 } else { -1.0 });
    }
    for i in (0..left_blocks).rev() {
        signs.push(mirror_sign * signs[i].signum() * lip);
    }

    let q = PiecewisePoly::piecewise_constant(breaks, &signs);
    let mut out = q;
    for _ in 0..=m {
        out = out.antiderivative(0.0);
    }
    let peak = out.eval(center);
    let right_edge = out.eval(center + w);
    if right_edge.abs() > 1e-8 * peak.abs().max(1e-300) {
        return Err(FunClassError::Construction(format!(
            "profile does not close at the right edge (residual {right_edge:.3e})"
        )));
    }
    Ok(out)
}

/// Minimal-width unimodal bump: reward `0.5` outside the support and
/// `0.5 + delta` at `x_star`, with the `(M+1)`-th derivative piecewise
/// constant on `{-L, 0, +L}`. A member of `F_{1,M,L}`.
#[derive(Clone, Debug)]
pub struct BumpInstance {
    pub nu: GridFunction,
    pub x_star: f64,
    pub delta: f64,
    /// Half-width of the region where `nu > 0.5`; scales as
    /// `(delta/L)^{1/(M+1)}`.
    pub half_width: f64,
}

pub fn bump_instance(
    x_star: f64,
    delta: f64,
    m: usize,
    l: f64,
    grid_n: usize,
) -> Result<BumpInstance, FunClassError> {
    if !(delta > 0.0) || delta > 0.5 {
        return Err(FunClassError::Precondition(format!(
            "delta = {delta} outside (0, 0.5]"
        )));
    }
    if !(l > 0.0) {
        return Err(FunClassError::Precondition(format!("L = {l} must be positive")));
    }
    if !(0.0..=1.0).contains(&x_star) {
        return Err(FunClassError::Precondition(format!("x* = {x_star} outside [0,1]")));
    }
    let w = support_half_width(m, l, delta)?;
    if x_star - w < -1e-12 || x_star + w > 1.0 + 1e-12 {
        return Err(FunClassError::OutOfRange {
            lo: x_star - w,
            hi: x_star + w,
        });
    }
    let profile = scaled_profile(m, x_star, w, l)?;
    // Exact peak normalisation; the correction is O(1e-15) relative.
    let correction = delta / profile.eval(x_star);
    let profile = profile.scale(correction);

    let spec = FunctionClassSpec::new(1.0, m, l, grid_n)?;
    let values: Vec<f64> = (0..grid_n)
        .map(|i| {
            let x = spec.grid_x(i);
            if (x - x_star).abs() < w {
                0.5 + profile.eval(x).max(0.0)
            } else {
                0.5
            }
        })
        .collect();
    let nu = GridFunction::from_values(values, spec)?;
    Ok(BumpInstance {
        nu,
        x_star,
        delta,
        half_width: w,
    })
}

/// The minimal-`B` member of `G_{C,M,L}` anchored at `a`: peak just above
/// `eps` at `a`, crossing `eps/3` at `x1 = a - delta_m` and
/// `x2 = a + delta_m`, never falling below `-eps/3`.
#[derive(Clone, Debug)]
pub struct ExtremalFunction {
    pub h: GridFunction,
    pub a: f64,
    pub eps: f64,
    /// Half-width of the region where `|h| > eps/3`.
    pub delta_m: f64,
    pub x1: f64,
    pub x2: f64,
    pub y1: f64,
    pub y2: f64,
    /// The realized piecewise-polynomial coefficients of `h` on its support.
    pub deriv_coeffs: PiecewisePoly,
}

/// Analytic geometry of the extremal profile: `(support half-width, delta_m)`.
pub(crate) fn extremal_geometry(m: usize, l: f64, eps: f64) -> Result<(f64, f64), FunClassError> {
    let prof = unit_profile(m)?;
    let height = (4.0 / 3.0) * eps * (1.0 + PEAK_HEADROOM);
    let w = support_half_width(m, 2.0 * l, height)?;
    let delta_m = w * (1.0 - prof.half_level_fraction);
    Ok((w, delta_m))
}

pub fn extremal_function(
    a: f64,
    spec: &FunctionClassSpec,
    eps: f64,
) -> Result<ExtremalFunction, FunClassError> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(FunClassError::Precondition(format!("eps = {eps} must be positive")));
    }
    if eps * (1.0 + 2.0 * PEAK_HEADROOM) > spec.c {
        return Err(FunClassError::Precondition(format!(
            "eps = {eps} exceeds the class range bound C = {}",
            spec.c
        )));
    }
    let (w, delta_m) = extremal_geometry(spec.m, spec.l, eps)?;
    // Interior anchors only: the crossing points must fit for M <= 1
    // (Lemma-style gates) and a conservative 4 (eps/L)^{1/(M+1)} margin is
    // required for M >= 2.
    let gate = if spec.m >= 2 {
        4.0 * (eps / spec.l).powf(1.0 / (spec.m as f64 + 1.0))
    } else {
        delta_m
    };
    if a.min(1.0 - a) <= gate {
        return Err(FunClassError::EdgeCase { a, margin: gate });
    }

    let height = (4.0 / 3.0) * eps * (1.0 + PEAK_HEADROOM);
    let profile = scaled_profile(spec.m, a, w, 2.0 * spec.l)?;
    let correction = height / profile.eval(a);
    let profile = profile.scale(correction);
    let base = -eps / 3.0;

    let values: Vec<f64> = (0..spec.grid_n)
        .map(|i| {
            let x = spec.grid_x(i);
            if (x - a).abs() < w {
                base + profile.eval(x).max(0.0)
            } else {
                base
            }
        })
        .collect();
    let h = GridFunction::from_values(values, *spec)?;
    Ok(ExtremalFunction {
        h,
        a,
        eps,
        delta_m,
        x1: a - delta_m,
        x2: a + delta_m,
        y1: a - 2.0 * delta_m,
        y2: a + 2.0 * delta_m,
        deriv_coeffs: profile.offset(base),
    })
}
