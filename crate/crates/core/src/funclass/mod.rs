//! Function classes `F_{C,M,L}` and `G_{C,M,L}` on a uniform grid of `[0,1]`.
//!
//! `F_{C,M,L}` is the class of functions `[0,1] -> [0,C]` whose derivatives
//! up to order `M` are `L`-Lipschitz; `G_{C,M,L}` is its difference class,
//! `[-C,C]`-bounded with `2L`-Lipschitz derivatives. Functions are stored as
//! values on a uniform grid with linear interpolation between nodes, so all
//! classes share one representation and quadrature is a trapezoid sum.

mod prior;
mod profile;

pub use prior::PriorSpec;
pub use profile::{bump_instance, extremal_function, BumpInstance, ExtremalFunction};
pub(crate) use profile::{extremal_geometry, scaled_profile, support_half_width};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FunClassError {
    #[error("invalid class spec: {0}")]
    InvalidSpec(String),
    #[error("grid too coarse for order-{order} check: fp guard {guard:.3e} exceeds slack budget {budget:.3e}")]
    CoarseGrid { order: usize, guard: f64, budget: f64 },
    #[error("grid mismatch: specs {left:?} vs {right:?} differ")]
    GridMismatch { left: String, right: String },
    #[error("prior parameters infeasible: {0}")]
    PriorInfeasible(String),
    #[error("bump extends past [0,1]: support [{lo:.6}, {hi:.6}]")]
    OutOfRange { lo: f64, hi: f64 },
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("anchor {a} too close to the boundary (need margin {margin:.6})")]
    EdgeCase { a: f64, margin: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// The triple `(C, M, L)` defining `F_{C,M,L}`, plus the grid resolution used
/// to represent members.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionClassSpec {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub grid_n: usize,
}

impl FunctionClassSpec {
    pub fn new(c: f64, m: usize, l: f64, grid_n: usize) -> Result<Self, FunClassError> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(FunClassError::InvalidSpec(format!("C must be positive, got {c}")));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(FunClassError::InvalidSpec(format!("L must be positive, got {l}")));
        }
        if grid_n < 2 {
            return Err(FunClassError::InvalidSpec(format!("grid_n must be >= 2, got {grid_n}")));
        }
        Ok(Self { c, m, l, grid_n })
    }

    /// Grid spacing `h = 1/(grid_n - 1)`.
    pub fn spacing(&self) -> f64 {
        1.0 / (self.grid_n as f64 - 1.0)
    }

    pub fn grid_x(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Same class with a different Lipschitz constant (used for the `2L`
    /// checks on the difference class).
    pub fn with_lipschitz(&self, l: f64) -> Self {
        Self { l, ..*self }
    }

    /// Enforces `h <= min(0.01, (eps_min/L)^{1/(M+1)}/10)` for consumers that
    /// resolve structure at scale `eps_min`.
    pub fn validate_resolution(&self, eps_min: f64) -> Result<(), FunClassError> {
        let h = self.spacing();
        let needed = 0.01f64.min((eps_min / self.l).powf(1.0 / (self.m as f64 + 1.0)) / 10.0);
        if h > needed {
            return Err(FunClassError::InvalidSpec(format!(
                "grid spacing {h:.3e} exceeds required {needed:.3e} for eps_min={eps_min}"
            )));
        }
        Ok(())
    }

    fn short(&self) -> String {
        format!("(C={}, M={}, L={}, n={})", self.c, self.m, self.l, self.grid_n)
    }
}

/// A function on the uniform grid; evaluation between nodes is linear
/// interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
    spec: FunctionClassSpec,
}

impl GridFunction {
    pub fn from_values(values: Vec<f64>, spec: FunctionClassSpec) -> Result<Self, FunClassError> {
        if values.len() != spec.grid_n {
            return Err(FunClassError::InvalidSpec(format!(
                "expected {} values, got {}",
                spec.grid_n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FunClassError::InvalidSpec("non-finite value".into()));
        }
        Ok(Self { values, spec })
    }

    pub fn constant(value: f64, spec: FunctionClassSpec) -> Self {
        Self {
            values: vec![value; spec.grid_n],
            spec,
        }
    }

    pub fn from_fn(spec: FunctionClassSpec, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..spec.grid_n).map(|i| f(spec.grid_x(i))).collect();
        Self { values, spec }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spec(&self) -> &FunctionClassSpec {
        &self.spec
    }

    /// Linear interpolation; `x` is clamped into `[0,1]`.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let t = x.clamp(0.0, 1.0) * (n as f64 - 1.0);
        let i = (t.floor() as usize).min(n - 2);
        let frac = t - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Index of the grid maximum, lowest index on ties.
    pub fn grid_argmax(&self) -> usize {
        let mut best = 0usize;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Trapezoid-rule integral over `[0,1]`.
    pub fn trapezoid(&self) -> f64 {
        let h = self.spec.spacing();
        let inner: f64 = self.values[1..self.values.len() - 1].iter().sum();
        h * (0.5 * (self.values[0] + self.values[self.values.len() - 1]) + inner)
    }

    /// CSV with header `x,value`, one row per node, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{:.16e},{:.16e}\n", self.spec.grid_x(i), v));
        }
        out
    }

    pub fn from_csv(csv: &str, spec: FunctionClassSpec) -> Result<Self, FunClassError> {
        let mut values = Vec::with_capacity(spec.grid_n);
        for (ln, line) in csv.lines().enumerate() {
            if ln == 0 {
                if line.trim() != "x,value" {
                    return Err(FunClassError::InvalidSpec("missing x,value header".into()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let v = line
                .split(',')
                .nth(1)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| FunClassError::InvalidSpec(format!("bad row {ln}: {line}")))?;
            values.push(v);
        }
        Self::from_values(values, spec)
    }
}

/// Result of a membership check, with the worst violation per derivative
/// order and the discretization slack that was granted.
#[derive(Clone, Debug)]
pub struct MembershipReport {
    pub pass: bool,
    pub worst_range_violation: f64,
    pub orders: Vec<DerivativeCheck>,
}

#[derive(Clone, Debug)]
pub struct DerivativeCheck {
    pub order: usize,
    /// Max adjacent finite-difference ratio of the order-`m` difference
    /// sequence; equals the max pairwise ratio on a uniform grid.
    pub lipschitz_estimate: f64,
    /// `L + slack(m)` plus the floating-point guard.
    pub allowed: f64,
    /// Discretization slack budget `10 m L h`.
    pub slack: f64,
    pub excess: f64,
}

/// Checks range and `L`-Lipschitz-ness of all derivatives up to order
/// `spec.m` via successive finite differences.
///
/// The slack budget `slack(m) = 10 m L h` absorbs discretization inflation;
/// a separate floating-point guard (reported in `allowed`) absorbs rounding
/// amplified by `h^{-(m+1)}`. If that guard exceeds the slack budget the
/// check would be vacuous and `CoarseGrid` is returned instead.
pub fn verify_membership(
    f: &GridFunction,
    spec: &FunctionClassSpec,
    range_lo: f64,
    range_hi: f64,
) -> Result<MembershipReport, FunClassError> {
    if f.spec.grid_n != spec.grid_n {
        return Err(FunClassError::GridMismatch {
            left: f.spec.short(),
            right: spec.short(),
        });
    }
    if spec.grid_n < spec.m + 2 {
        return Err(FunClassError::CoarseGrid {
            order: spec.m,
            guard: f64::INFINITY,
            budget: 0.0,
        });
    }
    let h = spec.spacing();
    let vmax = f.values.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-300);

    let range_guard = 64.0 * f64::EPSILON * vmax.max(range_hi.abs()).max(range_lo.abs());
    let mut worst_range = 0.0f64;
    for &v in &f.values {
        worst_range = worst_range.max(range_lo - v).max(v - range_hi);
    }
    let range_ok = worst_range <= range_guard;
    let worst_range_violation = (worst_range - range_guard).max(0.0);

    // Successive finite differences; level k approximates the k-th derivative.
    let mut level = f.values.clone();
    let mut orders = Vec::with_capacity(spec.m + 1);
    let mut pass = range_ok;
    for m in 0..=spec.m {
        let next: Vec<f64> = level.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let est = next.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let slack = 10.0 * m as f64 * spec.l * h;
        let guard = 8.0 * 2f64.powi(m as i32 + 1) * f64::EPSILON * vmax / h.powi(m as i32 + 1);
        if m >= 1 && guard > slack {
            return Err(FunClassError::CoarseGrid {
                order: m,
                guard,
                budget: slack,
            });
        }
        let allowed = spec.l + slack + guard;
        let excess = (est - allowed).max(0.0);
        if excess > 0.0 {
            pass = false;
        }
        orders.push(DerivativeCheck {
            order: m,
            lipschitz_estimate: est,
            allowed,
            slack,
            excess,
        });
        level = next;
    }

    Ok(MembershipReport {
        pass,
        worst_range_violation,
        orders,
    })
}

/// Pointwise `f - f2`; members of `G_{C,M,L}` when both inputs are in
/// `F_{C,M,L}` (range `[-C,C]`, Lipschitz constant `2L`).
pub fn difference_function(f: &GridFunction, f2: &GridFunction) -> Result<GridFunction, FunClassError> {
    if f.spec != f2.spec {
        return Err(FunClassError::GridMismatch {
            left: f.spec.short(),
            right: f2.spec.short(),
        });
    }
    let values = f
        .values
        .iter()
        .zip(&f2.values)
        .map(|(a, b)| a - b)
        .collect();
    GridFunction::from_values(values, f.spec)
}

/// The tent reward `0.5 + δ - L|x - x*|` clipped at 0.5, a member of
/// `F_{1,0,L}` but not of any class with `M >= 1`.
pub fn worst_case_lipschitz_instance(
    x_star: f64,
    delta: f64,
    l: f64,
    grid_n: usize,
) -> Result<GridFunction, FunClassError> {
    if !(0.0..=1.0).contains(&x_star) {
        return Err(FunClassError::Precondition(format!("x* = {x_star} outside [0,1]")));
    }
    if !(0.0..=0.5).contains(&delta) {
        return Err(FunClassError::Precondition(format!("delta = {delta} outside [0, 0.5]")));
    }
    if !(l > 0.0) {
        return Err(FunClassError::Precondition(format!("L = {l} must be positive")));
    }
    let radius = delta / l;
    if radius > x_star.min(1.0 - x_star) + 1e-12 {
        return Err(FunClassError::OutOfRange {
            lo: x_star - radius,
            hi: x_star + radius,
        });
    }
    let spec = FunctionClassSpec::new(1.0, 0, l, grid_n)?;
    Ok(GridFunction::from_fn(spec, |x| {
        0.5 + (delta - l * (x - x_star).abs()).max(0.0)
    }))
}

/// Deterministic prior draw; the returned function passes
/// [`verify_membership`] against `spec` with range `[0, C]`.
pub fn sample_prior_function(
    prior: &PriorSpec,
    spec: &FunctionClassSpec,
    seed: u64,
) -> Result<GridFunction, FunClassError> {
    prior::sample(prior, spec, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(c: f64, m: usize, l: f64, n: usize) -> FunctionClassSpec {
        FunctionClassSpec::new(c, m, l, n).unwrap()
    }

    #[test]
    fn constant_passes_any_order() {
        let s = spec(2.0, 3, 1.0, 101);
        let f = GridFunction::constant(1.0, s);
        let r = verify_membership(&f, &s, 0.0, 2.0).unwrap();
        assert!(r.pass, "{r:?}");
        for o in &r.orders {
            assert_eq!(o.excess, 0.0);
        }
    }

    #[test]
    fn linear_passes_m0_and_m1() {
        let l = 2.0;
        for m in [0usize, 1] {
            let s = spec(2.0, m, l, 201);
            let f = GridFunction::from_fn(s, |x| l * x);
            let r = verify_membership(&f, &s, 0.0, 2.0).unwrap();
            assert!(r.pass, "m={m}: {r:?}");
        }
    }

    #[test]
    fn tent_passes_m0_fails_m1_at_kink() {
        let f = worst_case_lipschitz_instance(0.5, 0.1, 1.0, 501).unwrap();
        let s0 = *f.spec();
        let r0 = verify_membership(&f, &s0, 0.0, 1.0).unwrap();
        assert!(r0.pass, "{r0:?}");

        let s1 = FunctionClassSpec { m: 1, ..s0 };
        let r1 = verify_membership(&f, &s1, 0.0, 1.0).unwrap();
        assert!(!r1.pass);
        // The derivative jump of 2L across one cell blows up the order-1 check.
        assert!(r1.orders[1].excess > 0.0, "{:?}", r1.orders[1]);
        assert!(r1.orders[1].lipschitz_estimate > 100.0);
    }

    #[test]
    fn worst_case_instance_values_match_formula() {
        // mu(0.5)=0.6, mu(0.55)=0.55, mu(0.7)=0.5 for x*=0.5, delta=0.1, L=1.
        let f = worst_case_lipschitz_instance(0.5, 0.1, 1.0, 1001).unwrap();
        assert!((f.eval(0.5) - 0.6).abs() < 1e-12);
        assert!((f.eval(0.55) - 0.55).abs() < 1e-12);
        assert!((f.eval(0.7) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn worst_case_zero_delta_is_constant() {
        let f = worst_case_lipschitz_instance(0.3, 0.0, 2.0, 101).unwrap();
        assert!(f.values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn worst_case_out_of_range_errors() {
        let e = worst_case_lipschitz_instance(0.05, 0.2, 1.0, 101);
        assert!(matches!(e, Err(FunClassError::OutOfRange { .. })));
    }

    #[test]
    fn difference_requires_matching_grids() {
        let s = spec(1.0, 0, 1.0, 101);
        let s2 = spec(1.0, 0, 1.0, 102);
        let f = GridFunction::constant(0.5, s);
        let g = GridFunction::constant(0.5, s2);
        assert!(matches!(
            difference_function(&f, &g),
            Err(FunClassError::GridMismatch { .. })
        ));
    }

    #[test]
    fn difference_of_extremes_stays_in_band() {
        let s = spec(1.0, 0, 1.0, 101);
        let f = GridFunction::constant(1.0, s);
        let g = GridFunction::constant(0.0, s);
        let d = difference_function(&f, &g).unwrap();
        assert!(d.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let r = verify_membership(&d, &s.with_lipschitz(2.0), -1.0, 1.0).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn zero_difference_for_equal_inputs() {
        let s = spec(1.0, 1, 3.0, 101);
        let f = sample_prior_function(&PriorSpec::default_trig(), &s, 11).unwrap();
        let d = difference_function(&f, &f).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coarse_grid_detected_for_high_order() {
        // Order-7 differences on a 1/100 grid amplify rounding past the
        // slack budget.
        let s = spec(1.0, 7, 1.0, 101);
        let f = GridFunction::constant(0.5, s);
        assert!(matches!(
            verify_membership(&f, &s, 0.0, 1.0),
            Err(FunClassError::CoarseGrid { .. })
        ));
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let s = spec(1.0, 0, 5.0, 64);
        let f = sample_prior_function(&PriorSpec::default_trig(), &s, 3).unwrap();
        let g = GridFunction::from_csv(&f.to_csv(), s).unwrap();
        assert_eq!(f.values(), g.values());
    }

    #[test]
    fn spec_json_uses_paper_field_names() {
        let s = spec(1.0, 2, 10.0, 33);
        let j = serde_json::to_value(s).unwrap();
        assert_eq!(j["C"], 1.0);
        assert_eq!(j["M"], 2);
        assert_eq!(j["L"], 10.0);
        assert_eq!(j["grid_n"], 33);
    }

    #[test]
    fn eval_interpolates_linearly() {
        let s = spec(1.0, 0, 1.0, 3); // nodes at 0, 0.5, 1
        let f = GridFunction::from_values(vec![0.0, 1.0, 0.0], s).unwrap();
        assert!((f.eval(0.25) - 0.5).abs() < 1e-15);
        assert!((f.eval(0.75) - 0.5).abs() < 1e-15);
        assert_eq!(f.grid_argmax(), 1);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let s = spec(1.0, 0, 1.0, 4);
        let f = GridFunction::from_values(vec![0.3, 0.7, 0.7, 0.1], s).unwrap();
        assert_eq!(f.grid_argmax(), 1);
    }
}
