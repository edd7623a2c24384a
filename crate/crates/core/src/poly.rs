//! Piecewise polynomials with exact antiderivatives.
//!
//! The extremal and bump constructions in [`crate::funclass`] start from a
//! piecewise-constant top derivative and integrate it several times, keeping
//! per-piece coefficient tables so values and crossing points can be
//! evaluated without quadrature error.

/// A polynomial on `[breaks[i], breaks[i+1])` per piece, stored in powers of
/// the local coordinate `x - breaks[i]`.
#[derive(Clone, Debug)]
pub struct PiecewisePoly {
    breaks: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
}

impl PiecewisePoly {
    /// Piecewise-constant function with the given break points and one value
    /// per interval (`values.len() == breaks.len() - 1`).
    pub fn piecewise_constant(breaks: Vec<f64>, values: &[f64]) -> Self {
        assert!(breaks.len() >= 2 && values.len() == breaks.len() - 1);
        assert!(breaks.windows(2).all(|w| w[0] < w[1]));
        Self {
            coeffs: values.iter().map(|&v| vec![v]).collect(),
            breaks,
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breaks[0], *self.breaks.last().unwrap())
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    /// Per-piece coefficient rows in local coordinates, lowest power first.
    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    fn piece_index(&self, x: f64) -> usize {
        // Clamp to the domain; the last break belongs to the last piece.
        if x <= self.breaks[0] {
            return 0;
        }
        let last = self.coeffs.len() - 1;
        if x >= self.breaks[self.breaks.len() - 1] {
            return last;
        }
        match self
            .breaks
            .binary_search_by(|b| b.partial_cmp(&x).unwrap())
        {
            Ok(i) => i.min(last),
            Err(i) => i - 1,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.piece_index(x);
        let u = x - self.breaks[i];
        // Horner in the local coordinate.
        self.coeffs[i].iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    /// Exact antiderivative, continuous across pieces, taking the given value
    /// at the left end of the domain.
    pub fn antiderivative(&self, value_at_left: f64) -> Self {
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        let mut left_value = value_at_left;
        for (i, c) in self.coeffs.iter().enumerate() {
            let mut row = Vec::with_capacity(c.len() + 1);
            row.push(left_value);
            for (k, &ck) in c.iter().enumerate() {
                row.push(ck / (k as f64 + 1.0));
            }
            let width = self.breaks[i + 1] - self.breaks[i];
            left_value = row.iter().rev().fold(0.0, |acc, &c| acc * width + c);
            coeffs.push(row);
        }
        Self {
            breaks: self.breaks.clone(),
            coeffs,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            breaks: self.breaks.clone(),
            coeffs: self
                .coeffs
                .iter()
                .map(|c| c.iter().map(|&v| v * s).collect())
                .collect(),
        }
    }

    /// Adds a constant to the function value.
    pub fn offset(&self, v: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.coeffs {
            if row.is_empty() {
                row.push(v);
            } else {
                row[0] += v;
            }
        }
        out
    }

    /// Finds `x` in `[lo, hi]` with `f(x) = target` by bisection, assuming f
    /// is monotone on the bracket. Relative tolerance 1e-14 on the bracket.
    pub fn solve_monotone(&self, lo: f64, hi: f64, target: f64) -> Option<f64> {
        let (mut lo, mut hi) = (lo, hi);
        let (flo, fhi) = (self.eval(lo) - target, self.eval(hi) - target);
        if flo == 0.0 {
            return Some(lo);
        }
        if fhi == 0.0 {
            return Some(hi);
        }
        if flo.signum() == fhi.signum() {
            return None;
        }
        let rising = fhi > 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let fm = self.eval(mid) - target;
            if (fm > 0.0) == rising {
                hi = mid;
            } else {
                lo = mid;
            }
            if (hi - lo).abs() <= 1e-14 * (1.0 + hi.abs()) {
                break;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn antiderivative_of_constant_is_linear() {
        let q = PiecewisePoly::piecewise_constant(vec![0.0, 0.5, 1.0], &[1.0, -1.0]);
        let p = q.antiderivative(0.0);
        assert!((p.eval(0.5) - 0.5).abs() < 1e-15);
        assert!((p.eval(1.0) - 0.0).abs() < 1e-15);
        assert!((p.eval(0.25) - 0.25).abs() < 1e-15);
        assert!((p.eval(0.75) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn double_antiderivative_matches_quadratic() {
        // q = 1 on [0,1]; I^2 q = x^2/2.
        let q = PiecewisePoly::piecewise_constant(vec![0.0, 1.0], &[1.0]);
        let p = q.antiderivative(0.0).antiderivative(0.0);
        for &x in &[0.0, 0.3, 0.7, 1.0] {
            assert!((p.eval(x) - 0.5 * x * x).abs() < 1e-15);
        }
    }

    #[test]
    fn solve_monotone_finds_crossing() {
        let q = PiecewisePoly::piecewise_constant(vec![0.0, 1.0], &[2.0]);
        let p = q.antiderivative(0.0); // 2x
        let x = p.solve_monotone(0.0, 1.0, 1.0).unwrap();
        assert!((x - 0.5).abs() < 1e-12);
    }
}
