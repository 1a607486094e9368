//! Piecewise-polynomial cutoff functions with exact derivatives.

/// Order of the transition polynomial: `S ∈ C^SMOOTHNESS` at both knots.
pub const SMOOTHNESS: usize = 6;

/// Polynomial smoothstep `S(x) = x^{m+1} Σ_k C(m+k,k)(1-x)^k` on `[0,1]`,
/// clamped to 0 below and 1 above.
#[derive(Debug, Clone)]
pub struct Smoothstep {
    /// `derivs[d]` holds the monomial coefficients of `S^{(d)}`.
    derivs: Vec<Vec<f64>>,
}

impl Smoothstep {
    pub fn new(m: usize) -> Self {
        let mut coef = vec![0.0; 2 * m + 2];
        for k in 0..=m {
            let c = binom(m + k, k);
            // (1-x)^k expanded
            for i in 0..=k {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                coef[m + 1 + i] += c * binom(k, i) * s;
            }
        }
        let mut derivs = vec![coef];
        while derivs.last().unwrap().len() > 1 {
            let p = derivs.last().unwrap();
            let d: Vec<f64> = p.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect();
            derivs.push(d);
        }
        Self { derivs }
    }

    pub fn degree(&self) -> usize {
        self.derivs[0].len() - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.derivs[0]
    }

    /// `S^{(d)}(x)`, with the clamped extension outside `[0,1]`.
    pub fn eval(&self, x: f64, d: usize) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return if d == 0 { 1.0 } else { 0.0 };
        }
        // evaluate on the half nearer to its knot: S(x) = 1 - S(1 - x)
        let (y, sign) = if x <= 0.5 { (x, 1.0) } else { (1.0 - x, if d.is_multiple_of(2) { -1.0 } else { 1.0 }) };
        let v = match self.derivs.get(d) {
            Some(p) => sign * horner(p, y),
            None => 0.0,
        };
        if x > 0.5 && d == 0 {
            1.0 + v
        } else {
            v
        }
    }
}

impl Default for Smoothstep {
    fn default() -> Self {
        Self::new(SMOOTHNESS)
    }
}

fn horner(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Even plateau cutoff: 1 on `|t| <= plateau`, 0 on `|t| >= support`.
#[derive(Debug, Clone)]
pub struct CutoffProfile {
    pub plateau: f64,
    pub support: f64,
    pub step: Smoothstep,
    pub l2_norm_sq: f64,
}

impl CutoffProfile {
    /// The profile used throughout: plateau `1/(8√n)`, support `1/(4√n)`.
    pub fn for_dimension(n: usize) -> Self {
        assert!(n >= 1);
        let s = (n as f64).sqrt();
        Self::with_widths(1.0 / (8.0 * s), 1.0 / (4.0 * s))
    }

    pub fn with_widths(plateau: f64, support: f64) -> Self {
        assert!(0.0 < plateau && plateau < support);
        let step = Smoothstep::default();
        // ∫χ² = 2a + 2h ∫_0^1 (1 - S)^2; Gauss–Legendre is exact for the squared polynomial
        let (x, w) = crate::quad::gauss_legendre(step.degree() + 1);
        let integral: f64 =
            x.iter().zip(&w).map(|(x, w)| 0.5 * w * (1.0 - step.eval(0.5 * (x + 1.0), 0)).powi(2)).sum();
        let l2_norm_sq = 2.0 * plateau + 2.0 * (support - plateau) * integral;
        Self { plateau, support, step, l2_norm_sq }
    }

    /// `χ^{(d)}(t)`.
    #[inline]
    pub fn eval(&self, t: f64, d: usize) -> f64 {
        let a = t.abs();
        if a >= self.support {
            return 0.0;
        }
        if a <= self.plateau {
            return if d == 0 { 1.0 } else { 0.0 };
        }
        let h = self.support - self.plateau;
        let u = (a - self.plateau) / h;
        let mut v = -self.step.eval(u, d) / h.powi(d as i32);
        if d == 0 {
            v += 1.0;
        }
        if t < 0.0 && d % 2 == 1 {
            -v
        } else {
            v
        }
    }

    /// `[χ, χ', …, χ^{(D-1)}]` at `t`.
    pub fn eval_all<const D: usize>(&self, t: f64) -> [f64; D] {
        let mut out = [0.0; D];
        for (d, o) in out.iter_mut().enumerate() {
            *o = self.eval(t, d);
        }
        out
    }
}

/// Monotone ramp from 0 (at `start`) to 1 (at `start + width`).
#[derive(Debug, Clone)]
pub struct Ramp {
    pub start: f64,
    pub width: f64,
    step: Smoothstep,
}

impl Ramp {
    pub fn new(start: f64, width: f64) -> Self {
        assert!(width > 0.0);
        Self { start, width, step: Smoothstep::default() }
    }

    #[inline]
    pub fn eval(&self, t: f64, d: usize) -> f64 {
        self.step.eval((t - self.start) / self.width, d) / self.width.powi(d as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep_matches_knot_conditions() {
        let s = Smoothstep::default();
        assert_eq!(s.degree(), 2 * SMOOTHNESS + 1);
        assert!((s.eval(0.5, 0) - 0.5).abs() < 1e-14);
        for d in 1..=SMOOTHNESS {
            assert!(horner(&s.derivs[d], 1.0).abs() < 1e-9, "d={d}");
            assert!(horner(&s.derivs[d], 0.0).abs() < 1e-14, "d={d}");
        }
        assert!((horner(&s.derivs[0], 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cutoff_values_and_norm() {
        let c = CutoffProfile::for_dimension(2);
        assert_eq!(c.eval(0.0, 0), 1.0);
        assert_eq!(c.eval(1.0, 0), 0.0);
        let lo = 1.0 / (4.0 * 2f64.sqrt());
        assert!(c.l2_norm_sq > lo && c.l2_norm_sq < 2.0 * lo);
        let num = crate::quad::simpson(|t| c.eval(t, 0).powi(2), -c.support, c.support, 20000);
        assert!((num - c.l2_norm_sq).abs() / c.l2_norm_sq < 1e-12);
    }

    #[test]
    fn cutoff_is_even_with_odd_derivatives() {
        let c = CutoffProfile::for_dimension(3);
        let t = 0.5 * (c.plateau + c.support);
        for d in 0..7 {
            let s = if d % 2 == 0 { 1.0 } else { -1.0 };
            assert!((c.eval(-t, d) - s * c.eval(t, d)).abs() < 1e-9);
        }
    }

    #[test]
    fn ramp_endpoints() {
        let r = Ramp::new(1.0, 0.5);
        assert_eq!(r.eval(0.9, 0), 0.0);
        assert_eq!(r.eval(1.6, 0), 1.0);
        assert!((r.eval(1.25, 0) - 0.5).abs() < 1e-14);
    }
}
