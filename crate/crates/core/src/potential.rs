//! Time-dependent potentials built from compactly supported polynomial bumps.

use crate::error::{Error, Result};
use crate::geometry::{DomainConfig, Vec3};
use serde::{Deserialize, Serialize};

/// `A (1 − s²)₊^p` with `s² = ((t−t₀)/ρ_t)² + |x−x₀|²/ρ_x²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub t0: f64,
    pub x0: Vec<f64>,
    pub rho_t: f64,
    pub rho_x: f64,
    pub amplitude: f64,
    #[serde(default = "default_exponent")]
    pub exponent: u32,
}

fn default_exponent() -> u32 {
    5
}

/// Value, first and second derivatives in `(t, x₁, …, x₃)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpaceTimeJet {
    pub value: f64,
    pub grad: [f64; 4],
    pub hess: [[f64; 4]; 4],
}

impl Bump {
    fn center(&self) -> [f64; 4] {
        let mut c = [self.t0, 0.0, 0.0, 0.0];
        for (i, v) in self.x0.iter().take(3).enumerate() {
            c[i + 1] = *v;
        }
        c
    }

    fn inv_sq(&self) -> [f64; 4] {
        let a = 1.0 / (self.rho_x * self.rho_x);
        [1.0 / (self.rho_t * self.rho_t), a, a, a]
    }

    #[inline]
    pub fn value(&self, t: f64, x: &Vec3) -> f64 {
        let c = self.center();
        let w = self.inv_sq();
        let y = [t - c[0], x[0] - c[1], x[1] - c[2], x[2] - c[3]];
        let s2: f64 = (0..4).map(|i| y[i] * y[i] * w[i]).sum();
        if s2 >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - s2).powi(self.exponent as i32)
        }
    }

    pub fn jet(&self, t: f64, x: &Vec3) -> SpaceTimeJet {
        let c = self.center();
        let w = self.inv_sq();
        let y = [t - c[0], x[0] - c[1], x[1] - c[2], x[2] - c[3]];
        let s2: f64 = (0..4).map(|i| y[i] * y[i] * w[i]).sum();
        let mut j = SpaceTimeJet::default();
        if s2 >= 1.0 {
            return j;
        }
        let q = 1.0 - s2;
        let p = self.exponent as i32;
        let a = self.amplitude;
        let pf = p as f64;
        j.value = a * q.powi(p);
        let dq: [f64; 4] = std::array::from_fn(|i| -2.0 * y[i] * w[i]);
        let d1 = a * pf * q.powi(p - 1);
        let d2 = a * pf * (pf - 1.0) * q.powi(p - 2);
        for i in 0..4 {
            j.grad[i] = d1 * dq[i];
            for k in 0..4 {
                let ddq = if i == k { -2.0 * w[i] } else { 0.0 };
                j.hess[i][k] = d2 * dq[i] * dq[k] + d1 * ddq;
            }
        }
        j
    }

    /// Does the closed support meet the segment `s ↦ (t,x) + s·(1, ξ)`, `s ∈ [a,b]`?
    /// Returns the parameter interval of the intersection.
    pub fn chord_interval(&self, t: f64, x: &Vec3, xi: &Vec3, a: f64, b: f64) -> Option<(f64, f64)> {
        let c = self.center();
        let w = self.inv_sq();
        let y = [t - c[0], x[0] - c[1], x[1] - c[2], x[2] - c[3]];
        let d = [1.0, xi[0], xi[1], xi[2]];
        let qa: f64 = (0..4).map(|i| d[i] * d[i] * w[i]).sum();
        let qb: f64 = (0..4).map(|i| 2.0 * y[i] * d[i] * w[i]).sum();
        let qc: f64 = (0..4).map(|i| y[i] * y[i] * w[i]).sum::<f64>() - 1.0;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc <= 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let lo = ((-qb - sq) / (2.0 * qa)).max(a);
        let hi = ((-qb + sq) / (2.0 * qa)).min(b);
        (lo < hi).then_some((lo, hi))
    }
}

/// A potential as a finite sum of bumps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default)]
    pub bumps: Vec<Bump>,
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn single(bump: Bump) -> Self {
        Self { bumps: vec![bump] }
    }

    pub fn is_zero(&self) -> bool {
        self.bumps.iter().all(|b| b.amplitude == 0.0)
    }

    #[inline]
    pub fn value(&self, t: f64, x: &Vec3) -> f64 {
        self.bumps.iter().map(|b| b.value(t, x)).sum()
    }

    pub fn jet(&self, t: f64, x: &Vec3) -> SpaceTimeJet {
        let mut out = SpaceTimeJet::default();
        for b in &self.bumps {
            let j = b.jet(t, x);
            out.value += j.value;
            for i in 0..4 {
                out.grad[i] += j.grad[i];
                for k in 0..4 {
                    out.hess[i][k] += j.hess[i][k];
                }
            }
        }
        out
    }

    /// Smallest bump radius, used to size quadrature steps.
    pub fn min_radius(&self) -> f64 {
        self.bumps.iter().map(|b| b.rho_t.min(b.rho_x)).fold(f64::INFINITY, f64::min)
    }

    /// Supports must lie in `[0,T]×Ω` and profiles must be at least C⁴.
    pub fn validate(&self, domain: &DomainConfig) -> Result<()> {
        for (i, b) in self.bumps.iter().enumerate() {
            if b.x0.len() != domain.n {
                return Err(Error::Config(format!("bump {i}: center has {} coords, n = {}", b.x0.len(), domain.n)));
            }
            if b.exponent < 5 {
                return Err(Error::Config(format!("bump {i}: exponent {} < 5 is not C^4", b.exponent)));
            }
            if !(b.rho_t > 0.0 && b.rho_x > 0.0 && b.amplitude.is_finite()) {
                return Err(Error::Config(format!("bump {i}: radii must be positive")));
            }
            let c: f64 = b.x0.iter().map(|v| v * v).sum::<f64>().sqrt();
            if c + b.rho_x >= domain.r {
                return Err(Error::Config(format!("bump {i}: spatial support leaves Ω")));
            }
            if b.t0 - b.rho_t < 0.0 || b.t0 + b.rho_t > domain.t_final {
                return Err(Error::Config(format!("bump {i}: temporal support leaves [0, T]")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump() -> Bump {
        Bump { t0: 1.2, x0: vec![0.1, -0.2], rho_t: 0.5, rho_x: 0.4, amplitude: 2.0, exponent: 5 }
    }

    #[test]
    fn jet_matches_finite_differences() {
        let b = bump();
        let p = [1.3, 0.15, -0.1, 0.0];
        let j = b.jet(p[0], &[p[1], p[2], 0.0]);
        let h = 1e-5;
        let f = |q: [f64; 4]| b.value(q[0], &[q[1], q[2], q[3]]);
        for i in 0..3 {
            let mut a = p;
            let mut c = p;
            a[i] += h;
            c[i] -= h;
            let fd = (f(a) - f(c)) / (2.0 * h);
            assert!((fd - j.grad[i]).abs() < 1e-7);
            let ja = b.jet(a[0], &[a[1], a[2], 0.0]);
            let jc = b.jet(c[0], &[c[1], c[2], 0.0]);
            for k in 0..3 {
                let fd2 = (ja.grad[k] - jc.grad[k]) / (2.0 * h);
                assert!((fd2 - j.hess[i][k]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn chord_interval_brackets_support() {
        let b = bump();
        let (lo, hi) = b.chord_interval(0.0, &[-1.0, -0.2, 0.0], &[1.0, 0.0, 0.0], -10.0, 10.0).unwrap();
        assert!(b.value(lo + 1e-3, &[-1.0 + lo + 1e-3, -0.2, 0.0]) > 0.0);
        assert_eq!(b.value(lo - 1e-3, &[-1.0 + lo - 1e-3, -0.2, 0.0]), 0.0);
        assert!(hi > lo);
    }

    #[test]
    fn validation_rejects_low_smoothness() {
        let d = DomainConfig::new(2, 1.0, 1.3, 2.5).unwrap();
        let mut b = bump();
        assert!(PotentialSpec::single(b.clone()).validate(&d).is_ok());
        b.exponent = 4;
        assert!(PotentialSpec::single(b).validate(&d).is_err());
    }
}
