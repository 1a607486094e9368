//! Domains, admissible light rays, anchors and the cutoffs attached to them.

use crate::cutoff::Ramp;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Spatial point; components beyond the domain dimension stay zero.
pub type Vec3 = [f64; 3];

#[inline]
pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn axpy(a: f64, x: &Vec3, y: &Vec3) -> Vec3 {
    [a * x[0] + y[0], a * x[1] + y[1], a * x[2] + y[2]]
}

/// Concentric balls Ω = B_r ⊂ Ω̃ = B_r̃ in ℝⁿ, time window (0, T) and the
/// half-width of the computational box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub n: usize,
    pub r: f64,
    pub r_tilde: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub box_halfwidth: f64,
}

impl DomainConfig {
    /// Domain with the smallest box that keeps boundary reflections out of Ω̃.
    pub fn new(n: usize, r: f64, r_tilde: f64, t_final: f64) -> Result<Self> {
        let d = Self { n, r, r_tilde, t_final, box_halfwidth: r_tilde + t_final };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.n) {
            return Err(Error::Geometry(format!("dimension {} not in {{2, 3}}", self.n)));
        }
        if !(self.r > 0.0 && self.r < self.r_tilde) {
            return Err(Error::Geometry(format!("need 0 < r < r_tilde, got r={}, r_tilde={}", self.r, self.r_tilde)));
        }
        if self.t_final <= 2.0 * self.r {
            return Err(Error::Geometry(format!("T = {} must exceed diam(Ω) = {}", self.t_final, 2.0 * self.r)));
        }
        if self.box_halfwidth < self.r_tilde + self.t_final {
            return Err(Error::Geometry(format!(
                "box half-width {} below r_tilde + T = {}",
                self.box_halfwidth,
                self.r_tilde + self.t_final
            )));
        }
        Ok(())
    }

    /// Membership in the optimal set 𝒟.
    pub fn in_d(&self, t: f64, x: &Vec3) -> bool {
        let dist = self.r - norm(x);
        dist > 0.0 && dist < t && t < self.t_final - dist
    }
}

/// A light ray `s ↦ (t0 + s, entry + s ξ)`, with the chord `s ∈ [0, length]`
/// inside Ω̄.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightRay {
    pub t0: f64,
    pub entry: Vec3,
    pub xi: Vec3,
    pub length: f64,
}

impl LightRay {
    pub fn through(t0: f64, entry: Vec3, exit: Vec3) -> Self {
        let d = sub(&exit, &entry);
        let length = norm(&d);
        let xi = [d[0] / length, d[1] / length, d[2] / length];
        Self { t0, entry, xi, length }
    }

    #[inline]
    pub fn point(&self, s: f64) -> (f64, Vec3) {
        (self.t0 + s, axpy(s, &self.xi, &self.entry))
    }

    pub fn exit(&self) -> Vec3 {
        self.point(self.length).1
    }
}

/// An admissible ray of the family together with its anchor and tube radius.
#[derive(Debug, Clone, PartialEq)]
pub struct RayDescriptor {
    pub j: usize,
    pub ray: LightRay,
    pub p_exit: Vec3,
    /// Parameter of the anchor along the ray (negative: before entry).
    pub s_hat: f64,
    pub s: f64,
    pub x: Vec3,
    pub delta: f64,
    pub frame: Vec<Vec3>,
    pub n: usize,
}

impl RayDescriptor {
    pub fn xi(&self) -> &Vec3 {
        &self.ray.xi
    }

    pub fn chord_length(&self) -> f64 {
        self.ray.length
    }

    pub fn t0(&self) -> f64 {
        self.ray.t0
    }

    /// `ζ_{j,-}`: 0 before `s_j − δ/(4√n)`, 1 after `s_j`.
    pub fn zeta_minus(&self) -> Ramp {
        let w = self.delta / (4.0 * (self.n as f64).sqrt());
        Ramp::new(self.s - w, w)
    }

    /// `1 − ζ_{j,+}`: ramps from 0 at `s_j + δ/(8√n)` to 1 at `s_j + δ/(4√n)`.
    pub fn zeta_plus_complement(&self) -> Ramp {
        let w = self.delta / (8.0 * (self.n as f64).sqrt());
        Ramp::new(self.s + w, w)
    }

    pub fn eval_zeta(&self, sign: ZetaSign, t: f64, d: usize) -> f64 {
        match sign {
            ZetaSign::Minus => self.zeta_minus().eval(t, d),
            ZetaSign::Plus => {
                let v = -self.zeta_plus_complement().eval(t, d);
                if d == 0 {
                    1.0 + v
                } else {
                    v
                }
            }
        }
    }

    /// Spatial cutoff η_j for this ray.
    pub fn eta(&self, domain: &DomainConfig) -> Eta {
        Eta::new(domain.r, self.delta / 4.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZetaSign {
    Plus,
    Minus,
}

/// Radial cutoff equal to 1 on `|x| <= r`, 0 on `|x| >= r + width`.
#[derive(Debug, Clone)]
pub struct Eta {
    pub r: f64,
    pub width: f64,
    ramp: Ramp,
}

/// Value, gradient and Hessian of a scalar field at one point.
#[derive(Debug, Clone, Copy, Default)]
pub struct Jet2 {
    pub value: f64,
    pub grad: Vec3,
    pub hess: [[f64; 3]; 3],
}

impl Jet2 {
    pub fn laplacian(&self, n: usize) -> f64 {
        (0..n).map(|i| self.hess[i][i]).sum()
    }
}

impl Eta {
    pub fn new(r: f64, width: f64) -> Self {
        Self { r, width, ramp: Ramp::new(r, width) }
    }

    pub fn outer_radius(&self) -> f64 {
        self.r + self.width
    }

    #[inline]
    pub fn value(&self, x: &Vec3) -> f64 {
        1.0 - self.ramp.eval(norm(x), 0)
    }

    pub fn jet(&self, x: &Vec3, n: usize) -> Jet2 {
        let rho = norm(x);
        let mut j = Jet2 { value: 1.0 - self.ramp.eval(rho, 0), ..Default::default() };
        if rho <= self.r || rho >= self.r + self.width {
            return j;
        }
        let g1 = -self.ramp.eval(rho, 1);
        let g2 = -self.ramp.eval(rho, 2);
        let u = [x[0] / rho, x[1] / rho, x[2] / rho];
        for a in 0..n {
            j.grad[a] = g1 * u[a];
            for b in 0..n {
                let id = if a == b { 1.0 } else { 0.0 };
                j.hess[a][b] = g2 * u[a] * u[b] + g1 / rho * (id - u[a] * u[b]);
            }
        }
        j
    }
}

/// Orthonormal complement of `xi` in ℝⁿ.
pub fn transverse_frame(xi: &Vec3, n: usize) -> Vec<Vec3> {
    if n == 2 {
        return vec![[-xi[1], xi[0], 0.0]];
    }
    let axis = (0..3).min_by(|&a, &b| xi[a].abs().total_cmp(&xi[b].abs())).unwrap();
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let p = dot(&e, xi);
    let mut e1 = axpy(-p, xi, &e);
    let l = norm(&e1);
    e1 = [e1[0] / l, e1[1] / l, e1[2] / l];
    let e2 = [xi[1] * e1[2] - xi[2] * e1[1], xi[2] * e1[0] - xi[0] * e1[2], xi[0] * e1[1] - xi[1] * e1[0]];
    vec![e1, e2]
}

/// Discretization knobs of the ray search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RaySearch {
    /// Chord samples used in the admissibility check (at least 64).
    pub chord_samples: usize,
    /// Anchor search step as a fraction of δ_j.
    pub anchor_step: f64,
    /// Fraction of the measured margin kept in reserve.
    pub safety: f64,
    /// Upper bound on δ_j.
    pub delta_max: f64,
}

impl Default for RaySearch {
    fn default() -> Self {
        Self { chord_samples: 64, anchor_step: 0.25, safety: 0.2, delta_max: f64::INFINITY }
    }
}

/// An enumerated family of admissible rays.
#[derive(Debug, Clone)]
pub struct RayFamily {
    pub domain: DomainConfig,
    pub rays: Vec<RayDescriptor>,
    pub boundary_samples: Vec<Vec3>,
    pub time_samples: Vec<f64>,
}

impl RayFamily {
    pub fn ray(&self, j: usize) -> &RayDescriptor {
        &self.rays[j - 1]
    }
}

/// Radical inverse of `i` in base `b`.
pub fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// Nested sample times in (0, T): `T·φ₂(i)`, i = 1, 2, ….
pub fn time_samples(t_final: f64, count: usize) -> Vec<f64> {
    (1..=count as u64).map(|i| t_final * radical_inverse(i, 2)).collect()
}

/// Nested points on ∂Ω (angles from the base-2 radical inverse in 2D, a
/// Halton pair mapped to the sphere in 3D).
pub fn boundary_samples(domain: &DomainConfig, count: usize) -> Vec<Vec3> {
    let r = domain.r;
    (0..count as u64)
        .map(|i| {
            if domain.n == 2 {
                let a = std::f64::consts::TAU * radical_inverse(i, 2);
                [r * a.cos(), r * a.sin(), 0.0]
            } else {
                let z = 1.0 - 2.0 * radical_inverse(i, 2);
                let a = std::f64::consts::TAU * radical_inverse(i, 3);
                let s = (1.0 - z * z).max(0.0).sqrt();
                [r * s * a.cos(), r * s * a.sin(), r * z]
            }
        })
        .collect()
}

/// Spacetime radius by which the chord can be thickened while its part in
/// (0,T)×Ω stays in 𝒟; `None` if the chord itself leaves 𝒟.
pub fn d_margin(domain: &DomainConfig, ray: &LightRay, samples: usize) -> Option<f64> {
    let m = samples.max(64);
    let mut margin = f64::INFINITY;
    for i in 0..=m {
        let s = ray.length * i as f64 / m as f64;
        let (t, x) = ray.point(s);
        let dist = (domain.r - norm(&x)).max(0.0);
        let g1 = t - dist;
        let g2 = domain.t_final - t - dist;
        if g1 <= 0.0 || g2 <= 0.0 {
            return None;
        }
        margin = margin.min(g1.min(g2) / std::f64::consts::SQRT_2);
    }
    // sampling error along the chord: g is √2-Lipschitz in s
    let slack = std::f64::consts::SQRT_2 * ray.length / m as f64;
    if margin <= slack {
        return None;
    }
    Some(margin - slack)
}

/// Largest ball radius around `γ(s)` inside (0,T)×(Ω̃∖Ω̄).
pub fn anchor_capacity(domain: &DomainConfig, ray: &LightRay, s: f64) -> f64 {
    let (t, x) = ray.point(s);
    let rho = norm(&x);
    (rho - domain.r).min(domain.r_tilde - rho).min(t).min(domain.t_final - t)
}

fn best_anchor_capacity(domain: &DomainConfig, ray: &LightRay) -> f64 {
    let span = domain.r_tilde - domain.r + domain.t_final;
    let m = 2048;
    (1..=m).map(|i| anchor_capacity(domain, ray, -span * i as f64 / m as f64)).fold(0.0, f64::max)
}

/// First `count` admissible rays of 𝒯×𝒫×𝒫 in lexicographic order.
pub fn enumerate_rays(
    domain: &DomainConfig,
    count: usize,
    seed_density: (usize, usize),
    search: &RaySearch,
) -> Result<RayFamily> {
    domain.validate()?;
    let (nb, nt) = seed_density;
    let boundary = boundary_samples(domain, nb);
    let times = time_samples(domain.t_final, nt);
    let mut rays: Vec<RayDescriptor> = Vec::with_capacity(count);
    'outer: for &t0 in &times {
        for (a, pa) in boundary.iter().enumerate() {
            for (b, pb) in boundary.iter().enumerate() {
                if rays.len() == count {
                    break 'outer;
                }
                if a == b {
                    continue;
                }
                let ray = LightRay::through(t0, *pa, *pb);
                let Some(margin) = d_margin(domain, &ray, search.chord_samples) else {
                    continue;
                };
                let capacity = best_anchor_capacity(domain, &ray);
                let keep = 1.0 - search.safety;
                let mut delta = (margin * keep).min(capacity * keep).min(search.delta_max);
                if let Some(prev) = rays.last() {
                    let j = rays.len() + 1;
                    delta = delta.min(prev.delta * (1.0 - 1.0 / (j as f64 + 1.0)));
                }
                if delta <= 0.0 {
                    continue;
                }
                let Some(s_hat) = find_anchor(domain, &ray, delta, search.anchor_step) else {
                    continue;
                };
                let (s, x) = ray.point(s_hat);
                rays.push(RayDescriptor {
                    j: rays.len() + 1,
                    ray,
                    p_exit: *pb,
                    s_hat,
                    s,
                    x,
                    delta,
                    frame: transverse_frame(&ray.xi, domain.n),
                    n: domain.n,
                });
            }
        }
    }
    if rays.len() < count {
        return Err(Error::InsufficientRays { requested: count, found: rays.len(), seed_density });
    }
    Ok(RayFamily { domain: domain.clone(), rays, boundary_samples: boundary, time_samples: times })
}

fn find_anchor(domain: &DomainConfig, ray: &LightRay, delta: f64, step: f64) -> Option<f64> {
    let limit = ((domain.r_tilde - domain.r + domain.t_final) / (step * delta)).ceil() as usize;
    (1..=limit).map(|k| -(k as f64) * step * delta).find(|&s| anchor_capacity(domain, ray, s) > delta)
}

/// Write the ray manifest as CSV.
pub fn write_manifest<W: Write>(family: &RayFamily, w: W) -> Result<()> {
    let n = family.domain.n;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["j".to_string(), "t0".to_string()];
    for name in ["p_entry", "p_exit", "xi"] {
        header.extend((0..n).map(|i| format!("{name}_{i}")));
    }
    header.push("s_j".into());
    header.extend((0..n).map(|i| format!("x_j_{i}")));
    header.push("delta_j".into());
    out.write_record(&header)?;
    for ray in &family.rays {
        let mut rec = vec![ray.j.to_string(), ray.t0().to_string()];
        for v in [&ray.ray.entry, &ray.p_exit, ray.xi()] {
            rec.extend(v[..n].iter().map(|c| c.to_string()));
        }
        rec.push(ray.s.to_string());
        rec.extend(ray.x[..n].iter().map(|c| c.to_string()));
        rec.push(ray.delta.to_string());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Read a ray manifest written by [`write_manifest`].
pub fn read_manifest<R: Read>(domain: &DomainConfig, r: R) -> Result<Vec<RayDescriptor>> {
    let n = domain.n;
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut rays = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Format(format!("manifest row too short: {rec:?}")))?
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("manifest field {i}: {e}")))
        };
        let vec = |start: usize| -> Result<Vec3> {
            let mut v = [0.0; 3];
            for (i, c) in v.iter_mut().take(n).enumerate() {
                *c = f(start + i)?;
            }
            Ok(v)
        };
        let j = f(0)? as usize;
        let t0 = f(1)?;
        let entry = vec(2)?;
        let p_exit = vec(2 + n)?;
        let xi = vec(2 + 2 * n)?;
        let s = f(2 + 3 * n)?;
        let x = vec(3 + 3 * n)?;
        let delta = f(3 + 4 * n)?;
        let length = norm(&sub(&p_exit, &entry));
        rays.push(RayDescriptor {
            j,
            ray: LightRay { t0, entry, xi, length },
            p_exit,
            s_hat: s - t0,
            s,
            x,
            delta,
            frame: transverse_frame(&xi, n),
            n,
        });
    }
    Ok(rays)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> DomainConfig {
        DomainConfig::new(2, 1.0, 1.3, 2.5).unwrap()
    }

    #[test]
    fn rejects_short_time() {
        assert!(DomainConfig::new(2, 1.0, 1.3, 2.0).is_err());
    }

    #[test]
    fn in_d_examples() {
        let d = desk();
        assert!(d.in_d(1.25, &[0.0; 3]));
        assert!(!d.in_d(0.0, &[0.5, 0.0, 0.0]));
        assert!(!d.in_d(1.0, &[1.1, 0.0, 0.0]));
    }

    #[test]
    fn frames_are_orthonormal() {
        for xi in [[0.6, 0.8, 0.0], [0.0, 0.0, 1.0], [0.48, -0.6, 0.64]] {
            let f = transverse_frame(&xi, 3);
            assert!(dot(&f[0], &xi).abs() < 1e-12 && dot(&f[1], &xi).abs() < 1e-12);
            assert!((dot(&f[0], &f[0]) - 1.0).abs() < 1e-12 && dot(&f[0], &f[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn first_ray_has_admissible_midpoint() {
        let d = desk();
        let fam = enumerate_rays(&d, 1, (16, 8), &RaySearch::default()).unwrap();
        let ray = &fam.rays[0];
        let (t, x) = ray.ray.point(ray.chord_length() / 2.0);
        let dist = d.r - norm(&x);
        assert!(dist < t && t < d.t_final - dist);
        assert!((norm(ray.xi()) - 1.0).abs() < 1e-14);
        assert!((norm(&ray.ray.entry) - d.r).abs() < 1e-12);
    }

    #[test]
    fn insufficient_rays_is_reported() {
        let err = enumerate_rays(&desk(), 10_000, (4, 2), &RaySearch::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientRays { .. }));
    }
}
