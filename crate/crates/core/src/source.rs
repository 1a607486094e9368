//! Packet sources, weights and the truncated universal source.

use crate::error::{Error, Result};
use crate::field::{FieldSlab, GridSpec, Region};
use crate::geometry::{norm, sub, RayDescriptor, RayFamily, ZetaSign};
use crate::optics::{FreePacket, Local};
use crate::par::{map_range, Execution};
use crate::quad::panel_rule;
use crate::sum::{ComplexSum, NeumaierSum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// How the per-ray constant κ_j is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaMode {
    /// `δ_j^{−n/2−8}`.
    Formula,
    /// `δ_j^{−2}` times the largest measured free-packet constant.
    #[default]
    Measured,
}

/// Frequency weights `c_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyWeights {
    /// `c_k = k⁻³ τ_k⁻¹`.
    #[default]
    Standard,
    /// `c_k = k⁻³`; a diagnostic for noise amplification, not the paper's weights.
    Unscaled,
}

/// `τ_k`, `c_k`, `κ_j`, `b_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub tau: Vec<f64>,
    pub c: Vec<f64>,
    pub kappa: Vec<f64>,
    pub b: Vec<f64>,
}

impl WeightScheme {
    pub fn new(levels: usize, kappa: Vec<f64>, weights: FrequencyWeights) -> Self {
        let tau: Vec<f64> = (1..=levels).map(|k| (k as f64).exp()).collect();
        let c = (1..=levels)
            .map(|k| {
                let base = (k as f64).powi(-3);
                match weights {
                    FrequencyWeights::Standard => base / tau[k - 1],
                    FrequencyWeights::Unscaled => base,
                }
            })
            .collect();
        let b = kappa.iter().enumerate().map(|(j, k)| 0.5f64.powi(j as i32 + 1) / k).collect();
        Self { tau, c, kappa, b }
    }

    pub fn tau_n(&self, index: usize) -> f64 {
        (index as f64).exp()
    }

    /// `c_N` for any `N ≥ 1`, including `N` beyond the truncation.
    pub fn c_n(&self, index: usize, weights: FrequencyWeights) -> f64 {
        let base = (index as f64).powi(-3);
        match weights {
            FrequencyWeights::Standard => base / (index as f64).exp(),
            FrequencyWeights::Unscaled => base,
        }
    }
}

/// `f_{j,τ}` without the phase, at a local point of the packet frame.
pub fn packet_source_local(packet: &FreePacket, ray: &RayDescriptor, l: &Local) -> Complex64 {
    let (t, _) = packet.frame.to_global(l);
    let zp = ray.eval_zeta(ZetaSign::Plus, t, 0);
    if zp == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let z0 = ray.eval_zeta(ZetaSign::Minus, t, 0);
    let z1 = ray.eval_zeta(ZetaSign::Minus, t, 1);
    let z2 = ray.eval_zeta(ZetaSign::Minus, t, 2);
    if z0 == 0.0 && z1 == 0.0 && z2 == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let jet = packet.jet_local(l);
    zp * (z2 * jet.a + 2.0 * z1 * jet.dt_u(packet.tau) + z0 * jet.box_u)
}

/// `f_{j,τ}(t, x) = ζ_{j,+} □(ζ_{j,−} 𝒰_{j,τ})`.
pub fn packet_source_at(packet: &FreePacket, ray: &RayDescriptor, t: f64, x: &crate::geometry::Vec3) -> Complex64 {
    let l = packet.frame.to_local(t, x);
    let v = packet_source_local(packet, ray, &l);
    if v == Complex64::new(0.0, 0.0) {
        return v;
    }
    Complex64::from_polar(1.0, packet.tau * packet.frame.phase(&l)) * v
}

/// Time window outside which `f_{j,τ}` vanishes: `|t − s_j| ≤ δ_j/(4√n)`.
pub fn source_time_window(ray: &RayDescriptor) -> (f64, f64) {
    let w = ray.delta / (4.0 * (ray.n as f64).sqrt());
    (ray.s - w, ray.s + w)
}

/// `‖f_{j,τ}‖_{L²}` by Gauss–Legendre panels in local coordinates.
pub fn packet_source_l2(packet: &FreePacket, ray: &RayDescriptor) -> f64 {
    let hw = packet.profile.half_width();
    let pw = packet.profile.plateau_width();
    let tr = [-hw, -pw, pw, hw];
    let trans = panel_rule(&refine(&tr, 4), 8);
    let w = ray.delta / (4.0 * (ray.n as f64).sqrt());
    let sig = panel_rule(&refine(&[-w - hw, -w / 2.0, 0.0, w / 2.0, w + hw], 4), 8);
    let mut acc = NeumaierSum::new();
    for &(s, ws) in &sig {
        for &(a, wa) in &trans {
            for &(b, wb) in &trans {
                if ray.n == 2 {
                    let l = Local { sigma: s, alpha: a, beta: [b, 0.0] };
                    acc.add(ws * wa * wb * packet_source_local(packet, ray, &l).norm_sqr());
                } else {
                    for &(c, wc) in &trans {
                        let l = Local { sigma: s, alpha: a, beta: [b, c] };
                        acc.add(ws * wa * wb * wc * packet_source_local(packet, ray, &l).norm_sqr());
                    }
                }
            }
        }
    }
    acc.value().sqrt()
}

/// Split each interval of `breaks` into `m` equal parts.
pub fn refine(breaks: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![breaks[0]];
    for p in breaks.windows(2) {
        for i in 1..=m {
            out.push(p[0] + (p[1] - p[0]) * i as f64 / m as f64);
        }
    }
    out
}

/// Measured κ_j: `δ_j⁻²` times the largest of the free-packet constants
/// `‖f_{j,τ_k}‖/τ_k`, `max|v⁽⁰⁾|` and `‖v⁽ᵐ⁾‖_∞/(log τ_k)^{2m}` over `k ≤ L`.
pub fn measured_kappa(ray: &RayDescriptor, levels: usize) -> f64 {
    let mut best: f64 = 0.0;
    for k in 1..=levels.max(2) {
        let tau = (k as f64).exp();
        if tau <= std::f64::consts::E {
            continue;
        }
        let fp = FreePacket::new(ray, tau, 2);
        best = best.max(packet_source_l2(&fp, ray) / tau);
        let lam = tau.ln();
        let hw = fp.profile.half_width();
        let sig = ray.delta / (4.0 * (ray.n as f64).sqrt());
        let mut sup = [0.0f64; 3];
        for i in 0..=16 {
            let a = hw * (i as f64 / 16.0 - 0.5) * 1.6;
            let l = Local { sigma: sig, alpha: a, beta: [0.3 * a, 0.0] };
            let p0 = FreePacket { order: 0, ..fp.clone() }.jet_local(&l).a.norm();
            let p1 = FreePacket { order: 1, ..fp.clone() }.jet_local(&l).a;
            let p2 = fp.jet_local(&l).a;
            sup[0] = sup[0].max(p0);
            sup[1] = sup[1].max((p1 - p0).norm() * tau);
            sup[2] = sup[2].max((p2 - p1).norm() * tau * tau);
        }
        for (m, s) in sup.iter().enumerate() {
            best = best.max(s / lam.powi(2 * m as i32));
        }
    }
    best / (ray.delta * ray.delta)
}

pub fn kappa(ray: &RayDescriptor, levels: usize, mode: KappaMode) -> f64 {
    match mode {
        KappaMode::Formula => ray.delta.powf(-(ray.n as f64) / 2.0 - 8.0),
        KappaMode::Measured => measured_kappa(ray, levels),
    }
}

/// Truncated universal source with its weights.
#[derive(Debug, Clone)]
pub struct SourceAssembly {
    pub rays: Vec<RayDescriptor>,
    pub levels: usize,
    pub weights: WeightScheme,
    pub field: FieldSlab,
}

/// `f_{j,τ}` sampled on the grid nodes of `points` (ascending flat indices),
/// all time levels. Fails if the packet leaks outside `B_{δ_j}(q_j)`.
pub fn packet_source_field(
    ray: &RayDescriptor,
    tau: f64,
    grid: &GridSpec,
    points: &[usize],
    exec: Execution,
) -> Result<Vec<Complex64>> {
    let fp = FreePacket::new(ray, tau, 2);
    let np = points.len();
    let xs: Vec<_> = points.iter().map(|&p| grid.point(p)).collect();
    let (t_lo, t_hi) = source_time_window(ray);
    let levels: Vec<Vec<Complex64>> = map_range(exec, grid.nt + 1, |m| {
        let t = grid.time(m);
        if t < t_lo - grid.dt || t > t_hi + grid.dt {
            return vec![Complex64::new(0.0, 0.0); np];
        }
        xs.iter().map(|x| packet_source_at(&fp, ray, t, x)).collect()
    });
    let max = levels.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    // support check against the spacetime ball B_δ(q_j)
    for (m, lv) in levels.iter().enumerate() {
        let dt = grid.time(m) - ray.s;
        for (x, v) in xs.iter().zip(lv) {
            let d = (dt * dt + norm(&sub(x, &ray.x)).powi(2)).sqrt();
            if d >= ray.delta && v.norm() > 1e-12 * max {
                return Err(Error::SupportViolation { value: v.norm(), distance: d, max });
            }
        }
    }
    Ok(levels.concat())
}

/// `f = Σ_{j≤J} b_j Σ_{k≤L} c_k f_{j,τ_k}` on `grid`, accumulated j-outer,
/// k-inner with compensated sums.
#[allow(clippy::too_many_arguments)]
pub fn assemble_universal(
    family: &RayFamily,
    count: usize,
    levels: usize,
    grid: &GridSpec,
    points_per_wavelength: f64,
    kappa_mode: KappaMode,
    weights: FrequencyWeights,
    exec: Execution,
) -> Result<SourceAssembly> {
    if count > family.rays.len() {
        return Err(Error::InsufficientRays { requested: count, found: family.rays.len(), seed_density: (0, 0) });
    }
    if levels < 1 {
        return Err(Error::Config("need at least one frequency level".into()));
    }
    let tau_l = (levels as f64).exp();
    let wavelength = std::f64::consts::TAU / tau_l;
    if grid.dx > wavelength / points_per_wavelength {
        return Err(Error::Resolution(format!(
            "dx = {} does not give {points_per_wavelength} points per wavelength {wavelength:.4} at τ_L = e^{levels}",
            grid.dx
        )));
    }
    let rays: Vec<RayDescriptor> = family.rays[..count].to_vec();
    let kappas: Vec<f64> = rays.iter().map(|r| kappa(r, levels, kappa_mode)).collect();
    let scheme = WeightScheme::new(levels, kappas, weights);

    let mut points: Vec<usize> = rays.iter().flat_map(|r| grid.points_in_ball(&r.x, 0.5 * r.delta)).collect();
    points.sort_unstable();
    points.dedup();
    let np = points.len();
    let mut acc = vec![ComplexSum::new(); (grid.nt + 1) * np];
    for (j, ray) in rays.iter().enumerate() {
        let local: Vec<usize> = grid.points_in_ball(&ray.x, 0.5 * ray.delta);
        let slots: Vec<usize> = local.iter().map(|p| points.binary_search(p).unwrap()).collect();
        for k in 0..levels {
            let vals = packet_source_field(ray, scheme.tau[k], grid, &local, exec)?;
            let w = scheme.b[j] * scheme.c[k];
            for m in 0..=grid.nt {
                for (q, s) in slots.iter().enumerate() {
                    acc[m * np + s].add(w * vals[m * local.len() + q]);
                }
            }
        }
    }
    let mut field = FieldSlab::zeros(grid.clone(), Region::Support, points);
    for (v, a) in field.values.iter_mut().zip(&acc) {
        *v = a.value();
    }
    Ok(SourceAssembly { rays, levels, weights: scheme, field })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_summable() {
        let w = WeightScheme::new(8, vec![2.0, 5.0, 9.0], FrequencyWeights::Standard);
        let s: f64 = w.c.iter().zip(&w.tau).map(|(c, t)| c * t).sum();
        assert!(s <= 1.2021);
        let s: f64 = w.b.iter().zip(&w.kappa).map(|(b, k)| b * k).sum();
        assert!(s <= 1.0);
    }

    #[test]
    fn refine_splits_intervals() {
        assert_eq!(refine(&[0.0, 1.0, 3.0], 2), vec![0.0, 0.5, 1.0, 2.0, 3.0]);
    }
}
