//! The extraction functional `I_N^j`, its free-space counterpart `S_N^j`,
//! the recovered ray integrals and the diagnostics around them.
//!
//! Integrals against the probe are computed in the probe's local
//! coordinates with Gauss–Legendre panels aligned to the cutoff knots.
//! Terms whose phase depends only on `α` use Filon-type weights, exact for
//! the oscillation and polynomial in the amplitude.

use crate::error::{Error, Result};
use crate::field::FieldSlab;
use crate::geometry::{dot, norm, sub, DomainConfig, RayDescriptor, Vec3, ZetaSign};
use crate::optics::{Local, Probe, ProductProfile, RayFrame};
use crate::packet::{solve_transport, PacketStack, StackResolution};
use crate::par::{map_range, Execution};
use crate::potential::PotentialSpec;
use crate::quad::{gauss_legendre, panel_rule};
use crate::sum::ComplexSum;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Quadrature knobs for probe integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeQuadrature {
    /// Gauss–Legendre nodes per panel.
    pub nodes: usize,
    /// Panels between consecutive transverse knots.
    pub transverse_panels: usize,
    /// Panels along the ray.
    pub sigma_panels: usize,
    /// Minimum nodes per period of an oscillating phase.
    pub points_per_period: f64,
    /// Cap on nodes along any one axis.
    pub max_axis_nodes: usize,
}

impl Default for ProbeQuadrature {
    fn default() -> Self {
        Self { nodes: 8, transverse_panels: 4, sigma_panels: 64, points_per_period: 10.0, max_axis_nodes: 200_000 }
    }
}

/// `C_χ = (∫χ²)ⁿ`, the constant in front of the ray integral.
pub fn c_chi(n: usize) -> f64 {
    crate::cutoff::CutoffProfile::for_dimension(n).l2_norm_sq.powi(n as i32)
}

/// Sorted, deduplicated knots clipped to `[lo, hi]`, each gap split so that
/// no panel exceeds `max_len` and every gap has at least `min_parts` panels.
fn breaks(knots: &[f64], lo: f64, hi: f64, min_parts: usize, max_len: f64) -> Vec<f64> {
    let mut k: Vec<f64> = knots.iter().copied().filter(|x| *x > lo && *x < hi).collect();
    k.push(lo);
    k.push(hi);
    k.sort_by(f64::total_cmp);
    k.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (hi - lo));
    let mut out = vec![k[0]];
    for p in k.windows(2) {
        let len = p[1] - p[0];
        let m = min_parts.max((len / max_len).ceil() as usize);
        for i in 1..=m {
            out.push(p[0] + len * i as f64 / m as f64);
        }
    }
    out
}

/// `σ`-interval of the probe tube inside `|x| ≤ r + δ/4`.
pub fn probe_sigma_range(probe: &Probe) -> Option<(f64, f64)> {
    let hw = probe.profile.half_width();
    let big_r = probe.eta.outer_radius() + hw * (probe.frame.n as f64).sqrt();
    let c = &probe.frame.x;
    let b = dot(c, &probe.frame.xi);
    let disc = b * b - dot(c, c) + big_r * big_r;
    if disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    Some((-b - sq - hw, -b + sq + hw))
}

/// Knots along the probe centre line: η's inner and outer radii and the
/// entry and exit of every bump support.
fn sigma_knots(probe: &Probe, potential: Option<&PotentialSpec>) -> Vec<f64> {
    let c = &probe.frame.x;
    let b = dot(c, &probe.frame.xi);
    let mut out = Vec::new();
    for radius in [probe.eta.r, probe.eta.outer_radius()] {
        let disc = b * b - dot(c, c) + radius * radius;
        if disc > 0.0 {
            out.push(-b - disc.sqrt());
            out.push(-b + disc.sqrt());
        }
    }
    if let Some(v) = potential {
        for bump in &v.bumps {
            if let Some((lo, hi)) = bump.chord_interval(probe.frame.s, c, &probe.frame.xi, -1e300, 1e300) {
                out.push(lo);
                out.push(hi);
            }
        }
    }
    out
}

/// Tensor rule over the probe's local box.
#[derive(Debug, Clone)]
struct LocalRule {
    sigma: Vec<(f64, f64)>,
    alpha: Vec<(f64, f64)>,
    beta: Vec<(f64, f64)>,
}

impl LocalRule {
    fn transverse_knots(profile: &ProductProfile) -> Vec<f64> {
        let (h, p) = (profile.half_width(), profile.plateau_width());
        vec![-h, -p, p, h]
    }

    fn axis(knots: &[f64], lo: f64, hi: f64, q: &ProbeQuadrature, max_len: f64) -> Result<Vec<(f64, f64)>> {
        let br = breaks(knots, lo, hi, q.transverse_panels, max_len);
        if (br.len() - 1) * q.nodes > q.max_axis_nodes {
            return Err(Error::Resolution(format!(
                "{} quadrature nodes needed on one axis, cap is {}",
                (br.len() - 1) * q.nodes,
                q.max_axis_nodes
            )));
        }
        Ok(panel_rule(&br, q.nodes))
    }

    /// Rule for probe integrals; `rate` bounds the phase gradient and
    /// `extra` adds transverse knots (other profiles).
    fn new(
        probe: &Probe,
        sigma: (f64, f64),
        sigma_knots: &[f64],
        extra: &[f64],
        rate: f64,
        q: &ProbeQuadrature,
    ) -> Result<Self> {
        let h = probe.profile.half_width();
        let period_len = if rate > 0.0 {
            q.nodes as f64 * std::f64::consts::TAU / (q.points_per_period * rate)
        } else {
            f64::INFINITY
        };
        let mut tk = Self::transverse_knots(&probe.profile);
        tk.extend_from_slice(extra);
        let sigma_len = ((sigma.1 - sigma.0) / q.sigma_panels as f64).min(period_len);
        let sig_br = breaks(sigma_knots, sigma.0, sigma.1, 1, sigma_len);
        if (sig_br.len() - 1) * q.nodes > q.max_axis_nodes {
            return Err(Error::Resolution(format!(
                "{} σ nodes needed, cap is {}",
                (sig_br.len() - 1) * q.nodes,
                q.max_axis_nodes
            )));
        }
        Ok(Self {
            sigma: panel_rule(&sig_br, q.nodes),
            alpha: Self::axis(&tk, -h, h, q, period_len)?,
            beta: Self::axis(&Self::transverse_knots(&probe.profile), -h, h, q, period_len)?,
        })
    }

    fn beta_points(&self, n: usize) -> Vec<([f64; 2], f64)> {
        if n == 2 {
            self.beta.iter().map(|&(b, w)| ([b, 0.0], w)).collect()
        } else {
            let mut out = Vec::with_capacity(self.beta.len().pow(2));
            for &(b1, w1) in &self.beta {
                for &(b2, w2) in &self.beta {
                    out.push(([b1, b2], w1 * w2));
                }
            }
            out
        }
    }
}

/// Weights `W_i = ∫ L_i(α) e^{iωα} dα` for the Lagrange basis on each
/// Gauss–Legendre panel of `rule`.
fn filon_weights(rule: &[(f64, f64)], nodes: usize, omega: f64) -> Vec<Complex64> {
    if omega == 0.0 {
        return rule.iter().map(|&(_, w)| Complex64::from(w)).collect();
    }
    let (z, _) = gauss_legendre(nodes);
    let coef = lagrange_monomials(&z);
    let mut out = Vec::with_capacity(rule.len());
    for panel in rule.chunks(nodes) {
        // the panel's nodes are symmetric: recover its centre and half-length
        let mid = 0.5 * (panel[0].0 + panel[nodes - 1].0);
        let half = 0.5 * panel.iter().map(|p| p.1).sum::<f64>();
        let m = oscillatory_moments(nodes, omega * half);
        let e = Complex64::from_polar(half, omega * mid);
        for c in &coef {
            out.push(e * c.iter().zip(&m).map(|(ck, mk)| ck * mk).sum::<Complex64>());
        }
    }
    out
}

/// Monomial coefficients of the Lagrange basis on nodes `z`.
fn lagrange_monomials(z: &[f64]) -> Vec<Vec<f64>> {
    let n = z.len();
    z.iter()
        .enumerate()
        .map(|(i, zi)| {
            let mut c = vec![1.0];
            let mut den = 1.0;
            for (k, zk) in z.iter().enumerate() {
                if k == i {
                    continue;
                }
                den *= zi - zk;
                let mut next = vec![0.0; c.len() + 1];
                for (d, cd) in c.iter().enumerate() {
                    next[d + 1] += cd;
                    next[d] -= zk * cd;
                }
                c = next;
            }
            debug_assert_eq!(c.len(), n);
            c.into_iter().map(|v| v / den).collect()
        })
        .collect()
}

/// `M_k = ∫_{−1}^{1} z^k e^{iθz} dz` for `k < count`.
fn oscillatory_moments(count: usize, theta: f64) -> Vec<Complex64> {
    if theta.abs() < 4.0 * count as f64 {
        let (x, w) = gauss_legendre(count + 24 + (1.5 * theta.abs()).ceil() as usize);
        return (0..count)
            .map(|k| x.iter().zip(&w).map(|(z, wz)| Complex64::from_polar(wz * z.powi(k as i32), theta * z)).sum())
            .collect();
    }
    // integration by parts, stable for |θ| ≫ k
    let it = Complex64::new(0.0, theta);
    let (ep, em) = (Complex64::from_polar(1.0, theta), Complex64::from_polar(1.0, -theta));
    let mut out = Vec::with_capacity(count);
    let mut prev = (ep - em) / it;
    out.push(prev);
    for k in 1..count {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        prev = (ep - sign * em) / it - (k as f64) / it * prev;
        out.push(prev);
    }
    out
}

/// Does the `k`-th packet tube come near the probe tube inside supp η?
/// Returns the σ-interval (probe coordinates) where it does.
fn tube_overlap(probe: &Probe, sigma: (f64, f64), other: &RayFrame, other_hw: f64) -> Option<(f64, f64)> {
    let hw = probe.profile.half_width();
    let n = probe.frame.n;
    let slack = 2.0 * (n as f64).sqrt() * hw + other_hw;
    let samples = 512;
    let step = (sigma.1 - sigma.0) / samples as f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..=samples {
        let s = sigma.0 + step * i as f64;
        let (t, x) = probe.frame.to_global(&Local { sigma: s, ..Default::default() });
        let l = other.to_local(t, &x);
        let d = l.alpha.abs().max(l.beta[0].abs()).max(l.beta[1].abs());
        if d < slack + step {
            lo = lo.min(s - step);
            hi = hi.max(s + step);
        }
    }
    (lo < hi).then(|| (lo.max(sigma.0), hi.min(sigma.1)))
}

/// `S_N^j = Σ_k b_k ∫ e^{iτ_N(ξ_k−ξ_j)·x} η_j ζ_{k,−} v⁰_{k,τ_N} □w_{j,N}`.
///
/// Depends on the ray manifest and the weights only. Only rays whose
/// `τ_N`-tube meets the probe tube inside supp η_j contribute.
pub fn compute_s(
    domain: &DomainConfig,
    rays: &[RayDescriptor],
    b: &[f64],
    j: usize,
    index: u32,
    q: &ProbeQuadrature,
    exec: Execution,
) -> Result<SSplit> {
    let probe = Probe::new(&rays[j], domain, index);
    let Some(sigma) = probe_sigma_range(&probe) else {
        return Ok(SSplit::default());
    };
    let tau = probe.tau;
    let mut out = SSplit::default();
    for (k, ray) in rays.iter().enumerate().take(b.len()) {
        let frame = RayFrame::new(ray);
        let profile = ProductProfile::new(ray.n, index as f64, ray.delta);
        let (range, rate) = if k == j {
            (sigma, 0.0)
        } else {
            match tube_overlap(&probe, sigma, &frame, profile.half_width()) {
                Some(r) => (r, tau * norm(&sub(&ray.ray.xi, &rays[j].ray.xi))),
                None => continue,
            }
        };
        let rule = LocalRule::new(&probe, range, &sigma_knots(&probe, None), &[], rate, q)?;
        let betas = rule.beta_points(domain.n);
        let dxi = sub(&ray.ray.xi, &rays[j].ray.xi);
        let parts = map_range(exec, rule.sigma.len(), |is| {
            let (s, ws) = rule.sigma[is];
            let mut acc = ComplexSum::new();
            for &(a, wa) in &rule.alpha {
                for &(be, wb) in &betas {
                    let l = Local { sigma: s, alpha: a, beta: be };
                    let (_, box_w) = probe.w_local(&l);
                    if box_w == 0.0 {
                        continue;
                    }
                    let (t, x) = probe.frame.to_global(&l);
                    let eta = probe.eta.value(&x);
                    if eta == 0.0 {
                        continue;
                    }
                    let zeta = ray.eval_zeta(ZetaSign::Minus, t, 0);
                    let v0 = if k == j {
                        profile.value(a, &be)
                    } else {
                        let lk = frame.to_local(t, &x);
                        profile.value(lk.alpha, &lk.beta)
                    };
                    let val = ws * wa * wb * eta * zeta * v0 * box_w;
                    if val != 0.0 {
                        acc.add(Complex64::from_polar(val, tau * dot(&dxi, &x)));
                    }
                }
            }
            acc.value()
        });
        let mut tot = ComplexSum::new();
        for p in parts {
            tot.add(p);
        }
        let term = b[k] * tot.value();
        if k == j {
            out.main = term;
        } else {
            out.cross += term;
            out.contributing.push(k);
        }
    }
    Ok(out)
}

/// `S` split into the `k = j` term and the rest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SSplit {
    pub main: Complex64,
    pub cross: Complex64,
    /// Rays `k ≠ j` whose tubes meet the probe.
    pub contributing: Vec<usize>,
}

impl SSplit {
    pub fn total(&self) -> Complex64 {
        self.main + self.cross
    }
}

/// Decomposition of `c_N⁻¹ I`: the `(k, ℓ) = (j, N)` term, the other
/// frequencies of ray `j`, and all other rays.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LemmaDiagnostics {
    pub j_main: Complex64,
    pub j_residual: Complex64,
    pub k_part: Complex64,
}

/// Extraction with the exact field replaced by the truncated sum of
/// geometric-optics packets (remainders dropped).
#[derive(Debug, Clone, PartialEq)]
pub struct OracleExtraction {
    pub j: usize,
    pub index: u32,
    pub i: Complex64,
    pub s: SSplit,
    pub estimate: f64,
    pub lemma: LemmaDiagnostics,
}

/// Frequency weights and ray weights of the oracle field.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleWeights {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub c_index: f64,
}

/// Oracle-mode extraction for ray `j` at index `N`.
#[allow(clippy::too_many_arguments)]
pub fn oracle_extraction(
    domain: &DomainConfig,
    rays: &[RayDescriptor],
    weights: &OracleWeights,
    potential: &PotentialSpec,
    j: usize,
    index: u32,
    res: &StackResolution,
    q: &ProbeQuadrature,
    exec: Execution,
) -> Result<OracleExtraction> {
    let stacks: Vec<Vec<PacketStack>> = rays
        .iter()
        .take(weights.b.len())
        .map(|ray| {
            (1..=weights.c.len())
                .map(|l| solve_transport(ray, domain, (l as f64).exp(), 2, potential, res, exec))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    oracle_with_stacks(domain, rays, weights, potential, &stacks, j, index, q, exec)
}

/// Oracle extraction from precomputed amplitude stacks `stacks[k][ℓ−1]`.
#[allow(clippy::too_many_arguments)]
pub fn oracle_with_stacks(
    domain: &DomainConfig,
    rays: &[RayDescriptor],
    weights: &OracleWeights,
    potential: &PotentialSpec,
    stacks: &[Vec<PacketStack>],
    j: usize,
    index: u32,
    q: &ProbeQuadrature,
    exec: Execution,
) -> Result<OracleExtraction> {
    let probe = Probe::new(&rays[j], domain, index);
    let s = compute_s(domain, rays, &weights.b, j, index, q, exec)?;
    let mut lemma = LemmaDiagnostics::default();
    let Some(sigma) = probe_sigma_range(&probe) else {
        return Err(Error::Coverage(format!("probe of ray {j} does not meet supp η")));
    };
    let sk = sigma_knots(&probe, Some(potential));
    let tau_n = probe.tau;

    // k = j: phase (τ_ℓ − τ_N)(α + φ₀) handled by Filon weights in α
    {
        let extra: Vec<f64> = stacks[j].iter().flat_map(|st| LocalRule::transverse_knots(&st.profile)).collect();
        let rule = LocalRule::new(&probe, sigma, &sk, &extra, 0.0, q)?;
        let betas = rule.beta_points(domain.n);
        let omegas: Vec<f64> = weights.c.iter().enumerate().map(|(l, _)| ((l + 1) as f64).exp() - tau_n).collect();
        let filon: Vec<Vec<Complex64>> = omegas.iter().map(|&om| filon_weights(&rule.alpha, q.nodes, om)).collect();
        let ray = &rays[j];
        let parts = map_range(exec, rule.sigma.len(), |is| {
            let (sg, ws) = rule.sigma[is];
            let mut acc = vec![ComplexSum::new(); omegas.len()];
            for &(be, wb) in &betas {
                for (ia, &(a, _)) in rule.alpha.iter().enumerate() {
                    let l = Local { sigma: sg, alpha: a, beta: be };
                    let (w, box_w) = probe.w_local(&l);
                    if w == 0.0 && box_w == 0.0 {
                        continue;
                    }
                    let (t, x) = probe.frame.to_global(&l);
                    let eta = probe.eta.value(&x);
                    let zeta = ray.eval_zeta(ZetaSign::Minus, t, 0);
                    if eta == 0.0 || zeta == 0.0 {
                        continue;
                    }
                    let f = ws * wb * eta * zeta * (box_w + potential.value(t, &x) * w);
                    for (li, st) in stacks[j].iter().enumerate() {
                        acc[li].add(filon[li][ia] * (f * st.amplitude(&l)));
                    }
                }
            }
            acc.iter().map(|a| a.value()).collect::<Vec<_>>()
        });
        for (li, om) in omegas.iter().enumerate() {
            let mut tot = ComplexSum::new();
            for p in &parts {
                tot.add(p[li]);
            }
            let term = weights.b[j] * weights.c[li] / weights.c_index
                * Complex64::from_polar(1.0, om * probe.frame.phase0)
                * tot.value();
            if li + 1 == index as usize {
                lemma.j_main += term;
            } else {
                lemma.j_residual += term;
            }
        }
    }

    // k ≠ j: brute force over the overlap, resolved for the phase
    for (k, ray) in rays.iter().enumerate().take(weights.b.len()) {
        if k == j {
            continue;
        }
        for (li, st) in stacks[k].iter().enumerate() {
            let Some(range) = tube_overlap(&probe, sigma, &st.frame, st.profile.half_width()) else {
                continue;
            };
            let tau_l = st.tau;
            let grad = [
                tau_l - tau_n,
                tau_l * ray.ray.xi[0] - tau_n * rays[j].ray.xi[0],
                tau_l * ray.ray.xi[1] - tau_n * rays[j].ray.xi[1],
                tau_l * ray.ray.xi[2] - tau_n * rays[j].ray.xi[2],
            ];
            let rate = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            let rule = LocalRule::new(&probe, range, &sk, &[], rate, q)?;
            let betas = rule.beta_points(domain.n);
            let parts = map_range(exec, rule.sigma.len(), |is| {
                let (sg, ws) = rule.sigma[is];
                let mut acc = ComplexSum::new();
                for &(be, wb) in &betas {
                    for &(a, wa) in &rule.alpha {
                        let l = Local { sigma: sg, alpha: a, beta: be };
                        let (w, box_w) = probe.w_local(&l);
                        if w == 0.0 && box_w == 0.0 {
                            continue;
                        }
                        let (t, x) = probe.frame.to_global(&l);
                        let eta = probe.eta.value(&x);
                        let zeta = ray.eval_zeta(ZetaSign::Minus, t, 0);
                        if eta == 0.0 || zeta == 0.0 {
                            continue;
                        }
                        let lk = st.frame.to_local(t, &x);
                        let amp = st.amplitude(&lk);
                        if amp == ZERO {
                            continue;
                        }
                        let ph = tau_l * st.frame.phase(&lk) - tau_n * probe.frame.phase(&l);
                        let f = ws * wa * wb * eta * zeta * (box_w + potential.value(t, &x) * w);
                        acc.add(Complex64::from_polar(f, ph) * amp);
                    }
                }
                acc.value()
            });
            let mut tot = ComplexSum::new();
            for p in parts {
                tot.add(p);
            }
            lemma.k_part += weights.b[k] * weights.c[li] / weights.c_index * tot.value();
        }
    }

    let i = weights.c_index * (lemma.j_main + lemma.j_residual + lemma.k_part);
    let estimate = (i / weights.c_index - s.total()).re / (weights.b[j] * c_chi(domain.n));
    Ok(OracleExtraction { j, index, i, s, estimate, lemma })
}

/// `I_N^j = ∫∫ (f η 𝒲 − (□(η𝒲) − η□𝒲) u)` over `(0,T) × (Ω̃∖Ω̄)` from
/// exterior data, trapezoid in time, nodal sums in space.
///
/// The commutator is `−(Δη)𝒲 − 2∇η·∇𝒲` and lives on the shell
/// `r < |x| < r + δ_j/4`; every shell node must be present in `u_ext`.
pub fn compute_i(
    domain: &DomainConfig,
    ray: &RayDescriptor,
    index: u32,
    source: &FieldSlab,
    u_ext: &FieldSlab,
    exec: Execution,
) -> Result<Complex64> {
    let grid = &u_ext.grid;
    if source.grid != *grid {
        return Err(Error::Config("source and exterior data live on different grids".into()));
    }
    let probe = Probe::new(ray, domain, index);
    let shell = grid.points_in_shell(domain.r, probe.eta.outer_radius());
    let slots: Vec<usize> = shell
        .iter()
        .map(|&p| {
            u_ext.slot(p).ok_or_else(|| {
                let x = grid.point(p);
                Error::Coverage(format!("exterior data miss shell node {p} at |x| = {:.6}", norm(&x)))
            })
        })
        .collect::<Result<_>>()?;
    let xs: Vec<Vec3> = shell.iter().map(|&p| grid.point(p)).collect();
    let eta: Vec<_> = xs.iter().map(|x| probe.eta.jet(x, domain.n)).collect();
    let f_nodes: Vec<(usize, Vec3, f64)> = source
        .points
        .iter()
        .enumerate()
        .filter_map(|(q, &p)| {
            let x = grid.point(p);
            let e = probe.eta.value(&x);
            (e != 0.0).then_some((q, x, e))
        })
        .collect();
    let tau = probe.tau;
    let per_level = map_range(exec, grid.nt + 1, |m| {
        let t = grid.time(m);
        let mut acc = ComplexSum::new();
        let u = u_ext.level(m);
        for ((x, ej), &slot) in xs.iter().zip(&eta).zip(&slots) {
            let l = probe.frame.to_local(t, x);
            if !probe.profile.inside(l.alpha, &l.beta) {
                continue;
            }
            let (w, _) = probe.w_local(&l);
            let (_, gw) = probe.w_gradient(&l);
            let ph = Complex64::from_polar(1.0, -tau * probe.frame.phase(&l));
            let lap = ej.laplacian(domain.n);
            // ∇η·∇𝒲 with ∇𝒲 = e^{−iτφ}(∇w − iτξw)
            let dot_g = dot(&ej.grad, &gw);
            let dot_xi = dot(&ej.grad, &probe.frame.xi);
            let grad_term = Complex64::new(dot_g, -tau * w * dot_xi);
            let comm = -(lap * w) * ph - 2.0 * ph * grad_term;
            acc.add(-comm * u[slot]);
        }
        let f = source.level(m);
        for &(q, ref x, e) in &f_nodes {
            if f[q] == ZERO {
                continue;
            }
            let l = probe.frame.to_local(t, x);
            let (w, _) = probe.w_local(&l);
            if w != 0.0 {
                acc.add(f[q] * e * w * Complex64::from_polar(1.0, -tau * probe.frame.phase(&l)));
            }
        }
        let wt = if m == 0 || m == grid.nt { 0.5 } else { 1.0 };
        acc.value() * wt
    });
    let mut tot = ComplexSum::new();
    for v in per_level {
        tot.add(v);
    }
    Ok(tot.value() * grid.dt * grid.dx.powi(domain.n as i32))
}

/// One row of an extraction table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionResult {
    pub j: usize,
    pub index: u32,
    pub i: Complex64,
    pub s: Complex64,
    /// `c_N⁻¹ I − S`.
    pub raw: Complex64,
    pub estimate: f64,
    pub oracle: Option<f64>,
}

impl ExtractionResult {
    pub fn new(j: usize, index: u32, i: Complex64, s: Complex64, c_index: f64, b_j: f64, n: usize) -> Self {
        let raw = i / c_index - s;
        Self { j, index, i, s, raw, estimate: raw.re / (b_j * c_chi(n)), oracle: None }
    }

    pub fn rel_error(&self) -> Option<f64> {
        self.oracle.map(|o| (self.estimate - o).abs() / o.abs().max(f64::MIN_POSITIVE))
    }
}

/// Per-ray summary over the extraction indices.
#[derive(Debug, Clone, PartialEq)]
pub struct RayTrend {
    pub j: usize,
    /// `(N, estimate)` in increasing `N`.
    pub estimates: Vec<(u32, f64)>,
    /// Differences between consecutive indices.
    pub increments: Vec<f64>,
    /// Estimate at the largest index.
    pub best: f64,
}

/// Group results by ray and report consecutive differences.
pub fn extract_ray_integrals(results: &[ExtractionResult]) -> Vec<RayTrend> {
    let mut js: Vec<usize> = results.iter().map(|r| r.j).collect();
    js.sort_unstable();
    js.dedup();
    js.into_iter()
        .map(|j| {
            let mut est: Vec<(u32, f64)> = results.iter().filter(|r| r.j == j).map(|r| (r.index, r.estimate)).collect();
            est.sort_by_key(|e| e.0);
            let increments = est.windows(2).map(|w| w[1].1 - w[0].1).collect();
            let best = est.last().map(|e| e.1).unwrap_or(f64::NAN);
            RayTrend { j, estimates: est, increments, best }
        })
        .collect()
}

/// Extraction table as CSV.
pub fn write_extraction_csv<W: std::io::Write>(w: W, rows: &[ExtractionResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["j", "N", "re_I", "im_I", "re_S", "im_S", "estimate", "oracle_value", "rel_error"])?;
    for r in rows {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        out.write_record([
            r.j.to_string(),
            r.index.to_string(),
            format!("{:.17e}", r.i.re),
            format!("{:.17e}", r.i.im),
            format!("{:.17e}", r.s.re),
            format!("{:.17e}", r.s.im),
            format!("{:.17e}", r.estimate),
            opt(r.oracle),
            opt(r.rel_error()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Distance between the spatial lines carrying two rays.
pub fn line_distance(a: &RayDescriptor, b: &RayDescriptor) -> f64 {
    let d = sub(&b.ray.entry, &a.ray.entry);
    let (u, v) = (&a.ray.xi, &b.ray.xi);
    let c = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    let cn = norm(&c);
    if a.n == 3 && cn > 1e-12 {
        return dot(&d, &c).abs() / cn;
    }
    if cn > 1e-12 {
        // distinct planar directions always meet
        return 0.0;
    }
    norm(&crate::geometry::axpy(-dot(&d, u), u, &d))
}

/// `h_j = min_{k≠j} max(|ξ_k−ξ_j| τ_N^{1/2}, θ_{k,j} N^{1/2} / (δ_j+δ_k))`.
pub fn density_proxy(rays: &[RayDescriptor], j: usize, index: u32) -> Option<f64> {
    let tau = (index as f64).exp();
    rays.iter()
        .enumerate()
        .filter(|(k, _)| *k != j)
        .map(|(_, rk)| {
            let a = norm(&sub(&rk.ray.xi, &rays[j].ray.xi)) * tau.sqrt();
            let b = line_distance(&rays[j], rk) * (index as f64).sqrt() / (rays[j].delta + rk.delta);
            a.max(b)
        })
        .min_by(f64::total_cmp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filon_matches_direct_quadrature() {
        let br = breaks(&[-1.0, -0.3, 0.3, 1.0], -1.0, 1.0, 4, 0.1);
        let rule = panel_rule(&br, 8);
        let f = |x: f64| (1.0 - x * x).powi(4) * (1.0 + 0.3 * x);
        for omega in [0.0, 3.0, 40.0, 400.0] {
            let w = filon_weights(&rule, 8, omega);
            let got: Complex64 = rule.iter().zip(&w).map(|(&(x, _), wi)| wi * f(x)).sum();
            let fine = panel_rule(&breaks(&[], -1.0, 1.0, 1, 0.002), 12);
            let want: Complex64 = fine.iter().map(|&(x, wx)| Complex64::from_polar(wx * f(x), omega * x)).sum();
            assert!((got - want).norm() < 1e-11, "omega {omega}: {got} vs {want}");
        }
    }

    #[test]
    fn breaks_respect_knots_and_lengths() {
        let b = breaks(&[0.25, 0.7, 5.0], 0.0, 1.0, 2, 0.2);
        assert!(b.contains(&0.25) && b.contains(&0.7));
        assert!(b.windows(2).all(|w| w[1] - w[0] <= 0.2 + 1e-15 && w[1] > w[0]));
    }
}
