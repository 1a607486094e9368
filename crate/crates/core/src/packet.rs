//! Numerical transport of the higher amplitudes on a ray-adapted grid.
//!
//! `v⁽¹⁾` and `v⁽²⁾` are integrated along σ from the hyperplane σ = 0 with
//! zero data. The σ-derivatives `g⁽ᵏ⁾ = ∂_σ v⁽ᵏ⁾` are stored alongside, so the
//! operator `P[a] = −2 ∂_α g − Δ_β a + V a` is applied with the same stencils
//! wherever it appears.

use crate::error::{Error, Result};
use crate::geometry::{norm, DomainConfig, RayDescriptor};
use crate::optics::{Local, ProductProfile, RayFrame};
use crate::par::{map_range, Execution};
use crate::potential::PotentialSpec;
use crate::quad::cumulative_simpson;
use crate::sum::NeumaierSum;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const PAD: usize = 6;

/// Resolution of the local grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StackResolution {
    /// Cells across the support half-width of `v⁽⁰⁾` in α and each β.
    pub cells: usize,
    /// Smallest admissible value of `cells`.
    pub min_cells: usize,
    /// σ step as a fraction of the smallest potential bump radius.
    pub sigma_per_radius: f64,
    /// Upper bound on the number of σ cells.
    pub max_sigma_cells: usize,
}

impl Default for StackResolution {
    fn default() -> Self {
        Self { cells: 24, min_cells: 8, sigma_per_radius: 1.0 / 16.0, max_sigma_cells: 4096 }
    }
}

impl StackResolution {
    pub fn refined(&self) -> Self {
        Self { cells: 2 * self.cells, sigma_per_radius: 0.5 * self.sigma_per_radius, ..*self }
    }
}

/// Uniform grid in `(σ, α, β₁[, β₂])`, σ-fastest.
#[derive(Debug, Clone)]
pub struct LocalGrid {
    pub n: usize,
    pub sigma0: f64,
    pub hs: f64,
    pub ns: usize,
    /// Index of σ = 0.
    pub i0: usize,
    pub h: f64,
    /// Nodes per transverse axis (odd, centred on 0).
    pub nt: usize,
}

impl LocalGrid {
    pub fn ncols(&self) -> usize {
        self.nt.pow(self.n as u32)
    }

    pub fn len(&self) -> usize {
        self.ncols() * self.ns
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn half(&self) -> usize {
        self.nt / 2
    }

    /// Transverse coordinates of column `c`: (α, β).
    pub fn column_coords(&self, c: usize) -> (f64, [f64; 2]) {
        let m = self.half() as f64;
        let nt = self.nt;
        if self.n == 2 {
            let (ia, ib) = (c / nt, c % nt);
            ((ia as f64 - m) * self.h, [(ib as f64 - m) * self.h, 0.0])
        } else {
            let (ia, r) = (c / (nt * nt), c % (nt * nt));
            let (ib, ic) = (r / nt, r % nt);
            ((ia as f64 - m) * self.h, [(ib as f64 - m) * self.h, (ic as f64 - m) * self.h])
        }
    }

    pub fn sigma(&self, i: usize) -> f64 {
        (i as f64 - self.i0 as f64) * self.hs
    }

    /// Flat strides of the α and β axes.
    fn strides(&self) -> [usize; 3] {
        let nt = self.nt;
        if self.n == 2 {
            [nt * self.ns, self.ns, 0]
        } else {
            [nt * nt * self.ns, nt * self.ns, self.ns]
        }
    }

    /// Transverse multi-index of column `c`.
    fn column_index(&self, c: usize) -> [usize; 3] {
        let nt = self.nt;
        if self.n == 2 {
            [c / nt, c % nt, 0]
        } else {
            [c / (nt * nt), (c / nt) % nt, c % nt]
        }
    }
}

/// Amplitudes `v⁽⁰⁾ … v⁽ᴷ⁾` of one wave packet.
#[derive(Debug, Clone)]
pub struct PacketStack {
    pub frame: RayFrame,
    pub tau: f64,
    pub order: usize,
    pub profile: ProductProfile,
    pub grid: LocalGrid,
    potential: Vec<f64>,
    pub v1: Vec<Complex64>,
    pub g1: Vec<Complex64>,
    pub v2: Vec<Complex64>,
    pub g2: Vec<Complex64>,
}

fn fd1(f: &[Complex64], i: usize, stride: usize, lo_ok: [bool; 2], hi_ok: [bool; 2], h: f64) -> Complex64 {
    let at = |ok: bool, j: usize| if ok { f[j] } else { ZERO };
    let m2 = at(lo_ok[1], i.wrapping_sub(2 * stride));
    let m1 = at(lo_ok[0], i.wrapping_sub(stride));
    let p1 = at(hi_ok[0], i + stride);
    let p2 = at(hi_ok[1], i + 2 * stride);
    (m2 - p2 + 8.0 * (p1 - m1)) / (12.0 * h)
}

fn fd2(f: &[Complex64], i: usize, stride: usize, lo_ok: [bool; 2], hi_ok: [bool; 2], h: f64) -> Complex64 {
    let at = |ok: bool, j: usize| if ok { f[j] } else { ZERO };
    let m2 = at(lo_ok[1], i.wrapping_sub(2 * stride));
    let m1 = at(lo_ok[0], i.wrapping_sub(stride));
    let p1 = at(hi_ok[0], i + stride);
    let p2 = at(hi_ok[1], i + 2 * stride);
    (-(m2 + p2) + 16.0 * (m1 + p1) - 30.0 * f[i]) / (12.0 * h * h)
}

impl PacketStack {
    /// Fourth-order centred derivative of `f` along transverse axis `axis`
    /// (0 = α, 1/2 = β) with zero extension.
    fn d_axis(&self, f: &[Complex64], i: usize, axis: usize, second: bool) -> Complex64 {
        let g = &self.grid;
        let c = i / g.ns;
        let idx = g.column_index(c)[axis];
        let stride = g.strides()[axis];
        let lo = [idx >= 1, idx >= 2];
        let hi = [idx + 1 < g.nt, idx + 2 < g.nt];
        if second {
            fd2(f, i, stride, lo, hi, g.h)
        } else {
            fd1(f, i, stride, lo, hi, g.h)
        }
    }

    fn d_sigma(&self, f: &[Complex64], i: usize) -> Complex64 {
        let g = &self.grid;
        let is = i % g.ns;
        let lo = [is >= 1, is >= 2];
        let hi = [is + 1 < g.ns, is + 2 < g.ns];
        fd1(f, i, 1, lo, hi, g.hs)
    }

    fn lap_beta_h(&self, f: &[Complex64], i: usize) -> Complex64 {
        (1..self.grid.n).map(|k| self.d_axis(f, i, k, true)).sum()
    }

    /// `P[a] = −2 ∂_α g − Δ_β a + V a` on the grid.
    fn apply_p(&self, a: &[Complex64], g: &[Complex64], i: usize) -> Complex64 {
        -2.0 * self.d_axis(g, i, 0, false) - self.lap_beta_h(a, i) + self.potential[i] * a[i]
    }

    /// `(□+V) v⁽ᴷ⁾` at node `i` (the remainder density without the phase).
    pub fn remainder_density(&self, i: usize) -> Complex64 {
        match self.order {
            2 => self.apply_p(&self.v2, &self.g2, i),
            1 => self.apply_p(&self.v1, &self.g1, i),
            _ => {
                let (al, be) = self.grid.column_coords(i / self.grid.ns);
                let v0 = self.profile.value(al, &be);
                Complex64::from(-self.profile.lap_beta(al, &be, 1, 0) + self.potential[i] * v0)
            }
        }
    }

    pub fn potential_at(&self, i: usize) -> f64 {
        self.potential[i]
    }

    /// `Σ_k v⁽ᵏ⁾ / τᵏ` at node `i`.
    pub fn amplitude_at(&self, i: usize) -> Complex64 {
        let (al, be) = self.grid.column_coords(i / self.grid.ns);
        let mut a = Complex64::from(self.profile.value(al, &be));
        if self.order >= 1 {
            a += self.v1[i] / self.tau;
        }
        if self.order >= 2 {
            a += self.v2[i] / (self.tau * self.tau);
        }
        a
    }

    /// Cubic interpolation of `Σ_{k≥1} v⁽ᵏ⁾/τᵏ` plus exact `v⁽⁰⁾`.
    pub fn amplitude(&self, l: &Local) -> Complex64 {
        let v0 = self.profile.value(l.alpha, &l.beta);
        if self.order == 0 {
            return v0.into();
        }
        let g = &self.grid;
        let hw = g.half() as f64 * g.h;
        if l.alpha.abs() >= hw || (0..g.n - 1).any(|k| l.beta[k].abs() >= hw) {
            return v0.into();
        }
        let s_idx = (l.sigma - g.sigma0) / g.hs;
        if s_idx < 1.0 || s_idx > g.ns as f64 - 3.0 {
            return v0.into();
        }
        let stencil = |x: f64| -> (isize, [f64; 4]) {
            let b = x.floor();
            let u = x - b;
            let w = [
                -u * (u - 1.0) * (u - 2.0) / 6.0,
                (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
                -(u + 1.0) * u * (u - 2.0) / 2.0,
                (u + 1.0) * u * (u - 1.0) / 6.0,
            ];
            (b as isize - 1, w)
        };
        let m = g.half() as f64;
        let (s0, ws) = stencil(s_idx);
        let s0 = s0 as usize;
        // taps off the transverse grid contribute zero
        let tap = |base: isize, i: usize| usize::try_from(base + i as isize).ok().filter(|&j| j < g.nt);
        let (a0, wa) = stencil(l.alpha / g.h + m);
        let (b0, wb) = stencil(l.beta[0] / g.h + m);
        let (c0, wc) = if g.n == 3 { stencil(l.beta[1] / g.h + m) } else { (0, [1.0, 0.0, 0.0, 0.0]) };
        let nc = if g.n == 3 { 4 } else { 1 };
        let st = g.strides();
        let inv2 = 1.0 / (self.tau * self.tau);
        let mut acc = ZERO;
        for (ia, wa) in wa.iter().enumerate() {
            let Some(ja) = tap(a0, ia) else { continue };
            for (ib, wb) in wb.iter().enumerate() {
                let Some(jb) = tap(b0, ib) else { continue };
                for (ic, wc) in wc.iter().enumerate().take(nc) {
                    let Some(jc) = tap(c0, ic) else { continue };
                    let base = ja * st[0] + jb * st[1] + jc * st[2];
                    let w3 = wa * wb * wc;
                    for (is, ws) in ws.iter().enumerate() {
                        let k = base + s0 + is;
                        let mut v = self.v1[k] / self.tau;
                        if self.order >= 2 {
                            v += self.v2[k] * inv2;
                        }
                        acc += v * (w3 * ws);
                    }
                }
            }
        }
        acc + v0
    }

    /// `‖(□+V)𝒰‖_{H¹}` over `(0,T)×Ω̃`, from `τ^{−K} e^{iτφ} (□+V) v⁽ᴷ⁾`.
    pub fn remainder_norm(&self, domain: &DomainConfig, exec: Execution) -> f64 {
        let g = &self.grid;
        let r: Vec<Complex64> = map_range(exec, g.len(), |i| self.remainder_density(i));
        let tau = self.tau;
        let scale = tau.powi(-(self.order as i32));
        let itau = Complex64::new(0.0, tau);
        let per_col: Vec<f64> = map_range(exec, g.ncols(), |c| {
            let (al, be) = g.column_coords(c);
            let mut acc = NeumaierSum::new();
            for is in 0..g.ns {
                let i = c * g.ns + is;
                let l = Local { sigma: g.sigma(is), alpha: al, beta: be };
                let (t, x) = self.frame.to_global(&l);
                if t <= 0.0 || t >= domain.t_final || norm(&x) >= domain.r_tilde {
                    continue;
                }
                let rs = self.d_sigma(&r, i);
                let ra = self.d_axis(&r, i, 0, false);
                let dt = 0.5 * rs - ra - itau * r[i];
                let dp = 0.5 * rs + ra + itau * r[i];
                let mut s = r[i].norm_sqr() + dt.norm_sqr() + dp.norm_sqr();
                for k in 1..g.n {
                    s += self.d_axis(&r, i, k, false).norm_sqr();
                }
                acc.add(s);
            }
            acc.value()
        });
        let vol = g.hs * g.h.powi(g.n as i32);
        let mut total = NeumaierSum::new();
        per_col.iter().for_each(|v| total.add(*v));
        (total.value() * vol).sqrt() * scale
    }

    /// Largest transverse distance (max over α, β) of a node where `v⁽ᵏ⁾ ≠ 0`.
    pub fn support_radius(&self, k: usize) -> f64 {
        let f = if k == 1 { &self.v1 } else { &self.v2 };
        let g = &self.grid;
        let mut r: f64 = 0.0;
        for c in 0..g.ncols() {
            if f[c * g.ns..(c + 1) * g.ns].iter().any(|z| *z != ZERO) {
                let (al, be) = g.column_coords(c);
                r = r.max(al.abs()).max(be[0].abs()).max(be[1].abs());
            }
        }
        r
    }

    /// `‖v⁽ᵏ⁾‖_{L²}` over the local grid.
    pub fn amplitude_l2(&self, k: usize) -> f64 {
        let g = &self.grid;
        let vol = g.hs * g.h.powi(g.n as i32);
        let s = match k {
            0 => (0..g.ncols())
                .map(|c| {
                    let (al, be) = g.column_coords(c);
                    self.profile.value(al, &be).powi(2) * g.ns as f64
                })
                .sum::<f64>(),
            1 => self.v1.iter().map(|z| z.norm_sqr()).sum(),
            _ => self.v2.iter().map(|z| z.norm_sqr()).sum(),
        };
        (s * vol).sqrt()
    }

    /// Values of `v⁽ᵏ⁾` on the hyperplane σ = 0.
    pub fn sigma_zero_slice(&self, k: usize) -> Vec<Complex64> {
        let f = if k == 1 { &self.v1 } else { &self.v2 };
        let g = &self.grid;
        (0..g.ncols()).map(|c| f[c * g.ns + g.i0]).collect()
    }
}

/// Integrate the transport equations for `v⁽¹⁾, v⁽²⁾` of ray `ray` at
/// frequency `tau`.
pub fn solve_transport(
    ray: &RayDescriptor,
    domain: &DomainConfig,
    tau: f64,
    order: usize,
    potential: &PotentialSpec,
    res: &StackResolution,
    exec: Execution,
) -> Result<PacketStack> {
    if order > 2 {
        return Err(Error::Config(format!("amplitude order {order} > 2")));
    }
    // τ₁ = e is the first level of the universal source, so τ = e is allowed
    if tau < std::f64::consts::E * (1.0 - 1e-12) {
        return Err(Error::Config(format!("tau = {tau} must be at least e")));
    }
    if res.cells < res.min_cells {
        return Err(Error::Resolution(format!(
            "{} cells across the tube half-width, at least {} required",
            res.cells, res.min_cells
        )));
    }
    let n = ray.n;
    let frame = RayFrame::new(ray);
    let profile = ProductProfile::new(n, tau.ln(), ray.delta);
    let hw = profile.half_width();
    let h = hw / res.cells as f64;
    let nt = 2 * (res.cells + PAD) + 1;

    let sigma_lo = -(ray.delta / (4.0 * (n as f64).sqrt()) + hw);
    let sigma_hi = domain.t_final - ray.s + hw;
    let span = sigma_hi - sigma_lo;
    let mut hs = span / 64.0;
    if !potential.is_zero() {
        hs = hs.min(potential.min_radius() * res.sigma_per_radius);
    }
    let below = (-sigma_lo / hs).ceil() as usize + 2;
    let above = (sigma_hi / hs).ceil() as usize + 2;
    if below + above > res.max_sigma_cells {
        return Err(Error::Resolution(format!("{} σ cells needed, cap is {}", below + above, res.max_sigma_cells)));
    }
    let grid = LocalGrid { n, sigma0: -(below as f64) * hs, hs, ns: below + above + 1, i0: below, h, nt };

    let ns = grid.ns;
    let cols = grid.ncols();
    let pot: Vec<Vec<f64>> = map_range(exec, cols, |c| {
        let (al, be) = grid.column_coords(c);
        (0..ns)
            .map(|is| {
                let (t, x) = frame.to_global(&Local { sigma: grid.sigma(is), alpha: al, beta: be });
                potential.value(t, &x)
            })
            .collect()
    });
    let potential_grid: Vec<f64> = pot.concat();

    let mut stack = PacketStack {
        frame,
        tau,
        order,
        profile,
        grid,
        potential: potential_grid,
        v1: Vec::new(),
        g1: Vec::new(),
        v2: Vec::new(),
        g2: Vec::new(),
    };
    if order == 0 {
        return Ok(stack);
    }

    let half_i = Complex64::new(0.0, 0.5);
    // g¹ = (1/2i)(−Δ_β v⁰ + V v⁰)
    let g1: Vec<Vec<Complex64>> = map_range(exec, cols, |c| {
        let (al, be) = stack.grid.column_coords(c);
        let v0 = stack.profile.value(al, &be);
        let l10 = stack.profile.lap_beta(al, &be, 1, 0);
        (0..ns).map(|is| half_i * (l10 - stack.potential[c * ns + is] * v0)).collect()
    });
    let g1 = g1.concat();
    let v1 = integrate_columns(&g1, &stack.grid, exec);
    stack.g1 = g1;
    stack.v1 = v1;
    if order == 1 {
        return Ok(stack);
    }

    let minus_half_i = Complex64::new(0.0, -0.5);
    let g2: Vec<Complex64> =
        map_range(exec, stack.grid.len(), |i| minus_half_i * stack.apply_p(&stack.v1, &stack.g1, i));
    let v2 = integrate_columns(&g2, &stack.grid, exec);
    stack.g2 = g2;
    stack.v2 = v2;
    Ok(stack)
}

/// Running σ-integral from σ = 0 in both directions, per column.
fn integrate_columns(g: &[Complex64], grid: &LocalGrid, exec: Execution) -> Vec<Complex64> {
    let ns = grid.ns;
    let i0 = grid.i0;
    let cols: Vec<Vec<Complex64>> = map_range(exec, grid.ncols(), |c| {
        let col = &g[c * ns..(c + 1) * ns];
        let mut out = vec![ZERO; ns];
        if col.iter().all(|z| *z == ZERO) {
            return out;
        }
        let fwd = cumulative_simpson(grid.hs, &col[i0..], ZERO);
        out[i0..].copy_from_slice(&fwd);
        let rev: Vec<Complex64> = col[..=i0].iter().rev().copied().collect();
        let bwd = cumulative_simpson(-grid.hs, &rev, ZERO);
        for (k, v) in bwd.iter().enumerate() {
            out[i0 - k] = *v;
        }
        out
    });
    cols.concat()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{enumerate_rays, RaySearch};
    use crate::optics::FreePacket;

    fn setup() -> (DomainConfig, RayDescriptor) {
        let d = DomainConfig::new(2, 1.0, 1.3, 2.5).unwrap();
        let f = enumerate_rays(&d, 1, (16, 8), &RaySearch::default()).unwrap();
        (d, f.rays[0].clone())
    }

    fn free_error(r: &RayDescriptor, d: &DomainConfig, cells: usize) -> f64 {
        let tau = 3f64.exp();
        let res = StackResolution { cells, ..Default::default() };
        let st = solve_transport(r, d, tau, 2, &PotentialSpec::zero(), &res, Execution::Sequential).unwrap();
        let fp = FreePacket::new(r, tau, 2);
        let g = &st.grid;
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for c in 0..g.ncols() {
            let (al, be) = g.column_coords(c);
            for is in (0..g.ns).step_by(5) {
                let l = Local { sigma: g.sigma(is), alpha: al, beta: be };
                let a = fp.jet_local(&l).a;
                err = err.max((a - st.amplitude_at(c * g.ns + is)).norm());
                scale = scale.max(a.norm());
            }
        }
        err / scale
    }

    #[test]
    fn free_transport_converges_to_closed_form() {
        let (d, r) = setup();
        let coarse = free_error(&r, &d, 24);
        let fine = free_error(&r, &d, 48);
        assert!(fine < 5e-3, "{fine}");
        assert!(coarse / fine > 6.0, "{coarse} {fine}");
    }

    #[test]
    fn hyperplane_data_vanish() {
        let (d, r) = setup();
        let v = PotentialSpec::single(crate::potential::Bump {
            t0: 1.25,
            x0: vec![0.0, 0.0],
            rho_t: 1.0,
            rho_x: 0.8,
            amplitude: 3.0,
            exponent: 5,
        });
        let st = solve_transport(&r, &d, 3f64.exp(), 2, &v, &StackResolution::default(), Execution::Parallel).unwrap();
        assert!(st.sigma_zero_slice(1).iter().all(|z| *z == ZERO));
        assert!(st.sigma_zero_slice(2).iter().all(|z| *z == ZERO));
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let (d, r) = setup();
        let res = StackResolution { cells: 4, ..Default::default() };
        let e = solve_transport(&r, &d, 20.0, 2, &PotentialSpec::zero(), &res, Execution::Sequential);
        assert!(matches!(e, Err(Error::Resolution(_))));
    }
}
