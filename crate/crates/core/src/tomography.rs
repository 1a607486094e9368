//! The light-ray transform: quadrature oracles, a discrete forward operator
//! on a spacetime grid and its Tikhonov-regularized inversion.

use crate::error::{Error, Result};
use crate::geometry::{d_margin, radical_inverse, DomainConfig, LightRay, Vec3};
use crate::par::{map_range, Execution};
use crate::potential::PotentialSpec;
use crate::quad::{adaptive_gk, gauss_legendre};
use crate::sum::{sum_f64, NeumaierSum};
use serde::{Deserialize, Serialize};

/// `∫ V(t₀ + s, x₀ + sξ) ds`. On its chord interval a bump restricted to a
/// line is a polynomial of degree `2p`, so `p + 1` Gauss–Legendre nodes are
/// exact.
pub fn ray_integral_oracle(v: &PotentialSpec, ray: &LightRay) -> f64 {
    let mut acc = NeumaierSum::new();
    for bump in &v.bumps {
        let Some((a, b)) = bump.chord_interval(ray.t0, &ray.entry, &ray.xi, 0.0, ray.length) else {
            continue;
        };
        let (x, w) = gauss_legendre(bump.exponent as usize + 1);
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, w) in x.iter().zip(&w) {
            let (t, p) = ray.point(m + h * x);
            acc.add(h * w * bump.value(t, &p));
        }
    }
    acc.value()
}

/// Second oracle: adaptive Gauss–Kronrod over the whole chord.
pub fn ray_integral_adaptive(v: &PotentialSpec, ray: &LightRay, rel_tol: f64) -> f64 {
    let mut acc = NeumaierSum::new();
    for bump in &v.bumps {
        acc.add(adaptive_gk(
            |s| {
                let (t, x) = ray.point(s);
                bump.value(t, &x)
            },
            0.0,
            ray.length,
            0.0,
            rel_tol,
        ));
    }
    acc.value()
}

/// Where a ray sample's value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Extraction,
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaySample {
    pub ray: LightRay,
    pub value: f64,
    pub provenance: Provenance,
}

/// Write samples as CSV: t0, entry, direction, length, value, provenance.
pub fn write_samples<W: std::io::Write>(w: W, samples: &[RaySample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t0", "entry_1", "entry_2", "entry_3", "xi_1", "xi_2", "xi_3", "length", "value", "provenance"])?;
    for s in samples {
        let r = &s.ray;
        let mut rec: Vec<String> = vec![format!("{:.17e}", r.t0)];
        rec.extend(r.entry.iter().map(|v| format!("{v:.17e}")));
        rec.extend(r.xi.iter().map(|v| format!("{v:.17e}")));
        rec.push(format!("{:.17e}", r.length));
        rec.push(format!("{:.17e}", s.value));
        rec.push(match s.provenance {
            Provenance::Extraction => "extraction".into(),
            Provenance::Oracle => "oracle".into(),
        });
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_samples<R: std::io::Read>(r: R) -> Result<Vec<RaySample>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != 10 {
            return Err(Error::Format(format!("sample row has {} fields, expected 10", rec.len())));
        }
        let f = |i: usize| -> Result<f64> {
            rec[i].trim().parse().map_err(|_| Error::Format(format!("bad number '{}' in sample row", &rec[i])))
        };
        let provenance = match rec[9].trim() {
            "extraction" => Provenance::Extraction,
            "oracle" => Provenance::Oracle,
            p => return Err(Error::Format(format!("unknown provenance '{p}'"))),
        };
        out.push(RaySample {
            ray: LightRay { t0: f(0)?, entry: [f(1)?, f(2)?, f(3)?], xi: [f(4)?, f(5)?, f(6)?], length: f(7)? },
            value: f(8)?,
            provenance,
        });
    }
    Ok(out)
}

/// `count` admissible light rays from a Halton sequence over
/// (start time, entry point, exit point). Prefixes are nested.
pub fn ray_pool(domain: &DomainConfig, count: usize, chord_samples: usize) -> Result<Vec<LightRay>> {
    const BASES: [u64; 5] = [2, 3, 5, 7, 11];
    let r = domain.r;
    let sphere = |u: f64, v: f64| -> Vec3 {
        if domain.n == 2 {
            let a = std::f64::consts::TAU * u;
            [r * a.cos(), r * a.sin(), 0.0]
        } else {
            let z = 1.0 - 2.0 * u;
            let a = std::f64::consts::TAU * v;
            let s = (1.0 - z * z).max(0.0).sqrt();
            [r * s * a.cos(), r * s * a.sin(), r * z]
        }
    };
    let mut out = Vec::with_capacity(count);
    let cap = 10_000 * count.max(1) as u64;
    let mut i = 0u64;
    while out.len() < count {
        i += 1;
        if i > cap {
            return Err(Error::InsufficientRays { requested: count, found: out.len(), seed_density: (i as usize, 0) });
        }
        let t0 = domain.t_final * radical_inverse(i, BASES[0]);
        let p = sphere(radical_inverse(i, BASES[1]), radical_inverse(i, BASES[3]));
        let q = sphere(radical_inverse(i, BASES[2]), radical_inverse(i, BASES[4]));
        if crate::geometry::norm(&crate::geometry::sub(&p, &q)) < 1e-3 * r {
            continue;
        }
        let ray = LightRay::through(t0, p, q);
        if d_margin(domain, &ray, chord_samples).is_some() {
            out.push(ray);
        }
    }
    Ok(out)
}

/// Uniform spacetime grid over `[0,T] × [−r,r]ⁿ` with multilinear hats on
/// the nodes. Axis 0 is time; the last axis is fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconGrid {
    pub n: usize,
    /// Cells per axis (time first).
    pub cells: Vec<usize>,
    pub lo: Vec<f64>,
    pub h: Vec<f64>,
    /// Per cell: centre lies in 𝒟.
    pub mask: Vec<bool>,
}

impl ReconGrid {
    pub fn new(domain: &DomainConfig, time_cells: usize, space_cells: usize) -> Self {
        let n = domain.n;
        let mut cells = vec![time_cells];
        let mut lo = vec![0.0];
        let mut h = vec![domain.t_final / time_cells as f64];
        for _ in 0..n {
            cells.push(space_cells);
            lo.push(-domain.r);
            h.push(2.0 * domain.r / space_cells as f64);
        }
        let mut g = Self { n, cells, lo, h, mask: Vec::new() };
        g.mask = (0..g.ncells())
            .map(|c| {
                let ctr = g.cell_center(c);
                let mut x = [0.0; 3];
                x[..n].copy_from_slice(&ctr[1..=n]);
                domain.in_d(ctr[0], &x)
            })
            .collect();
        g
    }

    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn ncells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c + 1).collect()
    }

    pub fn nnodes(&self) -> usize {
        self.node_counts().iter().product()
    }

    fn unflatten(counts: &[usize], mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; counts.len()];
        for a in (0..counts.len()).rev() {
            idx[a] = i % counts[a];
            i /= counts[a];
        }
        idx
    }

    fn flatten(counts: &[usize], idx: &[usize]) -> usize {
        idx.iter().zip(counts).fold(0, |acc, (i, c)| acc * c + i)
    }

    pub fn cell_center(&self, c: usize) -> Vec<f64> {
        Self::unflatten(&self.cells, c)
            .iter()
            .enumerate()
            .map(|(a, i)| self.lo[a] + (*i as f64 + 0.5) * self.h[a])
            .collect()
    }

    pub fn node_coords(&self, p: usize) -> Vec<f64> {
        Self::unflatten(&self.node_counts(), p)
            .iter()
            .enumerate()
            .map(|(a, i)| self.lo[a] + *i as f64 * self.h[a])
            .collect()
    }

    /// Nodes of cell `c`, with the corner bit pattern.
    fn cell_nodes(&self, c: usize) -> Vec<usize> {
        let base = Self::unflatten(&self.cells, c);
        let counts = self.node_counts();
        let d = self.dim();
        (0..1usize << d)
            .map(|bits| {
                let idx: Vec<usize> = (0..d).map(|a| base[a] + ((bits >> (d - 1 - a)) & 1)).collect();
                Self::flatten(&counts, &idx)
            })
            .collect()
    }

    /// Interpolant of nodal `coeffs` at a spacetime point (`None` outside).
    pub fn interpolate(&self, coeffs: &[f64], p: &[f64]) -> Option<f64> {
        let (c, frac) = self.locate(p)?;
        let d = self.dim();
        let nodes = self.cell_nodes(c);
        Some(
            nodes
                .iter()
                .enumerate()
                .map(|(bits, &node)| {
                    let w: f64 =
                        (0..d).map(|a| if (bits >> (d - 1 - a)) & 1 == 1 { frac[a] } else { 1.0 - frac[a] }).product();
                    w * coeffs[node]
                })
                .sum(),
        )
    }

    fn locate(&self, p: &[f64]) -> Option<(usize, Vec<f64>)> {
        let d = self.dim();
        let mut idx = vec![0; d];
        let mut frac = vec![0.0; d];
        for a in 0..d {
            let u = (p[a] - self.lo[a]) / self.h[a];
            if !(0.0..=self.cells[a] as f64).contains(&u) {
                return None;
            }
            let i = (u.floor() as usize).min(self.cells[a] - 1);
            idx[a] = i;
            frac[a] = u - i as f64;
        }
        Some((Self::flatten(&self.cells, &idx), frac))
    }

    /// Nodes touching at least one masked cell.
    /// Nodes in the closure of the complement of `(0,T) × Ω`, where every
    /// admissible potential vanishes.
    pub fn exterior_nodes(&self, domain: &DomainConfig) -> Vec<bool> {
        (0..self.nnodes())
            .map(|p| {
                let c = self.node_coords(p);
                let rho = c[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
                c[0] <= 0.0 || c[0] >= domain.t_final || rho >= domain.r
            })
            .collect()
    }

    pub fn constrained_nodes(&self) -> Vec<bool> {
        let mut out = vec![false; self.nnodes()];
        for c in (0..self.ncells()).filter(|&c| self.mask[c]) {
            for p in self.cell_nodes(c) {
                out[p] = true;
            }
        }
        out
    }

    /// Nodal values of `v`.
    pub fn sample(&self, v: &PotentialSpec) -> Vec<f64> {
        (0..self.nnodes())
            .map(|p| {
                let c = self.node_coords(p);
                let mut x = [0.0; 3];
                x[..self.n].copy_from_slice(&c[1..]);
                v.value(c[0], &x)
            })
            .collect()
    }

    /// Relative L² error of `coeffs` against `v` over masked cells, by a
    /// 2-point Gauss rule per axis in every masked cell.
    pub fn masked_error(&self, coeffs: &[f64], v: &PotentialSpec) -> f64 {
        let (gx, _) = gauss_legendre(2);
        let d = self.dim();
        let mut num = NeumaierSum::new();
        let mut den = NeumaierSum::new();
        for c in (0..self.ncells()).filter(|&c| self.mask[c]) {
            let ctr = self.cell_center(c);
            for bits in 0..1usize << d {
                let p: Vec<f64> = (0..d).map(|a| ctr[a] + 0.5 * self.h[a] * gx[(bits >> a) & 1]).collect();
                let mut x = [0.0; 3];
                x[..self.n].copy_from_slice(&p[1..]);
                let truth = v.value(p[0], &x);
                let got = self.interpolate(coeffs, &p).unwrap_or(0.0);
                num.add((got - truth).powi(2));
                den.add(truth * truth);
            }
        }
        if den.value() == 0.0 {
            return num.value().sqrt();
        }
        (num.value() / den.value()).sqrt()
    }
}

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseRows {
    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for r in rows {
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self { ncols, row_ptr, cols, vals }
    }

    pub fn mul(&self, x: &[f64], exec: Execution) -> Vec<f64> {
        map_range(exec, self.nrows(), |i| {
            let (c, v) = self.row(i);
            sum_f64(c.iter().zip(v).map(|(c, v)| v * x[*c]))
        })
    }

    pub fn transpose(&self) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.ncols];
        for i in 0..self.nrows() {
            let (c, v) = self.row(i);
            for (c, v) in c.iter().zip(v) {
                rows[*c].push((i, *v));
            }
        }
        Self::from_rows(self.nrows(), rows)
    }
}

/// Forward operator of the light-ray transform on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySystem {
    pub a: SparseRows,
    pub at: SparseRows,
    /// Rays that never enter the grid (zero rows).
    pub empty_rows: Vec<usize>,
}

impl RaySystem {
    pub fn apply(&self, c: &[f64], exec: Execution) -> Vec<f64> {
        self.a.mul(c, exec)
    }

    pub fn adjoint(&self, y: &[f64], exec: Execution) -> Vec<f64> {
        self.at.mul(y, exec)
    }
}

/// Exact line integrals of the hat functions along each chord, restricted
/// to `0 ≤ t ≤ T`.
pub fn build_system(rays: &[LightRay], grid: &ReconGrid, exec: Execution) -> RaySystem {
    let rows = map_range(exec, rays.len(), |i| ray_row(&rays[i], grid));
    let empty_rows = rows.iter().enumerate().filter(|(_, r)| r.is_empty()).map(|(i, _)| i).collect();
    let a = SparseRows::from_rows(grid.nnodes(), rows);
    let at = a.transpose();
    RaySystem { a, at, empty_rows }
}

fn ray_row(ray: &LightRay, grid: &ReconGrid) -> Vec<(usize, f64)> {
    let d = grid.dim();
    let dir: Vec<f64> = std::iter::once(1.0).chain(ray.xi.iter().take(grid.n).copied()).collect();
    let start: Vec<f64> = std::iter::once(ray.t0).chain(ray.entry.iter().take(grid.n).copied()).collect();
    // clip the chord to the grid box
    let (mut s0, mut s1) = (0.0f64, ray.length);
    for a in 0..d {
        let hi = grid.lo[a] + grid.cells[a] as f64 * grid.h[a];
        if dir[a].abs() < 1e-300 {
            if start[a] < grid.lo[a] || start[a] > hi {
                return Vec::new();
            }
            continue;
        }
        let (p, q) = ((grid.lo[a] - start[a]) / dir[a], (hi - start[a]) / dir[a]);
        s0 = s0.max(p.min(q));
        s1 = s1.min(p.max(q));
    }
    if s1 <= s0 {
        return Vec::new();
    }
    let mut cuts = vec![s0, s1];
    for a in 0..d {
        if dir[a].abs() < 1e-300 {
            continue;
        }
        for k in 0..=grid.cells[a] {
            let s = (grid.lo[a] + k as f64 * grid.h[a] - start[a]) / dir[a];
            if s > s0 && s < s1 {
                cuts.push(s);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let (gx, gw) = gauss_legendre(3);
    let mut acc: Vec<(usize, f64)> = Vec::new();
    for w in cuts.windows(2) {
        let (a0, a1) = (w[0], w[1]);
        if a1 - a0 <= 1e-14 * (s1 - s0) {
            continue;
        }
        let mid = 0.5 * (a0 + a1);
        let pm: Vec<f64> = (0..d).map(|a| start[a] + mid * dir[a]).collect();
        let Some((cell, _)) = grid.locate(&pm) else {
            continue;
        };
        let nodes = grid.cell_nodes(cell);
        let base = ReconGrid::unflatten(&grid.cells, cell);
        let half = 0.5 * (a1 - a0);
        for (z, wz) in gx.iter().zip(&gw) {
            let s = mid + half * z;
            let frac: Vec<f64> =
                (0..d).map(|a| (start[a] + s * dir[a] - grid.lo[a]) / grid.h[a] - base[a] as f64).collect();
            for (bits, &node) in nodes.iter().enumerate() {
                let wt: f64 =
                    (0..d).map(|a| if (bits >> (d - 1 - a)) & 1 == 1 { frac[a] } else { 1.0 - frac[a] }).product();
                acc.push((node, half * wz * wt));
            }
        }
    }
    acc.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (c, v) in acc {
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => out.push((c, v)),
        }
    }
    out
}

/// Conjugate-gradient controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CgOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

/// Inversion setup beyond the data and λ.
#[derive(Debug, Clone, Default)]
pub struct InversionPrior {
    /// Nodes pinned to zero (e.g. outside `(0,T) × Ω`).
    pub zero_nodes: Option<Vec<bool>>,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { max_iterations: 5000, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub coeffs: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    /// `‖A c − y‖ / ‖y‖`.
    pub data_residual: f64,
    pub masked_error: Option<f64>,
    /// Nodes not touching any cell of 𝒟: values there are unconstrained.
    pub unconstrained: Vec<usize>,
}

/// `LᵀL c` for the forward-difference spacetime gradient, scaled by the
/// cell volume.
fn gradient_normal(grid: &ReconGrid, c: &[f64], exec: Execution) -> Vec<f64> {
    let counts = grid.node_counts();
    let d = grid.dim();
    let vol: f64 = grid.h.iter().product();
    let strides: Vec<usize> = (0..d).map(|a| counts[a + 1..].iter().product()).collect();
    map_range(exec, c.len(), |p| {
        let idx = ReconGrid::unflatten(&counts, p);
        let mut s = 0.0;
        for a in 0..d {
            let k = vol / (grid.h[a] * grid.h[a]);
            if idx[a] + 1 < counts[a] {
                s += k * (c[p] - c[p + strides[a]]);
            }
            if idx[a] > 0 {
                s += k * (c[p] - c[p - strides[a]]);
            }
        }
        s
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    sum_f64(a.iter().zip(b).map(|(x, y)| x * y))
}

/// Minimize `‖A c − y‖² + λ ‖L c‖²` by conjugate gradients on the normal
/// equations.
#[allow(clippy::too_many_arguments)]
pub fn invert(
    system: &RaySystem,
    grid: &ReconGrid,
    y: &[f64],
    lambda: f64,
    cg: &CgOptions,
    prior: &InversionPrior,
    truth: Option<&PotentialSpec>,
    exec: Execution,
) -> Result<Reconstruction> {
    if y.len() < 10 {
        return Err(Error::Config(format!("inversion needs at least 10 rays, got {}", y.len())));
    }
    if lambda <= 0.0 {
        return Err(Error::Config(format!("regularization weight must be positive, got {lambda}")));
    }
    let nn = grid.nnodes();
    let project = |v: &mut [f64]| {
        if let Some(z) = &prior.zero_nodes {
            for (x, pinned) in v.iter_mut().zip(z) {
                if *pinned {
                    *x = 0.0;
                }
            }
        }
    };
    let normal = |c: &[f64]| -> Vec<f64> {
        let ac = system.apply(c, exec);
        let mut out = system.adjoint(&ac, exec);
        for (o, g) in out.iter_mut().zip(gradient_normal(grid, c, exec)) {
            *o += lambda * g;
        }
        project(&mut out);
        out
    };
    let mut b = system.adjoint(y, exec);
    project(&mut b);
    let bnorm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; nn];
    let mut iterations = 0;
    if bnorm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let mut best = (f64::INFINITY, x.clone());
        loop {
            let rel = rr.sqrt() / bnorm;
            if rel < best.0 {
                best = (rel, x.clone());
            }
            if rel <= cg.tolerance {
                break;
            }
            if iterations >= cg.max_iterations {
                return Err(Error::Convergence { iterations, residual: best.0, best: best.1 });
            }
            let ap = normal(&p);
            let alpha = rr / dot(&p, &ap);
            for i in 0..nn {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            for i in 0..nn {
                p[i] = r[i] + beta * p[i];
            }
            rr = rr_new;
            iterations += 1;
        }
    }
    let ax = system.apply(&x, exec);
    let ynorm = dot(y, y).sqrt();
    let res = sum_f64(ax.iter().zip(y).map(|(a, b)| (a - b).powi(2))).sqrt();
    let constrained = grid.constrained_nodes();
    Ok(Reconstruction {
        masked_error: truth.map(|v| grid.masked_error(&x, v)),
        coeffs: x,
        lambda,
        iterations,
        data_residual: if ynorm > 0.0 { res / ynorm } else { res },
        unconstrained: (0..nn).filter(|&p| !constrained[p]).collect(),
    })
}

/// Outcome of a λ sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSweep {
    pub results: Vec<Reconstruction>,
    /// Index of the smallest masked error.
    pub best: usize,
}

/// Invert for each λ and pick the smallest masked error against `truth`.
#[allow(clippy::too_many_arguments)]
pub fn lambda_sweep(
    system: &RaySystem,
    grid: &ReconGrid,
    y: &[f64],
    lambdas: &[f64],
    cg: &CgOptions,
    prior: &InversionPrior,
    truth: &PotentialSpec,
    exec: Execution,
) -> Result<LambdaSweep> {
    let results = lambdas
        .iter()
        .map(|&l| invert(system, grid, y, l, cg, prior, Some(truth), exec))
        .collect::<Result<Vec<_>>>()?;
    let best = results
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.masked_error.unwrap().total_cmp(&b.1.masked_error.unwrap()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(LambdaSweep { results, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_sums_are_chord_lengths_in_the_box() {
        let d = DomainConfig::new(2, 1.0, 1.3, 2.5).unwrap();
        let rays = ray_pool(&d, 20, 64).unwrap();
        for cells in [(10, 8), (20, 16)] {
            let g = ReconGrid::new(&d, cells.0, cells.1);
            let sys = build_system(&rays, &g, Execution::Sequential);
            for (i, r) in rays.iter().enumerate() {
                let (_, v) = sys.a.row(i);
                let s: f64 = v.iter().sum();
                let tmax = (d.t_final - r.t0).min(r.length);
                assert!((s - tmax).abs() < 1e-10, "{s} vs {tmax}");
            }
        }
    }
}
