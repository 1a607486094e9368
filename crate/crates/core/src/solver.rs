//! Leapfrog solver for `(∂_t² − Δ + V) u = f` with zero data on a Dirichlet box.

use crate::error::{Error, Result};
use crate::field::{FieldSlab, GridSpec, Region};
use crate::geometry::{DomainConfig, Vec3};
use crate::par::{for_each_chunk, map_range, Execution};
use crate::potential::PotentialSpec;
use crate::sum::NeumaierSum;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicBool, Ordering};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const MAX_CFL: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stencil {
    #[default]
    Second,
    Fourth,
}

/// Right-hand side of the wave equation.
pub enum Forcing<'a> {
    None,
    /// Sparse samples at every time level (e.g. a universal source).
    Slab(&'a FieldSlab),
    /// Analytic forcing evaluated at every node.
    Function(&'a (dyn Fn(f64, &Vec3) -> Complex64 + Sync)),
}

/// Norms recorded after every step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergySample {
    pub time: f64,
    /// `‖∂_t u‖_{L²}` (backward difference).
    pub dt_norm: f64,
    /// `‖u‖_{H¹}`.
    pub h1_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub slab: FieldSlab,
    pub energy: Vec<EnergySample>,
    /// Solution on the full grid at the final level.
    pub final_level: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub stencil: Stencil,
    pub exec: Execution,
    pub record: Region,
    /// Shell width for [`Region::Shell`].
    pub shell_width: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { stencil: Stencil::Second, exec: Execution::Parallel, record: Region::Exterior, shell_width: 0.0 }
    }
}

/// Recorded node set for a region.
pub fn region_points(grid: &GridSpec, domain: &DomainConfig, region: Region, shell_width: f64) -> Vec<usize> {
    match region {
        Region::Full => (0..grid.npoints()).collect(),
        Region::Exterior => grid.points_in_shell(domain.r, domain.r_tilde),
        Region::Shell => grid.points_in_shell(domain.r, domain.r + shell_width),
        Region::Support => Vec::new(),
    }
}

pub fn solve_forward(
    domain: &DomainConfig,
    potential: &PotentialSpec,
    forcing: &Forcing,
    grid: &GridSpec,
    opts: &SolverOptions,
) -> Result<SolveOutput> {
    let cfl = grid.cfl();
    if cfl > MAX_CFL + 1e-12 {
        return Err(Error::Stability { cfl });
    }
    if let Forcing::Slab(s) = forcing {
        if s.grid != *grid {
            return Err(Error::Config("source slab sampled on a different grid".into()));
        }
    }
    let n = grid.n;
    let nx = grid.nx;
    let np = grid.npoints();
    let ghost = match opts.stencil {
        Stencil::Second => 1,
        Stencil::Fourth => 2,
    };
    let record = region_points(grid, domain, opts.record, opts.shell_width);
    let mut slab = FieldSlab::zeros(grid.clone(), opts.record, record);

    // V is supported in Ω; only those nodes are sampled
    let vnodes: Vec<usize> = if potential.is_zero() { Vec::new() } else { grid.points_in_ball(&[0.0; 3], domain.r) };
    let vpoints: Vec<Vec3> = vnodes.iter().map(|&p| grid.point(p)).collect();
    let mut vfield = vec![0.0; np];

    let all_points: Vec<Vec3> = match forcing {
        Forcing::Function(_) => (0..np).map(|p| grid.point(p)).collect(),
        _ => Vec::new(),
    };

    let mut prev = vec![ZERO; np];
    let mut cur = vec![ZERO; np];
    let mut energy = Vec::with_capacity(grid.nt + 1);
    let dt2 = grid.dt * grid.dt;
    let inv_dx2 = 1.0 / (grid.dx * grid.dx);
    let strides: Vec<usize> = (0..n).map(|a| nx.pow((n - 1 - a) as u32)).collect();
    let bad = AtomicBool::new(false);
    energy.push(EnergySample::default());

    for m in 0..grid.nt {
        let t = grid.time(m);
        if !vnodes.is_empty() {
            let vals = map_range(opts.exec, vnodes.len(), |i| potential.value(t, &vpoints[i]));
            for (p, v) in vnodes.iter().zip(vals) {
                vfield[*p] = v;
            }
        }
        let fvals: Vec<Complex64> = match forcing {
            Forcing::Function(f) => map_range(opts.exec, np, |p| f(t, &all_points[p])),
            _ => Vec::new(),
        };
        // prev <- 2 cur − prev + dt² (Δ cur − V cur + f)
        let cur_ref = &cur;
        let vref = &vfield;
        let fref = &fvals;
        let strides_ref = &strides;
        for_each_chunk(opts.exec, &mut prev, nx, |row, out| {
            let base = row * nx;
            let interior_row = (0..n - 1).all(|a| {
                let idx = (base / strides_ref[a]) % nx;
                idx >= ghost && idx + ghost < nx
            });
            for (k, o) in out.iter_mut().enumerate() {
                let p = base + k;
                if !interior_row || k < ghost || k + ghost >= nx {
                    *o = ZERO;
                    continue;
                }
                let c = cur_ref[p];
                let mut lap = ZERO;
                for &s in strides_ref {
                    lap += match opts.stencil {
                        Stencil::Second => cur_ref[p + s] + cur_ref[p - s] - 2.0 * c,
                        Stencil::Fourth => {
                            (16.0 * (cur_ref[p + s] + cur_ref[p - s])
                                - (cur_ref[p + 2 * s] + cur_ref[p - 2 * s])
                                - 30.0 * c)
                                / 12.0
                        }
                    };
                }
                let mut rhs = lap * inv_dx2 - vref[p] * c;
                if !fref.is_empty() {
                    rhs += fref[p];
                }
                let v = 2.0 * c - *o + dt2 * rhs;
                if !(v.re.is_finite() && v.im.is_finite()) {
                    bad.store(true, Ordering::Relaxed);
                }
                *o = v;
            }
        });
        if let Forcing::Slab(s) = forcing {
            for (q, &p) in s.points.iter().enumerate() {
                prev[p] += dt2 * s.level(m)[q];
            }
        }
        if bad.load(Ordering::Relaxed) {
            return Err(Error::NaNGuard { step: m + 1 });
        }
        std::mem::swap(&mut prev, &mut cur);
        // cur = u^{m+1}, prev = u^m
        let np_rec = slab.points.len();
        let (pts, vals) = (&slab.points, &mut slab.values[(m + 1) * np_rec..(m + 2) * np_rec]);
        for (v, &p) in vals.iter_mut().zip(pts) {
            *v = cur[p];
        }
        energy.push(energy_sample(grid, &cur, &prev, grid.time(m + 1), opts.exec));
    }
    Ok(SolveOutput { slab, energy, final_level: cur })
}

fn energy_sample(grid: &GridSpec, cur: &[Complex64], prev: &[Complex64], time: f64, exec: Execution) -> EnergySample {
    let nx = grid.nx;
    let n = grid.n;
    let np = cur.len();
    let strides: Vec<usize> = (0..n).map(|a| nx.pow((n - 1 - a) as u32)).collect();
    let rows = np / nx;
    let parts: Vec<[f64; 3]> = map_range(exec, rows, |row| {
        let mut s = [NeumaierSum::new(), NeumaierSum::new(), NeumaierSum::new()];
        for k in 0..nx {
            let p = row * nx + k;
            let c = cur[p];
            s[0].add(((c - prev[p]) / grid.dt).norm_sqr());
            s[1].add(c.norm_sqr());
            for &st in &strides {
                if p + st < np && (st != 1 || k + 1 < nx) {
                    s[2].add(((cur[p + st] - c) / grid.dx).norm_sqr());
                }
            }
        }
        [s[0].value(), s[1].value(), s[2].value()]
    });
    let vol = grid.dx.powi(n as i32);
    let mut tot = [NeumaierSum::new(), NeumaierSum::new(), NeumaierSum::new()];
    for p in &parts {
        for i in 0..3 {
            tot[i].add(p[i]);
        }
    }
    EnergySample {
        time,
        dt_norm: (tot[0].value() * vol).sqrt(),
        h1_norm: ((tot[1].value() + tot[2].value()) * vol).sqrt(),
    }
}

/// Outcome of the energy bound check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    /// `max_t (‖∂_t u‖ + ‖u‖_{H¹})`.
    pub max_norm: f64,
    pub source_norm: f64,
    /// `max_norm / source_norm`; `None` for a vanishing source.
    pub constant: Option<f64>,
}

/// Empirical constant in `max_t(‖∂_t u‖ + ‖u‖_{H¹}) ≤ C ‖f‖_{L²}`.
pub fn energy_check(energy: &[EnergySample], source_norm: f64) -> EnergyReport {
    let max_norm = energy.iter().map(|e| e.dt_norm + e.h1_norm).fold(0.0, f64::max);
    let constant = (source_norm > 0.0).then(|| max_norm / source_norm);
    EnergyReport { max_norm, source_norm, constant }
}

/// `‖f‖_{L²}` of an analytic forcing on the grid.
pub fn forcing_norm(forcing: &Forcing, grid: &GridSpec, exec: Execution) -> f64 {
    match forcing {
        Forcing::None => 0.0,
        Forcing::Slab(s) => s.l2_norm(),
        Forcing::Function(f) => {
            let np = grid.npoints();
            let per_level = map_range(exec, grid.nt + 1, |m| {
                let t = grid.time(m);
                crate::sum::sum_f64((0..np).map(|p| f(t, &grid.point(p)).norm_sqr()))
            });
            (crate::sum::sum_f64(per_level) * grid.dt * grid.dx.powi(grid.n as i32)).sqrt()
        }
    }
}
