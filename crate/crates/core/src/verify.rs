//! Quick invariant checks run by the `verify` subcommand.

use crate::config::Mode;
use crate::error::Result;
use crate::geometry::{d_margin, dot};
use crate::measurement::{compute_s, ExtractionResult};
use crate::par::Execution;
use crate::pipeline::Pipeline;
use crate::potential::PotentialSpec;
use crate::solver::{solve_forward, Forcing, SolverOptions};
use crate::tomography::{build_system, ray_integral_adaptive, ray_integral_oracle, ray_pool, ReconGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// Deterministic values in `[-1, 1)`.
fn golden(k: usize) -> f64 {
    2.0 * (k as f64 * 0.618_033_988_749_894_9).fract() - 1.0
}

/// Run every check. Writes the `rays` and `source` artifacts of `p`.
pub fn run(p: &Pipeline) -> Result<Vec<Check>> {
    let cfg = &p.cfg;
    let d = &cfg.domain;
    let mut out = Vec::new();

    let rays = p.rays()?;
    let margins: Vec<Option<f64>> = rays.iter().map(|r| d_margin(d, &r.ray, cfg.rays.search.chord_samples)).collect();
    out.push(Check::new(
        "rays admissible",
        margins.iter().all(Option::is_some),
        format!(
            "{} rays, min margin {:.3e}",
            rays.len(),
            margins.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
        ),
    ));

    let mut frame_err: f64 = 0.0;
    for r in &rays {
        let mut basis = vec![*r.xi()];
        basis.extend(r.frame.iter().cloned());
        for (a, u) in basis.iter().enumerate() {
            for (b, v) in basis.iter().enumerate() {
                let want = if a == b { 1.0 } else { 0.0 };
                frame_err = frame_err.max((dot(u, v) - want).abs());
            }
        }
    }
    out.push(Check::new("frames orthonormal", frame_err < 1e-12, format!("max deviation {frame_err:.2e}")));

    p.source()?;
    let w = p.load_weights()?;
    let zeta3 = 1.202_056_903_159_594_3;
    let sc: f64 = w.c.iter().zip(&w.tau).map(|(c, t)| c * t).sum();
    let sb: f64 = w.b.iter().zip(&w.kappa).map(|(b, k)| b * k).sum();
    out.push(Check::new(
        "weights summable",
        sc <= zeta3 && sb <= 1.0,
        format!("Σ c_k τ_k = {sc:.6}, Σ b_j κ_j = {sb:.6}"),
    ));

    let pool = ray_pool(d, 50, cfg.rays.search.chord_samples)?;
    let grid = ReconGrid::new(d, cfg.inversion.time_cells, cfg.inversion.space_cells);
    let sys = build_system(&pool, &grid, p.exec);
    let c: Vec<f64> = (0..grid.nnodes()).map(golden).collect();
    let y: Vec<f64> = (0..pool.len()).map(|k| golden(k + 7919)).collect();
    let lhs: f64 = sys.apply(&c, p.exec).iter().zip(&y).map(|(a, b)| a * b).sum();
    let rhs: f64 = sys.adjoint(&y, p.exec).iter().zip(&c).map(|(a, b)| a * b).sum();
    let adj = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    out.push(Check::new("ray system adjoint", adj < 1e-12, format!("relative mismatch {adj:.2e}")));

    let mut oracle_err: f64 = 0.0;
    for r in pool.iter().take(20) {
        let a = ray_integral_oracle(&cfg.potential, r);
        let b = ray_integral_adaptive(&cfg.potential, r, 1e-12);
        oracle_err = oracle_err.max((a - b).abs() / a.abs().max(b.abs()).max(1e-300));
    }
    out.push(Check::new("light-ray oracles agree", oracle_err < 1e-8, format!("max relative gap {oracle_err:.2e}")));

    let q = &cfg.extraction.quadrature;
    let mut s_gap: f64 = 0.0;
    for j in 0..rays.len() {
        for &n in &cfg.truncation.indices {
            let a = compute_s(d, &rays, &w.b, j, n, q, Execution::Sequential)?.total();
            let b = compute_s(d, &rays, &w.b, j, n, q, p.exec)?.total();
            s_gap = s_gap.max((a - b).norm() / a.norm().max(f64::MIN_POSITIVE));
        }
    }
    out.push(Check::new("S independent of execution", s_gap <= 1e-12, format!("max relative gap {s_gap:.2e}")));

    let null = null_extraction(p)?;
    let scale = rays.iter().map(|r| ray_integral_oracle(&cfg.potential, &r.ray).abs()).fold(0.0, f64::max);
    let tol = 0.05 * if scale > 0.0 { scale } else { 1.0 };
    let worst = null.iter().map(|r| r.estimate.abs()).fold(0.0, f64::max);
    out.push(Check::new(
        "null potential extraction",
        worst <= tol,
        format!("max |estimate| {worst:.3e}, tolerance {tol:.3e} ({} rows)", null.len()),
    ));
    Ok(out)
}

/// Extraction rows with `V ≡ 0` in the configured mode.
pub fn null_extraction(p: &Pipeline) -> Result<Vec<ExtractionResult>> {
    let cfg = &p.cfg;
    let rays = p.load_rays()?;
    let w = p.load_weights()?;
    let zero = PotentialSpec::zero();
    match cfg.mode {
        Mode::Oracle => p.extract_oracle(&rays, &w, &zero),
        Mode::Pde => {
            let source = p.load_source()?;
            let opts = SolverOptions { stencil: cfg.grid.stencil, exec: p.exec, ..Default::default() };
            let sol = solve_forward(&cfg.domain, &zero, &Forcing::Slab(&source), &source.grid, &opts)?;
            p.pde_rows(&rays, &w, &source, &sol.slab)
        }
    }
}
