use num_complex::Complex64;
use onesource::cutoff::CutoffProfile;
use onesource::error::Error;
use onesource::field::{FieldSlab, GridSpec, Region};
use onesource::geometry::{enumerate_rays, norm, DomainConfig, RayDescriptor, RaySearch};
use onesource::measurement::{c_chi, compute_i, compute_s, ExtractionResult, ProbeQuadrature};
use onesource::par::Execution;
use onesource::solver::region_points;

fn setup() -> (DomainConfig, Vec<RayDescriptor>, GridSpec) {
    let d = DomainConfig::new(2, 1.0, 1.3, 2.5).unwrap();
    let rays = enumerate_rays(&d, 3, (16, 8), &RaySearch::default()).unwrap().rays;
    let g = GridSpec::new(&d, 0.05, 0.5).unwrap();
    (d, rays, g)
}

fn exterior(d: &DomainConfig, g: &GridSpec) -> FieldSlab {
    let pts = region_points(g, d, Region::Exterior, 0.0);
    let mut u = FieldSlab::zeros(g.clone(), Region::Exterior, pts.clone());
    for m in 0..u.levels() {
        for (q, p) in pts.iter().enumerate() {
            let (a, b) = (*p as f64, m as f64);
            u.level_mut(m)[q] = Complex64::new((0.37 * a + 0.11 * b).sin(), (0.13 * a - 0.07 * b).cos());
        }
    }
    u
}

fn no_source(g: &GridSpec) -> FieldSlab {
    FieldSlab::zeros(g.clone(), Region::Support, Vec::new())
}

#[test]
fn extraction_is_linear_in_the_data() {
    let (d, rays, g) = setup();
    let u = exterior(&d, &g);
    let f = no_source(&g);
    let base = compute_i(&d, &rays[0], 2, &f, &u, Execution::Sequential).unwrap();
    assert!(base.norm() > 0.0);
    let rot = Complex64::from_polar(1.0, 0.7);
    let mut v = u.clone();
    v.values.iter_mut().for_each(|z| *z *= 2.5 * rot);
    let scaled = compute_i(&d, &rays[0], 2, &f, &v, Execution::Sequential).unwrap();
    assert!((scaled - 2.5 * rot * base).norm() <= 1e-12 * base.norm());
}

#[test]
fn extraction_sees_only_the_shell() {
    let (d, rays, g) = setup();
    let u = exterior(&d, &g);
    let f = no_source(&g);
    let ray = &rays[0];
    let base = compute_i(&d, ray, 3, &f, &u, Execution::Parallel).unwrap();
    let mut v = u.clone();
    let outer = d.r + 0.25 * ray.delta;
    for m in 0..v.levels() {
        for q in 0..v.points.len() {
            if norm(&g.point(v.points[q])) >= outer {
                v.level_mut(m)[q] = Complex64::new(1e6, -1e6);
            }
        }
    }
    assert_eq!(compute_i(&d, ray, 3, &f, &v, Execution::Parallel).unwrap(), base);
}

#[test]
fn zero_data_give_zero() {
    let (d, rays, g) = setup();
    let mut u = exterior(&d, &g);
    u.values.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    let i = compute_i(&d, &rays[1], 2, &no_source(&g), &u, Execution::Sequential).unwrap();
    assert_eq!(i, Complex64::new(0.0, 0.0));
}

#[test]
fn missing_shell_nodes_are_reported() {
    let (d, rays, g) = setup();
    let pts = region_points(&g, &d, Region::Shell, 0.01);
    let u = FieldSlab::zeros(g.clone(), Region::Shell, pts);
    let err = compute_i(&d, &rays[0], 2, &no_source(&g), &u, Execution::Sequential).unwrap_err();
    assert!(matches!(err, Error::Coverage(_)), "{err}");
}

#[test]
fn data_on_another_grid_are_rejected() {
    let (d, rays, g) = setup();
    let u = exterior(&d, &g);
    let other = GridSpec::new(&d, 0.04, 0.5).unwrap();
    assert!(compute_i(&d, &rays[0], 2, &no_source(&other), &u, Execution::Sequential).is_err());
}

#[test]
fn correction_term_does_not_depend_on_the_execution_policy() {
    let (d, rays, _) = setup();
    let b = [0.5, 0.25, 0.125];
    let q = ProbeQuadrature::default();
    for j in 0..rays.len() {
        let a = compute_s(&d, &rays, &b, j, 2, &q, Execution::Sequential).unwrap();
        let p = compute_s(&d, &rays, &b, j, 2, &q, Execution::Parallel).unwrap();
        assert!((a.total() - p.total()).norm() <= 1e-14 * a.total().norm().max(1e-300));
        assert!(a.main.norm() > 0.0);
    }
}

#[test]
fn correction_term_is_linear_in_the_ray_weights() {
    let (d, rays, _) = setup();
    let q = ProbeQuadrature::default();
    let s1 = compute_s(&d, &rays, &[0.5, 0.25, 0.125], 0, 2, &q, Execution::Sequential).unwrap().total();
    let s2 = compute_s(&d, &rays, &[1.5, 0.75, 0.375], 0, 2, &q, Execution::Sequential).unwrap().total();
    assert!((s2 - 3.0 * s1).norm() <= 1e-12 * s2.norm());
}

#[test]
fn estimate_normalisation() {
    for n in [2, 3] {
        let chi = CutoffProfile::for_dimension(n);
        let l2 = onesource::quad::simpson(|t| chi.eval(t, 0).powi(2), -chi.support, chi.support, 4000);
        assert!((c_chi(n) - l2.powi(n as i32)).abs() < 1e-12 * c_chi(n));
    }
    let (i, s) = (Complex64::new(3.0, 1.0), Complex64::new(0.5, -2.0));
    let r = ExtractionResult::new(1, 2, i, s, 0.25, 0.1, 2);
    assert_eq!(r.raw, i / 0.25 - s);
    assert!((r.estimate - r.raw.re / (0.1 * c_chi(2))).abs() < 1e-12 * r.estimate.abs());
    assert_eq!(r.rel_error(), None);
}
