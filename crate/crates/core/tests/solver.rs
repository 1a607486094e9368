use num_complex::Complex64;
use onesource::field::GridSpec;
use onesource::geometry::{DomainConfig, Vec3};
use onesource::par::Execution;
use onesource::potential::{Bump, PotentialSpec};
use onesource::solver::{energy_check, forcing_norm, solve_forward, Forcing, SolverOptions, Stencil};
use onesource::Error;

fn domain() -> DomainConfig {
    DomainConfig::new(2, 1.0, 1.3, 2.5).unwrap()
}

fn pulse() -> Bump {
    Bump { t0: 0.5, x0: vec![1.15, 0.0], rho_t: 0.3, rho_x: 0.12, amplitude: 1.0, exponent: 6 }
}

#[test]
fn zero_forcing_gives_zero_field() {
    let d = domain();
    let g = GridSpec::new(&d, 0.1, 0.9).unwrap();
    let out = solve_forward(&d, &PotentialSpec::zero(), &Forcing::None, &g, &SolverOptions::default()).unwrap();
    assert!(out.slab.values.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    assert!(energy_check(&out.energy, 0.0).constant.is_none());
}

#[test]
fn unstable_step_is_rejected() {
    let d = domain();
    let g = GridSpec::with_dt(&d, 0.1, 0.08);
    let e = solve_forward(&d, &PotentialSpec::zero(), &Forcing::None, &g, &SolverOptions::default());
    assert!(matches!(e, Err(Error::Stability { .. })));
}

#[test]
fn linear_in_the_forcing() {
    let d = domain();
    let g = GridSpec::new(&d, 0.05, 0.9).unwrap();
    let b1 = pulse();
    let b2 = Bump { x0: vec![-1.1, 0.3], t0: 0.7, ..pulse() };
    let v = PotentialSpec::single(Bump {
        t0: 1.2,
        x0: vec![0.0, 0.0],
        rho_t: 1.0,
        rho_x: 0.6,
        amplitude: 2.0,
        exponent: 5,
    });
    let f1 = |t: f64, x: &Vec3| Complex64::new(b1.value(t, x), 0.0);
    let f2 = |t: f64, x: &Vec3| Complex64::new(0.0, b2.value(t, x));
    let f12 = |t: f64, x: &Vec3| f1(t, x) + f2(t, x);
    let opts = SolverOptions::default();
    let u1 = solve_forward(&d, &v, &Forcing::Function(&f1), &g, &opts).unwrap();
    let u2 = solve_forward(&d, &v, &Forcing::Function(&f2), &g, &opts).unwrap();
    let u12 = solve_forward(&d, &v, &Forcing::Function(&f12), &g, &opts).unwrap();
    let scale = u12.slab.max_abs();
    for i in 0..u12.slab.values.len() {
        let diff = u12.slab.values[i] - u1.slab.values[i] - u2.slab.values[i];
        assert!(diff.norm() <= 1e-10 * scale);
    }
    let f10 = |t: f64, x: &Vec3| 10.0 * f1(t, x);
    let u10 = solve_forward(&d, &v, &Forcing::Function(&f10), &g, &opts).unwrap();
    let e1 = energy_check(&u1.energy, forcing_norm(&Forcing::Function(&f1), &g, Execution::Parallel));
    let e10 = energy_check(&u10.energy, forcing_norm(&Forcing::Function(&f10), &g, Execution::Parallel));
    assert!((e10.max_norm / e1.max_norm - 10.0).abs() < 1e-9);
}

#[test]
fn sequential_and_parallel_agree_bitwise() {
    let d = domain();
    let g = GridSpec::new(&d, 0.05, 0.9).unwrap();
    let b = pulse();
    let f = |t: f64, x: &Vec3| Complex64::new(b.value(t, x), 0.0);
    let mut opts = SolverOptions { stencil: Stencil::Fourth, ..Default::default() };
    let a = solve_forward(&d, &PotentialSpec::zero(), &Forcing::Function(&f), &g, &opts).unwrap();
    opts.exec = Execution::Sequential;
    let s = solve_forward(&d, &PotentialSpec::zero(), &Forcing::Function(&f), &g, &opts).unwrap();
    assert_eq!(a.slab.values, s.slab.values);
}

#[test]
fn enlarging_the_box_does_not_change_the_exterior_record() {
    let d = domain();
    let mut big = d.clone();
    big.box_halfwidth += 1.0;
    let b = pulse();
    let f = |t: f64, x: &Vec3| Complex64::new(b.value(t, x), 0.0);
    let g1 = GridSpec::with_dt(&d, 0.05, 0.025);
    let g2 = GridSpec::with_dt(&big, 0.05, 0.025);
    let opts = SolverOptions::default();
    let u1 = solve_forward(&d, &PotentialSpec::zero(), &Forcing::Function(&f), &g1, &opts).unwrap();
    let u2 = solve_forward(&big, &PotentialSpec::zero(), &Forcing::Function(&f), &g2, &opts).unwrap();
    let key = |g: &GridSpec, p: usize| {
        let x = g.point(p);
        ((x[0] / g.dx).round() as i64, (x[1] / g.dx).round() as i64)
    };
    let map: std::collections::HashMap<_, _> =
        u2.slab.points.iter().enumerate().map(|(q, &p)| (key(&g2, p), q)).collect();
    let scale = u1.slab.max_abs();
    let mut matched = 0;
    for (q1, &p) in u1.slab.points.iter().enumerate() {
        let Some(&q2) = map.get(&key(&g1, p)) else { continue };
        matched += 1;
        for m in 0..u1.slab.levels() {
            let (a, b) = (u1.slab.level(m)[q1], u2.slab.level(m)[q2]);
            assert!((a - b).norm() <= 1e-12 * scale);
        }
    }
    assert!(matched * 100 >= 99 * u1.slab.points.len());
}

fn mms_error(dx: f64, dt: f64, stencil: Stencil) -> f64 {
    let d = domain();
    let g = GridSpec::with_dt(&d, dx, dt);
    let exact = Bump { t0: 1.6, x0: vec![0.2, 0.0], rho_t: 1.5, rho_x: 0.8, amplitude: 1.0, exponent: 6 };
    let v = PotentialSpec::single(Bump {
        t0: 1.2,
        x0: vec![0.0, 0.1],
        rho_t: 1.0,
        rho_x: 0.7,
        amplitude: 3.0,
        exponent: 5,
    });
    let f = |t: f64, x: &Vec3| {
        let j = exact.jet(t, x);
        Complex64::new(j.hess[0][0] - j.hess[1][1] - j.hess[2][2] + v.value(t, x) * j.value, 0.0)
    };
    let opts = SolverOptions { stencil, ..Default::default() };
    let out = solve_forward(&d, &v, &Forcing::Function(&f), &g, &opts).unwrap();
    let t = g.time(g.nt);
    let s: f64 = out.final_level.iter().enumerate().map(|(p, u)| (u.re - exact.value(t, &g.point(p))).powi(2)).sum();
    (s * g.dx * g.dx).sqrt()
}

#[test]
fn manufactured_solution_converges_at_second_order() {
    let e1 = mms_error(0.04, 0.025, Stencil::Second);
    let e2 = mms_error(0.02, 0.0125, Stencil::Second);
    let ratio = e1 / e2;
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio} ({e1:e}, {e2:e})");
}

#[test]
fn no_signal_outside_the_causal_cone() {
    let d = domain();
    let g = GridSpec::new(&d, 0.02, 0.9).unwrap();
    let b = Bump { exponent: 30, rho_x: 0.2, rho_t: 0.2, ..pulse() };
    let f = |t: f64, x: &Vec3| Complex64::new(b.value(t, x), 0.0);
    let out = solve_forward(&d, &PotentialSpec::zero(), &Forcing::Function(&f), &g, &SolverOptions::default()).unwrap();
    let t_min = b.t0 - b.rho_t;
    let scale = out.slab.max_abs();
    let mut worst: f64 = 0.0;
    let mut worst_gap = 0.0;
    for m in 0..out.slab.levels() {
        let t = g.time(m);
        for (q, &p) in out.slab.points.iter().enumerate() {
            let x = g.point(p);
            let dist = (((x[0] - b.x0[0]).powi(2) + (x[1] - b.x0[1]).powi(2)).sqrt() - b.rho_x).max(0.0);
            let gap = dist - (t - t_min);
            if gap > 0.0 {
                let r = out.slab.level(m)[q].norm() / scale;
                if r > worst {
                    worst = r;
                    worst_gap = gap;
                }
            }
        }
    }
    assert!(worst < 1e-10, "leakage {worst:e} at distance {worst_gap} outside the cone");
}
