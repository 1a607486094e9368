use num_complex::Complex64;
use onesource::cutoff::CutoffProfile;
use onesource::field::{FieldSlab, GridSpec, Region};
use onesource::geometry::{dot, enumerate_rays, norm, transverse_frame, DomainConfig, RaySearch, Vec3};
use onesource::optics::{FreePacket, Local, RayFrame};
use onesource::par::Execution;
use onesource::potential::{Bump, PotentialSpec};
use onesource::source::{FrequencyWeights, WeightScheme};
use onesource::tomography::{
    build_system, invert, ray_integral_adaptive, ray_integral_oracle, ray_pool, read_samples, write_samples, CgOptions,
    InversionPrior, Provenance, RaySample, ReconGrid,
};
use proptest::prelude::*;
use std::sync::OnceLock;

fn desk() -> DomainConfig {
    DomainConfig::new(2, 1.0, 1.3, 2.5).unwrap()
}

fn pool() -> &'static [onesource::geometry::LightRay] {
    static POOL: OnceLock<Vec<onesource::geometry::LightRay>> = OnceLock::new();
    POOL.get_or_init(|| ray_pool(&desk(), 60, 64).unwrap())
}

fn bump_strategy() -> impl Strategy<Value = Bump> {
    (0.8f64..1.7, -0.3f64..0.3, -0.3f64..0.3, 0.3f64..0.75, 0.3f64..0.65, 0.1f64..3.0).prop_map(
        |(t0, x, y, rt, rx, amp)| Bump { t0, x0: vec![x, y], rho_t: rt, rho_x: rx, amplitude: amp, exponent: 5 },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transverse_frames_are_orthonormal(theta in 0.0f64..std::f64::consts::PI, phi in 0.0f64..std::f64::consts::TAU) {
        let xi: Vec3 = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
        let frame = transverse_frame(&xi, 3);
        let mut basis = vec![xi];
        basis.extend(frame);
        for (a, u) in basis.iter().enumerate() {
            for (b, v) in basis.iter().enumerate() {
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((dot(u, v) - want).abs() < 1e-14);
            }
        }
        let xi2: Vec3 = [phi.cos(), phi.sin(), 0.0];
        let e = transverse_frame(&xi2, 2);
        prop_assert!(dot(&e[0], &xi2).abs() < 1e-15 && (norm(&e[0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cutoff_is_even_bounded_and_differentiable(t in -0.2f64..0.2, n in 2usize..4) {
        let chi = CutoffProfile::for_dimension(n);
        prop_assert_eq!(chi.eval(t, 0), chi.eval(-t, 0));
        prop_assert!((0.0..=1.0).contains(&chi.eval(t, 0)));
        if t.abs() <= chi.plateau {
            prop_assert_eq!(chi.eval(t, 0), 1.0);
        }
        if t.abs() >= chi.support {
            prop_assert_eq!(chi.eval(t, 0), 0.0);
        }
        let h = 1e-6;
        for d in 0..5 {
            let fd = (chi.eval(t + h, d) - chi.eval(t - h, d)) / (2.0 * h);
            let scale = chi.eval(chi.plateau + 0.3 * (chi.support - chi.plateau), d + 1).abs().max(1.0);
            prop_assert!((fd - chi.eval(t, d + 1)).abs() < 1e-5 * scale);
        }
    }

    #[test]
    fn local_coordinates_invert(sigma in -0.5f64..0.5, alpha in -0.1f64..0.1, beta in -0.1f64..0.1, j in 0usize..4) {
        let d = desk();
        let family = enumerate_rays(&d, 4, (16, 8), &RaySearch::default()).unwrap();
        let frame = RayFrame::new(&family.rays[j]);
        let l = Local { sigma, alpha, beta: [beta, 0.0] };
        let (t, x) = frame.to_global(&l);
        let back = frame.to_local(t, &x);
        prop_assert!((back.sigma - sigma).abs() < 1e-14);
        prop_assert!((back.alpha - alpha).abs() < 1e-14);
        prop_assert!((back.beta[0] - beta).abs() < 1e-14);
    }

    #[test]
    fn packets_stay_in_their_tube(sigma in -0.3f64..0.3, alpha in -0.5f64..0.5, beta in -0.5f64..0.5, k in 1u32..5) {
        let d = desk();
        let family = enumerate_rays(&d, 1, (16, 8), &RaySearch::default()).unwrap();
        let ray = &family.rays[0];
        let p = FreePacket::new(ray, (k as f64).exp(), 2);
        let hw = p.profile.half_width();
        let (t, x) = p.frame.to_global(&Local { sigma, alpha, beta: [beta, 0.0] });
        if alpha.abs() >= hw || beta.abs() >= hw {
            prop_assert_eq!(p.eval(t, &x), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn ray_system_is_adjoint_consistent(seed in 0u64..1000, cells in 3usize..9) {
        let d = desk();
        let g = ReconGrid::new(&d, cells + 2, cells);
        let sys = build_system(pool(), &g, Execution::Sequential);
        let val = |i: usize| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0;
        let c: Vec<f64> = (0..g.nnodes()).map(val).collect();
        let y: Vec<f64> = (0..pool().len()).map(|i| val(i + 7)).collect();
        let lhs: f64 = sys.apply(&c, Execution::Sequential).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = sys.adjoint(&y, Execution::Parallel).iter().zip(&c).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn light_ray_oracles_agree(b in bump_strategy(), i in 0usize..60) {
        let v = PotentialSpec::single(b);
        let ray = &pool()[i];
        let exact = ray_integral_oracle(&v, ray);
        let adaptive = ray_integral_adaptive(&v, ray, 1e-12);
        prop_assert!((exact - adaptive).abs() <= 1e-8 * exact.abs().max(1e-12), "{exact} vs {adaptive}");
    }

    #[test]
    fn ray_integrals_are_linear_in_the_potential(b in bump_strategy(), s in -3.0f64..3.0, i in 0usize..60) {
        let v = PotentialSpec::single(b.clone());
        let w = PotentialSpec::single(Bump { amplitude: s * b.amplitude, ..b });
        let ray = &pool()[i];
        let (a, c) = (ray_integral_oracle(&v, ray), ray_integral_oracle(&w, ray));
        prop_assert!((c - s * a).abs() <= 1e-13 * a.abs().max(1e-300) * s.abs().max(1.0));
    }

    #[test]
    fn weights_are_summable(levels in 1usize..12, kappas in prop::collection::vec(1e-3f64..1e6, 1..10)) {
        let w = WeightScheme::new(levels, kappas, FrequencyWeights::Standard);
        let sc: f64 = w.c.iter().zip(&w.tau).map(|(c, t)| c * t).sum();
        let sb: f64 = w.b.iter().zip(&w.kappa).map(|(b, k)| b * k).sum();
        prop_assert!(sc <= 1.202_056_903_159_594_3);
        prop_assert!(sb < 1.0);
        prop_assert!(w.b.iter().all(|b| *b > 0.0));
    }

    #[test]
    fn slabs_round_trip_through_wavf(values in prop::collection::vec(-1e3f64..1e3, 6..40), nt in 1usize..4) {
        let d = desk();
        let grid = GridSpec::new(&d, 0.5, 0.5).unwrap();
        let per = values.len() / (2 * (nt + 1));
        prop_assume!(per >= 1);
        let grid = GridSpec { nt, ..grid };
        let points: Vec<usize> = (0..per).map(|p| 3 * p + 1).collect();
        let mut slab = FieldSlab::zeros(grid, Region::Exterior, points);
        for (v, c) in slab.values.iter_mut().zip(values.chunks_exact(2)) {
            *v = Complex64::new(c[0], c[1]);
        }
        slab.meta.push(("note".into(), "x=1".into()));
        let mut buf = Vec::new();
        slab.write_wavf(&mut buf).unwrap();
        prop_assert_eq!(FieldSlab::read_wavf(buf.as_slice()).unwrap(), slab);
    }
}

#[test]
fn zero_data_reconstruct_to_zero() {
    let d = desk();
    let g = ReconGrid::new(&d, 8, 6);
    let sys = build_system(pool(), &g, Execution::Sequential);
    let y = vec![0.0; pool().len()];
    let v = PotentialSpec::zero();
    for prior in [InversionPrior::default(), InversionPrior { zero_nodes: Some(g.exterior_nodes(&d)) }] {
        let r = invert(&sys, &g, &y, 1e-4, &CgOptions::default(), &prior, Some(&v), Execution::Sequential).unwrap();
        assert!(r.coeffs.iter().all(|c| *c == 0.0));
        assert_eq!(r.iterations, 0);
    }
}

#[test]
fn too_few_rays_are_rejected() {
    let d = desk();
    let g = ReconGrid::new(&d, 8, 6);
    let sys = build_system(&pool()[..5], &g, Execution::Sequential);
    let err =
        invert(&sys, &g, &[1.0; 5], 1e-4, &CgOptions::default(), &Default::default(), None, Execution::Sequential);
    assert!(err.is_err());
}

#[test]
fn samples_round_trip_through_csv() {
    let v = PotentialSpec::single(Bump {
        t0: 1.25,
        x0: vec![0.0, 0.0],
        rho_t: 1.24,
        rho_x: 0.99,
        amplitude: 1.0,
        exponent: 5,
    });
    let samples: Vec<RaySample> = pool()
        .iter()
        .take(12)
        .enumerate()
        .map(|(i, r)| RaySample {
            ray: *r,
            value: ray_integral_oracle(&v, r),
            provenance: if i % 2 == 0 { Provenance::Oracle } else { Provenance::Extraction },
        })
        .collect();
    let mut buf = Vec::new();
    write_samples(&mut buf, &samples).unwrap();
    assert_eq!(read_samples(buf.as_slice()).unwrap(), samples);
}

#[test]
fn cutoff_norm_matches_quadrature() {
    for n in [2, 3] {
        let chi = CutoffProfile::for_dimension(n);
        let s = onesource::quad::simpson(|t| chi.eval(t, 0).powi(2), -chi.support, chi.support, 4000);
        assert!((s - chi.l2_norm_sq).abs() < 1e-12, "{s} vs {}", chi.l2_norm_sq);
    }
}
