use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;
use onesource::field::GridSpec;
use onesource::geometry::{enumerate_rays, DomainConfig, RaySearch, Vec3};
use onesource::measurement::{compute_s, ProbeQuadrature};
use onesource::par::Execution;
use onesource::potential::{Bump, PotentialSpec};
use onesource::solver::{solve_forward, Forcing, SolverOptions};
use onesource::tomography::{build_system, ray_pool, ReconGrid};

const POLICIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn desk() -> DomainConfig {
    DomainConfig::new(2, 1.0, 1.3, 2.5).unwrap()
}

fn solver(c: &mut Criterion) {
    let d = desk();
    let g = GridSpec::new(&d, 0.02, 0.5).unwrap();
    let v = PotentialSpec::single(Bump {
        t0: 1.25,
        x0: vec![0.0, 0.0],
        rho_t: 1.2,
        rho_x: 0.9,
        amplitude: 1.0,
        exponent: 5,
    });
    let pulse = Bump { t0: 0.5, x0: vec![1.15, 0.0], rho_t: 0.3, rho_x: 0.12, amplitude: 1.0, exponent: 6 };
    let f = |t: f64, x: &Vec3| Complex64::new(pulse.value(t, x), 0.0);
    let mut group = c.benchmark_group("solve_forward");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        let opts = SolverOptions { exec, ..Default::default() };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| solve_forward(&d, &v, &Forcing::Function(&f), &g, &opts).unwrap())
        });
    }
    group.finish();
}

fn ray_system(c: &mut Criterion) {
    let d = desk();
    let rays = ray_pool(&d, 400, 64).unwrap();
    let g = ReconGrid::new(&d, 12, 8);
    let mut group = c.benchmark_group("ray_system");
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::new("build", name), |b| b.iter(|| build_system(&rays, &g, exec)));
        let sys = build_system(&rays, &g, exec);
        let x = vec![1.0; g.nnodes()];
        group.bench_function(BenchmarkId::new("normal_apply", name), |b| {
            b.iter(|| sys.adjoint(&sys.apply(&x, exec), exec))
        });
    }
    group.finish();
}

fn correction_term(c: &mut Criterion) {
    let d = desk();
    let rays = enumerate_rays(&d, 4, (16, 8), &RaySearch::default()).unwrap().rays;
    let b = [0.5, 0.25, 0.125, 0.0625];
    let q = ProbeQuadrature::default();
    let mut group = c.benchmark_group("compute_s");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |bch| {
            bch.iter(|| compute_s(&d, &rays, &b, 0, 3, &q, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, solver, ray_system, correction_term);
criterion_main!(benches);
