//! One-dimensional quadrature rules.

use std::ops::{Add, Mul, Sub};

/// Composite Simpson on `[a, b]` with `panels` (rounded up to even) subintervals.
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let m = (panels.max(2) + 1) & !1;
    let h = (b - a) / m as f64;
    let mut acc = crate::sum::NeumaierSum::new();
    acc.add(f(a));
    acc.add(f(b));
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc.add(w * f(a + h * i as f64));
    }
    acc.value() * h / 3.0
}

/// Running integral of equispaced samples, `out[i] = ∫_{x_0}^{x_i}`.
///
/// Even nodes use composite Simpson; odd nodes add the three-point
/// single-interval rule `h/12 (5 f_0 + 8 f_1 - f_2)`, so the whole sequence
/// is fourth-order accurate for smooth integrands.
pub fn cumulative_simpson<T>(h: f64, f: &[T], zero: T) -> Vec<T>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    let n = f.len();
    let mut out = vec![zero; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = (f[0] + f[1]) * (0.5 * h);
        return out;
    }
    let mut i = 0;
    while i + 2 < n {
        let base = out[i];
        out[i + 1] = base + (f[i] * 5.0 + f[i + 1] * 8.0 - f[i + 2]) * (h / 12.0);
        out[i + 2] = base + (f[i] + f[i + 1] * 4.0 + f[i + 2]) * (h / 3.0);
        i += 2;
    }
    if i + 1 < n {
        // trailing odd node: integrate the last interval backwards from i+1
        out[i + 1] = out[i] + (f[i + 1] * 5.0 + f[i] * 8.0 - f[i - 1]) * (h / 12.0);
    }
    out
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule with `n` nodes per panel over the given breakpoints.
pub fn panel_rule(breaks: &[f64], n: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let mut out = Vec::with_capacity(breaks.len().saturating_sub(1) * n);
    for p in breaks.windows(2) {
        let (a, b) = (p[0], p[1]);
        if b <= a {
            continue;
        }
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        for (xi, wi) in x.iter().zip(&w) {
            out.push((c + r * xi, r * wi));
        }
    }
    out
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = r * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * r, ((k - g) * r).abs())
}

/// Adaptive Gauss–Kronrod (7/15) with absolute + relative tolerance.
pub fn adaptive_gk<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    let mut intervals = vec![(a, b, kronrod15(&mut f, a, b))];
    for _ in 0..5000 {
        let total: f64 = intervals.iter().map(|iv| iv.2 .0).sum();
        let err: f64 = intervals.iter().map(|iv| iv.2 .1).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, iv)| if iv.2 .1 > acc.1 { (i, iv.2 .1) } else { acc });
        let (lo, hi, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        intervals.push((lo, mid, kronrod15(&mut f, lo, mid)));
        intervals.push((mid, hi, kronrod15(&mut f, mid, hi)));
    }
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    crate::sum::sum_f64(intervals.iter().map(|iv| iv.2 .0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_for_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, -1.0, 2.0, 4);
        assert!((v - (15.0 / 4.0 - 3.0 + 3.0)).abs() < 1e-13);
    }

    #[test]
    fn cumulative_matches_antiderivative() {
        let h = 0.01;
        let f: Vec<f64> = (0..101).map(|i| (i as f64 * h).cos()).collect();
        let c = cumulative_simpson(h, &f, 0.0);
        for (i, v) in c.iter().enumerate() {
            assert!((v - (i as f64 * h).sin()).abs() < 1e-9, "node {i}");
        }
        let c = cumulative_simpson(h, &f[..100], 0.0);
        assert!((c[99] - (0.99f64).sin()).abs() < 1e-9);
    }

    #[test]
    fn gauss_legendre_integrates_high_degree() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((s - 2.0 / 13.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_gk_handles_kinks() {
        let v = adaptive_gk(|x: f64| x.abs().sqrt(), -1.0, 1.0, 1e-14, 1e-12);
        assert!((v - 4.0 / 3.0).abs() < 1e-10);
    }
}
