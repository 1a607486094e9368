//! Ray-adapted coordinates, the leading amplitude, closed-form free-space
//! amplitudes and the extraction probe.
//!
//! Local coordinates around the anchor `(s_j, x_j)` of a ray:
//! `t = s_j + σ − α/2`, `x = x_j + (σ + α/2) ξ + Σ β_k e_k`.
//! The change of variables has unit Jacobian, `σ` runs along the ray, the
//! phase is `−t + ξ·x = α + φ₀`, the transport operator `∂_t + ξ·∇` is `∂_σ`
//! and `□ = ∂_t² − Δ = −2 ∂_σ ∂_α − Δ_β`.

use crate::cutoff::CutoffProfile;
use crate::geometry::{axpy, dot, sub, DomainConfig, Eta, RayDescriptor, Vec3};
use crate::potential::PotentialSpec;
use num_complex::Complex64;

/// Local coordinates `(σ, α, β)`; unused β components are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Local {
    pub sigma: f64,
    pub alpha: f64,
    pub beta: [f64; 2],
}

/// Orthonormal spacetime frame attached to a ray anchor.
#[derive(Debug, Clone)]
pub struct RayFrame {
    pub n: usize,
    pub s: f64,
    pub x: Vec3,
    pub xi: Vec3,
    pub e: [Vec3; 2],
    /// `ξ·x_j − s_j`, so that `−t + ξ·x = α + phase0`.
    pub phase0: f64,
}

impl RayFrame {
    pub fn new(ray: &RayDescriptor) -> Self {
        let mut e = [[0.0; 3]; 2];
        for (k, v) in ray.frame.iter().enumerate() {
            e[k] = *v;
        }
        Self { n: ray.n, s: ray.s, x: ray.x, xi: ray.ray.xi, e, phase0: dot(&ray.ray.xi, &ray.x) - ray.s }
    }

    #[inline]
    pub fn to_local(&self, t: f64, x: &Vec3) -> Local {
        let y = sub(x, &self.x);
        let p = dot(&y, &self.xi);
        let dt = t - self.s;
        let mut beta = [0.0; 2];
        for (k, b) in beta.iter_mut().enumerate().take(self.n - 1) {
            *b = dot(&y, &self.e[k]);
        }
        Local { sigma: 0.5 * (p + dt), alpha: p - dt, beta }
    }

    #[inline]
    pub fn to_global(&self, l: &Local) -> (f64, Vec3) {
        let t = self.s + l.sigma - 0.5 * l.alpha;
        let mut x = axpy(l.sigma + 0.5 * l.alpha, &self.xi, &self.x);
        for k in 0..self.n - 1 {
            x = axpy(l.beta[k], &self.e[k], &x);
        }
        (t, x)
    }

    /// `−t + ξ·x` at a local point.
    #[inline]
    pub fn phase(&self, l: &Local) -> f64 {
        l.alpha + self.phase0
    }
}

/// `e^{iτ(−t + ξ·x)}`.
pub fn eval_phase(xi: &Vec3, tau: f64, t: f64, x: &Vec3) -> Complex64 {
    Complex64::from_polar(1.0, tau * (-t + dot(xi, x)))
}

/// Scaled product profile `(μ)^{n/2} χ(μα) Π χ(μβ_k)` with `μ = scale/δ`.
///
/// With `scale = log τ` this is the leading amplitude `v⁽⁰⁾`; with
/// `scale = N` it is the probe amplitude `w_{j,N}`.
#[derive(Debug, Clone)]
pub struct ProductProfile {
    pub n: usize,
    pub mu: f64,
    pub norm: f64,
    pub chi: CutoffProfile,
}

impl ProductProfile {
    pub fn new(n: usize, scale: f64, delta: f64) -> Self {
        let mu = scale / delta;
        Self { n, mu, norm: mu.powf(n as f64 / 2.0), chi: CutoffProfile::for_dimension(n) }
    }

    /// Half-width of the support in each local coordinate.
    pub fn half_width(&self) -> f64 {
        self.chi.support / self.mu
    }

    /// Plateau half-width in each local coordinate.
    pub fn plateau_width(&self) -> f64 {
        self.chi.plateau / self.mu
    }

    #[inline]
    pub fn inside(&self, alpha: f64, beta: &[f64; 2]) -> bool {
        let h = self.half_width();
        alpha.abs() < h && (0..self.n - 1).all(|k| beta[k].abs() < h)
    }

    /// `∂_α^{da} ∂_{β₁}^{db[0]} ∂_{β₂}^{db[1]}` of the profile.
    #[inline]
    pub fn deriv(&self, alpha: f64, beta: &[f64; 2], da: usize, db: [usize; 2]) -> f64 {
        let mu = self.mu;
        let mut v = self.chi.eval(mu * alpha, da);
        if v == 0.0 {
            return 0.0;
        }
        let mut order = da;
        for k in 0..self.n - 1 {
            v *= self.chi.eval(mu * beta[k], db[k]);
            order += db[k];
        }
        v * self.norm * mu.powi(order as i32)
    }

    #[inline]
    pub fn value(&self, alpha: f64, beta: &[f64; 2]) -> f64 {
        self.deriv(alpha, beta, 0, [0, 0])
    }

    /// `Δ_β^m ∂_α^{da}` of the profile.
    pub fn lap_beta(&self, alpha: f64, beta: &[f64; 2], m: usize, da: usize) -> f64 {
        if self.n == 2 {
            return self.deriv(alpha, beta, da, [2 * m, 0]);
        }
        let mut s = 0.0;
        let mut c = 1.0;
        for i in 0..=m {
            s += c * self.deriv(alpha, beta, da, [2 * i, 2 * (m - i)]);
            c = c * (m - i) as f64 / (i + 1) as f64;
        }
        s
    }
}

/// Leading amplitude `v⁽⁰⁾_{j,τ}` at a global point, with derivatives.
pub struct Amplitude0 {
    pub frame: RayFrame,
    pub profile: ProductProfile,
}

impl Amplitude0 {
    pub fn new(ray: &RayDescriptor, tau: f64) -> Self {
        Self { frame: RayFrame::new(ray), profile: ProductProfile::new(ray.n, tau.ln(), ray.delta) }
    }

    pub fn value(&self, t: f64, x: &Vec3) -> f64 {
        let l = self.frame.to_local(t, x);
        self.profile.value(l.alpha, &l.beta)
    }

    /// `(∂_t v, ∇v)`.
    pub fn gradient(&self, t: f64, x: &Vec3) -> (f64, Vec3) {
        let l = self.frame.to_local(t, x);
        let va = self.profile.deriv(l.alpha, &l.beta, 1, [0, 0]);
        // α = s − t + (x − x_j)·ξ, β_k = (x − x_j)·e_k
        let mut g = [va * self.frame.xi[0], va * self.frame.xi[1], va * self.frame.xi[2]];
        for k in 0..self.frame.n - 1 {
            let mut db = [0, 0];
            db[k] = 1;
            let vb = self.profile.deriv(l.alpha, &l.beta, 0, db);
            g = axpy(vb, &self.frame.e[k], &g);
        }
        (-va, g)
    }
}

/// Closed-form amplitudes for `V ≡ 0` near the packet, with the σ- and
/// α-derivatives needed by the source and the remainder.
///
/// Writing `L_m^a = Δ_β^m ∂_α^a v⁽⁰⁾`:
/// `v¹ = (i/2) σ L_1^0`, `v² = −(σ/2) L_1^1 − (σ²/8) L_2^0`,
/// `□v² = L_1^2 + σ L_2^1 + (σ²/8) L_3^0`.
#[derive(Debug, Clone)]
pub struct FreePacket {
    pub frame: RayFrame,
    pub profile: ProductProfile,
    pub tau: f64,
    pub order: usize,
}

/// Amplitude sum `a = Σ v⁽ᵏ⁾/τᵏ` and the pieces that build `𝒰` and `□𝒰`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PacketJet {
    pub a: Complex64,
    pub a_sigma: Complex64,
    pub a_alpha: Complex64,
    /// `e^{-iτφ} □𝒰`.
    pub box_u: Complex64,
}

impl PacketJet {
    /// `e^{-iτφ} ∂_t 𝒰 = −iτ a + ½ a_σ − a_α`.
    pub fn dt_u(&self, tau: f64) -> Complex64 {
        Complex64::new(0.0, -tau) * self.a + 0.5 * self.a_sigma - self.a_alpha
    }
}

impl FreePacket {
    pub fn new(ray: &RayDescriptor, tau: f64, order: usize) -> Self {
        assert!(order <= 2);
        Self { frame: RayFrame::new(ray), profile: ProductProfile::new(ray.n, tau.ln(), ray.delta), tau, order }
    }

    pub fn jet_local(&self, l: &Local) -> PacketJet {
        let p = &self.profile;
        if !p.inside(l.alpha, &l.beta) {
            return PacketJet::default();
        }
        let (al, be, s) = (l.alpha, &l.beta, l.sigma);
        let lap = |m, a| p.lap_beta(al, be, m, a);
        let i = Complex64::i();
        let inv = 1.0 / self.tau;
        let mut jet = PacketJet {
            a: lap(0, 0).into(),
            a_sigma: 0.0.into(),
            a_alpha: lap(0, 1).into(),
            box_u: (-lap(1, 0)).into(),
        };
        if self.order >= 1 {
            let l10 = lap(1, 0);
            let l11 = lap(1, 1);
            jet.a += i * (0.5 * s * l10 * inv);
            jet.a_sigma += i * (0.5 * l10 * inv);
            jet.a_alpha += i * (0.5 * s * l11 * inv);
            // τ⁻¹ □v¹ = τ⁻¹(−i L_1^1 − (i/2) σ L_2^0)
            jet.box_u = -i * (l11 + 0.5 * s * lap(2, 0)) * inv;
            if self.order == 2 {
                let l20 = lap(2, 0);
                let l12 = lap(1, 2);
                let l21 = lap(2, 1);
                let inv2 = inv * inv;
                jet.a += (-0.5 * s * l11 - 0.125 * s * s * l20) * inv2;
                jet.a_sigma += (-0.5 * l11 - 0.25 * s * l20) * inv2;
                jet.a_alpha += (-0.5 * s * l12 - 0.125 * s * s * l21) * inv2;
                jet.box_u = ((l12 + s * l21 + 0.125 * s * s * lap(3, 0)) * inv2).into();
            }
        }
        jet
    }

    pub fn jet(&self, t: f64, x: &Vec3) -> PacketJet {
        self.jet_local(&self.frame.to_local(t, x))
    }

    /// `𝒰_{j,τ}(t, x)`.
    pub fn eval(&self, t: f64, x: &Vec3) -> Complex64 {
        let l = self.frame.to_local(t, x);
        let a = self.jet_local(&l).a;
        if a == Complex64::new(0.0, 0.0) {
            return a;
        }
        Complex64::from_polar(1.0, self.tau * self.frame.phase(&l)) * a
    }
}

/// Probe data `W = e^{−iτ_N φ} w`, `w`, and `w̃ = η (□+V) w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeValue {
    pub big_w: Complex64,
    pub w: f64,
    pub w_tilde: f64,
}

/// The extraction probe of ray `j` at index `N`.
#[derive(Debug, Clone)]
pub struct Probe {
    pub frame: RayFrame,
    pub profile: ProductProfile,
    pub eta: Eta,
    pub tau: f64,
    pub index: u32,
}

impl Probe {
    pub fn new(ray: &RayDescriptor, domain: &DomainConfig, index: u32) -> Self {
        assert!(index >= 1);
        Self {
            frame: RayFrame::new(ray),
            profile: ProductProfile::new(ray.n, index as f64, ray.delta),
            eta: ray.eta(domain),
            tau: (index as f64).exp(),
            index,
        }
    }

    /// `w` and `□w = −Δ_β w` at a local point.
    #[inline]
    pub fn w_local(&self, l: &Local) -> (f64, f64) {
        let p = &self.profile;
        if !p.inside(l.alpha, &l.beta) {
            return (0.0, 0.0);
        }
        (p.value(l.alpha, &l.beta), -p.lap_beta(l.alpha, &l.beta, 1, 0))
    }

    /// Gradient of `w` in global coordinates (`∂_t w`, `∇w`).
    pub fn w_gradient(&self, l: &Local) -> (f64, Vec3) {
        let p = &self.profile;
        let va = p.deriv(l.alpha, &l.beta, 1, [0, 0]);
        let mut g = [va * self.frame.xi[0], va * self.frame.xi[1], va * self.frame.xi[2]];
        for k in 0..self.frame.n - 1 {
            let mut db = [0, 0];
            db[k] = 1;
            g = axpy(p.deriv(l.alpha, &l.beta, 0, db), &self.frame.e[k], &g);
        }
        (-va, g)
    }

    pub fn eval(&self, v: &PotentialSpec, t: f64, x: &Vec3) -> ProbeValue {
        let l = self.frame.to_local(t, x);
        let (w, box_w) = self.w_local(&l);
        let phase = Complex64::from_polar(1.0, -self.tau * self.frame.phase(&l));
        let eta = self.eta.value(x);
        ProbeValue { big_w: phase * w, w, w_tilde: eta * (box_w + v.value(t, x) * w) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{enumerate_rays, RaySearch};

    fn ray() -> (DomainConfig, RayDescriptor) {
        let d = DomainConfig::new(2, 1.0, 1.3, 2.5).unwrap();
        let f = enumerate_rays(&d, 1, (16, 8), &RaySearch::default()).unwrap();
        (d, f.rays[0].clone())
    }

    #[test]
    fn local_coordinates_round_trip() {
        let (_, r) = ray();
        let fr = RayFrame::new(&r);
        let l = Local { sigma: 0.3, alpha: -0.02, beta: [0.01, 0.0] };
        let (t, x) = fr.to_global(&l);
        let back = fr.to_local(t, &x);
        assert!((back.sigma - l.sigma).abs() < 1e-14);
        assert!((back.alpha - l.alpha).abs() < 1e-14);
        assert!((back.beta[0] - l.beta[0]).abs() < 1e-14);
        assert!(((-t + dot(&fr.xi, &x)) - fr.phase(&l)).abs() < 1e-14);
    }

    #[test]
    fn amplitude_peak_at_anchor() {
        let (_, r) = ray();
        let tau = 3f64.exp();
        let a = Amplitude0::new(&r, tau);
        let v = a.value(r.s, &r.x);
        assert!((v - (3.0 / r.delta)).abs() < 1e-12);
    }

    #[test]
    fn probe_matches_leading_amplitude() {
        let (d, r) = ray();
        let p = Probe::new(&r, &d, 3);
        let a = Amplitude0::new(&r, 3f64.exp());
        for k in 0..20 {
            let s = k as f64 * 0.05 - 0.2;
            let (t, x) = r.ray.point(s);
            let x = axpy(1e-3 * k as f64, &r.frame[0], &x);
            let pv = p.eval(&PotentialSpec::zero(), t, &x);
            assert!((pv.w - a.value(t, &x)).abs() < 1e-12 * (1.0 + pv.w.abs()));
        }
    }

    #[test]
    fn free_packet_box_matches_finite_differences() {
        let (_, r) = ray();
        let tau = 3f64.exp();
        let fp = FreePacket::new(&r, tau, 2);
        let fr = &fp.frame;
        let hw = fp.profile.half_width();
        let l0 = Local { sigma: 0.4, alpha: 0.55 * hw, beta: [0.4 * hw, 0.0] };
        let (t0, x0) = fr.to_global(&l0);
        let u = |t: f64, x: &Vec3| fp.eval(t, x);
        let h = 2e-4 * hw;
        let dtt = (u(t0 + h, &x0) - 2.0 * u(t0, &x0) + u(t0 - h, &x0)) / (h * h);
        let mut lap = Complex64::new(0.0, 0.0);
        for k in 0..2 {
            let mut e = [0.0; 3];
            e[k] = h;
            let xp = axpy(1.0, &e, &x0);
            let xm = axpy(-1.0, &e, &x0);
            lap += (u(t0, &xp) - 2.0 * u(t0, &x0) + u(t0, &xm)) / (h * h);
        }
        let box_fd = dtt - lap;
        let jet = fp.jet_local(&l0);
        let box_exact = Complex64::from_polar(1.0, tau * fr.phase(&l0)) * jet.box_u;
        let scale = (dtt.norm() + lap.norm()).max(1.0);
        assert!((box_fd - box_exact).norm() < 1e-4 * scale, "{box_fd} vs {box_exact}");
    }
}
