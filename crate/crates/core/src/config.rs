//! Experiment configuration: TOML schema, presets, validation and hashing.

use crate::error::{Error, Result};
use crate::geometry::{DomainConfig, RaySearch};
use crate::measurement::ProbeQuadrature;
use crate::packet::StackResolution;
use crate::potential::{Bump, PotentialSpec};
use crate::solver::Stencil;
use crate::source::{FrequencyWeights, KappaMode};
use crate::tomography::CgOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Forward solve and extraction from exterior data.
    #[default]
    Pde,
    /// Exact field replaced by the truncated packet sum.
    Oracle,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pde" => Ok(Self::Pde),
            "oracle" => Ok(Self::Oracle),
            _ => Err(Error::Config(format!("unknown mode '{s}' (expected pde or oracle)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Nodes per wavelength at the highest frequency `τ_L`.
    pub points_per_wavelength: f64,
    /// Explicit spacing; overrides `points_per_wavelength`.
    pub dx: Option<f64>,
    pub cfl: f64,
    pub stencil: Stencil,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { points_per_wavelength: 10.0, dx: None, cfl: 0.5, stencil: Stencil::Second }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Truncation {
    /// Rays in the source.
    pub rays: usize,
    /// Frequency levels in the source.
    pub levels: usize,
    /// Extraction indices.
    pub indices: Vec<u32>,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { rays: 4, levels: 4, indices: vec![2, 3, 4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RayConfig {
    /// Boundary points and start times scanned by the enumeration.
    pub seed_density: (usize, usize),
    pub search: RaySearch,
}

impl Default for RayConfig {
    fn default() -> Self {
        Self { seed_density: (16, 8), search: RaySearch::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    pub kappa: KappaMode,
    pub weights: FrequencyWeights,
    pub amplitudes: StackResolution,
    pub quadrature: ProbeQuadrature,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            kappa: KappaMode::Measured,
            weights: FrequencyWeights::Standard,
            amplitudes: StackResolution::default(),
            quadrature: ProbeQuadrature::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionConfig {
    pub rays: usize,
    pub time_cells: usize,
    pub space_cells: usize,
    pub lambdas: Vec<f64>,
    /// Pin nodes outside `(0,T) × Ω` to zero.
    pub support_prior: bool,
    pub cg: CgOptions,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            rays: 400,
            time_cells: 12,
            space_cells: 8,
            lambdas: (0..7).map(|k| 10f64.powf(-6.0 + 0.5 * k as f64)).collect(),
            support_prior: true,
            cg: CgOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Mode,
    pub domain: DomainConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub rays: RayConfig,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default)]
    pub inversion: InversionConfig,
    /// Amplitude order used for sources and oracle fields.
    #[serde(default = "default_order")]
    pub order: usize,
}

fn default_order() -> usize {
    2
}

impl ExperimentConfig {
    /// Desk-scale preset: unit disc, one bump, four rays and levels.
    pub fn desk() -> Self {
        let domain = DomainConfig::new(2, 1.0, 1.3, 2.5).expect("preset domain");
        Self {
            mode: Mode::Pde,
            potential: PotentialSpec::single(Bump {
                t0: 1.25,
                x0: vec![0.0, 0.0],
                rho_t: 1.24,
                rho_x: 0.99,
                amplitude: 1.0,
                exponent: 5,
            }),
            domain,
            grid: GridConfig::default(),
            truncation: Truncation::default(),
            rays: RayConfig::default(),
            extraction: ExtractionConfig::default(),
            inversion: InversionConfig::default(),
            order: 2,
        }
    }

    /// Oracle-mode preset at a scale where the geometric-optics expansion
    /// is accurate for `τ ≤ e⁴`: a single ray and a bump on its chord.
    pub fn large_scale_oracle() -> Self {
        let r = 1.0e6;
        let domain = DomainConfig::new(2, r, 1.3 * r, 2.5 * r).expect("preset domain");
        let mut cfg = Self::desk();
        cfg.mode = Mode::Oracle;
        cfg.truncation = Truncation { rays: 1, levels: 4, indices: vec![3, 4] };
        // bump centred just inside the midpoint of the first ray's chord
        let family =
            crate::geometry::enumerate_rays(&domain, 1, cfg.rays.seed_density, &cfg.rays.search).expect("preset ray");
        let ray = &family.rays[0].ray;
        let (t0, xc) = ray.point(0.5 * ray.length);
        let rho = 0.07 * r;
        let inward = 0.1 * rho / crate::geometry::norm(&xc);
        cfg.potential = PotentialSpec::single(Bump {
            t0,
            x0: vec![xc[0] * (1.0 - inward), xc[1] * (1.0 - inward)],
            rho_t: rho,
            rho_x: rho,
            amplitude: 2.4e-5,
            exponent: 5,
        });
        cfg.domain = domain;
        cfg
    }

    /// Small PDE run for smoke tests: two rays, two levels, a coarse
    /// reconstruction.
    pub fn demo() -> Self {
        let mut cfg = Self::desk();
        cfg.truncation = Truncation { rays: 2, levels: 2, indices: vec![1, 2] };
        cfg.inversion.rays = 100;
        cfg.inversion.time_cells = 8;
        cfg.inversion.space_cells = 6;
        cfg.inversion.lambdas = vec![1e-5, 1e-4, 1e-3];
        cfg
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "demo" => Ok(Self::demo()),
            "large-oracle" => Ok(Self::large_scale_oracle()),
            _ => Err(Error::Config(format!("unknown preset '{name}' (desk, demo, large-oracle)"))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.potential.validate(&self.domain)?;
        let t = &self.truncation;
        if t.rays == 0 || t.levels == 0 {
            return Err(Error::Config("truncation needs at least one ray and one level".into()));
        }
        if t.indices.is_empty() {
            return Err(Error::Config("no extraction indices".into()));
        }
        if let Some(&n) = t.indices.iter().find(|&&n| n == 0 || n as usize > t.levels) {
            return Err(Error::Config(format!("extraction index {n} outside 1..={}", t.levels)));
        }
        if self.order > 2 {
            return Err(Error::Config(format!("amplitude order {} > 2", self.order)));
        }
        let g = &self.grid;
        if !(g.cfl > 0.0) {
            return Err(Error::Config(format!("cfl must be positive, got {}", g.cfl)));
        }
        if g.dx.is_none() && !(g.points_per_wavelength > 0.0) {
            return Err(Error::Config("points_per_wavelength must be positive".into()));
        }
        if let Some(dx) = g.dx {
            if !(dx > 0.0) {
                return Err(Error::Config(format!("dx must be positive, got {dx}")));
            }
        }
        let inv = &self.inversion;
        if inv.lambdas.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Config("regularization weights must be positive".into()));
        }
        if inv.time_cells == 0 || inv.space_cells == 0 {
            return Err(Error::Config("reconstruction grid needs at least one cell per axis".into()));
        }
        Ok(())
    }

    /// Grid spacing: explicit, or from the wavelength at `τ_L`.
    pub fn dx(&self) -> f64 {
        self.grid.dx.unwrap_or_else(|| {
            let tau = (self.truncation.levels as f64).exp();
            std::f64::consts::TAU / tau / self.grid.points_per_wavelength
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for cfg in [ExperimentConfig::desk(), ExperimentConfig::demo(), ExperimentConfig::large_scale_oracle()] {
            let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.hash(), cfg.hash());
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = ExperimentConfig::desk().to_toml();
        text.push_str("\n[extra]\nfoo = 1\n");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))));
    }

    #[test]
    fn index_beyond_truncation_is_rejected() {
        let mut cfg = ExperimentConfig::desk();
        cfg.truncation.indices = vec![5];
        assert!(cfg.validate().is_err());
    }
}
