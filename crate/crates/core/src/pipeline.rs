//! Pipeline stages with on-disk artifacts.
//!
//! Each stage reads its inputs from the output directory and writes its
//! results there. Every artifact carries the SHA-256 of the configuration:
//! CSV files in a leading `# config_hash=` comment, WAVF files in `META`,
//! TOML files as a `config_hash` key.

use crate::config::{ExperimentConfig, Mode};
use crate::error::{Error, Result};
use crate::field::{self, FieldSlab, GridSpec};
use crate::geometry::{enumerate_rays, read_manifest, write_manifest, RayDescriptor, RayFamily};
use crate::measurement::{
    compute_i, compute_s, extract_ray_integrals, oracle_with_stacks, write_extraction_csv, ExtractionResult,
    OracleWeights, RayTrend,
};
use crate::packet::{solve_transport, PacketStack};
use crate::par::Execution;
use crate::potential::PotentialSpec;
use crate::solver::{solve_forward, EnergySample, SolveOutput, SolverOptions};
use crate::source::{assemble_universal, SourceAssembly, WeightScheme};
use crate::tomography::{
    build_system, lambda_sweep, ray_integral_oracle, ray_pool, write_samples, InversionPrior, LambdaSweep, Provenance,
    RaySample, ReconGrid,
};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "rays.csv";
pub const WEIGHTS_FILE: &str = "weights.toml";
pub const SOURCE_FILE: &str = "source.wavf";
pub const EXTERIOR_FILE: &str = "exterior.wavf";
pub const ENERGY_FILE: &str = "energy.csv";
pub const EXTRACTION_FILE: &str = "extraction.csv";
pub const TRENDS_FILE: &str = "trends.csv";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.wavf";
pub const SWEEP_FILE: &str = "inversion.csv";
pub const SNAPSHOT_FILE: &str = "final_level.pgm";
pub const ERROR_PLOT_FILE: &str = "error_vs_n.pgm";

/// Weights persisted by the `source` stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub config_hash: String,
    pub weights: WeightScheme,
}

/// Stage runner bound to a configuration and an output directory.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub exec: Execution,
    hash: String,
}

/// Outcome of the `invert` stage.
#[derive(Debug, Clone)]
pub struct InversionOutcome {
    pub grid: ReconGrid,
    pub sweep: LambdaSweep,
    pub samples: Vec<RaySample>,
}

impl Pipeline {
    /// Validate `cfg`, create `out` and write the canonical configuration.
    pub fn new(cfg: ExperimentConfig, out: impl Into<PathBuf>, exec: Execution) -> Result<Self> {
        cfg.validate()?;
        let out = out.into();
        std::fs::create_dir_all(&out)?;
        let hash = cfg.hash();
        std::fs::write(out.join(CONFIG_FILE), cfg.to_toml())?;
        Ok(Self { cfg, out, exec, hash })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    fn open(&self, name: &str, stage: &str) -> Result<BufReader<File>> {
        let p = self.path(name);
        File::open(&p)
            .map(BufReader::new)
            .map_err(|e| Error::Config(format!("{} is missing ({e}); run the `{stage}` stage first", p.display())))
    }

    fn write_csv(&self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        body(&mut buf)?;
        let mut w = self.create(name)?;
        writeln!(w, "# config_hash={}", self.hash)?;
        w.write_all(&buf)?;
        w.flush()?;
        Ok(())
    }

    /// CSV body with the provenance comment checked and removed.
    fn read_csv(&self, name: &str, stage: &str) -> Result<String> {
        let mut text = String::new();
        self.open(name, stage)?.read_to_string(&mut text)?;
        let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
        self.check_hash(name, first.strip_prefix("# config_hash="))?;
        Ok(rest.to_string())
    }

    fn check_hash(&self, name: &str, found: Option<&str>) -> Result<()> {
        match found {
            Some(h) if h.trim() == self.hash => Ok(()),
            Some(h) => Err(Error::Format(format!(
                "{name} was written with config {} but the current config is {}; rerun the earlier stages",
                h.trim(),
                self.hash
            ))),
            None => Err(Error::Format(format!("{name} carries no config hash"))),
        }
    }

    fn read_slab(&self, name: &str, stage: &str) -> Result<FieldSlab> {
        let slab = FieldSlab::read_wavf(self.open(name, stage)?)?;
        self.check_hash(name, slab.meta_value("config_hash"))?;
        Ok(slab)
    }

    fn write_slab(&self, name: &str, slab: &mut FieldSlab) -> Result<()> {
        slab.meta.retain(|(k, _)| k != "config_hash");
        slab.meta.push(("config_hash".into(), self.hash.clone()));
        let mut w = self.create(name)?;
        slab.write_wavf(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(&self.cfg.domain, self.cfg.dx(), self.cfg.grid.cfl)
    }

    /// `rays`: enumerate the admissible family and write the manifest.
    pub fn rays(&self) -> Result<Vec<RayDescriptor>> {
        let c = &self.cfg;
        let family = enumerate_rays(&c.domain, c.truncation.rays, c.rays.seed_density, &c.rays.search)?;
        self.write_csv(MANIFEST_FILE, |buf| write_manifest(&family, buf))?;
        Ok(family.rays)
    }

    pub fn load_rays(&self) -> Result<Vec<RayDescriptor>> {
        let body = self.read_csv(MANIFEST_FILE, "rays")?;
        read_manifest(&self.cfg.domain, body.as_bytes())
    }

    fn weights(&self, rays: &[RayDescriptor]) -> WeightScheme {
        let c = &self.cfg;
        let kappas = rays.iter().map(|r| crate::source::kappa(r, c.truncation.levels, c.extraction.kappa)).collect();
        WeightScheme::new(c.truncation.levels, kappas, c.extraction.weights)
    }

    /// `source`: weights from the manifest and, in PDE mode, the sampled
    /// universal source.
    pub fn source(&self) -> Result<Option<SourceAssembly>> {
        let rays = self.load_rays()?;
        let c = &self.cfg;
        let assembly = match c.mode {
            Mode::Oracle => None,
            Mode::Pde => {
                let family = RayFamily {
                    domain: c.domain.clone(),
                    rays: rays.clone(),
                    boundary_samples: Vec::new(),
                    time_samples: Vec::new(),
                };
                let grid = self.grid()?;
                // an explicit dx overrides the resolution check
                let ppw = if c.grid.dx.is_some() { f64::MIN_POSITIVE } else { c.grid.points_per_wavelength };
                let mut a = assemble_universal(
                    &family,
                    rays.len(),
                    c.truncation.levels,
                    &grid,
                    ppw,
                    c.extraction.kappa,
                    c.extraction.weights,
                    self.exec,
                )?;
                self.write_slab(SOURCE_FILE, &mut a.field)?;
                Some(a)
            }
        };
        let weights = assembly.as_ref().map_or_else(|| self.weights(&rays), |a| a.weights.clone());
        let file = WeightsFile { config_hash: self.hash.clone(), weights };
        std::fs::write(self.path(WEIGHTS_FILE), toml::to_string(&file).map_err(|e| Error::Format(e.to_string()))?)?;
        Ok(assembly)
    }

    pub fn load_weights(&self) -> Result<WeightScheme> {
        let mut text = String::new();
        self.open(WEIGHTS_FILE, "source")?.read_to_string(&mut text)?;
        let file: WeightsFile = toml::from_str(&text).map_err(|e| Error::Format(format!("{WEIGHTS_FILE}: {e}")))?;
        self.check_hash(WEIGHTS_FILE, Some(&file.config_hash))?;
        Ok(file.weights)
    }

    /// `solve`: forward solve driven by the stored source, exterior record.
    pub fn solve(&self) -> Result<SolveOutput> {
        self.require_pde("solve")?;
        let grid = self.grid()?;
        if grid.cfl() > crate::solver::MAX_CFL + 1e-12 {
            return Err(Error::Stability { cfl: grid.cfl() });
        }
        let source = self.load_source()?;
        let opts = SolverOptions { stencil: self.cfg.grid.stencil, exec: self.exec, ..Default::default() };
        let mut out =
            solve_forward(&self.cfg.domain, &self.cfg.potential, &crate::solver::Forcing::Slab(&source), &grid, &opts)?;
        self.write_slab(EXTERIOR_FILE, &mut out.slab)?;
        self.write_csv(ENERGY_FILE, |buf| write_energy(buf, &out.energy))?;
        let mut w = self.create(SNAPSHOT_FILE)?;
        crate::plot::field_snapshot(&mut w, &grid, &out.final_level)?;
        w.flush()?;
        Ok(out)
    }

    fn require_pde(&self, stage: &str) -> Result<()> {
        match self.cfg.mode {
            Mode::Pde => Ok(()),
            Mode::Oracle => Err(Error::Config(format!("`{stage}` is not part of oracle mode"))),
        }
    }

    /// `extract`: one row per (ray, index) with the light-ray oracle
    /// alongside. PDE mode reads only the manifest, weights, source and
    /// exterior slab.
    pub fn extract(&self) -> Result<Vec<ExtractionResult>> {
        let rays = self.load_rays()?;
        let w = self.load_weights()?;
        let mut rows = match self.cfg.mode {
            Mode::Pde => self.extract_pde(&rays, &w)?,
            Mode::Oracle => self.extract_oracle(&rays, &w, &self.cfg.potential)?,
        };
        for r in &mut rows {
            r.oracle = Some(ray_integral_oracle(&self.cfg.potential, &rays[r.j - 1].ray));
        }
        self.write_csv(EXTRACTION_FILE, |buf| write_extraction_csv(buf, &rows))?;
        let trends = extract_ray_integrals(&rows);
        self.write_csv(TRENDS_FILE, |buf| write_trends(buf, &trends))?;
        let mut plot = self.create(ERROR_PLOT_FILE)?;
        crate::plot::error_plot(&mut plot, &rows)?;
        plot.flush()?;
        Ok(rows)
    }

    fn extract_pde(&self, rays: &[RayDescriptor], w: &WeightScheme) -> Result<Vec<ExtractionResult>> {
        let source = self.load_source()?;
        let ext = self.read_slab(EXTERIOR_FILE, "solve")?;
        self.pde_rows(rays, w, &source, &ext)
    }

    pub fn load_source(&self) -> Result<FieldSlab> {
        self.read_slab(SOURCE_FILE, "source")
    }

    /// PDE-mode rows from a source slab and exterior data.
    pub fn pde_rows(
        &self,
        rays: &[RayDescriptor],
        w: &WeightScheme,
        source: &FieldSlab,
        ext: &FieldSlab,
    ) -> Result<Vec<ExtractionResult>> {
        let c = &self.cfg;
        let mut rows = Vec::new();
        for (j, ray) in rays.iter().enumerate() {
            for &index in &c.truncation.indices {
                let i = compute_i(&c.domain, ray, index, source, ext, self.exec)?;
                let s = compute_s(&c.domain, rays, &w.b, j, index, &c.extraction.quadrature, self.exec)?.total();
                let c_index = w.c_n(index as usize, c.extraction.weights);
                rows.push(ExtractionResult::new(ray.j, index, i, s, c_index, w.b[j], c.domain.n));
            }
        }
        Ok(rows)
    }

    /// Oracle-mode rows for `potential` (the configured one, or zero for a
    /// null run).
    pub fn extract_oracle(
        &self,
        rays: &[RayDescriptor],
        w: &WeightScheme,
        potential: &PotentialSpec,
    ) -> Result<Vec<ExtractionResult>> {
        let c = &self.cfg;
        let stacks: Vec<Vec<PacketStack>> = rays
            .iter()
            .map(|ray| {
                w.tau
                    .iter()
                    .map(|&tau| {
                        solve_transport(ray, &c.domain, tau, c.order, potential, &c.extraction.amplitudes, self.exec)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for (j, ray) in rays.iter().enumerate() {
            for &index in &c.truncation.indices {
                let c_index = w.c_n(index as usize, c.extraction.weights);
                let ow = OracleWeights { b: w.b.clone(), c: w.c.clone(), c_index };
                let oe = oracle_with_stacks(
                    &c.domain,
                    rays,
                    &ow,
                    potential,
                    &stacks,
                    j,
                    index,
                    &c.extraction.quadrature,
                    self.exec,
                )?;
                rows.push(ExtractionResult::new(ray.j, index, oe.i, oe.s.total(), c_index, w.b[j], c.domain.n));
            }
        }
        Ok(rows)
    }

    /// `invert`: light-ray samples of the configured potential on a
    /// quasi-random ray pool, then a λ sweep.
    pub fn invert(&self) -> Result<InversionOutcome> {
        let c = &self.cfg;
        let inv = &c.inversion;
        let rays = ray_pool(&c.domain, inv.rays, c.rays.search.chord_samples)?;
        let samples: Vec<RaySample> = rays
            .iter()
            .map(|r| RaySample { ray: *r, value: ray_integral_oracle(&c.potential, r), provenance: Provenance::Oracle })
            .collect();
        self.write_csv(SAMPLES_FILE, |buf| write_samples(buf, &samples))?;
        let grid = ReconGrid::new(&c.domain, inv.time_cells, inv.space_cells);
        let system = build_system(&rays, &grid, self.exec);
        let y: Vec<f64> = samples.iter().map(|s| s.value).collect();
        let prior = InversionPrior { zero_nodes: inv.support_prior.then(|| grid.exterior_nodes(&c.domain)) };
        let sweep = lambda_sweep(&system, &grid, &y, &inv.lambdas, &inv.cg, &prior, &c.potential, self.exec)?;
        self.write_csv(SWEEP_FILE, |buf| write_sweep(buf, &sweep))?;
        let best = &sweep.results[sweep.best];
        let dims: Vec<u64> = grid.node_counts().iter().map(|&d| d as u64).collect();
        let mut meta = vec![("config_hash".to_string(), self.hash.clone()), ("lambda".into(), best.lambda.to_string())];
        for (name, v) in [("lo", &grid.lo), ("h", &grid.h)] {
            meta.push((name.into(), v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")));
        }
        let mut w = self.create(RECONSTRUCTION_FILE)?;
        field::write_wavf(&mut w, &dims, &best.coeffs, None, &meta)?;
        w.flush()?;
        Ok(InversionOutcome { grid, sweep, samples })
    }

    /// All stages in order.
    pub fn demo(&self) -> Result<DemoReport> {
        self.rays()?;
        self.source()?;
        if self.cfg.mode == Mode::Pde {
            self.solve()?;
        }
        let extraction = self.extract()?;
        let inversion = self.invert()?;
        Ok(DemoReport { extraction, inversion })
    }
}

#[derive(Debug, Clone)]
pub struct DemoReport {
    pub extraction: Vec<ExtractionResult>,
    pub inversion: InversionOutcome,
}

fn write_energy<W: Write>(w: W, energy: &[EnergySample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time", "dt_norm", "h1_norm"])?;
    for e in energy {
        out.write_record([format!("{:.17e}", e.time), format!("{:.17e}", e.dt_norm), format!("{:.17e}", e.h1_norm)])?;
    }
    out.flush()?;
    Ok(())
}

fn write_trends<W: Write>(w: W, trends: &[RayTrend]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["j", "N", "estimate", "increment"])?;
    for t in trends {
        for (k, &(n, est)) in t.estimates.iter().enumerate() {
            let inc = if k == 0 { String::new() } else { format!("{:.17e}", t.increments[k - 1]) };
            out.write_record([t.j.to_string(), n.to_string(), format!("{est:.17e}"), inc])?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_sweep<W: Write>(w: W, sweep: &LambdaSweep) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["lambda", "iterations", "data_residual", "masked_error", "best"])?;
    for (k, r) in sweep.results.iter().enumerate() {
        out.write_record([
            format!("{:.17e}", r.lambda),
            r.iterations.to_string(),
            format!("{:.17e}", r.data_residual),
            r.masked_error.map(|e| format!("{e:.17e}")).unwrap_or_default(),
            (k == sweep.best).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Every regular file in `dir`, sorted by name, with its bytes.
pub fn artifact_bytes(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            out.push((entry.file_name().to_string_lossy().into_owned(), std::fs::read(entry.path())?));
        }
    }
    out.sort();
    Ok(out)
}
