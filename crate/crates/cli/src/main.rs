use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use onesource::config::{ExperimentConfig, Mode};
use onesource::par::{with_workers, Execution};
use onesource::pipeline::Pipeline;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "onesource", version, about = "Recover a time-dependent wave potential from one exterior measurement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML). Defaults to the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration used when --config is absent: desk, demo, large-oracle.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Artifact directory.
    #[arg(long, global = true, env = "ONESOURCE_OUT", default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores, 1 = sequential).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Override the configured mode.
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Override the number of boundary points scanned by the ray search.
    #[arg(long, global = true)]
    seed_density: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate admissible rays and write the manifest.
    Rays,
    /// Assemble the universal source and its weights.
    Source,
    /// Solve the forward problem and record exterior data.
    Solve,
    /// Evaluate the extraction functional for every ray and index.
    Extract,
    /// Reconstruct the potential from light-ray samples.
    Invert,
    /// Check invariants and a null-potential extraction.
    Verify,
    /// Run every stage.
    Demo,
}

fn load(common: &Common, default_preset: &str) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(_), Some(_)) => bail!("--config and --preset are mutually exclusive"),
        (Some(path), None) => {
            ExperimentConfig::load(path).with_context(|| format!("loading config {}", path.display()))?
        }
        (None, name) => ExperimentConfig::preset(name.as_deref().unwrap_or(default_preset))?,
    };
    if let Some(mode) = common.mode {
        cfg.mode = mode;
    }
    if let Some(k) = common.seed_density {
        cfg.rays.seed_density.0 = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    let default_preset = match cli.command {
        Command::Demo => "demo",
        _ => "desk",
    };
    let cfg = load(&cli.common, default_preset)?;
    let exec = if cli.common.workers == 1 { Execution::Sequential } else { Execution::Parallel };
    let p = Pipeline::new(cfg, &cli.common.out, exec)?;
    let out = p.out.display().to_string();
    with_workers(cli.common.workers, move || -> Result<bool> {
        match cli.command {
            Command::Rays => {
                let rays = p.rays()?;
                println!("{} rays written to {out}", rays.len());
            }
            Command::Source => match p.source()? {
                Some(a) => println!("source on {} nodes, {} levels", a.field.points.len(), a.levels),
                None => println!("weights written (oracle mode samples no source)"),
            },
            Command::Solve => {
                let s = p.solve()?;
                let peak = s.energy.iter().map(|e| e.h1_norm).fold(0.0, f64::max);
                println!("solved {} steps, max H1 norm {peak:.6e}", s.energy.len());
            }
            Command::Extract => print_rows(&p.extract()?),
            Command::Invert => {
                let o = p.invert()?;
                let best = &o.sweep.results[o.sweep.best];
                println!(
                    "{} samples, lambda {:e}, masked error {:.4}",
                    o.samples.len(),
                    best.lambda,
                    best.masked_error.unwrap_or(f64::NAN)
                );
            }
            Command::Verify => {
                let checks = onesource::verify::run(&p)?;
                for c in &checks {
                    println!("{c}");
                }
                return Ok(checks.iter().all(|c| c.passed));
            }
            Command::Demo => {
                let r = p.demo()?;
                print_rows(&r.extraction);
                let best = &r.inversion.sweep.results[r.inversion.sweep.best];
                println!("inversion masked error {:.4}", best.masked_error.unwrap_or(f64::NAN));
            }
        }
        Ok(true)
    })
}

fn print_rows(rows: &[onesource::measurement::ExtractionResult]) {
    println!("{:>3} {:>3} {:>14} {:>14} {:>10}", "j", "N", "estimate", "oracle", "rel_err");
    for r in rows {
        println!(
            "{:>3} {:>3} {:>14.6e} {:>14.6e} {:>10.3e}",
            r.j,
            r.index,
            r.estimate,
            r.oracle.unwrap_or(f64::NAN),
            r.rel_error().unwrap_or(f64::NAN)
        );
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
