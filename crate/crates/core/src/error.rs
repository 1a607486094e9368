use thiserror::Error;

/// Errors raised by the recovery pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("only {found} admissible rays for seed density {seed_density:?}, {requested} requested; raise the density or lower J")]
    InsufficientRays { requested: usize, found: usize, seed_density: (usize, usize) },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error(
        "source support violation: value {value:e} at distance {distance} from anchor exceeds 1e-12 of max {max:e}"
    )]
    SupportViolation { value: f64, distance: f64, max: f64 },

    #[error("unstable time step: cfl = {cfl:.4} exceeds 0.9")]
    Stability { cfl: f64 },

    #[error("non-finite field value at time step {step}")]
    NaNGuard { step: usize },

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    Convergence { iterations: usize, residual: f64, best: Vec<f64> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
