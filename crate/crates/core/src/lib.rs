pub mod config;
pub mod cutoff;
pub mod error;
pub mod field;
pub mod geometry;
pub mod measurement;
pub mod optics;
pub mod packet;
pub mod par;
pub mod pipeline;
pub mod plot;
pub mod potential;
pub mod quad;
pub mod solver;
pub mod source;
pub mod sum;
pub mod tomography;
pub mod verify;

pub use error::{Error, Result};
