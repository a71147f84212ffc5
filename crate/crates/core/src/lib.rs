//! Finite-volume multi-particle random Schrödinger operators on a grid, with
//! the geometric, spectral and probabilistic diagnostics used by bootstrap
//! multiscale analysis.

pub mod error;
pub mod disorder;
pub mod geometry;
pub mod operator;
pub mod spectral;
pub mod classify;
pub mod msa;
pub mod cli;

pub use error::{Error, Result};
