use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AetError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mesh generation failed: {0}")]
    Mesh(String),

    #[error("cholesky pivot {pivot:e} at row {row} is not positive; try a larger shift than {shift:e}")]
    NotPositiveDefinite { row: usize, pivot: f64, shift: f64 },

    #[error("{what} did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("CFL condition violated: dt = {dt:e} exceeds the stability bound {bound:e}")]
    Cfl { dt: f64, bound: f64 },

    #[error("point ({x}, {y}) lies outside the grid [-{half_width}, {half_width}]^2")]
    OutsideGrid { x: f64, y: f64, half_width: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("perturbed conductivity is not positive at node {node}, record {record} (eta too large)")]
    NonPositiveConductivity { node: usize, record: usize },

    #[error("pipeline failure: {0}")]
    Pipeline(String),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, AetError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(AetError::InvalidInput(msg.into()))
}
