use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),
    #[error("quadrature did not converge: estimated error {estimate:e} exceeds {tolerance:e}")]
    Quadrature { estimate: f64, tolerance: f64 },
    #[error("density ringing {value:e} at x = {x} exceeds tolerance")]
    Ringing { x: f64, value: f64 },
    #[error("no convergence after {iterations} iterations (last delta {last_delta:e})")]
    NonConvergence {
        iterations: usize,
        last_delta: f64,
        history: Vec<f64>,
    },
    #[error("non-finite value at t = {t}, x index {x}, y index {y}")]
    NonFinite { t: f64, x: usize, y: usize },
    #[error("negative kernel value {value:e} at t = {t}, x = {x}, y = {y}")]
    Negative { t: f64, x: f64, y: f64, value: f64 },
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
