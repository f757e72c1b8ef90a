//! Heat kernels of stable-like operators with variable order, built by the
//! parametrix method, with numerical checks of their estimates.

mod error;
pub mod mc_sim;
pub mod model;
pub mod numerics;
pub mod parametrix;
pub mod rho_calculus;
pub mod stable_density;
pub mod verification;

pub use error::{Error, Result};
pub use model::{AlphaFn, Bounds, KappaFn, ModelSpec, Point};
