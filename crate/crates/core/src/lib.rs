//! Drift estimation for SDEs driven by fractional Brownian motion.

pub mod error;
pub mod estimator;
pub mod expcli;
pub mod fbm;
pub mod hilbert;
pub mod malliavin;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
