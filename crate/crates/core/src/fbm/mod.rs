//! Fractional Brownian motion: covariance structure, exact sampling on a
//! uniform grid, and the kernel representation of the rough regime.

mod covariance;
mod grid;
mod hurst;
pub mod kernel;
mod sampler;

pub use covariance::{
    covariance, covariance_unchecked, fgn_autocovariance, increment_covariance,
    IncrementCovariance,
};
pub use grid::TimeGrid;
pub use hurst::{Hurst, Regime};
pub use kernel::{kernel_kh, validate_normalization, KernelKH, NormalizationCheck};
pub use sampler::{
    circulant_eigenvalues, sample_fbm, FbmPath, FbmSampler, Method, AUTO_CHOLESKY_MAX_STEPS,
};
