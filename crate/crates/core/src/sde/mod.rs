//! Additive-noise SDEs `dX = −f(X)θ dt + σ dB` under a one-sided dissipative drift.

mod certify;
mod euler;
mod model;

pub use certify::{certify_hypotheses, Certificate, Violation};
pub use euler::{integrate_euler, integrate_euler_with, integrate_increments, EulerOptions, SolutionPath};
pub use model::{DriftModel, ModelKind};
