//! Malliavin derivatives of the Euler solution and discrete Skorohod integrals.

mod duality;
mod grid;
mod integrand;
mod skorohod;

pub use duality::{duality_check, DualityReport, Functional, McParams, ProcessSpec};
pub use grid::{
    derivative_increments_check, pivot_cells, propagate_derivative, DecayReport, IncrementsReport,
    MalliavinGrid, DEFAULT_PIVOTS,
};
pub use integrand::{DriftIntegrand, GFunction, GIntegrand, Integrand};
pub use skorohod::{
    skorohod_integral, skorohod_running, CellRule, DerivativeMode, DerivedProcess, SkorohodMetadata, SkorohodOptions,
    SkorohodResult, StateProcess, Window,
};
