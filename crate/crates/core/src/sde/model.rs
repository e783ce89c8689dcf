use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Built-in drift families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `f(x) = x` (one parameter, any `m`): the fractional Ornstein–Uhlenbeck process.
    Linear,
    /// `m = 1`, `f(x) = (x, x³)`.
    Cubic,
    /// `m = 2`, `f(x) = (x₁ + x₁³ + x₂/2, x₂ + x₂³ − x₁/2)`; the coupling is antisymmetric.
    Coupled2d,
}

impl ModelKind {
    pub fn l(self) -> usize {
        match self {
            ModelKind::Linear | ModelKind::Coupled2d => 1,
            ModelKind::Cubic => 2,
        }
    }

    /// Required state dimension, if fixed by the family.
    pub fn fixed_m(self) -> Option<usize> {
        match self {
            ModelKind::Linear => None,
            ModelKind::Cubic => Some(1),
            ModelKind::Coupled2d => Some(2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Cubic => "cubic",
            ModelKind::Coupled2d => "coupled2d",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "cubic" => Ok(ModelKind::Cubic),
            "coupled2d" => Ok(ModelKind::Coupled2d),
            _ => Err(Error::Unknown {
                kind: "model",
                name: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const COUPLING: f64 = 0.5;

/// `dX = −f(X)θ dt + σ dB` with `f: R^m → R^{m×l}` and `σ ∈ R^{m×d}`.
///
/// Small matrices are stored row-major in flat slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    kind: ModelKind,
    m: usize,
    d: usize,
    theta: Vec<f64>,
    sigma: Vec<f64>,
}

impl DriftModel {
    pub fn new(kind: ModelKind, m: usize, theta: Vec<f64>, sigma: Vec<f64>, d: usize) -> Result<Self> {
        if let Some(fm) = kind.fixed_m() {
            if m != fm {
                return Err(Error::Dimension {
                    what: "state dimension m",
                    expected: fm,
                    got: m,
                });
            }
        }
        if m == 0 || d == 0 {
            return Err(Error::Domain("model dimensions must be positive".into()));
        }
        if theta.len() != kind.l() {
            return Err(Error::Dimension {
                what: "parameter vector θ",
                expected: kind.l(),
                got: theta.len(),
            });
        }
        if sigma.len() != m * d {
            return Err(Error::Dimension {
                what: "diffusion matrix σ (m×d entries)",
                expected: m * d,
                got: sigma.len(),
            });
        }
        if theta.iter().chain(&sigma).any(|v| !v.is_finite()) {
            return Err(Error::Domain("θ and σ must be finite".into()));
        }
        Ok(Self {
            kind,
            m,
            d,
            theta,
            sigma,
        })
    }

    /// Registry lookup; `σ` is given row-major and `d = |σ| / m`.
    pub fn from_registry(name: &str, theta: Vec<f64>, sigma: Vec<f64>, m: Option<usize>) -> Result<Self> {
        let kind: ModelKind = name.parse()?;
        let m = kind.fixed_m().or(m).unwrap_or(1);
        if sigma.is_empty() || !sigma.len().is_multiple_of(m) {
            return Err(Error::Domain(format!(
                "σ has {} entries, not a multiple of m = {m}",
                sigma.len()
            )));
        }
        let d = sigma.len() / m;
        Self::new(kind, m, theta, sigma, d)
    }

    /// Scalar fOU `dX = −θX dt + σ dB`.
    pub fn fou(theta: f64, sigma: f64) -> Self {
        Self::new(ModelKind::Linear, 1, vec![theta], vec![sigma], 1).expect("valid scalar model")
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn l(&self) -> usize {
        self.kind.l()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Row-major `m × d`.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sigma_norm(&self) -> f64 {
        self.sigma.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(self.kind, self.m, theta, self.sigma.clone(), self.d)
    }

    pub fn with_sigma(&self, sigma: Vec<f64>) -> Result<Self> {
        Self::new(self.kind, self.m, self.theta.clone(), sigma, self.d)
    }

    pub fn id(&self) -> String {
        format!("{}(m={},d={},theta={:?})", self.kind, self.m, self.d, self.theta)
    }

    /// `f(x)`, row-major `m × l`.
    pub fn f_into(&self, x: &[f64], out: &mut [f64]) {
        match self.kind {
            ModelKind::Linear => out[..self.m].copy_from_slice(&x[..self.m]),
            ModelKind::Cubic => {
                out[0] = x[0];
                out[1] = x[0] * x[0] * x[0];
            }
            ModelKind::Coupled2d => {
                let (a, b) = (x[0], x[1]);
                out[0] = a + a * a * a + COUPLING * b;
                out[1] = b + b * b * b - COUPLING * a;
            }
        }
    }

    pub fn f(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m * self.l()];
        self.f_into(x, &mut out);
        out
    }

    /// `f(x)θ`
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        match self.kind {
            ModelKind::Linear => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = self.theta[0] * xi;
                }
            }
            ModelKind::Cubic => out[0] = self.theta[0] * x[0] + self.theta[1] * x[0] * x[0] * x[0],
            ModelKind::Coupled2d => {
                let (a, b) = (x[0], x[1]);
                out[0] = self.theta[0] * (a + a * a * a + COUPLING * b);
                out[1] = self.theta[0] * (b + b * b * b - COUPLING * a);
            }
        }
    }

    /// `∇f_j(x)`, row-major `m × m`.
    pub fn grad_f_into(&self, j: usize, x: &[f64], out: &mut [f64]) {
        let m = self.m;
        out[..m * m].fill(0.0);
        match (self.kind, j) {
            (ModelKind::Linear, 0) => (0..m).for_each(|r| out[r * m + r] = 1.0),
            (ModelKind::Cubic, 0) => out[0] = 1.0,
            (ModelKind::Cubic, 1) => out[0] = 3.0 * x[0] * x[0],
            (ModelKind::Coupled2d, 0) => {
                out[0] = 1.0 + 3.0 * x[0] * x[0];
                out[1] = COUPLING;
                out[2] = -COUPLING;
                out[3] = 1.0 + 3.0 * x[1] * x[1];
            }
            _ => panic!("parameter index {j} out of range for {}", self.kind),
        }
    }

    /// Second derivatives of `f_j`: `out[r·m² + a·m + b] = ∂²f_{rj}/∂x_a∂x_b`.
    pub fn hess_f_into(&self, j: usize, x: &[f64], out: &mut [f64]) {
        let m = self.m;
        out[..m * m * m].fill(0.0);
        match (self.kind, j) {
            (ModelKind::Linear, 0) | (ModelKind::Cubic, 0) => {}
            (ModelKind::Cubic, 1) => out[0] = 6.0 * x[0],
            (ModelKind::Coupled2d, 0) => {
                out[0] = 6.0 * x[0];
                out[m * m + m + 1] = 6.0 * x[1];
            }
            _ => panic!("parameter index {j} out of range for {}", self.kind),
        }
    }

    /// `A(x) = Σ_j θ_j ∇f_j(x)`, row-major `m × m`; the drift Jacobian.
    pub fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        let m = self.m;
        match self.kind {
            ModelKind::Linear => {
                out[..m * m].fill(0.0);
                (0..m).for_each(|r| out[r * m + r] = self.theta[0]);
            }
            ModelKind::Cubic => out[0] = self.theta[0] + 3.0 * self.theta[1] * x[0] * x[0],
            ModelKind::Coupled2d => {
                let t = self.theta[0];
                out[0] = t * (1.0 + 3.0 * x[0] * x[0]);
                out[1] = t * COUPLING;
                out[2] = -t * COUPLING;
                out[3] = t * (1.0 + 3.0 * x[1] * x[1]);
            }
        }
    }

    /// Claimed one-sided dissipativity constant `L₁`.
    pub fn l1(&self) -> f64 {
        match self.kind {
            ModelKind::Linear | ModelKind::Coupled2d => self.theta[0],
            // 1 + 3x² ≥ 1, so θ₁ + 3θ₂x² ≥ θ₁ when θ₂ ≥ 0
            ModelKind::Cubic if self.theta[1] >= 0.0 => self.theta[0],
            ModelKind::Cubic => f64::NEG_INFINITY,
        }
    }

    /// Claimed polynomial growth `|f(x)| + |∇f(x)| ≤ L₂(1 + |x|^γ)`.
    pub fn growth(&self) -> (f64, f64) {
        match self.kind {
            ModelKind::Linear => (1.0 + (self.m as f64).sqrt(), 1.0),
            ModelKind::Cubic => (6.0, 3.0),
            ModelKind::Coupled2d => (12.0, 3.0),
        }
    }
}
