use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde::DriftModel;

/// Scalar test functions applied componentwise: `u^c = g(x_{c mod m})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GFunction {
    One,
    Tanh,
    Sin,
    Identity,
    Square,
}

impl GFunction {
    pub const ALL: [GFunction; 5] = [
        GFunction::One,
        GFunction::Tanh,
        GFunction::Sin,
        GFunction::Identity,
        GFunction::Square,
    ];

    #[inline]
    pub fn eval(self, x: f64) -> (f64, f64) {
        match self {
            GFunction::One => (1.0, 0.0),
            GFunction::Tanh => {
                let t = x.tanh();
                (t, 1.0 - t * t)
            }
            GFunction::Sin => x.sin_cos(),
            GFunction::Identity => (x, 1.0),
            GFunction::Square => (x * x, 2.0 * x),
        }
    }

    pub fn is_bounded(self) -> bool {
        matches!(self, GFunction::One | GFunction::Tanh | GFunction::Sin)
    }

    pub fn name(self) -> &'static str {
        match self {
            GFunction::One => "one",
            GFunction::Tanh => "tanh",
            GFunction::Sin => "sin",
            GFunction::Identity => "identity",
            GFunction::Square => "square",
        }
    }
}

impl FromStr for GFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GFunction::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "g function",
                name: s.to_string(),
            })
    }
}

impl fmt::Display for GFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A family of `count` processes `u = G(X) ∈ R^d`, evaluated together.
pub trait Integrand: Sync {
    fn count(&self) -> usize {
        1
    }
    fn d(&self) -> usize;
    fn m(&self) -> usize;
    /// `value` is `count × d`, `grad` is `count × d × m`, both row-major.
    fn eval_into(&self, x: &[f64], value: &mut [f64], grad: &mut [f64]);
}

/// `u_t = g(X_t)` for a registry function.
#[derive(Debug, Clone, Copy)]
pub struct GIntegrand {
    pub g: GFunction,
    pub m: usize,
    pub d: usize,
}

impl Integrand for GIntegrand {
    fn d(&self) -> usize {
        self.d
    }

    fn m(&self) -> usize {
        self.m
    }

    fn eval_into(&self, x: &[f64], value: &mut [f64], grad: &mut [f64]) {
        grad[..self.d * self.m].fill(0.0);
        for c in 0..self.d {
            let a = c % self.m;
            let (v, dv) = self.g.eval(x[a]);
            value[c] = v;
            grad[c * self.m + a] = dv;
        }
    }
}

/// `u_{j,t} = f_j^{tr}(X_t) σ ∈ R^d` for `j = 1..l`; the integrands of the estimator.
#[derive(Debug, Clone, Copy)]
pub struct DriftIntegrand<'a> {
    pub model: &'a DriftModel,
}

impl Integrand for DriftIntegrand<'_> {
    fn count(&self) -> usize {
        self.model.l()
    }

    fn d(&self) -> usize {
        self.model.d()
    }

    fn m(&self) -> usize {
        self.model.m()
    }

    fn eval_into(&self, x: &[f64], value: &mut [f64], grad: &mut [f64]) {
        let (m, l, d) = (self.model.m(), self.model.l(), self.model.d());
        let sigma = self.model.sigma();
        let mut f = [0.0; 8];
        let mut g = [0.0; 16];
        debug_assert!(m * l <= 8 && m * m <= 16);
        self.model.f_into(x, &mut f);
        for j in 0..l {
            self.model.grad_f_into(j, x, &mut g);
            for c in 0..d {
                value[j * d + c] = (0..m).map(|r| f[r * l + j] * sigma[r * d + c]).sum();
                for a in 0..m {
                    grad[(j * d + c) * m + a] = (0..m).map(|r| g[r * m + a] * sigma[r * d + c]).sum();
                }
            }
        }
    }
}
