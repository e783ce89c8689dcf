use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Regularity regime of a Hurst index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// H < 1/2: negatively correlated increments, paths rougher than Brownian.
    Rough,
    Brownian,
    /// H > 1/2: positively correlated, long-memory increments.
    Smooth,
}

/// A validated Hurst index `H ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Hurst(f64);

impl Hurst {
    /// Any `H ∈ (0, 1)`; enough for covariance primitives.
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 1.0 {
            Ok(Self(h))
        } else {
            domain(format!("Hurst index must lie in (0, 1), got {h}"))
        }
    }

    /// `H ∈ (1/4, 1)`, the range over which the least-squares estimator is consistent.
    pub fn for_estimation(h: f64) -> Result<Self> {
        if h > 0.25 && h < 1.0 {
            Ok(Self(h))
        } else {
            domain(format!("estimation requires H in (1/4, 1), got {h}"))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `2H`, the exponent that appears in every covariance formula.
    #[inline]
    pub fn two_h(self) -> f64 {
        2.0 * self.0
    }

    pub fn regime(self) -> Regime {
        if self.0 < 0.5 {
            Regime::Rough
        } else if self.0 == 0.5 {
            Regime::Brownian
        } else {
            Regime::Smooth
        }
    }
}

impl TryFrom<f64> for Hurst {
    type Error = crate::error::Error;
    fn try_from(h: f64) -> Result<Self> {
        Self::new(h)
    }
}

impl From<Hurst> for f64 {
    fn from(h: Hurst) -> f64 {
        h.0
    }
}

impl std::fmt::Display for Hurst {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_is_a_function_of_h() {
        assert_eq!(Hurst::new(0.3).unwrap().regime(), Regime::Rough);
        assert_eq!(Hurst::new(0.5).unwrap().regime(), Regime::Brownian);
        assert_eq!(Hurst::new(0.75).unwrap().regime(), Regime::Smooth);
    }

    #[test]
    fn bounds() {
        assert!(Hurst::new(0.0).is_err());
        assert!(Hurst::new(1.0).is_err());
        assert!(Hurst::new(0.1).is_ok());
        assert!(Hurst::for_estimation(0.1).is_err());
        assert!(Hurst::for_estimation(0.25).is_err());
        assert!(Hurst::for_estimation(0.26).is_ok());
        assert!(Hurst::new(f64::NAN).is_err());
    }
}
