//! Quadrature rules for integrands with algebraic endpoint singularities.
//!
//! Two families are provided: Gauss rules built by Golub–Welsch (plain
//! Legendre and Jacobi with a weight `(1 + x)^beta` at the left end), and a
//! level-refined tanh-sinh rule whose nodes cluster double-exponentially at
//! both endpoints.

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Gauss–Legendre rule with `n` nodes.
    pub fn legendre(n: usize) -> Self {
        Self::jacobi(n, 0.0, 0.0)
    }

    /// Gauss–Jacobi rule for the weight `(1 - x)^alpha (1 + x)^beta` on `[-1, 1]`.
    pub fn jacobi(n: usize, alpha: f64, beta: f64) -> Self {
        assert!(n >= 1 && alpha > -1.0 && beta > -1.0);
        let ab = alpha + beta;
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n.saturating_sub(1)];
        for (k, a) in diag.iter_mut().enumerate() {
            let kf = k as f64;
            let denom = (2.0 * kf + ab) * (2.0 * kf + ab + 2.0);
            *a = if k == 0 {
                (beta - alpha) / (ab + 2.0)
            } else {
                (beta * beta - alpha * alpha) / denom
            };
        }
        for (k, b) in off.iter_mut().enumerate() {
            let kf = (k + 1) as f64;
            let s = 2.0 * kf + ab;
            let num = 4.0 * kf * (kf + alpha) * (kf + beta) * (kf + ab);
            let den = s * s * (s + 1.0) * (s - 1.0);
            *b = (num / den).sqrt();
        }
        let mut jm = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            jm[(k, k)] = diag[k];
            if k + 1 < n {
                jm[(k, k + 1)] = off[k];
                jm[(k + 1, k)] = off[k];
            }
        }
        let ln_mu0 = (ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0)
            + ln_gamma(beta + 1.0)
            - ln_gamma(ab + 2.0);
        let mu0 = ln_mu0.exp();
        let eig = SymmetricEigen::new(jm);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let v0 = eig.eigenvectors[(0, k)];
                (eig.eigenvalues[k], mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Integrate `f` over `[a, b]` with unit weight (only meaningful for Legendre rules).
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// Tanh-sinh (double exponential) quadrature on a finite interval.
///
/// The integrand is called as `f(x, x - a, b - x)` so that singular factors
/// can be evaluated from the endpoint distances without cancellation.
#[derive(Debug, Clone, Copy)]
pub struct TanhSinh {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_level: u32,
}

impl Default for TanhSinh {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_level: 10,
        }
    }
}

const TS_T_MAX: f64 = 3.2;

impl TanhSinh {
    pub fn with_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64, f64, f64) -> f64) -> Result<f64> {
        if !(b > a) {
            return if a == b {
                Ok(0.0)
            } else {
                Err(Error::Quadrature(format!("reversed interval [{a}, {b}]")))
            };
        }
        let half = 0.5 * (b - a);
        let pi2 = std::f64::consts::FRAC_PI_2;
        let mut eval = |t: f64| -> f64 {
            let u = pi2 * t.sinh();
            let cu = u.cosh();
            let w = pi2 * t.cosh() / (cu * cu);
            // distance of the node from the nearer endpoint, scaled to [0, 2]
            let near = (-u.abs()).exp() / cu;
            let (da, db) = if t >= 0.0 {
                (half * (2.0 - near), half * near)
            } else {
                (half * near, half * (2.0 - near))
            };
            if da <= 0.0 || db <= 0.0 || w == 0.0 {
                return 0.0;
            }
            let x = if t >= 0.0 { b - db } else { a + da };
            let v = f(x, da, db);
            if v.is_finite() {
                w * v
            } else {
                0.0
            }
        };

        let mut h = 1.0;
        let mut sum = eval(0.0);
        let mut k = 1;
        loop {
            let t = k as f64 * h;
            if t > TS_T_MAX {
                break;
            }
            sum += eval(t) + eval(-t);
            k += 1;
        }
        let mut estimate = sum * h * half;
        for _ in 1..=self.max_level {
            h *= 0.5;
            let mut k = 1;
            loop {
                let t = k as f64 * h;
                if t > TS_T_MAX {
                    break;
                }
                sum += eval(t) + eval(-t);
                k += 2;
            }
            let next = sum * h * half;
            let err = (next - estimate).abs();
            estimate = next;
            if err <= self.rel_tol * next.abs() || err <= self.abs_tol {
                return Ok(estimate);
            }
        }
        Ok(estimate)
    }
}
