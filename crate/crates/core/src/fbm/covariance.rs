use nalgebra::DMatrix;

use super::{Hurst, TimeGrid};
use crate::error::{domain, Result};

/// `R_H(s, t) = ½(|t|^{2H} + |s|^{2H} − |t − s|^{2H})` without argument checks.
#[inline]
pub fn covariance_unchecked(s: f64, t: f64, two_h: f64) -> f64 {
    0.5 * (t.abs().powf(two_h) + s.abs().powf(two_h) - (t - s).abs().powf(two_h))
}

/// Covariance of one fBm component, `E[B_s B_t]`.
pub fn covariance(s: f64, t: f64, h: Hurst) -> Result<f64> {
    if s < 0.0 || t < 0.0 {
        return domain(format!("covariance needs nonnegative times, got ({s}, {t})"));
    }
    Ok(covariance_unchecked(s, t, h.two_h()))
}

/// Stationary autocovariance of fractional Gaussian noise at integer lag `k`
/// for unit spacing: `½(|k+1|^{2H} − 2|k|^{2H} + |k−1|^{2H})`.
#[inline]
pub fn fgn_autocovariance(k: usize, two_h: f64) -> f64 {
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

/// Covariance of the grid increments `E[ΔB_i ΔB_j]` of one component.
///
/// The grid is uniform, so the matrix is Toeplitz and only its first row is stored.
#[derive(Debug, Clone)]
pub struct IncrementCovariance {
    grid: TimeGrid,
    hurst: Hurst,
    row: Vec<f64>,
}

impl IncrementCovariance {
    pub fn new(grid: TimeGrid, hurst: Hurst) -> Self {
        let two_h = hurst.two_h();
        let scale = grid.dt().powf(two_h);
        let row = (0..grid.n_steps())
            .map(|k| scale * fgn_autocovariance(k, two_h))
            .collect();
        Self { grid, hurst, row }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn hurst(&self) -> Hurst {
        self.hurst
    }

    pub fn n(&self) -> usize {
        self.row.len()
    }

    /// First row of the Toeplitz matrix (`gamma[0][k]`).
    pub fn toeplitz_row(&self) -> &[f64] {
        &self.row
    }

    #[inline]
    pub fn at_lag(&self, lag: usize) -> f64 {
        self.row[lag]
    }

    /// Autocovariance at any lag, including lags beyond the grid.
    pub fn lag_value(&self, lag: usize) -> f64 {
        if lag < self.row.len() {
            self.row[lag]
        } else {
            let two_h = self.hurst.two_h();
            self.grid.dt().powf(two_h) * fgn_autocovariance(lag, two_h)
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row[i.abs_diff(j)]
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }
}

/// Increment covariance over a grid (convenience wrapper).
pub fn increment_covariance(grid: TimeGrid, h: Hurst) -> IncrementCovariance {
    IncrementCovariance::new(grid, h)
}
