use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Uniform time grid `t_i = i·dt`, `i = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize, dt: f64) -> Result<Self> {
        if n_steps == 0 {
            return domain("time grid needs at least one step");
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return domain(format!("time step must be positive and finite, got {dt}"));
        }
        Ok(Self { n_steps, dt })
    }

    /// Grid with `n_steps` cells covering `[0, horizon]`.
    pub fn with_horizon(n_steps: usize, horizon: f64) -> Result<Self> {
        if n_steps == 0 {
            return domain("time grid needs at least one step");
        }
        Self::new(n_steps, horizon / n_steps as f64)
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.t(self.n_steps)
    }

    /// Index of the node at time `t`, if `t` lies on the grid (within a rounding unit).
    pub fn node_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt;
        let k = x.round();
        if k < 0.0 || k > self.n_steps as f64 {
            return None;
        }
        if (x - k).abs() <= 1e-9 * x.abs().max(1.0) {
            Some(k as usize)
        } else {
            None
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |i| self.t(i))
    }
}
