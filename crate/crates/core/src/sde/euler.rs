use serde::{Deserialize, Serialize};

use super::DriftModel;
use crate::error::{Error, Result};
use crate::fbm::{FbmPath, TimeGrid};

/// Blow-up guard; anything this large means dissipativity or the step size failed.
const OVERFLOW: f64 = 1e150;

/// Options for [`integrate_euler_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerOptions {
    /// Number of substeps used on each of the first `substep_steps` grid steps.
    /// The noise increment is spread evenly over the substeps.
    pub substeps: usize,
    pub substep_steps: usize,
}

impl Default for EulerOptions {
    fn default() -> Self {
        Self {
            substeps: 1,
            substep_steps: 0,
        }
    }
}

/// A solution of the SDE on the noise grid.
#[derive(Debug, Clone)]
pub struct SolutionPath {
    pub grid: TimeGrid,
    pub m: usize,
    /// Row-major `(n_steps + 1) × m`.
    pub values: Vec<f64>,
    pub model_id: String,
    pub noise_id: String,
    /// `max_i dt·|A(X_i)|` along the path; values near or above 1/2 mean the step is too coarse.
    pub stability_number: f64,
}

impl SolutionPath {
    #[inline]
    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        (0..self.grid.n_nodes()).map(|i| self.values[i * self.m + c]).collect()
    }

    pub fn last(&self) -> &[f64] {
        self.value(self.grid.n_steps())
    }
}

/// `X_{i+1} = X_i − f(X_i)θ dt + σ ΔB_i`.
pub fn integrate_euler(model: &DriftModel, noise: &FbmPath, x0: &[f64]) -> Result<SolutionPath> {
    integrate_euler_with(model, noise, x0, EulerOptions::default())
}

pub fn integrate_euler_with(
    model: &DriftModel,
    noise: &FbmPath,
    x0: &[f64],
    opts: EulerOptions,
) -> Result<SolutionPath> {
    if noise.d != model.d() {
        return Err(Error::Dimension {
            what: "noise dimension d",
            expected: model.d(),
            got: noise.d,
        });
    }
    let mut path = integrate_increments(model, noise.grid, &noise.increments, x0, opts)?;
    path.noise_id = noise.id();
    Ok(path)
}

/// Euler integration against raw increments (row-major `n_steps × d`).
pub fn integrate_increments(
    model: &DriftModel,
    grid: TimeGrid,
    increments: &[f64],
    x0: &[f64],
    opts: EulerOptions,
) -> Result<SolutionPath> {
    let (m, d) = (model.m(), model.d());
    let n = grid.n_steps();
    if x0.len() != m {
        return Err(Error::Dimension {
            what: "initial state x0",
            expected: m,
            got: x0.len(),
        });
    }
    if increments.len() != n * d {
        return Err(Error::Dimension {
            what: "noise increments",
            expected: n * d,
            got: increments.len(),
        });
    }
    if opts.substeps == 0 {
        return Err(Error::Domain("substeps must be at least 1".into()));
    }
    let dt = grid.dt();
    let sigma = model.sigma();
    let mut values = vec![0.0; (n + 1) * m];
    values[..m].copy_from_slice(x0);
    let mut drift = vec![0.0; m];
    let mut jac = vec![0.0; m * m];
    let mut x = x0.to_vec();
    let mut noise = vec![0.0; m];
    let mut stability: f64 = 0.0;
    for i in 0..n {
        let db = &increments[i * d..(i + 1) * d];
        for r in 0..m {
            noise[r] = (0..d).map(|c| sigma[r * d + c] * db[c]).sum();
        }
        model.jacobian_into(&x, &mut jac);
        stability = stability.max(dt * jac.iter().map(|v| v * v).sum::<f64>().sqrt());
        let k = if i < opts.substep_steps { opts.substeps } else { 1 };
        let h = dt / k as f64;
        for _ in 0..k {
            model.drift_into(&x, &mut drift);
            for r in 0..m {
                x[r] += -drift[r] * h + noise[r] / k as f64;
            }
        }
        if let Some(bad) = x.iter().find(|v| !v.is_finite() || v.abs() > OVERFLOW) {
            return Err(Error::Divergence {
                step: i,
                t: grid.t(i + 1),
                reason: format!("state reached {bad}"),
            });
        }
        values[(i + 1) * m..(i + 2) * m].copy_from_slice(&x);
    }
    Ok(SolutionPath {
        grid,
        m,
        values,
        model_id: model.id(),
        noise_id: String::from("raw"),
        stability_number: stability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{Hurst, Method};
    use crate::sde::ModelKind;

    fn noise(n: usize, dt: f64, seed: u64) -> FbmPath {
        let g = TimeGrid::new(n, dt).unwrap();
        crate::fbm::sample_fbm(g, Hurst::new(0.7).unwrap(), 1, seed, Method::Auto).unwrap()
    }

    #[test]
    fn zero_drift_is_pure_noise() {
        let model = DriftModel::fou(0.0, 2.0);
        let b = noise(64, 0.1, 1);
        let x = integrate_euler(&model, &b, &[0.5]).unwrap();
        for i in 0..=64 {
            assert!((x.value(i)[0] - (0.5 + 2.0 * b.value(i)[0])).abs() < 1e-12);
        }
        assert_eq!(x.value(0), &[0.5]);
    }

    #[test]
    fn first_order_for_the_linear_ode() {
        let model = DriftModel::fou(1.0, 0.0);
        let errs: Vec<f64> = [100, 200, 400, 800]
            .iter()
            .map(|&n| {
                let b = noise(n, 1.0 / n as f64, 2);
                let x = integrate_euler(&model, &b, &[1.0]).unwrap();
                (x.last()[0] - (-1f64).exp()).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!((0.8..=1.2).contains(&rate), "rate {rate}");
        }
    }

    #[test]
    fn divergence_names_the_step() {
        let model = DriftModel::new(ModelKind::Cubic, 1, vec![1.0, 1.0], vec![0.0], 1).unwrap();
        let b = noise(50, 0.5, 3);
        match integrate_euler(&model, &b, &[10.0]) {
            Err(Error::Divergence { step, .. }) => assert!(step < 10),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn substepping_rescues_a_far_start() {
        let model = DriftModel::new(ModelKind::Cubic, 1, vec![1.0, 1.0], vec![0.0], 1).unwrap();
        let b = noise(50, 0.05, 3);
        assert!(integrate_euler(&model, &b, &[10.0]).is_err());
        let opts = EulerOptions {
            substeps: 64,
            substep_steps: 5,
        };
        let x = integrate_euler_with(&model, &b, &[10.0], opts).unwrap();
        assert!(x.last()[0].abs() < 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        let model = DriftModel::new(ModelKind::Coupled2d, 2, vec![1.0], vec![1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert!(integrate_euler(&model, &noise(8, 0.1, 1), &[0.0, 0.0]).is_err());
    }
}
