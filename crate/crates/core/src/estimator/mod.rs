//! The least-squares drift estimator, its Gram matrix and ergodic averages.

mod consistency;

pub use consistency::{
    consistency_experiment, step_one_bound, ConsistencyConfig, ConsistencyRow, ConsistencySummary,
    ConsistencyTable, StepOneCheck,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::FbmPath;
use crate::malliavin::{
    skorohod_integral, CellRule, DerivedProcess, DriftIntegrand, SkorohodMetadata, SkorohodOptions,
    StateProcess, Window,
};
use crate::sde::{DriftModel, SolutionPath};

/// Relative determinant threshold: `det > GRAM_RELATIVE_DET · (trace / l)^l`.
pub const GRAM_RELATIVE_DET: f64 = 1e-12;

fn ftf_into(model: &DriftModel, x: &[f64], f: &mut [f64], out: &mut [f64]) {
    let (m, l) = (model.m(), model.l());
    model.f_into(x, f);
    for a in 0..l {
        for b in 0..l {
            out[a * l + b] = (0..m).map(|r| f[r * l + a] * f[r * l + b]).sum();
        }
    }
}

fn time_average(model: &DriftModel, path: &SolutionPath, trapezoid: bool) -> DMatrix<f64> {
    let l = model.l();
    let n = path.grid.n_steps();
    let mut f = vec![0.0; model.m() * l];
    let mut cur = vec![0.0; l * l];
    let mut acc = vec![0.0; l * l];
    for i in 0..=n {
        let w = match (trapezoid, i) {
            (true, 0) => 0.5,
            (true, i) if i == n => 0.5,
            (false, i) if i == n => 0.0,
            _ => 1.0,
        };
        if w == 0.0 {
            continue;
        }
        ftf_into(model, path.value(i), &mut f, &mut cur);
        acc.iter_mut().zip(&cur).for_each(|(a, c)| *a += w * c);
    }
    DMatrix::from_row_slice(l, l, &acc) / n as f64
}

/// `(1/T) ∫_0^T (f^{tr} f)(X_t) dt` by the trapezoid rule.
pub fn gram_matrix(model: &DriftModel, path: &SolutionPath) -> DMatrix<f64> {
    time_average(model, path, true)
}

/// Left-point version of [`gram_matrix`]; it pairs exactly with the Euler increments.
pub fn gram_matrix_left(model: &DriftModel, path: &SolutionPath) -> DMatrix<f64> {
    time_average(model, path, false)
}

/// `(1/T) ∫_0^T g(X_t) dt` by the trapezoid rule.
pub fn ergodic_average(path: &SolutionPath, g: impl Fn(&[f64]) -> f64) -> f64 {
    let n = path.grid.n_steps();
    let inner: f64 = (1..n).map(|i| g(path.value(i))).sum();
    (inner + 0.5 * (g(path.value(0)) + g(path.value(n)))) / n as f64
}

/// Invertibility diagnostics for a Gram matrix.
///
/// A sufficient condition for invertibility of the ergodic limit is
/// `det (f^{tr} f)(x) > 0` for all `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvertibilityReport {
    pub det: f64,
    /// `det^{1/l}`, on the scale of the entries.
    pub det_root: f64,
    pub cond: f64,
    pub threshold: f64,
    pub pass: bool,
}

pub fn invertibility_report(gram: &DMatrix<f64>) -> InvertibilityReport {
    let l = gram.nrows();
    let det = gram.determinant();
    let scale = (gram.trace() / l as f64).powi(l as i32);
    let threshold = GRAM_RELATIVE_DET * scale.abs();
    let sv = gram.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    InvertibilityReport {
        det,
        det_root: det.abs().powf(1.0 / l as f64) * det.signum(),
        cond: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        threshold,
        pass: det > threshold && threshold > 0.0,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    /// Skorohod integrals with the derivative driven by the true θ.
    Oracle,
    /// Forward sums `∫ f^{tr} dX` only; computable from data.
    Pathwise,
    #[default]
    Both,
}

impl std::str::FromStr for EstimatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(EstimatorMode::Oracle),
            "pathwise" => Ok(EstimatorMode::Pathwise),
            "both" => Ok(EstimatorMode::Both),
            _ => Err(Error::Unknown {
                kind: "estimator mode",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub horizon: f64,
    pub mode: EstimatorMode,
    pub theta_true: Vec<f64>,
    /// Oracle estimate `θ − (T·G)^{-1} Z`.
    pub theta_hat: Option<Vec<f64>>,
    /// `−(T·G)^{-1} Σ_i f^{tr}(X_i)(X_{i+1} − X_i)`.
    pub theta_hat_pathwise: Vec<f64>,
    /// `G`, row-major `l × l` (left-point time average).
    pub gram: Vec<f64>,
    /// Skorohod integrals `Z_j = δ(f_j^{tr}(X)σ 1_{[0,T]})`.
    pub z: Option<Vec<f64>>,
    /// Trace corrections, `Z = pathwise sum − correction`.
    pub correction: Option<Vec<f64>>,
    pub pathwise_sum: Vec<f64>,
    pub det_gram: f64,
    pub cond_gram: f64,
    pub skorohod: Option<SkorohodMetadata>,
}

impl EstimateResult {
    pub fn abs_error(&self) -> Option<f64> {
        self.theta_hat.as_ref().map(|t| euclid_dist(t, &self.theta_true))
    }

    pub fn abs_error_pathwise(&self) -> f64 {
        euclid_dist(&self.theta_hat_pathwise, &self.theta_true)
    }
}

fn euclid_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Least-squares estimate of `θ` from a path generated by `model` (whose `θ` is the truth).
///
/// The oracle Skorohod integrals use the left cell rule, the discrete divergence of
/// the adapted Euler integrand; `opts.rule` is ignored.
pub fn estimate(
    model: &DriftModel,
    path: &SolutionPath,
    noise: &FbmPath,
    mode: EstimatorMode,
    opts: &SkorohodOptions,
) -> Result<EstimateResult> {
    let l = model.l();
    let m = model.m();
    let n = path.grid.n_steps();
    let horizon = path.grid.horizon();
    let gram = gram_matrix_left(model, path);
    let inv = invertibility_report(&gram);
    if !inv.pass {
        return Err(Error::SingularGram {
            det: inv.det,
            threshold: inv.threshold,
        });
    }
    let lmat = &gram * horizon;
    let chol = lmat
        .clone()
        .cholesky()
        .ok_or(Error::SingularGram {
            det: inv.det,
            threshold: inv.threshold,
        })?;

    // Σ f^{tr}(X_i) ΔX_i
    let mut y = vec![0.0; l];
    let mut f = vec![0.0; m * l];
    for i in 0..n {
        model.f_into(path.value(i), &mut f);
        let (x0, x1) = (path.value(i), path.value(i + 1));
        for j in 0..l {
            y[j] += (0..m).map(|r| f[r * l + j] * (x1[r] - x0[r])).sum::<f64>();
        }
    }
    let theta_pw = -chol.solve(&DVector::from_vec(y));

    let it = DriftIntegrand { model };
    let sp = StateProcess::new(model, path, &it)?;
    let (z, correction, pathwise_sum, meta) = if mode == EstimatorMode::Pathwise {
        let mut p = vec![0.0; l];
        for i in 0..n {
            let db = noise.increment(i);
            for j in 0..l {
                let u = &sp.value(i)[j * model.d()..(j + 1) * model.d()];
                p[j] += u.iter().zip(db).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        (None, None, p, None)
    } else {
        let opts = SkorohodOptions {
            rule: CellRule::Left,
            ..*opts
        };
        let r = skorohod_integral(&DerivedProcess::State(sp), noise, Window::full(noise.grid), &opts)?;
        (Some(r.value), Some(r.correction), r.pathwise_sum, Some(r.metadata))
    };
    let theta_hat = z.as_ref().map(|z| {
        let delta = chol.solve(&DVector::from_column_slice(z));
        model.theta().iter().zip(delta.iter()).map(|(t, d)| t - d).collect()
    });
    Ok(EstimateResult {
        horizon,
        mode,
        theta_true: model.theta().to_vec(),
        theta_hat,
        theta_hat_pathwise: theta_pw.iter().copied().collect(),
        gram: gram.transpose().iter().copied().collect(),
        z,
        correction,
        pathwise_sum,
        det_gram: inv.det,
        cond_gram: inv.cond,
        skorohod: meta,
    })
}
