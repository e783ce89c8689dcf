use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{estimate, EstimatorMode};
use crate::error::{Error, Result};
use crate::fbm::{FbmSampler, Hurst, Method, TimeGrid};
use crate::malliavin::{DerivativeMode, SkorohodOptions};
use crate::rng::derive_seed;
use crate::sde::{integrate_euler, DriftModel, ModelKind};
use crate::stats::{log_log_slope, median, quantile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub model: ModelKind,
    pub theta: Vec<f64>,
    /// Row-major `m × d`.
    pub sigma: Vec<f64>,
    pub x0: Vec<f64>,
    pub hursts: Vec<f64>,
    /// Geometric schedule of horizons; each must be a multiple of `dt`.
    pub horizons: Vec<f64>,
    pub dt: f64,
    pub reps: usize,
    pub seed: u64,
    /// Moment order of the Step-1 check.
    pub p: f64,
    pub method: Method,
    pub derivative: DerivativeMode,
}

/// One replication; the CSV schema of the consistency experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub model: String,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub rep: usize,
    pub abs_err_oracle: f64,
    pub abs_err_pathwise: f64,
    pub det_gram: f64,
    #[serde(rename = "Z_over_T")]
    pub z_over_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySummary {
    pub h: f64,
    pub t: f64,
    pub median_err: f64,
    pub q25_err: f64,
    pub q75_err: f64,
    pub median_err_pathwise: f64,
    pub median_z_over_t: f64,
    /// `(E |Z/T|^p)^{1/p}`
    pub lp_z_over_t: f64,
}

/// Exponent bound on `‖Z_n / n‖_p` from the almost-sure convergence argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOneCheck {
    pub h: f64,
    pub slope: f64,
    pub bound: f64,
    pub lambda: Option<f64>,
}

/// `(bound, λ)`: `H − 1` for `H ≥ 1/2`; `2H + λ − 1` with
/// `λ = min(H, (1 − 2H)/2 + H/2)` clipped into `(0, 1 − 2H)` otherwise.
pub fn step_one_bound(h: f64) -> (f64, Option<f64>) {
    if h >= 0.5 {
        (h - 1.0, None)
    } else {
        let cap = 1.0 - 2.0 * h;
        let lambda = h.min(0.5 * cap + 0.5 * h).min(cap - 1e-9).max(1e-9);
        (2.0 * h + lambda - 1.0, Some(lambda))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyTable {
    pub rows: Vec<ConsistencyRow>,
    pub summaries: Vec<ConsistencySummary>,
    pub step_one: Vec<StepOneCheck>,
    /// Per `H`: `(first median) / (last median)`.
    pub reduction_factor: Vec<(f64, f64)>,
    /// Per `H`: log-log slope of the median `|Z/T|` against `T`.
    pub z_slope: Vec<(f64, f64)>,
    /// Per `H`: whether the median error decreases along the schedule.
    pub monotone: Vec<(f64, bool)>,
    /// Wall-clock seconds of the slowest `(H, T)` cell (not part of the deterministic output).
    #[serde(skip)]
    pub slowest_cell_seconds: f64,
}

pub fn consistency_experiment(cfg: &ConsistencyConfig) -> Result<ConsistencyTable> {
    if cfg.reps < 2 || cfg.horizons.len() < 2 {
        return Err(Error::Config("need at least two replications and two horizons".into()));
    }
    let m = cfg.x0.len();
    let model = DriftModel::new(cfg.model, m, cfg.theta.clone(), cfg.sigma.clone(), cfg.sigma.len() / m.max(1))?;
    let opts = SkorohodOptions {
        mode: cfg.derivative,
        ..Default::default()
    };
    let mut table = ConsistencyTable {
        rows: vec![],
        summaries: vec![],
        step_one: vec![],
        reduction_factor: vec![],
        z_slope: vec![],
        monotone: vec![],
        slowest_cell_seconds: 0.0,
    };
    for (hi, &h) in cfg.hursts.iter().enumerate() {
        let hurst = Hurst::for_estimation(h)?;
        let mut meds = Vec::new();
        let mut zmeds = Vec::new();
        let mut lps = Vec::new();
        for (ti, &horizon) in cfg.horizons.iter().enumerate() {
            let n = (horizon / cfg.dt).round() as usize;
            if ((n as f64) * cfg.dt - horizon).abs() > 1e-9 * horizon {
                return Err(Error::Config(format!("horizon {horizon} is not a multiple of dt = {}", cfg.dt)));
            }
            let grid = TimeGrid::new(n, cfg.dt)?;
            let sampler = FbmSampler::new(grid, hurst, model.d(), cfg.method)?;
            let seed = derive_seed(cfg.seed, (hi * 1000 + ti) as u64);
            let start = Instant::now();
            let reps: Vec<Result<ConsistencyRow>> = (0..cfg.reps)
                .into_par_iter()
                .map(|rep| {
                    let noise = sampler.sample(seed, rep as u64);
                    let x = integrate_euler(&model, &noise, &cfg.x0)?;
                    let r = estimate(&model, &x, &noise, EstimatorMode::Both, &opts)?;
                    let z = r.z.as_ref().expect("oracle mode");
                    Ok(ConsistencyRow {
                        model: cfg.model.to_string(),
                        h,
                        t: horizon,
                        rep,
                        abs_err_oracle: r.abs_error().expect("oracle mode"),
                        abs_err_pathwise: r.abs_error_pathwise(),
                        det_gram: r.det_gram,
                        z_over_t: z.iter().map(|v| v * v).sum::<f64>().sqrt() / horizon,
                    })
                })
                .collect();
            let rows = reps.into_iter().collect::<Result<Vec<_>>>()?;
            table.slowest_cell_seconds = table.slowest_cell_seconds.max(start.elapsed().as_secs_f64());
            let errs: Vec<f64> = rows.iter().map(|r| r.abs_err_oracle).collect();
            let errs_pw: Vec<f64> = rows.iter().map(|r| r.abs_err_pathwise).collect();
            let zs: Vec<f64> = rows.iter().map(|r| r.z_over_t).collect();
            let lp = (zs.iter().map(|z| z.powf(cfg.p)).sum::<f64>() / zs.len() as f64).powf(1.0 / cfg.p);
            let s = ConsistencySummary {
                h,
                t: horizon,
                median_err: median(&errs),
                q25_err: quantile(&errs, 0.25),
                q75_err: quantile(&errs, 0.75),
                median_err_pathwise: median(&errs_pw),
                median_z_over_t: median(&zs),
                lp_z_over_t: lp,
            };
            meds.push(s.median_err);
            zmeds.push(s.median_z_over_t);
            lps.push(lp);
            table.summaries.push(s);
            table.rows.extend(rows);
        }
        let (bound, lambda) = step_one_bound(h);
        table.step_one.push(StepOneCheck {
            h,
            slope: log_log_slope(&cfg.horizons, &lps),
            bound,
            lambda,
        });
        table.reduction_factor.push((h, meds[0] / meds[meds.len() - 1]));
        table.z_slope.push((h, log_log_slope(&cfg.horizons, &zmeds)));
        table.monotone.push((h, meds.windows(2).all(|w| w[1] <= w[0])));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_is_clipped() {
        let (b, l) = step_one_bound(0.35);
        let l = l.unwrap();
        assert!(l > 0.0 && l < 0.3);
        assert!((b - (0.7 + l - 1.0)).abs() < 1e-15);
        assert_eq!(step_one_bound(0.7), (0.7 - 1.0, None));
        // H = 0.3: min(0.3, 0.2 + 0.15) = 0.3 sits inside (0, 0.4)
        assert!((step_one_bound(0.3).1.unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn noiseless_rows_are_exact() {
        let cfg = ConsistencyConfig {
            model: ModelKind::Linear,
            theta: vec![1.0],
            sigma: vec![0.0],
            x0: vec![1.0],
            hursts: vec![0.7],
            horizons: vec![1.0, 2.0],
            dt: 0.01,
            reps: 3,
            seed: 1,
            p: 4.0,
            method: Method::Auto,
            derivative: DerivativeMode::default(),
        };
        let t = consistency_experiment(&cfg).unwrap();
        assert_eq!(t.rows.len(), 6);
        assert!(t.rows.iter().all(|r| r.abs_err_oracle < 1e-12 && r.z_over_t == 0.0));
    }
}
