use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrand::{GFunction, GIntegrand};
use super::skorohod::{
    skorohod_integral, CellRule, DerivativeMode, DerivedProcess, SkorohodOptions, StateProcess, Window,
};
use crate::error::{Error, Result};
use crate::fbm::{FbmPath, FbmSampler, Hurst, Method, TimeGrid};
use crate::hilbert::{indicator_product_unchecked, StepFunction};
use crate::sde::{integrate_euler, DriftModel};
use crate::stats::{mean, std_error};

/// Smooth cylindrical functionals of the first noise component with `DF = φ(ω) e₁ 1_{[0,τ]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    One,
    /// `F = B¹_T`
    Endpoint,
    /// `F = (B¹_T)²`
    EndpointSquare,
    /// `F = sin(B¹_{t₁})`
    SinAt { t1: f64 },
}

impl Functional {
    /// `(F, φ, τ)`
    fn eval(&self, noise: &FbmPath) -> Result<(f64, f64, f64)> {
        let g = noise.grid;
        let end = noise.value(g.n_steps())[0];
        Ok(match *self {
            Functional::One => (1.0, 0.0, 0.0),
            Functional::Endpoint => (end, 1.0, g.horizon()),
            Functional::EndpointSquare => (end * end, 2.0 * end, g.horizon()),
            Functional::SinAt { t1 } => {
                let k = g
                    .node_of(t1)
                    .ok_or_else(|| Error::Domain(format!("t1 = {t1} is not a grid node")))?;
                let b = noise.value(k)[0];
                (b.sin(), b.cos(), g.t(k))
            }
        })
    }
}

/// Integrand families for the duality check.
#[derive(Debug, Clone)]
pub enum ProcessSpec {
    Deterministic(StepFunction),
    Noise,
    State {
        model: DriftModel,
        g: GFunction,
        x0: Vec<f64>,
    },
}

impl ProcessSpec {
    fn d(&self) -> usize {
        match self {
            ProcessSpec::Deterministic(phi) => phi.dim(),
            ProcessSpec::Noise => 1,
            ProcessSpec::State { model, .. } => model.d(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct McParams {
    pub grid: TimeGrid,
    pub hurst: Hurst,
    pub paths: usize,
    pub seed: u64,
    pub method: Method,
    pub rule: CellRule,
    pub mode: DerivativeMode,
}

/// `E[F δ(u)]` against `E⟨DF, u⟩_ℌ`, each by Monte Carlo.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityReport {
    pub paths: usize,
    pub lhs_mean: f64,
    pub lhs_se: f64,
    pub rhs_mean: f64,
    pub rhs_se: f64,
    /// `|lhs − rhs| / sqrt(se_lhs² + se_rhs²)`
    pub gap_in_se: f64,
}

pub fn duality_check(f: &Functional, proc: &ProcessSpec, mc: &McParams) -> Result<DualityReport> {
    if mc.paths < 2 {
        return Err(Error::Domain("duality check needs at least two paths".into()));
    }
    let d = proc.d();
    let sampler = FbmSampler::new(mc.grid, mc.hurst, d, mc.method)?;
    let two_h = mc.hurst.two_h();
    let grid = mc.grid;
    let n = grid.n_steps();
    let opts = SkorohodOptions {
        rule: mc.rule,
        mode: mc.mode,
        ..Default::default()
    };

    let pairs: Vec<Result<(f64, f64)>> = (0..mc.paths as u64)
        .into_par_iter()
        .map(|p| -> Result<(f64, f64)> {
            let noise = sampler.sample(mc.seed, p);
            let (fv, phi, tau) = f.eval(&noise)?;
            // ⟨1_{[0,τ]}, cell i⟩ times the first component of the frozen cell value
            let weight = |i: usize| indicator_product_unchecked(0.0, tau, grid.t(i), grid.t(i + 1), two_h);
            let frozen = |left: f64, right: f64| match mc.rule {
                CellRule::Left => left,
                CellRule::Trapezoid => 0.5 * (left + right),
            };
            let (delta, inner) = match proc {
                ProcessSpec::Deterministic(phi_u) => {
                    let r = skorohod_integral(&DerivedProcess::Deterministic(phi_u), &noise, Window::full(grid), &opts)?;
                    let inner: f64 = (0..n).map(|i| phi_u.value(i)[0] * weight(i)).sum();
                    (r.value[0], inner)
                }
                ProcessSpec::Noise => {
                    let r = skorohod_integral(&DerivedProcess::Noise, &noise, Window::full(grid), &opts)?;
                    let inner: f64 = (0..n)
                        .map(|i| frozen(noise.value(i)[0], noise.value(i + 1)[0]) * weight(i))
                        .sum();
                    (r.value[0], inner)
                }
                ProcessSpec::State { model, g, x0 } => {
                    let x = integrate_euler(model, &noise, x0)?;
                    let it = GIntegrand {
                        g: *g,
                        m: model.m(),
                        d: model.d(),
                    };
                    let sp = StateProcess::new(model, &x, &it)?;
                    let inner: f64 = (0..n)
                        .map(|i| frozen(sp.value(i)[0], sp.value(i + 1)[0]) * weight(i))
                        .sum();
                    let r = skorohod_integral(&DerivedProcess::State(sp), &noise, Window::full(grid), &opts)?;
                    (r.value[0], inner)
                }
            };
            Ok((fv * delta, phi * inner))
        })
        .collect();
    let pairs = pairs.into_iter().collect::<Result<Vec<_>>>()?;
    let lhs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let rhs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (lm, ls, rm, rs) = (mean(&lhs), std_error(&lhs), mean(&rhs), std_error(&rhs));
    let pooled = (ls * ls + rs * rs).sqrt();
    Ok(DualityReport {
        paths: mc.paths,
        lhs_mean: lm,
        lhs_se: ls,
        rhs_mean: rm,
        rhs_se: rs,
        gap_in_se: if pooled > 0.0 { (lm - rm).abs() / pooled } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(h: f64) -> McParams {
        McParams {
            grid: TimeGrid::with_horizon(32, 1.0).unwrap(),
            hurst: Hurst::new(h).unwrap(),
            paths: 2000,
            seed: 17,
            method: Method::Auto,
            rule: CellRule::Left,
            mode: DerivativeMode::default(),
        }
    }

    #[test]
    fn constant_functional_is_the_mean_zero_test() {
        let mc = params(0.35);
        let model = DriftModel::fou(1.0, 1.0);
        let proc = ProcessSpec::State {
            model,
            g: GFunction::Tanh,
            x0: vec![0.5],
        };
        let r = duality_check(&Functional::One, &proc, &mc).unwrap();
        assert_eq!(r.rhs_mean, 0.0);
        assert!(r.gap_in_se < 4.0, "{r:?}");
    }

    #[test]
    fn endpoint_against_deterministic_step() {
        let mc = params(0.7);
        let phi = StepFunction::indicator(mc.grid, 4, 20, &[1.5]).unwrap();
        let r = duality_check(&Functional::Endpoint, &ProcessSpec::Deterministic(phi.clone()), &mc).unwrap();
        // the right side is deterministic
        assert!(r.rhs_se < 1e-12);
        let want = 1.5 * crate::hilbert::inner_product_indicator(0.0, 1.0, 0.125, 0.625, mc.hurst).unwrap();
        assert!((r.rhs_mean - want).abs() < 1e-12);
        assert!(r.gap_in_se < 4.0, "{r:?}");
    }

    #[test]
    fn off_grid_time_is_rejected() {
        let mc = params(0.7);
        assert!(duality_check(&Functional::SinAt { t1: 0.3 }, &ProcessSpec::Noise, &mc).is_err());
    }
}
