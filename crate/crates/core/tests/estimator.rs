use fracdrift::estimator::{estimate, gram_matrix_left, EstimatorMode};
use fracdrift::expcli::stationary_variance_fou;
use fracdrift::fbm::{FbmSampler, Hurst, Method, TimeGrid};
use fracdrift::malliavin::SkorohodOptions;
use fracdrift::sde::{integrate_euler, DriftModel, ModelKind};
use fracdrift::stats::median;
use rayon::prelude::*;
use statrs::function::gamma::gamma;

/// `σ² H (2H − 1) θ^{-1} ∫_0^∞ e^{−θw} w^{2H−2} dw`, the integral taken numerically
/// after `w = y^{1/(2H−1)}`, which turns it into `(2H − 1)^{-1} ∫_0^∞ exp(−θ y^{1/(2H−1)}) dy`.
fn stationary_variance_by_quadrature(theta: f64, sigma: f64, h: f64) -> f64 {
    let a = 2.0 * h - 1.0;
    let f = |y: f64| (-theta * y.powf(1.0 / a)).exp();
    let (upper, n) = (60.0f64.powf(a) / theta.powf(a), 200_000);
    let step = upper / n as f64;
    // composite Simpson
    let mut s = f(0.0) + f(upper);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * step);
    }
    let integral = s * step / 3.0 / a;
    sigma * sigma * h * a * integral / theta
}

#[test]
fn stationary_variance_closed_form() {
    for &(theta, sigma) in &[(1.0, 1.0), (2.0, 0.5), (0.7, 1.3)] {
        assert!((stationary_variance_fou(theta, sigma, 0.5) - sigma * sigma / (2.0 * theta)).abs() < 1e-14);
        for &h in &[0.6, 0.7, 0.8, 0.9] {
            let want = stationary_variance_by_quadrature(theta, sigma, h);
            let got = stationary_variance_fou(theta, sigma, h);
            assert!((got - want).abs() < 1e-6 * want, "θ={theta} σ={sigma} H={h}: {got} vs {want}");
        }
    }
}

fn mean_gram(model: &DriftModel, h: f64, horizon: f64, dt: f64, reps: u64) -> Vec<f64> {
    let n = (horizon / dt).round() as usize;
    let sampler = FbmSampler::new(TimeGrid::new(n, dt).unwrap(), Hurst::new(h).unwrap(), 1, Method::Auto).unwrap();
    let l = model.l();
    let mut acc = vec![0.0; l * l];
    for r in 0..reps {
        let x = integrate_euler(model, &sampler.sample(31, r), &[0.0]).unwrap();
        for (a, g) in acc.iter_mut().zip(gram_matrix_left(model, &x).iter()) {
            *a += g / reps as f64;
        }
    }
    acc
}

#[test]
fn gram_settles_at_long_horizons() {
    let models = [
        DriftModel::fou(1.0, 1.0),
        DriftModel::new(ModelKind::Cubic, 1, vec![1.0, 1.0], vec![1.0], 1).unwrap(),
    ];
    for model in &models {
        for &h in &[0.35, 0.7] {
            let g1 = mean_gram(model, h, 50.0, 0.02, 20);
            let g2 = mean_gram(model, h, 100.0, 0.02, 20);
            let diff: f64 = g1.iter().zip(&g2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = g2.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(diff <= 0.1 * norm, "{} H={h}: {g1:?} vs {g2:?}", model.id());
        }
    }
}

#[test]
fn estimates_are_scale_invariant_for_fou() {
    let grid = TimeGrid::new(2000, 0.01).unwrap();
    let noise = FbmSampler::new(grid, Hurst::new(0.4).unwrap(), 1, Method::Auto).unwrap().sample(12, 0);
    let base = DriftModel::fou(1.5, 1.0);
    let x = integrate_euler(&base, &noise, &[0.5]).unwrap();
    let e0 = estimate(&base, &x, &noise, EstimatorMode::Both, &SkorohodOptions::default()).unwrap();
    for c in [0.25, 3.0] {
        let scaled = base.with_sigma(vec![c]).unwrap();
        let y = integrate_euler(&scaled, &noise, &[0.5 * c]).unwrap();
        let e = estimate(&scaled, &y, &noise, EstimatorMode::Both, &SkorohodOptions::default()).unwrap();
        assert!((e.theta_hat_pathwise[0] - e0.theta_hat_pathwise[0]).abs() < 1e-9);
        assert!((e.theta_hat.as_ref().unwrap()[0] - e0.theta_hat.as_ref().unwrap()[0]).abs() < 1e-9);
    }
}

/// `√T (θ̂ − θ) → N(0, θ (4H − 1)(1 + Γ(3 − 4H)Γ(4H − 1) / (Γ(2 − 2H)Γ(2H))))` for `1/2 ≤ H < 3/4`.
fn fou_clt_variance(theta: f64, h: f64) -> f64 {
    let r = gamma(3.0 - 4.0 * h) * gamma(4.0 * h - 1.0) / (gamma(2.0 - 2.0 * h) * gamma(2.0 * h));
    theta * (4.0 * h - 1.0) * (1.0 + r)
}

#[test]
fn fou_estimate_at_a_long_horizon() {
    let model = DriftModel::fou(1.0, 1.0);
    let (n, horizon) = (1 << 14, 100.0);
    let grid = TimeGrid::with_horizon(n, horizon).unwrap();
    let sampler = FbmSampler::new(grid, Hurst::new(0.7).unwrap(), 1, Method::Auto).unwrap();
    let errs: Vec<f64> = (0..100u64)
        .into_par_iter()
        .map(|r| {
            let noise = sampler.sample(2024, r);
            let x = integrate_euler(&model, &noise, &[0.0]).unwrap();
            estimate(&model, &x, &noise, EstimatorMode::Oracle, &SkorohodOptions::default())
                .unwrap()
                .abs_error()
                .unwrap()
        })
        .collect();
    let m = median(&errs);
    // median of |N(0, v/T)| is 0.6745 sqrt(v/T), about 0.19 here
    let predicted = 0.6745 * (fou_clt_variance(1.0, 0.7) / horizon).sqrt();
    assert!((m / predicted - 1.0).abs() < 0.3, "median |θ̂ − θ| = {m}, predicted {predicted}");
}
