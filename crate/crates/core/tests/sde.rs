use fracdrift::fbm::{FbmPath, FbmSampler, Hurst, Method, TimeGrid};
use fracdrift::sde::{integrate_euler, DriftModel, ModelKind};
use fracdrift::stats::{log_log_slope, mean};
use proptest::prelude::*;

fn coarsen(fine: &FbmPath, factor: usize) -> FbmPath {
    let n = fine.grid.n_steps() / factor;
    let grid = TimeGrid::new(n, fine.grid.dt() * factor as f64).unwrap();
    let incs = (0..n)
        .map(|i| (0..factor).map(|k| fine.increment(i * factor + k)[0]).sum())
        .collect();
    FbmPath::from_increments(grid, fine.hurst, 1, incs, fine.seed, fine.path_index, fine.method).unwrap()
}

#[test]
fn euler_is_first_order_for_additive_noise() {
    // pathwise sup error against a 64× finer Euler path on the same noise
    for (kind, theta) in [(ModelKind::Linear, vec![1.0]), (ModelKind::Cubic, vec![1.0, 0.5])] {
        let model = DriftModel::new(kind, 1, theta, vec![1.0], 1).unwrap();
        let fine = FbmSampler::new(TimeGrid::new(1 << 14, 4.0 / 16384.0).unwrap(), Hurst::new(0.7).unwrap(), 1, Method::Circulant)
            .unwrap()
            .sample(4, 0);
        let reference = integrate_euler(&model, &fine, &[1.0]).unwrap();
        let mut errs = Vec::new();
        let mut dts = Vec::new();
        for factor in [64, 128, 256, 512] {
            let coarse = coarsen(&fine, factor);
            let x = integrate_euler(&model, &coarse, &[1.0]).unwrap();
            let e = (0..=coarse.grid.n_steps())
                .map(|i| (x.value(i)[0] - reference.value(i * factor)[0]).abs())
                .fold(0.0, f64::max);
            errs.push(e);
            dts.push(coarse.grid.dt());
        }
        let rate = log_log_slope(&dts, &errs);
        assert!((0.8..1.3).contains(&rate), "{kind}: rate {rate}, errors {errs:?}");
    }
}

#[test]
fn noiseless_fou_decays_exponentially() {
    let model = DriftModel::new(ModelKind::Linear, 1, vec![2.0], vec![0.0], 1).unwrap();
    for n in [256, 512, 1024] {
        let grid = TimeGrid::with_horizon(n, 2.0).unwrap();
        let noise = FbmSampler::new(grid, Hurst::new(0.3).unwrap(), 1, Method::Auto).unwrap().sample(1, 0);
        let x = integrate_euler(&model, &noise, &[1.5]).unwrap();
        let err = (1.5 * (-4.0f64).exp() - x.last()[0]).abs();
        // Euler error of the linear ODE: x0·t θ² dt e^{−θt}/2 to first order
        let lead = 1.5 * 2.0 * 4.0 * grid.dt() * (-4.0f64).exp() / 2.0;
        assert!((err / lead - 1.0).abs() < 0.05, "n={n}: {err} vs {lead}");
    }
}

#[test]
fn increments_have_holder_scaling() {
    let model = DriftModel::fou(1.0, 1.0);
    for &h in &[0.35, 0.7] {
        let grid = TimeGrid::new(512, 1.0 / 512.0).unwrap();
        let sampler = FbmSampler::new(grid, Hurst::new(h).unwrap(), 1, Method::Auto).unwrap();
        let lags = [1usize, 2, 4, 8, 16, 32];
        let mut m2 = vec![Vec::new(); lags.len()];
        for p in 0..300 {
            let x = integrate_euler(&model, &sampler.sample(8, p), &[0.0]).unwrap();
            for (k, &lag) in lags.iter().enumerate() {
                m2[k].push((x.value(256 + lag)[0] - x.value(256)[0]).powi(2));
            }
        }
        let y: Vec<f64> = m2.iter().map(|v| mean(v)).collect();
        let x: Vec<f64> = lags.iter().map(|&l| l as f64 * grid.dt()).collect();
        let slope = log_log_slope(&x, &y);
        assert!((slope - 2.0 * h).abs() < 0.15, "H={h}: {slope}");
    }
}

#[test]
fn zero_sigma_paths_do_not_depend_on_the_noise() {
    let model = DriftModel::new(ModelKind::Cubic, 1, vec![1.0, 1.0], vec![0.0], 1).unwrap();
    let grid = TimeGrid::new(200, 0.01).unwrap();
    let s = FbmSampler::new(grid, Hurst::new(0.6).unwrap(), 1, Method::Auto).unwrap();
    let a = integrate_euler(&model, &s.sample(1, 0), &[0.8]).unwrap();
    let b = integrate_euler(&model, &s.sample(2, 5), &[0.8]).unwrap();
    assert_eq!(a.values, b.values);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solutions_forget_the_initial_state(x0 in -3.0f64..3.0, y0 in -3.0f64..3.0, seed in 0u64..50, h in 0.2f64..0.9, cubic in any::<bool>()) {
        let model = if cubic {
            DriftModel::new(ModelKind::Cubic, 1, vec![1.0, 0.7], vec![0.8], 1).unwrap()
        } else {
            DriftModel::fou(1.3, 0.8)
        };
        let grid = TimeGrid::new(400, 0.01).unwrap();
        let noise = FbmSampler::new(grid, Hurst::new(h).unwrap(), 1, Method::Auto).unwrap().sample(seed, 0);
        let x = integrate_euler(&model, &noise, &[x0]).unwrap();
        let y = integrate_euler(&model, &noise, &[y0]).unwrap();
        let l1 = model.l1();
        let slack = (2.0 * grid.dt() * l1).exp();
        for i in 0..=grid.n_steps() {
            let gap = (x.value(i)[0] - y.value(i)[0]).abs();
            let bound = (x0 - y0).abs() * (-l1 * grid.t(i)).exp() * slack;
            prop_assert!(gap <= bound + 1e-12, "i={} gap={} bound={}", i, gap, bound);
        }
    }
}
