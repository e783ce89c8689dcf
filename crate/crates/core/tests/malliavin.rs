use fracdrift::fbm::{FbmSampler, Hurst, Method, TimeGrid};
use fracdrift::malliavin::{
    duality_check, propagate_derivative, skorohod_integral, skorohod_running, CellRule, DerivativeMode,
    DerivedProcess, Functional, GFunction, GIntegrand, McParams, ProcessSpec, SkorohodOptions, StateProcess, Window,
};
use fracdrift::sde::{integrate_euler, DriftModel, ModelKind};
use fracdrift::stats::mean;

fn opts(rule: CellRule) -> SkorohodOptions {
    SkorohodOptions {
        rule,
        ..Default::default()
    }
}

#[test]
fn integrals_add_over_adjacent_windows() {
    let model = DriftModel::new(ModelKind::Cubic, 1, vec![1.0, 0.5], vec![0.7], 1).unwrap();
    let grid = TimeGrid::new(300, 0.02).unwrap();
    let noise = FbmSampler::new(grid, Hurst::new(0.35).unwrap(), 1, Method::Auto).unwrap().sample(2, 0);
    let x = integrate_euler(&model, &noise, &[0.4]).unwrap();
    let it = GIntegrand { g: GFunction::Sin, m: 1, d: 1 };
    let proc = DerivedProcess::State(StateProcess::new(&model, &x, &it).unwrap());
    for rule in [CellRule::Left, CellRule::Trapezoid] {
        let o = opts(rule);
        let whole = skorohod_integral(&proc, &noise, Window::new(grid, 40, 260).unwrap(), &o).unwrap().value[0];
        let left = skorohod_integral(&proc, &noise, Window::new(grid, 40, 170).unwrap(), &o).unwrap().value[0];
        let right = skorohod_integral(&proc, &noise, Window::new(grid, 170, 260).unwrap(), &o).unwrap().value[0];
        assert!((whole - left - right).abs() < 1e-11 * (1.0 + whole.abs()), "{rule:?}");

        let run = skorohod_running(&proc, &noise, Window::new(grid, 40, 260).unwrap(), &o).unwrap();
        assert_eq!(run.len(), 221);
        assert_eq!(run[0][0], 0.0);
        assert!((run[130][0] - left).abs() < 1e-11 * (1.0 + left.abs()));
        assert!((run[220][0] - whole).abs() < 1e-11 * (1.0 + whole.abs()));
    }
}

#[test]
fn running_sup_grows_with_the_window() {
    // per-window sup of the running integral, the quantity behind the almost-sure argument
    let model = DriftModel::fou(1.0, 1.0);
    let grid = TimeGrid::new(256, 1.0 / 64.0).unwrap();
    let sampler = FbmSampler::new(grid, Hurst::new(0.7).unwrap(), 1, Method::Auto).unwrap();
    let it = GIntegrand { g: GFunction::Tanh, m: 1, d: 1 };
    let widths = [16usize, 32, 64, 128];
    let mut sups = vec![Vec::new(); widths.len()];
    for p in 0..40 {
        let noise = sampler.sample(17, p);
        let x = integrate_euler(&model, &noise, &[0.0]).unwrap();
        let proc = DerivedProcess::State(StateProcess::new(&model, &x, &it).unwrap());
        let run = skorohod_running(&proc, &noise, Window::new(grid, 128, 256).unwrap(), &opts(CellRule::Left)).unwrap();
        for (k, &w) in widths.iter().enumerate() {
            let s = run[..=w].iter().map(|v| v[0] * v[0]).fold(0.0, f64::max);
            assert!(s >= run[w][0] * run[w][0]);
            sups[k].push(s);
        }
    }
    let m: Vec<f64> = sups.iter().map(|v| mean(v)).collect();
    assert!(m.windows(2).all(|w| w[0] <= w[1]), "{m:?}");
}

#[test]
fn trapezoid_noise_integral_is_the_ito_formula() {
    for &h in &[0.35, 0.7] {
        let grid = TimeGrid::new(1 << 10, 1.0 / 1024.0).unwrap();
        let noise = FbmSampler::new(grid, Hurst::new(h).unwrap(), 1, Method::Auto).unwrap().sample(6, 0);
        let r = skorohod_integral(&DerivedProcess::Noise, &noise, Window::full(grid), &opts(CellRule::Trapezoid)).unwrap();
        let bt = noise.value(1024)[0];
        let want = 0.5 * (bt * bt - 1.0);
        // the trapezoid pathwise sum telescopes to B_T²/2 and the correction to T^{2H}/2
        assert!((r.pathwise_sum[0] - 0.5 * bt * bt).abs() < 1e-12);
        assert!((r.correction[0] - 0.5).abs() < 1e-12);
        assert!((r.value[0] - want).abs() < 1e-12);
    }
}

#[test]
fn duality_for_a_state_integrand() {
    let mc = McParams {
        grid: TimeGrid::new(64, 1.0 / 64.0).unwrap(),
        hurst: Hurst::new(0.35).unwrap(),
        paths: 3000,
        seed: 77,
        method: Method::Auto,
        rule: CellRule::Left,
        mode: DerivativeMode::default(),
    };
    let proc = ProcessSpec::State {
        model: DriftModel::fou(1.0, 1.0),
        g: GFunction::Sin,
        x0: vec![0.3],
    };
    let r = duality_check(&Functional::SinAt { t1: 0.5 }, &proc, &mc).unwrap();
    assert!(r.gap_in_se < 4.0, "{r:?}");
}

#[test]
fn derivative_decay_for_the_coupled_model() {
    let model = DriftModel::new(ModelKind::Coupled2d, 2, vec![1.0], vec![1.0, 0.0, 0.0, 1.0], 2).unwrap();
    let grid = TimeGrid::new(256, 1.0 / 32.0).unwrap();
    let noise = FbmSampler::new(grid, Hurst::new(0.6).unwrap(), 2, Method::Auto).unwrap().sample(3, 0);
    let x = integrate_euler(&model, &noise, &[0.5, -0.5]).unwrap();
    let rep = propagate_derivative(&model, &x, 32).unwrap().decay_report();
    assert!(rep.passes(), "{rep:?}");
    assert!(rep.entries > 0);
}
