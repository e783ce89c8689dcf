use serde::Serialize;

use crate::error::{Error, Result};
use crate::fbm::TimeGrid;
use crate::sde::{DriftModel, SolutionPath};

/// Default number of derivative pivots.
pub const DEFAULT_PIVOTS: usize = 512;

/// Growth of the derivative relative to `|σ|` treated as a blow-up.
const BLOW_UP: f64 = 1e100;

/// One-step transition matrices `M_r = I − dt A(X_r)` (row-major `n × m × m`)
/// and `sup_r |A(X_r)|`.
pub(crate) fn transition_matrices(model: &DriftModel, path: &SolutionPath) -> (Vec<f64>, f64) {
    let m = model.m();
    let n = path.grid.n_steps();
    let dt = path.grid.dt();
    let mut out = vec![0.0; n * m * m];
    let mut sup: f64 = 0.0;
    for r in 0..n {
        let a = &mut out[r * m * m..(r + 1) * m * m];
        model.jacobian_into(path.value(r), a);
        sup = sup.max(a.iter().map(|v| v * v).sum::<f64>().sqrt());
        for v in a.iter_mut() {
            *v *= -dt;
        }
        for k in 0..m {
            a[k * m + k] += 1.0;
        }
    }
    (out, sup)
}

/// `Z ← M Z` for `M` of size `m × m` and `Z` of size `m × d`.
#[inline]
pub(crate) fn left_multiply(mat: &[f64], z: &mut [f64], tmp: &mut [f64], m: usize, d: usize) {
    if m == 1 {
        z.iter_mut().for_each(|v| *v *= mat[0]);
        return;
    }
    for r in 0..m {
        for c in 0..d {
            tmp[r * d + c] = (0..m).map(|k| mat[r * m + k] * z[k * d + c]).sum();
        }
    }
    z.copy_from_slice(&tmp[..m * d]);
}

/// First cell of each pivot block: `c_j = ⌊j n / n_s⌋`, `j = 0..=n_s` (the last entry is `n`).
pub fn pivot_cells(n: usize, n_s: usize) -> Vec<usize> {
    (0..=n_s).map(|j| j * n / n_s).collect()
}

#[inline]
fn frob(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `D_s X_t` on a coarsened `s`-grid × the full `t`-grid.
///
/// Pivot `j` represents the noise cell `c_j`; the Euler derivative with respect to that
/// cell starts at node `p_j = c_j + 1` with value `σ` and then solves
/// `Z_{i+1} = (I − dt A(X_i)) Z_i`.
#[derive(Debug, Clone)]
pub struct MalliavinGrid {
    pub t_grid: TimeGrid,
    pub m: usize,
    pub d: usize,
    cells: Vec<usize>,
    /// `blocks[j]` holds `Z` at nodes `p_j..=n`, each `m × d`.
    blocks: Vec<Vec<f64>>,
    pub model_id: String,
    pub l1: f64,
    pub sigma_norm: f64,
    /// `sup_r |A(X_r)|` along the path.
    pub sup_jacobian: f64,
}

impl MalliavinGrid {
    pub fn n_pivots(&self) -> usize {
        self.blocks.len()
    }

    /// Block boundaries `c_0 < … < c_{n_s} = n`.
    pub fn pivot_cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn pivot_node(&self, j: usize) -> usize {
        self.cells[j] + 1
    }

    pub fn pivot_time(&self, j: usize) -> f64 {
        self.t_grid.t(self.pivot_node(j))
    }

    /// `D_{s_j} X_{t_i}` (row-major `m × d`), absent for `t_i < s_j`.
    pub fn get(&self, j: usize, i: usize) -> Option<&[f64]> {
        let p = self.pivot_node(j);
        if i < p || i > self.t_grid.n_steps() {
            return None;
        }
        let w = self.m * self.d;
        Some(&self.blocks[j][(i - p) * w..(i - p + 1) * w])
    }

    /// Pathwise check of `|D_s X_t| ≤ |σ| e^{−L₁(t−s)}` with slack `e^{2 dt L₁}`.
    pub fn decay_report(&self) -> DecayReport {
        let slack = (2.0 * self.t_grid.dt() * self.l1).exp();
        let mut max_ratio: f64 = 0.0;
        let mut entries = 0;
        let mut violations = 0;
        for j in 0..self.n_pivots() {
            let p = self.pivot_node(j);
            for i in p..=self.t_grid.n_steps() {
                let z = self.get(j, i).expect("stored entry");
                let bound = self.sigma_norm * (-self.l1 * (self.t_grid.t(i) - self.t_grid.t(p))).exp();
                let ratio = if bound > 0.0 { frob(z) / bound } else { 0.0 };
                max_ratio = max_ratio.max(ratio);
                entries += 1;
                if ratio > slack {
                    violations += 1;
                }
            }
        }
        DecayReport {
            entries,
            violations,
            max_ratio,
            slack,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayReport {
    pub entries: usize,
    pub violations: usize,
    pub max_ratio: f64,
    pub slack: f64,
}

impl DecayReport {
    pub fn passes(&self) -> bool {
        self.violations == 0
    }
}

/// Solve the derivative equation from each of `n_s` pivots along `path`.
pub fn propagate_derivative(model: &DriftModel, path: &SolutionPath, n_s: usize) -> Result<MalliavinGrid> {
    let n = path.grid.n_steps();
    if n_s == 0 || n_s > n {
        return Err(Error::Domain(format!("pivot count {n_s} must lie in 1..={n}")));
    }
    if path.m != model.m() {
        return Err(Error::Dimension {
            what: "path state dimension",
            expected: model.m(),
            got: path.m,
        });
    }
    let (m, d) = (model.m(), model.d());
    let (trans, sup) = transition_matrices(model, path);
    let cells = pivot_cells(n, n_s);
    let mut tmp = vec![0.0; m * d];
    let mut blocks = Vec::with_capacity(n_s);
    let limit = BLOW_UP * model.sigma_norm();
    for &c in &cells[..n_s] {
        let p = c + 1;
        let mut z = model.sigma().to_vec();
        let mut block = Vec::with_capacity((n + 1 - p) * m * d);
        block.extend_from_slice(&z);
        for r in p..n {
            left_multiply(&trans[r * m * m..(r + 1) * m * m], &mut z, &mut tmp, m, d);
            if z.iter().any(|v| !v.is_finite() || v.abs() > limit) {
                return Err(Error::Divergence {
                    step: r,
                    t: path.grid.t(r + 1),
                    reason: format!("Malliavin derivative from pivot s = {} blew up", path.grid.t(p)),
                });
            }
            block.extend_from_slice(&z);
        }
        blocks.push(block);
    }
    Ok(MalliavinGrid {
        t_grid: path.grid,
        m,
        d,
        cells,
        blocks,
        model_id: model.id(),
        l1: model.l1(),
        sigma_norm: model.sigma_norm(),
        sup_jacobian: sup,
    })
}

/// Empirical check of the increment bounds of the derivative over many paths.
///
/// Each ratio divides the observed difference by the bound's shape times a
/// pathwise constant built from `|σ|` and `sup |A(X_r)|`; a bounded ratio
/// (at most the discrete slack) means the bound holds with that constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementsReport {
    pub paths: usize,
    pub tuples: usize,
    /// `|D_u X_t − D_v X_t|` against `e^{−L₁(t−u)} (1 ∧ |u − v|)`.
    pub max_ratio_pivot: f64,
    /// `|D_u X_t − D_u X_s|` against `e^{−L₁(s−u)} (1 ∧ |t − s|)`.
    pub max_ratio_time: f64,
    /// Double difference against `e^{−L₁(s−u)} (1 ∧ |u − v|)(1 ∧ |t − s|)`.
    pub max_ratio_double: f64,
    /// Same three quantities with `L^p(Ω)` norms in place of pathwise values.
    pub lp_ratio_pivot: f64,
    pub lp_ratio_time: f64,
    pub lp_ratio_double: f64,
    /// Largest difference observed for `u = v` (must be zero).
    pub degenerate_max: f64,
    /// Log-log slope of `‖D_u X_{s+h} − D_u X_s‖_p` in `h` for small `h`.
    pub slope_in_t: f64,
    pub slack: f64,
}

impl IncrementsReport {
    pub fn passes(&self) -> bool {
        self.degenerate_max == 0.0
            && [self.max_ratio_pivot, self.max_ratio_time, self.max_ratio_double]
                .iter()
                .all(|r| *r <= self.slack)
    }
}

/// Run the increment checks on propagated grids sharing one time grid and pivot layout.
///
/// `stride` thins the `t`-nodes that enter the tuples `v ≤ u ≤ s ≤ t`.
pub fn derivative_increments_check(grids: &[MalliavinGrid], p: f64, stride: usize) -> Result<IncrementsReport> {
    let first = grids.first().ok_or_else(|| Error::Domain("no grids to check".into()))?;
    if grids
        .iter()
        .any(|g| g.t_grid != first.t_grid || g.cells != first.cells || g.m != first.m || g.d != first.d)
    {
        return Err(Error::Domain("grids must share the time grid and pivot layout".into()));
    }
    let tg = first.t_grid;
    let n = tg.n_steps();
    let stride = stride.max(1);
    let w = first.m * first.d;
    let l1 = first.l1;
    let slack = (2.0 * tg.dt() * l1).exp();
    let nodes: Vec<usize> = (0..=n).step_by(stride).collect();
    let pivots = first.n_pivots();
    let consts: Vec<f64> = grids
        .iter()
        .map(|g| g.sigma_norm * g.sup_jacobian.max(2.0) * slack)
        .collect();
    let lp = |xs: &mut dyn Iterator<Item = f64>| -> f64 {
        let (s, k) = xs.fold((0.0, 0usize), |(s, k), x| (s + x.powf(p), k + 1));
        (s / k as f64).powf(1.0 / p)
    };
    let c_lp = lp(&mut consts.iter().copied());
    let c2_lp = lp(&mut consts.iter().map(|c| c * c / slack));
    let mut diff = vec![0.0; w];
    let mut report = IncrementsReport {
        paths: grids.len(),
        tuples: 0,
        max_ratio_pivot: 0.0,
        max_ratio_time: 0.0,
        max_ratio_double: 0.0,
        lp_ratio_pivot: 0.0,
        lp_ratio_time: 0.0,
        lp_ratio_double: 0.0,
        degenerate_max: 0.0,
        slope_in_t: f64::NAN,
        slack,
    };
    let mut norms = vec![0.0; grids.len()];

    for ju in 0..pivots {
        let pu = first.pivot_node(ju);
        let tu = tg.t(pu);
        for &it in nodes.iter().filter(|&&i| i >= pu) {
            let tt = tg.t(it);
            // pivot differences, including the degenerate v = u
            for jv in 0..=ju {
                let tv = first.pivot_time(jv);
                let shape = (-l1 * (tt - tu)).exp() * (tu - tv).min(1.0);
                for (k, g) in grids.iter().enumerate() {
                    let (a, b) = (g.get(ju, it).unwrap(), g.get(jv, it).unwrap());
                    diff.iter_mut().enumerate().for_each(|(q, x)| *x = a[q] - b[q]);
                    norms[k] = frob(&diff);
                }
                if jv == ju {
                    report.degenerate_max = norms.iter().copied().fold(report.degenerate_max, f64::max);
                    continue;
                }
                report.tuples += 1;
                for (k, nv) in norms.iter().enumerate() {
                    report.max_ratio_pivot = report.max_ratio_pivot.max(nv / (shape * consts[k]) * slack);
                }
                let v = lp(&mut norms.iter().copied());
                report.lp_ratio_pivot = report.lp_ratio_pivot.max(v / (shape * c_lp) * slack);

                // double differences with every earlier node s ≥ u
                for &is in nodes.iter().filter(|&&i| i >= pu && i < it) {
                    let ts = tg.t(is);
                    let shape = (-l1 * (ts - tu)).exp() * (tu - tv).min(1.0) * (tt - ts).min(1.0);
                    for (k, g) in grids.iter().enumerate() {
                        let (a, b) = (g.get(ju, it).unwrap(), g.get(jv, it).unwrap());
                        let (c, e) = (g.get(ju, is).unwrap(), g.get(jv, is).unwrap());
                        diff.iter_mut()
                            .enumerate()
                            .for_each(|(q, x)| *x = a[q] - b[q] - c[q] + e[q]);
                        norms[k] = frob(&diff);
                        let bound = shape * consts[k] * consts[k] / slack;
                        report.max_ratio_double = report.max_ratio_double.max(norms[k] / bound * slack);
                    }
                    report.tuples += 1;
                    let v = lp(&mut norms.iter().copied());
                    report.lp_ratio_double = report.lp_ratio_double.max(v / (shape * c2_lp) * slack);
                }
            }
            // time differences
            for &is in nodes.iter().filter(|&&i| i >= pu && i < it) {
                let ts = tg.t(is);
                let shape = (-l1 * (ts - tu)).exp() * (tt - ts).min(1.0);
                for (k, g) in grids.iter().enumerate() {
                    let (a, b) = (g.get(ju, it).unwrap(), g.get(ju, is).unwrap());
                    diff.iter_mut().enumerate().for_each(|(q, x)| *x = a[q] - b[q]);
                    norms[k] = frob(&diff);
                    report.max_ratio_time = report.max_ratio_time.max(norms[k] / (shape * consts[k]) * slack);
                }
                report.tuples += 1;
                let v = lp(&mut norms.iter().copied());
                report.lp_ratio_time = report.lp_ratio_time.max(v / (shape * c_lp) * slack);
            }
        }
    }

    // Lipschitz exponent in t: dyadic lags up to 0.1 / L₁ from the first pivot,
    // where the curvature of the exponential is still negligible
    let pu = first.pivot_node(0);
    let max_lag = 0.1 / l1.max(1e-12);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut h = 1;
    while pu + h <= n && tg.t(h) <= max_lag {
        let v = lp(&mut grids.iter().map(|g| {
            let (a, b) = (g.get(0, pu + h).unwrap(), g.get(0, pu).unwrap());
            frob(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
        }));
        if v > 0.0 {
            xs.push(tg.t(h).ln());
            ys.push(v.ln());
        }
        h *= 2;
    }
    if xs.len() >= 2 {
        report.slope_in_t = crate::stats::slope(&xs, &ys);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{sample_fbm, Hurst, Method};
    use crate::sde::{integrate_euler, ModelKind};

    fn fou_grid(n: usize, dt: f64, n_s: usize) -> MalliavinGrid {
        let g = TimeGrid::new(n, dt).unwrap();
        let b = sample_fbm(g, Hurst::new(0.7).unwrap(), 1, 9, Method::Auto).unwrap();
        let model = DriftModel::fou(1.5, 0.8);
        let x = integrate_euler(&model, &b, &[0.2]).unwrap();
        propagate_derivative(&model, &x, n_s).unwrap()
    }

    #[test]
    fn pivot_layout() {
        assert_eq!(pivot_cells(8, 8), (0..=8).collect::<Vec<_>>());
        assert_eq!(pivot_cells(10, 4), vec![0, 2, 5, 7, 10]);
    }

    #[test]
    fn starts_at_sigma_and_is_geometric_for_fou() {
        let mg = fou_grid(40, 0.05, 8);
        for j in 0..mg.n_pivots() {
            let p = mg.pivot_node(j);
            assert_eq!(mg.get(j, p).unwrap(), &[0.8]);
            assert!(mg.get(j, p - 1).is_none());
            for i in p..=40 {
                let want = 0.8 * (1.0 - 1.5 * 0.05f64).powi((i - p) as i32);
                assert!((mg.get(j, i).unwrap()[0] - want).abs() < 1e-14);
            }
        }
        assert!(mg.decay_report().passes());
    }

    #[test]
    fn blow_up_is_reported() {
        let g = TimeGrid::new(1000, 0.5).unwrap();
        let b = sample_fbm(g, Hurst::new(0.5).unwrap(), 1, 1, Method::Auto).unwrap();
        let model = DriftModel::fou(5.0, 1e-300);
        let x = integrate_euler(&model, &b, &[0.0]).unwrap();
        // |1 − 2.5| > 1: the discrete derivative grows geometrically while the path stays tiny
        assert!(matches!(propagate_derivative(&model, &x, 4), Err(Error::Divergence { .. })));
    }

    #[test]
    fn increments_check_on_fou() {
        let grids: Vec<_> = (0..4).map(|_| fou_grid(256, 0.004, 8)).collect();
        let r = derivative_increments_check(&grids, 2.0, 8).unwrap();
        assert_eq!(r.degenerate_max, 0.0);
        assert!(r.passes(), "{r:?}");
        assert!((r.slope_in_t - 1.0).abs() < 0.15, "{}", r.slope_in_t);
    }

    #[test]
    fn coupled_model_propagates_matrices() {
        let g = TimeGrid::new(32, 0.02).unwrap();
        let b = sample_fbm(g, Hurst::new(0.6).unwrap(), 2, 4, Method::Auto).unwrap();
        let model = DriftModel::new(ModelKind::Coupled2d, 2, vec![1.0], vec![1.0, 0.0, 0.0, 1.0], 2).unwrap();
        let x = integrate_euler(&model, &b, &[0.1, -0.2]).unwrap();
        let mg = propagate_derivative(&model, &x, 32).unwrap();
        assert_eq!(mg.get(3, 4).unwrap(), &[1.0, 0.0, 0.0, 1.0]);
        assert!(mg.decay_report().passes());
        assert!(propagate_derivative(&model, &x, 33).is_err());
    }
}
