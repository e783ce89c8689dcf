use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{pivot_cells, transition_matrices, DEFAULT_PIVOTS};
use super::integrand::Integrand;
use crate::error::{Error, Result};
use crate::fbm::{FbmPath, IncrementCovariance, Regime, TimeGrid};
use crate::hilbert::{indicator_product_unchecked, StepFunction};
use crate::sde::{DriftModel, SolutionPath};

/// How a node-valued process is frozen on the cell `[t_i, t_{i+1})`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellRule {
    /// `u_{t_i}`; the derivative terms are strictly below the diagonal.
    #[default]
    Left,
    /// `½(u_{t_i} + u_{t_{i+1}})`; the diagonal derivative `D_i u_{i+1}` enters with weight ½.
    Trapezoid,
}

impl std::str::FromStr for CellRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(CellRule::Left),
            "trapezoid" => Ok(CellRule::Trapezoid),
            _ => Err(Error::Unknown {
                kind: "cell rule",
                name: s.to_string(),
            }),
        }
    }
}

/// How `D_k u_i` is obtained for state processes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DerivativeMode {
    /// Exact per-cell derivatives, transported backwards from each node; lags are
    /// dropped once the transported factor falls below `tol` times its start.
    Transported { tol: f64 },
    /// Derivatives frozen between `n_s` pivots.
    Pivots { n_s: usize },
}

impl Default for DerivativeMode {
    fn default() -> Self {
        DerivativeMode::Transported { tol: 1e-14 }
    }
}

impl DerivativeMode {
    pub fn default_pivots(n: usize) -> Self {
        DerivativeMode::Pivots {
            n_s: n.min(DEFAULT_PIVOTS),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkorohodOptions {
    pub rule: CellRule,
    pub mode: DerivativeMode,
    /// Relative derivative change across a pivot block above which a warning is attached.
    pub pivot_tolerance: f64,
}

impl Default for SkorohodOptions {
    fn default() -> Self {
        Self {
            rule: CellRule::Left,
            mode: DerivativeMode::default(),
            pivot_tolerance: 0.05,
        }
    }
}

/// Cells `a..b` of the grid, i.e. the time window `[t_a, t_b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub a: usize,
    pub b: usize,
}

impl Window {
    pub fn full(grid: TimeGrid) -> Self {
        Self {
            a: 0,
            b: grid.n_steps(),
        }
    }

    pub fn new(grid: TimeGrid, a: usize, b: usize) -> Result<Self> {
        if a > b || b > grid.n_steps() {
            return Err(Error::Domain(format!("window nodes [{a}, {b}) outside the grid")));
        }
        Ok(Self { a, b })
    }

    /// Window from times that must sit on grid nodes.
    pub fn from_times(grid: TimeGrid, a: f64, b: f64) -> Result<Self> {
        let na = grid
            .node_of(a)
            .ok_or_else(|| Error::Domain(format!("window start {a} is not a grid node")))?;
        let nb = grid
            .node_of(b)
            .ok_or_else(|| Error::Domain(format!("window end {b} is not a grid node")))?;
        Self::new(grid, na, nb)
    }
}

/// `u = G(X)` along an Euler path, with node values and gradients cached.
pub struct StateProcess<'a> {
    model: &'a DriftModel,
    path: &'a SolutionPath,
    count: usize,
    d: usize,
    m: usize,
    values: Vec<f64>,
    grads: Vec<f64>,
}

impl<'a> StateProcess<'a> {
    pub fn new(model: &'a DriftModel, path: &'a SolutionPath, integrand: &dyn Integrand) -> Result<Self> {
        if integrand.m() != model.m() || path.m != model.m() {
            return Err(Error::Dimension {
                what: "integrand state dimension",
                expected: model.m(),
                got: integrand.m(),
            });
        }
        if integrand.d() != model.d() {
            return Err(Error::Dimension {
                what: "integrand output dimension",
                expected: model.d(),
                got: integrand.d(),
            });
        }
        let (count, d, m) = (integrand.count(), integrand.d(), model.m());
        let nodes = path.grid.n_nodes();
        let mut values = vec![0.0; nodes * count * d];
        let mut grads = vec![0.0; nodes * count * d * m];
        for i in 0..nodes {
            integrand.eval_into(
                path.value(i),
                &mut values[i * count * d..(i + 1) * count * d],
                &mut grads[i * count * d * m..(i + 1) * count * d * m],
            );
        }
        Ok(Self {
            model,
            path,
            count,
            d,
            m,
            values,
            grads,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `u_{t_i}`, `count × d`.
    pub fn value(&self, i: usize) -> &[f64] {
        let w = self.count * self.d;
        &self.values[i * w..(i + 1) * w]
    }

    /// `∇G(X_{t_i})`, `count × d × m`.
    pub fn grad(&self, i: usize) -> &[f64] {
        let w = self.count * self.d * self.m;
        &self.grads[i * w..(i + 1) * w]
    }

    /// `D_k u_i = ∇G(X_i) (I − dt A_{i−1}) ⋯ (I − dt A_{k+1}) σ` (`count × d × d`), zero for `k ≥ i`.
    pub fn derivative(&self, k: usize, i: usize) -> Vec<f64> {
        let (m, d) = (self.m, self.d);
        let mut out = vec![0.0; self.count * d * d];
        if k >= i {
            return out;
        }
        let dt = self.path.grid.dt();
        let mut z = self.model.sigma().to_vec();
        let mut a = vec![0.0; m * m];
        for r in k + 1..i {
            self.model.jacobian_into(self.path.value(r), &mut a);
            let prev = z.clone();
            for row in 0..m {
                for c in 0..d {
                    z[row * d + c] = prev[row * d + c] - dt * (0..m).map(|q| a[row * m + q] * prev[q * d + c]).sum::<f64>();
                }
            }
        }
        let g = self.grad(i);
        for j in 0..self.count {
            for c in 0..d {
                for e in 0..d {
                    out[(j * d + c) * d + e] = (0..m).map(|q| g[(j * d + c) * m + q] * z[q * d + e]).sum();
                }
            }
        }
        out
    }
}

/// An integrand `u` together with the information needed for `Du`.
pub enum DerivedProcess<'a> {
    /// Deterministic step function, `Du = 0`; the cell rule does not apply.
    Deterministic(&'a StepFunction),
    /// `u_t = B_t` componentwise, `D_k u_i = I` for `k < i`.
    Noise,
    /// `u_t = G(X_t)`.
    State(StateProcess<'a>),
}

impl DerivedProcess<'_> {
    pub fn count(&self) -> usize {
        match self {
            DerivedProcess::State(s) => s.count,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkorohodMetadata {
    pub rule: CellRule,
    pub mode: DerivativeMode,
    pub window: [f64; 2],
    pub cells: usize,
    pub hurst: f64,
    /// Longest lag retained by the transported derivative.
    pub max_lag: usize,
    pub warnings: Vec<String>,
}

/// `value = pathwise_sum − correction`, one entry per integrand in the family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkorohodResult {
    pub value: Vec<f64>,
    pub correction: Vec<f64>,
    pub pathwise_sum: Vec<f64>,
    pub metadata: SkorohodMetadata,
}

/// Discrete divergence of a step-frozen process over a window:
/// `Σ_i ū_i·ΔB_i − Σ_i Σ_k Tr[D_k ū_i] ⟨1_{cell k}, 1_{cell i}⟩_ℌ`.
pub fn skorohod_integral(
    proc: &DerivedProcess<'_>,
    noise: &FbmPath,
    window: Window,
    opts: &SkorohodOptions,
) -> Result<SkorohodResult> {
    let grid = noise.grid;
    let n = grid.n_steps();
    if window.b > n || window.a > window.b {
        return Err(Error::Domain("window outside the noise grid".into()));
    }
    let two_h = noise.hurst.two_h();
    let d = noise.d;
    let count = proc.count();
    let mut pathwise = vec![0.0; count];
    let mut correction = vec![0.0; count];
    let mut warnings = Vec::new();
    let mut max_lag = 0;
    let Window { a, b } = window;

    match proc {
        DerivedProcess::Deterministic(phi) => {
            if phi.grid() != grid || phi.dim() != d {
                return Err(Error::Domain("step function does not match the noise grid".into()));
            }
            for i in a..b {
                pathwise[0] += dot(phi.value(i), noise.increment(i));
            }
        }
        DerivedProcess::Noise => {
            let g = |i: usize| grid.t(i);
            for i in a..b {
                let (bi, bn, db) = (noise.value(i), noise.value(i + 1), noise.increment(i));
                let left = d as f64 * indicator_product_unchecked(0.0, g(i), g(i), g(i + 1), two_h);
                match opts.rule {
                    CellRule::Left => {
                        pathwise[0] += dot(bi, db);
                        correction[0] += left;
                    }
                    CellRule::Trapezoid => {
                        pathwise[0] += 0.5 * (dot(bi, db) + dot(bn, db));
                        let right = d as f64 * indicator_product_unchecked(0.0, g(i + 1), g(i), g(i + 1), two_h);
                        correction[0] += 0.5 * (left + right);
                    }
                }
            }
        }
        DerivedProcess::State(sp) => {
            if sp.path.grid != grid {
                return Err(Error::Domain("state path and noise use different grids".into()));
            }
            for i in a..b {
                let db = noise.increment(i);
                for j in 0..count {
                    let ui = &sp.value(i)[j * d..(j + 1) * d];
                    pathwise[j] += match opts.rule {
                        CellRule::Left => dot(ui, db),
                        CellRule::Trapezoid => {
                            let un = &sp.value(i + 1)[j * d..(j + 1) * d];
                            0.5 * (dot(ui, db) + dot(un, db))
                        }
                    };
                }
            }
            let cov = IncrementCovariance::new(grid, noise.hurst);
            let (left, trap, lag) = match opts.mode {
                DerivativeMode::Transported { tol } => transported_sums(sp, &cov, window, opts.rule, tol),
                DerivativeMode::Pivots { n_s } => {
                    if n_s == 0 || n_s > n {
                        return Err(Error::Domain(format!("pivot count {n_s} must lie in 1..={n}")));
                    }
                    if n_s < n {
                        pivot_warnings(sp, n_s, opts.pivot_tolerance, noise, &mut warnings);
                    }
                    let (l, t) = pivot_sums(sp, n_s, window, opts.rule, two_h);
                    (l, Some(t), 0)
                }
            };
            max_lag = lag;
            for j in 0..count {
                correction[j] = match opts.rule {
                    CellRule::Left => left[j],
                    CellRule::Trapezoid => 0.5 * (left[j] + trap.as_ref().map_or(0.0, |t| t[j])),
                };
            }
        }
    }
    let value = pathwise.iter().zip(&correction).map(|(p, c)| p - c).collect();
    Ok(SkorohodResult {
        value,
        correction,
        pathwise_sum: pathwise,
        metadata: SkorohodMetadata {
            rule: opts.rule,
            mode: opts.mode,
            window: [grid.t(a), grid.t(b)],
            cells: b - a,
            hurst: noise.hurst.value(),
            max_lag,
            warnings,
        },
    })
}

/// Running values `t ↦ δ(u 1_{[t_a, t)})` at the nodes `a..=b` of the window
/// (the first entry is 0). Uses transported derivatives; pivot mode is rejected.
pub fn skorohod_running(
    proc: &DerivedProcess<'_>,
    noise: &FbmPath,
    window: Window,
    opts: &SkorohodOptions,
) -> Result<Vec<Vec<f64>>> {
    let grid = noise.grid;
    let Window { a, b } = window;
    if b > grid.n_steps() || a > b {
        return Err(Error::Domain("window outside the noise grid".into()));
    }
    let count = proc.count();
    let d = noise.d;
    let two_h = noise.hurst.two_h();
    let g = |i: usize| grid.t(i);
    // per-cell pathwise term and correction
    let mut cells = vec![(vec![0.0; count], vec![0.0; count]); b - a];
    match proc {
        DerivedProcess::Deterministic(phi) => {
            if phi.grid() != grid || phi.dim() != d {
                return Err(Error::Domain("step function does not match the noise grid".into()));
            }
            for i in a..b {
                cells[i - a].0[0] = dot(phi.value(i), noise.increment(i));
            }
        }
        DerivedProcess::Noise => {
            for i in a..b {
                let (bi, bn, db) = (noise.value(i), noise.value(i + 1), noise.increment(i));
                let left = d as f64 * indicator_product_unchecked(0.0, g(i), g(i), g(i + 1), two_h);
                cells[i - a] = match opts.rule {
                    CellRule::Left => (vec![dot(bi, db)], vec![left]),
                    CellRule::Trapezoid => {
                        let right = d as f64 * indicator_product_unchecked(0.0, g(i + 1), g(i), g(i + 1), two_h);
                        (vec![0.5 * (dot(bi, db) + dot(bn, db))], vec![0.5 * (left + right)])
                    }
                };
            }
        }
        DerivedProcess::State(sp) => {
            if sp.path.grid != grid {
                return Err(Error::Domain("state path and noise use different grids".into()));
            }
            let DerivativeMode::Transported { tol } = opts.mode else {
                return Err(Error::Domain("running integrals need transported derivatives".into()));
            };
            for i in a..b {
                let db = noise.increment(i);
                for j in 0..count {
                    let ui = &sp.value(i)[j * d..(j + 1) * d];
                    cells[i - a].0[j] = match opts.rule {
                        CellRule::Left => dot(ui, db),
                        CellRule::Trapezoid => 0.5 * (dot(ui, db) + dot(&sp.value(i + 1)[j * d..(j + 1) * d], db)),
                    };
                }
            }
            let cov = IncrementCovariance::new(grid, noise.hurst);
            for (q, l, t, _) in transported_nodes(sp, &cov, window, opts.rule, tol) {
                for j in 0..count {
                    match opts.rule {
                        CellRule::Left => {
                            if q < b {
                                cells[q - a].1[j] += l[j];
                            }
                        }
                        CellRule::Trapezoid => {
                            if q < b {
                                cells[q - a].1[j] += 0.5 * l[j];
                            }
                            if q > a {
                                cells[q - 1 - a].1[j] += 0.5 * t[j];
                            }
                        }
                    }
                }
            }
        }
    }
    let mut out = Vec::with_capacity(b - a + 1);
    let mut acc = vec![0.0; count];
    out.push(acc.clone());
    for (p, c) in &cells {
        for j in 0..count {
            acc[j] += p[j] - c[j];
        }
        out.push(acc.clone());
    }
    Ok(out)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// For each node `q`, `S(q, i) = Σ_{k<q} Tr[D_k u_q] γ_{|k−i|}` with `i = q` (left sums)
/// and `i = q − 1` (the extra trapezoid sums), accumulated over the window.
fn transported_sums(
    sp: &StateProcess<'_>,
    cov: &IncrementCovariance,
    window: Window,
    rule: CellRule,
    tol: f64,
) -> (Vec<f64>, Option<Vec<f64>>, usize) {
    let count = sp.count;
    let trap = rule == CellRule::Trapezoid;
    let mut left = vec![0.0; count];
    let mut right = vec![0.0; count];
    let mut max_lag = 0;
    for (_, l, t, lag) in transported_nodes(sp, cov, window, rule, tol) {
        for j in 0..count {
            left[j] += l[j];
            right[j] += t[j];
        }
        max_lag = max_lag.max(lag);
    }
    (left, trap.then_some(right), max_lag)
}

type NodeSums = (usize, Vec<f64>, Vec<f64>, usize);

/// Per-node terms of [`transported_sums`] as `(q, left, trap, lag)`, in increasing `q`.
fn transported_nodes(
    sp: &StateProcess<'_>,
    cov: &IncrementCovariance,
    window: Window,
    rule: CellRule,
    tol: f64,
) -> Vec<NodeSums> {
    let (m, d, count) = (sp.m, sp.d, sp.count);
    let n = sp.path.grid.n_steps();
    let rows = count * d;
    let (trans, _) = transition_matrices(sp.model, sp.path);
    let sigma = sp.model.sigma();
    let mut gam: Vec<f64> = (0..=n).map(|k| cov.lag_value(k)).collect();
    let brownian = cov.hurst().regime() == Regime::Brownian;
    if brownian {
        // independent increments: only the diagonal survives
        gam.iter_mut().skip(1).for_each(|g| *g = 0.0);
    }
    let trap = rule == CellRule::Trapezoid;
    let Window { a, b } = window;
    let last = if trap { b } else { b.saturating_sub(1) };
    if b == a {
        return vec![];
    }

    (a.max(1)..=last)
        .into_par_iter()
        .map(|q| {
            let want_left = q < b;
            let want_trap = trap && q > a;
            let mut acc_l = vec![0.0; count];
            let mut acc_t = vec![0.0; count];
            let mut v = sp.grad(q).to_vec();
            let mut tmp = vec![0.0; rows * m];
            let v0 = v.iter().fold(0.0f64, |s, x| s.max(x.abs()));
            let mut lag = 0;
            if v0 == 0.0 {
                return (q, acc_l, acc_t, 0);
            }
            if m == 1 && d == 1 {
                // every row is the same scalar product times its starting value
                let (mut prod, mut sl, mut st) = (1.0, 0.0, 0.0);
                for k in (0..q).rev() {
                    if k + 1 < q {
                        if brownian {
                            break;
                        }
                        prod *= trans[k + 1];
                    }
                    sl += prod * gam[q - k];
                    if want_trap {
                        st += prod * gam[q - 1 - k];
                    }
                    lag = q - k;
                    if prod.abs() <= tol {
                        break;
                    }
                }
                for j in 0..count {
                    if want_left {
                        acc_l[j] = v[j] * sigma[0] * sl;
                    }
                    acc_t[j] = v[j] * sigma[0] * st;
                }
                return (q, acc_l, acc_t, lag);
            }
            for k in (0..q).rev() {
                if k + 1 < q {
                    if brownian {
                        break;
                    }
                    // V ← V (I − dt A_{k+1})
                    let mat = &trans[(k + 1) * m * m..(k + 2) * m * m];
                    if m == 1 {
                        v.iter_mut().for_each(|x| *x *= mat[0]);
                    } else {
                        for r in 0..rows {
                            for c in 0..m {
                                tmp[r * m + c] = (0..m).map(|s| v[r * m + s] * mat[s * m + c]).sum();
                            }
                        }
                        v.copy_from_slice(&tmp);
                    }
                }
                let gl = gam[q - k];
                let gt = if want_trap { gam[q - 1 - k] } else { 0.0 };
                let mut vmax: f64 = 0.0;
                for j in 0..count {
                    let mut tr = 0.0;
                    for c in 0..d {
                        let row = &v[(j * d + c) * m..(j * d + c + 1) * m];
                        for (s, x) in row.iter().enumerate() {
                            tr += x * sigma[s * d + c];
                            vmax = vmax.max(x.abs());
                        }
                    }
                    if want_left {
                        acc_l[j] += tr * gl;
                    }
                    acc_t[j] += tr * gt;
                }
                lag = q - k;
                if vmax <= tol * v0 {
                    break;
                }
            }
            (q, acc_l, acc_t, lag)
        })
        .collect()
}

/// Pivot version of [`transported_sums`]: the derivative with respect to every cell
/// of block `[c_j, c_{j+1})` is the one of its first cell.
fn pivot_sums(sp: &StateProcess<'_>, n_s: usize, window: Window, rule: CellRule, two_h: f64) -> (Vec<f64>, Vec<f64>) {
    let (m, d, count) = (sp.m, sp.d, sp.count);
    let grid = sp.path.grid;
    let n = grid.n_steps();
    let (trans, _) = transition_matrices(sp.model, sp.path);
    let cells = pivot_cells(n, n_s);
    let trap = rule == CellRule::Trapezoid;
    let Window { a, b } = window;
    let t = |i: usize| grid.t(i);

    let per_block: Vec<(Vec<f64>, Vec<f64>)> = (0..n_s)
        .into_par_iter()
        .map(|j| {
            let (c, e) = (cells[j], cells[j + 1]);
            let mut acc_l = vec![0.0; count];
            let mut acc_t = vec![0.0; count];
            let mut z = sp.model.sigma().to_vec();
            let mut tmp = vec![0.0; m * d];
            for q in c + 1..=b {
                if q >= a {
                    let g = sp.grad(q);
                    let hi = t(e.min(q));
                    let wl = if q < b { indicator_product_unchecked(t(c), hi, t(q), t(q + 1), two_h) } else { 0.0 };
                    let wt = if trap && q > a {
                        indicator_product_unchecked(t(c), hi, t(q - 1), t(q), two_h)
                    } else {
                        0.0
                    };
                    for jj in 0..count {
                        let mut tr = 0.0;
                        for cc in 0..d {
                            for s in 0..m {
                                tr += g[(jj * d + cc) * m + s] * z[s * d + cc];
                            }
                        }
                        acc_l[jj] += tr * wl;
                        acc_t[jj] += tr * wt;
                    }
                }
                if q < n {
                    super::grid::left_multiply(&trans[q * m * m..(q + 1) * m * m], &mut z, &mut tmp, m, d);
                }
            }
            (acc_l, acc_t)
        })
        .collect();
    let mut left = vec![0.0; count];
    let mut right = vec![0.0; count];
    for (l, r) in per_block {
        for j in 0..count {
            left[j] += l[j];
            right[j] += r[j];
        }
    }
    (left, right)
}

fn pivot_warnings(sp: &StateProcess<'_>, n_s: usize, tol: f64, noise: &FbmPath, out: &mut Vec<String>) {
    let grid = sp.path.grid;
    let cells = pivot_cells(grid.n_steps(), n_s);
    let width = cells.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(1) as f64 * grid.dt();
    let (_, sup) = transition_matrices(sp.model, sp.path);
    let drift = 1.0 - (-sup * width).exp();
    if drift > tol {
        out.push(format!(
            "pivot spacing {width:.4} lets the derivative change by up to {:.1}% within a block (tolerance {:.1}%)",
            100.0 * drift,
            100.0 * tol
        ));
    }
    if noise.hurst.regime() == Regime::Rough {
        out.push(
            "pivot blocks coarser than the grid bias the near-diagonal correction when H < 1/2".to_string(),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{sample_fbm, Hurst, Method};
    use crate::malliavin::{propagate_derivative, DriftIntegrand, GFunction, GIntegrand};
    use crate::sde::{integrate_euler, ModelKind};

    fn setup(h: f64, n: usize, dt: f64) -> (DriftModel, FbmPath, SolutionPath) {
        let g = TimeGrid::new(n, dt).unwrap();
        let b = sample_fbm(g, Hurst::new(h).unwrap(), 1, 21, Method::Auto).unwrap();
        let model = DriftModel::new(ModelKind::Cubic, 1, vec![1.0, 0.5], vec![0.7], 1).unwrap();
        let x = integrate_euler(&model, &b, &[0.3]).unwrap();
        (model, b, x)
    }

    /// Direct double sum over all (k, i) with the explicit derivative product.
    fn brute_correction(sp: &StateProcess<'_>, cov: &IncrementCovariance, w: Window, rule: CellRule) -> Vec<f64> {
        let mut out = vec![0.0; sp.count()];
        for i in w.a..w.b {
            for k in 0..=i {
                let dl = sp.derivative(k, i);
                let dr = sp.derivative(k, i + 1);
                for j in 0..sp.count() {
                    let (tl, tr) = (dl[j], dr[j]);
                    out[j] += cov.get(k, i)
                        * match rule {
                            CellRule::Left => tl,
                            CellRule::Trapezoid => 0.5 * (tl + tr),
                        };
                }
            }
        }
        out
    }

    #[test]
    fn transported_matches_brute_force() {
        for h in [0.35, 0.7] {
            let (model, b, x) = setup(h, 48, 0.05);
            let it = DriftIntegrand { model: &model };
            let sp = StateProcess::new(&model, &x, &it).unwrap();
            let cov = IncrementCovariance::new(b.grid, b.hurst);
            for rule in [CellRule::Left, CellRule::Trapezoid] {
                for w in [Window::full(b.grid), Window::new(b.grid, 10, 30).unwrap()] {
                    let opts = SkorohodOptions {
                        rule,
                        ..Default::default()
                    };
                    let proc = DerivedProcess::State(StateProcess::new(&model, &x, &it).unwrap());
                    let r = skorohod_integral(&proc, &b, w, &opts).unwrap();
                    let want = brute_correction(&sp, &cov, w, rule);
                    for j in 0..2 {
                        assert!((r.correction[j] - want[j]).abs() < 1e-12 * (1.0 + want[j].abs()));
                        assert_eq!(r.value[j], r.pathwise_sum[j] - r.correction[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn full_pivots_equal_transported() {
        let (model, b, x) = setup(0.3, 64, 0.05);
        let g = GIntegrand {
            g: GFunction::Tanh,
            m: 1,
            d: 1,
        };
        for rule in [CellRule::Left, CellRule::Trapezoid] {
            let run = |mode| {
                let proc = DerivedProcess::State(StateProcess::new(&model, &x, &g).unwrap());
                let opts = SkorohodOptions {
                    rule,
                    mode,
                    ..Default::default()
                };
                skorohod_integral(&proc, &b, Window::new(b.grid, 5, 60).unwrap(), &opts).unwrap()
            };
            let p = run(DerivativeMode::Pivots { n_s: 64 });
            let t = run(DerivativeMode::default());
            assert!((p.correction[0] - t.correction[0]).abs() < 1e-11, "{rule:?}");
            assert!(p.metadata.warnings.is_empty());
            let coarse = run(DerivativeMode::Pivots { n_s: 4 });
            assert!(!coarse.metadata.warnings.is_empty());
        }
    }

    #[test]
    fn chain_rule_against_malliavin_grid() {
        let (model, _, x) = setup(0.7, 32, 0.05);
        let g = GIntegrand {
            g: GFunction::Sin,
            m: 1,
            d: 1,
        };
        let sp = StateProcess::new(&model, &x, &g).unwrap();
        let mg = propagate_derivative(&model, &x, 32).unwrap();
        for k in 0..32 {
            for i in k + 1..=32 {
                let want = sp.grad(i)[0] * mg.get(k, i).unwrap()[0];
                assert!((sp.derivative(k, i)[0] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn noise_correction_closed_form() {
        let g = TimeGrid::new(64, 1.0 / 64.0).unwrap();
        let h = Hurst::new(0.35).unwrap();
        let b = sample_fbm(g, h, 1, 3, Method::Auto).unwrap();
        let r = skorohod_integral(&DerivedProcess::Noise, &b, Window::full(g), &SkorohodOptions::default()).unwrap();
        let cov = IncrementCovariance::new(g, h);
        let brute: f64 = (0..64).map(|i| (0..i).map(|k| cov.get(k, i)).sum::<f64>()).sum();
        assert!((r.correction[0] - brute).abs() < 1e-12 * brute.abs());
        let trap = SkorohodOptions {
            rule: CellRule::Trapezoid,
            ..Default::default()
        };
        let r = skorohod_integral(&DerivedProcess::Noise, &b, Window::full(g), &trap).unwrap();
        let bt = b.value(64)[0];
        assert!((r.value[0] - 0.5 * (bt * bt - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn deterministic_is_a_wiener_sum() {
        let g = TimeGrid::new(8, 0.25).unwrap();
        let b = sample_fbm(g, Hurst::new(0.6).unwrap(), 1, 3, Method::Auto).unwrap();
        let phi = StepFunction::indicator(g, 2, 6, &[2.0]).unwrap();
        let r = skorohod_integral(&DerivedProcess::Deterministic(&phi), &b, Window::full(g), &Default::default())
            .unwrap();
        assert_eq!(r.correction, vec![0.0]);
        assert!((r.value[0] - 2.0 * (b.value(6)[0] - b.value(2)[0])).abs() < 1e-14);
    }

    #[test]
    fn windows_must_sit_on_nodes() {
        let g = TimeGrid::new(8, 0.25).unwrap();
        assert!(Window::from_times(g, 0.5, 1.5).is_ok());
        assert!(Window::from_times(g, 0.3, 1.5).is_err());
        assert!(Window::from_times(g, 1.5, 0.5).is_err());
    }

    #[test]
    fn running_values_end_at_the_window_integral() {
        let (model, b, x) = setup(0.35, 40, 0.05);
        let it = DriftIntegrand { model: &model };
        for rule in [CellRule::Left, CellRule::Trapezoid] {
            let opts = SkorohodOptions {
                rule,
                ..Default::default()
            };
            for w in [Window::full(b.grid), Window::new(b.grid, 7, 23).unwrap()] {
                let proc = DerivedProcess::State(StateProcess::new(&model, &x, &it).unwrap());
                let run = skorohod_running(&proc, &b, w, &opts).unwrap();
                assert_eq!(run.len(), w.b - w.a + 1);
                for t in [w.a + 5, w.b] {
                    let sub = Window::new(b.grid, w.a, t).unwrap();
                    let want = skorohod_integral(&proc, &b, sub, &opts).unwrap().value;
                    for j in 0..2 {
                        assert!((run[t - w.a][j] - want[j]).abs() < 1e-12, "{rule:?} {t}");
                    }
                }
                let noise = skorohod_running(&DerivedProcess::Noise, &b, w, &opts).unwrap();
                let want = skorohod_integral(&DerivedProcess::Noise, &b, w, &opts).unwrap().value[0];
                assert!((noise[w.b - w.a][0] - want).abs() < 1e-12);
            }
        }
    }
}
