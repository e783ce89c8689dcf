//! Inner products and norms on step functions of the fBm reproducing space.
//!
//! A [`StepFunction`] is piecewise constant on the cells `[t_i, t_{i+1})` of a
//! uniform grid. Its inner products reduce to finite sums against the grid
//! increment covariance; the auxiliary norms used to bound them are computed
//! in closed form where possible and by endpoint-adapted quadrature otherwise.

use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Error, Result};
use crate::fbm::{covariance_unchecked, Hurst, IncrementCovariance, Regime, TimeGrid};
use crate::quadrature::TanhSinh;

/// An `R^d`-valued step function on the cells of a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    grid: TimeGrid,
    d: usize,
    /// Row-major `n_steps × d`.
    values: Vec<f64>,
    support: Range<usize>,
}

impl StepFunction {
    pub fn new(grid: TimeGrid, d: usize, values: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return domain("step function dimension must be positive");
        }
        if values.len() != grid.n_steps() * d {
            return Err(Error::Dimension {
                what: "step function values",
                expected: grid.n_steps() * d,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("step function values must be finite");
        }
        let nonzero = |i: &usize| values[i * d..(i + 1) * d].iter().any(|v| *v != 0.0);
        let n = grid.n_steps();
        let lo = (0..n).find(nonzero).unwrap_or(0);
        let hi = (0..n).rev().find(nonzero).map_or(0, |i| i + 1);
        Ok(Self {
            grid,
            d,
            values,
            support: lo..hi.max(lo),
        })
    }

    pub fn zero(grid: TimeGrid, d: usize) -> Self {
        Self::new(grid, d, vec![0.0; grid.n_steps() * d]).expect("zero function is valid")
    }

    /// `level · 1_{[t_a, t_b)}` for grid nodes `a ≤ b`.
    pub fn indicator(grid: TimeGrid, a: usize, b: usize, level: &[f64]) -> Result<Self> {
        if a > b || b > grid.n_steps() {
            return domain(format!("bad indicator nodes [{a}, {b}) on {} steps", grid.n_steps()));
        }
        let d = level.len();
        let mut values = vec![0.0; grid.n_steps() * d];
        for i in a..b {
            values[i * d..(i + 1) * d].copy_from_slice(level);
        }
        Self::new(grid, d, values)
    }

    /// I.i.d. standard normal levels on every cell.
    pub fn random(grid: TimeGrid, d: usize, rng: &mut ChaCha8Rng) -> Self {
        let values = (0..grid.n_steps() * d).map(|_| rng.sample(StandardNormal)).collect();
        Self::new(grid, d, values).expect("finite random levels")
    }

    #[inline]
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cells carrying nonzero values (empty for the zero function).
    pub fn support(&self) -> Range<usize> {
        self.support.clone()
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_empty()
    }

    /// `a·self + other`
    pub fn axpy(&self, a: f64, other: &Self) -> Result<Self> {
        check_compatible(self, other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + y).collect();
        Self::new(self.grid, self.d, values)
    }

    pub fn abs(&self) -> Self {
        Self::new(self.grid, self.d, self.values.iter().map(|v| v.abs()).collect())
            .expect("abs keeps values finite")
    }
}

fn check_compatible(a: &StepFunction, b: &StepFunction) -> Result<()> {
    if a.grid != b.grid {
        return domain("step functions live on different grids");
    }
    if a.d != b.d {
        return Err(Error::Dimension {
            what: "step function dimension",
            expected: a.d,
            got: b.d,
        });
    }
    Ok(())
}

/// `⟨1_{[a,b]}, 1_{[c,d]}⟩_ℌ = R(b,d) − R(b,c) − R(a,d) + R(a,c)`.
pub fn inner_product_indicator(a: f64, b: f64, c: f64, d: f64, h: Hurst) -> Result<f64> {
    if a < 0.0 || c < 0.0 {
        return domain(format!("indicator endpoints must be nonnegative, got {a}, {c}"));
    }
    if a > b || c > d {
        return domain(format!("reversed endpoints [{a}, {b}] or [{c}, {d}]"));
    }
    Ok(indicator_product_unchecked(a, b, c, d, h.two_h()))
}

#[inline]
pub(crate) fn indicator_product_unchecked(a: f64, b: f64, c: f64, d: f64, two_h: f64) -> f64 {
    covariance_unchecked(b, d, two_h) - covariance_unchecked(b, c, two_h)
        - covariance_unchecked(a, d, two_h)
        + covariance_unchecked(a, c, two_h)
}

/// `⟨φ, ψ⟩_{ℌ^d} = Σ_i Σ_j ⟨φ_i, ψ_j⟩_{R^d} γ_{ij}`.
pub fn step_inner_product(phi: &StepFunction, psi: &StepFunction, h: Hurst) -> Result<f64> {
    check_compatible(phi, psi)?;
    let cov = IncrementCovariance::new(phi.grid, h);
    Ok(step_inner_product_with(phi, psi, &cov))
}

/// Same as [`step_inner_product`] with a precomputed covariance.
pub fn step_inner_product_with(phi: &StepFunction, psi: &StepFunction, cov: &IncrementCovariance) -> f64 {
    let d = phi.d;
    let mut total = 0.0;
    for i in phi.support() {
        let a = phi.value(i);
        for j in psi.support() {
            let b = psi.value(j);
            let dot: f64 = (0..d).map(|c| a[c] * b[c]).sum();
            if dot != 0.0 {
                total += dot * cov.get(i, j);
            }
        }
    }
    total
}

pub fn h_norm_sq(phi: &StepFunction, h: Hurst) -> Result<f64> {
    step_inner_product(phi, phi, h)
}

/// `∫_a^b ∫_c^d |r − s|^{2H−2} dr ds` for `H > 1/2`, from the antiderivative of the signed power.
pub fn pair_kernel_integral(a: f64, b: f64, c: f64, d: f64, h: Hurst) -> f64 {
    let two_h = h.two_h();
    let norm = two_h * (two_h - 1.0);
    // F(x) = |x|^{2H} / (2H(2H−1)) satisfies F'' = |x|^{2H−2}
    let f = |x: f64| x.abs().powf(two_h) / norm;
    -(f(b - d) - f(b - c) - f(a - d) + f(a - c))
}

/// `‖φ‖²_{|ℌ|} = α_H Σ_j ∫∫ |φ^j_r| |φ^j_s| |r − s|^{2H−2} dr ds` with `α_H = H(2H − 1)`.
pub fn abs_norm_sq(phi: &StepFunction, h: Hurst) -> Result<f64> {
    if h.regime() != Regime::Smooth {
        return Err(Error::Regime(format!("|ℌ| norm needs H > 1/2, got {h}")));
    }
    let alpha = h.value() * (h.two_h() - 1.0);
    let g = phi.grid;
    let d = phi.d;
    let mut total = 0.0;
    for i in phi.support() {
        let (a, b) = (g.t(i), g.t(i + 1));
        let pi = phi.value(i);
        for j in phi.support() {
            let pj = phi.value(j);
            let weight: f64 = (0..d).map(|c| pi[c].abs() * pj[c].abs()).sum();
            if weight != 0.0 {
                total += weight * pair_kernel_integral(a, b, g.t(j), g.t(j + 1), h);
            }
        }
    }
    Ok(alpha * total)
}

/// `‖φ‖_{|ℌ|}`
pub fn abs_norm_high(phi: &StepFunction, h: Hurst) -> Result<f64> {
    abs_norm_sq(phi, h).map(f64::sqrt)
}

/// `‖φ‖_{L^{1/H}}` with the Euclidean norm on `R^d`.
pub fn lp_inverse_h_norm(phi: &StepFunction, h: Hurst) -> f64 {
    let p = 1.0 / h.value();
    let dt = phi.grid.dt();
    let s: f64 = phi
        .support()
        .map(|i| {
            let v = phi.value(i);
            v.iter().map(|x| x * x).sum::<f64>().sqrt().powf(p) * dt
        })
        .sum();
    s.powf(h.value())
}

/// Decomposition of `‖φ‖²_{K_T}` into its two parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KtNorm {
    /// `∫_0^T |φ(t)|² ((T−t)^{2H−1} + t^{2H−1}) dt`
    pub weighted_l2: f64,
    /// `∫_0^T (∫_s^T |φ(t) − φ(s)| (t−s)^{H−3/2} dt)² ds`
    pub increment_part: f64,
}

impl KtNorm {
    pub fn squared(&self) -> f64 {
        self.weighted_l2 + self.increment_part
    }
}

/// `‖φ‖²_{K_T}` for `H < 1/2` and `supp φ ⊆ [0, T]`.
///
/// The weighted part and the inner integral are exact per cell; the outer
/// integral uses tanh-sinh on each cell, whose right end carries the
/// `(t_{i+1} − s)^{2H−1}` singularity.
pub fn kt_norm(phi: &StepFunction, h: Hurst, horizon: f64) -> Result<KtNorm> {
    if h.regime() != Regime::Rough {
        return Err(Error::Regime(format!("K_T norm needs H < 1/2, got {h}")));
    }
    let g = phi.grid;
    if !phi.is_zero() && g.t(phi.support().end) > horizon * (1.0 + 1e-12) {
        return domain(format!(
            "support ends at {} beyond horizon {horizon}",
            g.t(phi.support().end)
        ));
    }
    let hv = h.value();
    let two_h = h.two_h();
    let d = phi.d;
    let n = g.n_steps();
    let sq = |i: usize| phi.value(i).iter().map(|x| x * x).sum::<f64>();

    let mut weighted = 0.0;
    for i in phi.support() {
        let (a, b) = (g.t(i), g.t(i + 1).min(horizon));
        let w = ((horizon - a).powf(two_h) - (horizon - b).max(0.0).powf(two_h) + b.powf(two_h)
            - a.powf(two_h))
            / two_h;
        weighted += sq(i) * w;
    }

    // |φ_k − φ_i| for the cell pairs, plus the jump to zero beyond the grid
    let diff = |i: usize, k: usize| -> f64 {
        let (a, b) = (phi.value(i), phi.value(k));
        (0..d).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>().sqrt()
    };
    let p = hv - 0.5;
    let inv = 1.0 / (0.5 - hv);
    let ts = TanhSinh::with_tol(1e-9);
    let mut increment = 0.0;
    let last_cell = n.min(((horizon / g.dt()).ceil() as usize).max(1));
    for i in 0..last_cell {
        let right = g.t(i + 1);
        let has_jump = (i + 1..n).any(|k| diff(i, k) > 0.0) || (horizon > g.horizon() && sq(i) > 0.0);
        if !has_jump {
            continue;
        }
        let tail = horizon - g.horizon();
        let v = ts.integrate(g.t(i), right, |_, _, db| {
            // ∫_{cell k} (t − s)^{H−3/2} dt = ((t_k − s)^{H−1/2} − (t_{k+1} − s)^{H−1/2}) / (1/2 − H)
            let mut inner = 0.0;
            for k in i + 1..n {
                let w = diff(i, k);
                if w == 0.0 {
                    continue;
                }
                let lo = g.t(k) - right + db;
                let hi = g.t(k + 1) - right + db;
                inner += w * (lo.powf(p) - hi.powf(p)) * inv;
            }
            if tail > 0.0 {
                let lo = g.horizon() - right + db;
                let hi = horizon - right + db;
                inner += sq(i).sqrt() * (lo.powf(p) - hi.powf(p)) * inv;
            }
            inner * inner
        })?;
        increment += v;
    }
    Ok(KtNorm {
        weighted_l2: weighted,
        increment_part: increment,
    })
}
