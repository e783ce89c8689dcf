use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{increment_covariance, Hurst, IncrementCovariance, TimeGrid};
use crate::error::{Error, Result};
use crate::rng::path_rng;

/// Grids at or below this size use the Cholesky factor under [`Method::Auto`].
pub const AUTO_CHOLESKY_MAX_STEPS: usize = 32;

/// Relative tolerance below which negative circulant eigenvalues are treated as rounding noise.
const EMBEDDING_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Circulant,
    Cholesky,
    Auto,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circulant" => Ok(Self::Circulant),
            "cholesky" => Ok(Self::Cholesky),
            "auto" => Ok(Self::Auto),
            _ => Err(Error::Unknown {
                kind: "sampling method",
                name: s.to_string(),
            }),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Circulant => "circulant",
            Self::Cholesky => "cholesky",
            Self::Auto => "auto",
        })
    }
}

/// A sampled d-dimensional fBm path on a uniform grid.
#[derive(Debug, Clone)]
pub struct FbmPath {
    pub grid: TimeGrid,
    pub hurst: Hurst,
    pub d: usize,
    /// Increments `ΔB_i = B_{t_{i+1}} − B_{t_i}`, row-major `n_steps × d`.
    pub increments: Vec<f64>,
    /// Values `B_{t_i}`, row-major `(n_steps + 1) × d`; the first row is zero.
    pub values: Vec<f64>,
    pub seed: u64,
    pub path_index: u64,
    /// Resolved method (never `Auto`).
    pub method: Method,
}

impl FbmPath {
    /// Build a path from increments (used for synthetic noise in tests and experiments).
    pub fn from_increments(
        grid: TimeGrid,
        hurst: Hurst,
        d: usize,
        increments: Vec<f64>,
        seed: u64,
        path_index: u64,
        method: Method,
    ) -> Result<Self> {
        if increments.len() != grid.n_steps() * d {
            return Err(Error::Dimension {
                what: "fBm increments",
                expected: grid.n_steps() * d,
                got: increments.len(),
            });
        }
        let mut values = vec![0.0; (grid.n_steps() + 1) * d];
        for i in 0..grid.n_steps() {
            for c in 0..d {
                values[(i + 1) * d + c] = values[i * d + c] + increments[i * d + c];
            }
        }
        Ok(Self {
            grid,
            hurst,
            d,
            increments,
            values,
            seed,
            path_index,
            method,
        })
    }

    #[inline]
    pub fn increment(&self, i: usize) -> &[f64] {
        &self.increments[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        (0..self.grid.n_nodes()).map(|i| self.values[i * self.d + c]).collect()
    }

    /// Identifier used to tag derived objects.
    pub fn id(&self) -> String {
        format!("fbm:{}:{}:{}", self.seed, self.path_index, self.method)
    }
}

enum Factor {
    Circulant {
        /// `sqrt(λ_k / m)` for the length-`m = 2n` embedding.
        scale: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    Cholesky {
        lower: DMatrix<f64>,
    },
}

/// Exact-covariance sampler for d-dimensional fBm on a fixed grid.
///
/// Construction precomputes the circulant spectrum (or Cholesky factor);
/// the sampler is immutable afterwards and can be shared across threads.
pub struct FbmSampler {
    grid: TimeGrid,
    hurst: Hurst,
    d: usize,
    cov: IncrementCovariance,
    factor: Factor,
}

impl std::fmt::Debug for FbmSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FbmSampler")
            .field("grid", &self.grid)
            .field("hurst", &self.hurst)
            .field("d", &self.d)
            .field("method", &self.method())
            .finish()
    }
}

/// Eigenvalues of the minimal circulant embedding (size `2n`) of the increment covariance.
pub fn circulant_eigenvalues(cov: &IncrementCovariance) -> Vec<f64> {
    let mut buf = embedding_row(cov.n(), |k| cov.lag_value(k));
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

/// `c = (γ_0, …, γ_{n−1}, γ_n, γ_{n−1}, …, γ_1)`
fn embedding_row(n: usize, lag: impl Fn(usize) -> f64) -> Vec<Complex64> {
    let m = 2 * n;
    (0..m)
        .map(|j| {
            let k = if j <= n { j } else { m - j };
            Complex64::new(lag(k), 0.0)
        })
        .collect()
}

fn circulant_factor(n: usize, lag: impl Fn(usize) -> f64) -> Result<Factor> {
    let m = 2 * n;
    let mut buf = embedding_row(n, lag);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut buf);
    let max = buf.iter().map(|c| c.re).fold(0.0_f64, f64::max);
    let min = buf.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
    if min < -EMBEDDING_TOL * max {
        return Err(Error::Embedding { min_eigenvalue: min });
    }
    let scale = buf.iter().map(|c| (c.re.max(0.0) / m as f64).sqrt()).collect();
    Ok(Factor::Circulant { scale, fft })
}

impl FbmSampler {
    /// Sampler with automatic fallback to Cholesky when the embedding fails.
    pub fn new(grid: TimeGrid, hurst: Hurst, d: usize, method: Method) -> Result<Self> {
        Self::build(grid, hurst, d, method, true)
    }

    /// Like [`FbmSampler::new`] but an embedding failure under `Circulant` is an error.
    pub fn without_fallback(grid: TimeGrid, hurst: Hurst, d: usize, method: Method) -> Result<Self> {
        Self::build(grid, hurst, d, method, false)
    }

    fn build(grid: TimeGrid, hurst: Hurst, d: usize, method: Method, fallback: bool) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("fBm dimension must be positive".into()));
        }
        let cov = increment_covariance(grid, hurst);
        let want_cholesky = match method {
            Method::Cholesky => true,
            Method::Auto => grid.n_steps() <= AUTO_CHOLESKY_MAX_STEPS,
            Method::Circulant => false,
        };
        let factor = if want_cholesky {
            Self::cholesky(&cov)?
        } else {
            match Self::circulant(&cov) {
                Ok(f) => f,
                Err(Error::Embedding { .. }) if fallback => Self::cholesky(&cov)?,
                Err(e) => return Err(e),
            }
        };
        Ok(Self {
            grid,
            hurst,
            d,
            cov,
            factor,
        })
    }

    fn circulant(cov: &IncrementCovariance) -> Result<Factor> {
        circulant_factor(cov.n(), |k| cov.lag_value(k))
    }

    fn cholesky(cov: &IncrementCovariance) -> Result<Factor> {
        let dense = cov.dense();
        let n = dense.nrows();
        let chol = dense.cholesky().ok_or(Error::NotPositiveDefinite(n))?;
        Ok(Factor::Cholesky { lower: chol.l() })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn hurst(&self) -> Hurst {
        self.hurst
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn covariance(&self) -> &IncrementCovariance {
        &self.cov
    }

    /// The method actually in use.
    pub fn method(&self) -> Method {
        match self.factor {
            Factor::Circulant { .. } => Method::Circulant,
            Factor::Cholesky { .. } => Method::Cholesky,
        }
    }

    /// Number of standard normals consumed per component.
    pub fn normals_per_component(&self) -> usize {
        match &self.factor {
            Factor::Circulant { scale, .. } => 2 * scale.len(),
            Factor::Cholesky { lower } => lower.nrows(),
        }
    }

    /// Map one component's standard normals to increments (a linear map).
    ///
    /// For the Cholesky factor, a unit vector `e_k` produces column `k` of `L`.
    pub fn increments_from_normals(&self, normals: &[f64], out: &mut [f64]) {
        let n = self.grid.n_steps();
        assert_eq!(normals.len(), self.normals_per_component());
        assert_eq!(out.len(), n);
        match &self.factor {
            Factor::Circulant { scale, fft } => {
                let mut buf: Vec<Complex64> = scale
                    .iter()
                    .enumerate()
                    .map(|(k, s)| Complex64::new(s * normals[2 * k], s * normals[2 * k + 1]))
                    .collect();
                fft.process(&mut buf);
                for (o, c) in out.iter_mut().zip(&buf) {
                    *o = c.re;
                }
            }
            Factor::Cholesky { lower } => {
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, z) in normals.iter().enumerate().take(i + 1) {
                        acc += lower[(i, j)] * z;
                    }
                    *o = acc;
                }
            }
        }
    }

    /// Draw increments for every component from `rng` (row-major `n × d`).
    pub fn sample_increments_with(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.grid.n_steps();
        let k = self.normals_per_component();
        let mut normals = vec![0.0; k];
        let mut comp = vec![0.0; n];
        let mut out = vec![0.0; n * self.d];
        for c in 0..self.d {
            for z in normals.iter_mut() {
                *z = rng.sample(StandardNormal);
            }
            self.increments_from_normals(&normals, &mut comp);
            for (i, v) in comp.iter().enumerate() {
                out[i * self.d + c] = *v;
            }
        }
        out
    }

    /// Path number `path_index` of the stream keyed by `seed`.
    pub fn sample(&self, seed: u64, path_index: u64) -> FbmPath {
        let mut rng = path_rng(seed, path_index);
        let inc = self.sample_increments_with(&mut rng);
        FbmPath::from_increments(self.grid, self.hurst, self.d, inc, seed, path_index, self.method())
            .expect("sampler produces consistent dimensions")
    }
}

/// One-shot sampling of a single path.
pub fn sample_fbm(
    grid: TimeGrid,
    h: Hurst,
    d: usize,
    seed: u64,
    method: Method,
) -> Result<FbmPath> {
    Ok(FbmSampler::new(grid, h, d, method)?.sample(seed, 0))
}
