use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::Method;
use crate::malliavin::GFunction;
use crate::sde::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Consistency,
    Ergodic,
    Moments,
    Maximal,
    Decay,
    Norms,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Consistency,
        ExperimentKind::Ergodic,
        ExperimentKind::Moments,
        ExperimentKind::Maximal,
        ExperimentKind::Decay,
        ExperimentKind::Norms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Consistency => "consistency",
            ExperimentKind::Ergodic => "ergodic",
            ExperimentKind::Moments => "moments",
            ExperimentKind::Maximal => "maximal",
            ExperimentKind::Decay => "decay",
            ExperimentKind::Norms => "norms",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "experiment",
                name: s.to_string(),
            })
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Flat key-value configuration of a campaign.
///
/// Every key is optional in the file except `experiment`; missing keys take
/// the preset of that experiment ([`ExperimentConfig::preset`]). Unknown keys
/// are rejected.
///
/// | key | meaning |
/// |---|---|
/// | `experiment` | `consistency`, `ergodic`, `moments`, `maximal`, `decay`, `norms` |
/// | `model`, `theta`, `sigma`, `x0` | drift family, parameters, row-major `σ`, initial state |
/// | `g` | registry function for `u = g(X)` (`one`, `tanh`, `sin`, `identity`, `square`) |
/// | `hursts` | Hurst indices |
/// | `dt` | step of the long-horizon grids (consistency, ergodic) |
/// | `steps` | cells of the fixed grids (moments, maximal, decay, norms) |
/// | `horizons` | horizon schedule |
/// | `burn_in` | time after which the ergodic cross-path sample is taken |
/// | `window_start`, `window_ref`, `window_levels` | window ladder `window_ref·2^{−k}`, `k < window_levels` |
/// | `p` | moment order |
/// | `reps` | replications (paths, random functions) |
/// | `seed` | master seed, below 2^63 (TOML integers are signed) |
/// | `method` | fBm sampler (`circulant`, `cholesky`, `auto`) |
/// | `pivots` | Malliavin pivots; `0` means exact transported derivatives |
/// | `stride` | node thinning of the derivative increment check |
/// | `tol_slope`, `tol_upper`, `tol_rel`, `tol_abs`, `min_reduction` | verdict tolerances |
/// | `csv`, `detail_csv`, `summary`, `verdicts`, `metadata` | output file names inside the output directory |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelKind,
    pub theta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub x0: Vec<f64>,
    pub g: GFunction,
    pub hursts: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub horizons: Vec<f64>,
    pub burn_in: f64,
    pub window_start: f64,
    pub window_ref: f64,
    pub window_levels: usize,
    pub p: f64,
    pub reps: usize,
    pub seed: u64,
    pub method: Method,
    pub pivots: usize,
    pub stride: usize,
    pub tol_slope: f64,
    pub tol_upper: f64,
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub min_reduction: f64,
    pub csv: String,
    pub detail_csv: String,
    pub summary: String,
    pub verdicts: String,
    pub metadata: String,
}

impl ExperimentConfig {
    /// Defaults sized for the acceptance campaign of each experiment.
    pub fn preset(kind: ExperimentKind) -> Self {
        let mut c = Self {
            experiment: kind,
            model: ModelKind::Linear,
            theta: vec![1.0],
            sigma: vec![1.0],
            x0: vec![0.0],
            g: GFunction::Tanh,
            hursts: vec![0.35, 0.5, 0.7],
            dt: 0.01,
            steps: 1024,
            horizons: vec![1.0],
            burn_in: 20.0,
            window_start: 0.0,
            window_ref: 1.0,
            window_levels: 5,
            p: 2.0,
            reps: 1000,
            seed: 20_240_601,
            method: Method::Auto,
            pivots: 0,
            stride: 8,
            tol_slope: 0.1,
            tol_upper: 0.2,
            tol_rel: 0.05,
            tol_abs: 0.05,
            min_reduction: 2.0,
            csv: "rows.csv".into(),
            detail_csv: "detail.csv".into(),
            summary: "summary.json".into(),
            verdicts: "verdicts.json".into(),
            metadata: "metadata.json".into(),
        };
        match kind {
            ExperimentKind::Consistency => {
                c.dt = 160.0 / 32768.0;
                c.horizons = vec![10.0, 20.0, 40.0, 80.0, 160.0];
                c.reps = 100;
                c.p = 4.0;
            }
            ExperimentKind::Ergodic => {
                c.g = GFunction::Square;
                c.hursts = vec![0.5, 0.7];
                c.horizons = vec![500.0];
                c.dt = 500.0 / 65536.0;
                c.reps = 10_000;
            }
            ExperimentKind::Moments => {
                // Hölder lags 2^0..2^6 cells on [0, window_ref]; Z moments on `horizons`,
                // which start at T = 2 so that the transient from x0 = 0 stays out of the slope
                c.window_levels = 7;
                c.steps = 2048;
                c.horizons = vec![2.0, 4.0, 8.0, 16.0, 32.0];
                c.tol_slope = 0.15;
                c.tol_upper = 0.15;
                c.tol_abs = 0.02;
            }
            ExperimentKind::Maximal => {
                c.steps = 256;
                c.window_start = 4.0;
            }
            ExperimentKind::Decay => {
                c.hursts = vec![0.35, 0.7];
                c.steps = 512;
                c.horizons = vec![8.0];
                c.reps = 20;
                c.pivots = 8;
                c.tol_rel = 0.1;
            }
            ExperimentKind::Norms => {
                c.hursts = vec![0.3, 0.4, 0.45, 0.7];
                c.steps = 16;
                c.reps = 50;
                c.tol_rel = 1e-3;
                c.tol_abs = 1e-10;
            }
        }
        c
    }

    /// Parse a TOML document; keys not given take the preset of `experiment`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_str_for(text, None)
    }

    /// As [`from_toml_str`](Self::from_toml_str), with `kind` used when the file has no
    /// `experiment` key. A file naming a different experiment is an error.
    pub fn from_toml_str_for(text: &str, kind: Option<ExperimentKind>) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let named = match user.get("experiment") {
            None => None,
            Some(v) => Some(
                v.as_str()
                    .ok_or_else(|| Error::Config("'experiment' must be a string".into()))?
                    .parse::<ExperimentKind>()?,
            ),
        };
        let kind = match (named, kind) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!("config is for '{a}', not '{b}'")));
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(Error::Config("missing string key 'experiment'".into())),
        };
        let mut merged = toml::Table::try_from(Self::preset(kind)).map_err(|e| Error::Config(format!("{e}")))?;
        for (k, v) in user {
            merged.insert(k, v);
        }
        let cfg: Self = merged.try_into().map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, kind: Option<ExperimentKind>) -> Result<Self> {
        Self::from_toml_str_for(&std::fs::read_to_string(path)?, kind)
    }

    /// Canonical TOML with every key present.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("{e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.hursts.is_empty() || self.hursts.iter().any(|h| !(*h > 0.0 && *h < 1.0)) {
            return bad(format!("hursts must be a nonempty list in (0, 1), got {:?}", self.hursts));
        }
        if self.horizons.is_empty() || self.horizons.iter().any(|t| !(*t > 0.0)) {
            return bad(format!("horizons must be positive, got {:?}", self.horizons));
        }
        if !(self.dt > 0.0) || self.steps == 0 || self.reps == 0 {
            return bad("dt, steps and reps must be positive".into());
        }
        if !(self.p >= 1.0) {
            return bad(format!("p must be at least 1, got {}", self.p));
        }
        if !(self.window_ref > 0.0) || self.window_start < 0.0 || self.window_levels < 2 {
            return bad("window ladder needs window_ref > 0, window_start ≥ 0, window_levels ≥ 2".into());
        }
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed {} does not fit a TOML integer", self.seed));
        }
        for name in [&self.csv, &self.detail_csv, &self.summary, &self.verdicts, &self.metadata] {
            if name.is_empty() || name.contains('/') || name.contains('\\') {
                return bad(format!("output name '{name}' must be a plain file name"));
            }
        }
        Ok(())
    }
}
