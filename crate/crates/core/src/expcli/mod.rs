//! Experiment harness: configuration, campaigns and reports.
//!
//! A campaign is fully determined by its [`ExperimentConfig`]; every random
//! stream is keyed by the master seed and a replication index, and rows are
//! reduced in index order, so reruns are byte-identical.

mod campaigns;
mod config;
mod report;

pub use campaigns::{
    run_consistency, run_decay_campaign, run_ergodic, run_maximal_inequality, run_moment_scaling,
    run_norm_inequalities, stationary_variance_fou,
};
pub use config::{ExperimentConfig, ExperimentKind};
pub use report::{config_hash, report, ReportFiles, Summary, VerdictEntry};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Reported statistic without a threshold.
    Info,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// One line of a campaign report.
///
/// `criterion` names the acceptance criterion (`AC1` … `AC11`) or the module
/// invariant (`moments.z_wiener`, …) the row belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub criterion: String,
    /// `key=value` pairs joined by `;`.
    pub params: String,
    pub statistic: String,
    pub value: f64,
    pub std_error: Option<f64>,
    pub verdict: Verdict,
}

impl ReportRow {
    pub fn new(experiment: ExperimentKind, criterion: &str, params: String, statistic: &str, value: f64) -> Self {
        Self {
            experiment: experiment.to_string(),
            criterion: criterion.to_string(),
            params,
            statistic: statistic.to_string(),
            value,
            std_error: None,
            verdict: Verdict::Info,
        }
    }

    pub fn se(mut self, se: f64) -> Self {
        self.std_error = Some(se);
        self
    }

    pub fn judged(mut self, ok: bool) -> Self {
        self.verdict = Verdict::from_bool(ok);
        self
    }
}

/// Rows of one campaign plus an optional per-replication table.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    /// CSV text of the per-replication table (consistency only).
    pub detail: Option<String>,
    /// Wall-clock measurements; written to the metadata file only.
    pub timing: Vec<(String, f64)>,
}

impl Campaign {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.verdict != Verdict::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.verdict == Verdict::Fail)
    }
}

/// Dispatch on the experiment kind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Campaign> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::Consistency => run_consistency(cfg),
        ExperimentKind::Ergodic => run_ergodic(cfg),
        ExperimentKind::Moments => run_moment_scaling(cfg),
        ExperimentKind::Maximal => run_maximal_inequality(cfg),
        ExperimentKind::Decay => run_decay_campaign(cfg),
        ExperimentKind::Norms => run_norm_inequalities(cfg),
    }
}

/// [`run_experiment`] on a dedicated pool of `workers` threads (`None`: rayon's default).
pub fn run_with_workers(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<Campaign> {
    match workers {
        None => run_experiment(cfg),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            pool.install(|| run_experiment(cfg))
        }
    }
}
