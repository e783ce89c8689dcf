use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{Campaign, ExperimentConfig, Verdict};
use crate::error::{Error, Result};

/// Per-criterion verdict: `fail` if any row fails, `pass` if some row passes, else `info`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerdictEntry {
    pub criterion: String,
    pub verdict: Verdict,
    pub rows: usize,
    pub failed_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary<'a> {
    pub experiment: String,
    pub config_hash: String,
    pub config: &'a ExperimentConfig,
    pub rows: usize,
    pub passed: usize,
    pub failed: usize,
    pub info: usize,
    pub all_pass: bool,
    pub verdicts: Vec<VerdictEntry>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    config_hash: &'a str,
    version: &'static str,
    timestamp_unix: u64,
    timing_seconds: Vec<(&'a str, f64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub detail: Option<PathBuf>,
    pub summary: PathBuf,
    pub verdicts: PathBuf,
    pub metadata: PathBuf,
}

/// SHA-256 of the canonical TOML form, as lowercase hex.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let digest = Sha256::digest(cfg.to_toml_string()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn verdicts(c: &Campaign) -> Vec<VerdictEntry> {
    let mut out: Vec<VerdictEntry> = Vec::new();
    for row in &c.rows {
        let idx = match out.iter().position(|e| e.criterion == row.criterion) {
            Some(i) => i,
            None => {
                out.push(VerdictEntry {
                    criterion: row.criterion.clone(),
                    verdict: Verdict::Info,
                    rows: 0,
                    failed_rows: 0,
                });
                out.len() - 1
            }
        };
        let e = &mut out[idx];
        e.rows += 1;
        match row.verdict {
            Verdict::Fail => {
                e.failed_rows += 1;
                e.verdict = Verdict::Fail;
            }
            Verdict::Pass if e.verdict == Verdict::Info => e.verdict = Verdict::Pass,
            _ => {}
        }
    }
    out
}

/// Write the CSV rows, the optional per-replication table, the JSON summary,
/// the verdict file and the metadata file into `out_dir`.
///
/// Only the metadata file carries the timestamp and wall-clock timings.
pub fn report(c: &Campaign, out_dir: &Path) -> Result<ReportFiles> {
    let cfg = &c.config;
    std::fs::create_dir_all(out_dir)?;
    let hash = config_hash(cfg)?;
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));

    let csv_path = out_dir.join(&cfg.csv);
    let mut w = csv::Writer::from_path(&csv_path).map_err(csv_err)?;
    for row in &c.rows {
        w.serialize(row).map_err(csv_err)?;
    }
    if c.rows.is_empty() {
        w.write_record(["experiment", "criterion", "params", "statistic", "value", "std_error", "verdict"])
            .map_err(csv_err)?;
    }
    w.flush()?;

    let detail = match &c.detail {
        Some(text) => {
            let p = out_dir.join(&cfg.detail_csv);
            std::fs::write(&p, text)?;
            Some(p)
        }
        None => None,
    };

    let verdict_list = verdicts(c);
    let count = |v: Verdict| c.rows.iter().filter(|r| r.verdict == v).count();
    let summary = Summary {
        experiment: cfg.experiment.to_string(),
        config_hash: hash.clone(),
        config: cfg,
        rows: c.rows.len(),
        passed: count(Verdict::Pass),
        failed: count(Verdict::Fail),
        info: count(Verdict::Info),
        all_pass: c.all_pass(),
        verdicts: verdict_list.clone(),
    };
    let summary_path = out_dir.join(&cfg.summary);
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    let verdict_path = out_dir.join(&cfg.verdicts);
    std::fs::write(&verdict_path, serde_json::to_string_pretty(&verdict_list)? + "\n")?;

    let meta = Metadata {
        config_hash: &hash,
        version: env!("CARGO_PKG_VERSION"),
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        timing_seconds: c.timing.iter().map(|(k, v)| (k.as_str(), *v)).collect(),
    };
    let meta_path = out_dir.join(&cfg.metadata);
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")?;

    Ok(ReportFiles {
        csv: csv_path,
        detail,
        summary: summary_path,
        verdicts: verdict_path,
        metadata: meta_path,
    })
}
