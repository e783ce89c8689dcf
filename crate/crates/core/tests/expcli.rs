use fracdrift::expcli::{config_hash, report, run_experiment, ExperimentConfig, ExperimentKind, Verdict};
use proptest::prelude::*;

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::preset(ExperimentKind::Maximal);
    c.hursts = vec![0.25, 0.8];
    c.g = "sin".parse().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, c.to_toml_string().unwrap()).unwrap();
    assert_eq!(ExperimentConfig::load(&path, Some(ExperimentKind::Maximal)).unwrap(), c);
    assert!(ExperimentConfig::load(&path, Some(ExperimentKind::Norms)).is_err());
}

#[test]
fn invalid_values_are_rejected() {
    for text in [
        "experiment = \"decay\"\nsteps = 0\n",
        "experiment = \"decay\"\nreps = -2\n",
        "experiment = \"decay\"\nhorizons = []\n",
        "experiment = \"decay\"\np = 0.5\n",
        "experiment = \"decay\"\ncsv = \"../x.csv\"\n",
        "experiment = \"decay\"\nmodel = \"quartic\"\n",
        "experiment = \"decay\"\n[extra]\nx = 1\n",
    ] {
        assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
    }
    let mut c = ExperimentConfig::preset(ExperimentKind::Decay);
    c.seed = u64::MAX;
    assert!(c.validate().is_err());
}

#[test]
fn report_schema() {
    let mut c = ExperimentConfig::preset(ExperimentKind::Norms);
    c.hursts = vec![0.4, 0.7];
    c.steps = 8;
    c.reps = 3;
    let campaign = run_experiment(&c).unwrap();
    assert!(campaign.all_pass());
    assert!(campaign.rows.iter().any(|r| r.criterion == "AC3" && r.verdict == Verdict::Pass));
    let dir = tempfile::tempdir().unwrap();
    let files = report(&campaign, dir.path()).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&files.summary).unwrap()).unwrap();
    assert_eq!(summary["experiment"], "norms");
    assert_eq!(summary["config_hash"], config_hash(&c).unwrap());
    assert_eq!(summary["rows"], campaign.rows.len());
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&files.metadata).unwrap()).unwrap();
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert!(files.detail.is_none());
    let mut rdr = csv::Reader::from_path(&files.csv).unwrap();
    assert_eq!(rdr.records().count(), campaign.rows.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn any_valid_overlay_round_trips(
        k in 0usize..6,
        reps in 1usize..100_000,
        seed in 0..=i64::MAX as u64,
        hs in prop::collection::vec(0.01f64..0.99, 1..5),
        tol in 1e-6f64..1.0,
    ) {
        let kind = ExperimentKind::ALL[k];
        let text = format!("reps = {reps}\nseed = {seed}\nhursts = {hs:?}\ntol_rel = {tol:?}\n");
        let c = ExperimentConfig::from_toml_str_for(&text, Some(kind)).unwrap();
        prop_assert_eq!(c.reps, reps);
        prop_assert_eq!(c.seed, seed);
        prop_assert_eq!(&c.hursts, &hs);
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        prop_assert_eq!(config_hash(&back).unwrap(), config_hash(&c).unwrap());
        prop_assert_eq!(back, c);
    }
}
