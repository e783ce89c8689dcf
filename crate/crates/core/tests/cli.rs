use std::path::Path;
use std::process::{Command, Output};

fn fracdrift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracdrift"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn sample_fbm_writes_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.csv");
    let o = fracdrift(&["sample-fbm", "--h", "0.3", "--n", "16", "--dt", "0.5", "--d", "2", "--seed", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,B1,B2");
    assert_eq!(lines.len(), 18);
    let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first, vec![0.0, 0.0, 0.0]);
    let last: Vec<f64> = lines[17].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 8.0);
}

#[test]
fn integrate_skorohod_and_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let sim = ["--model", "cubic", "--theta", "1,0.5", "--h", "0.6", "--n", "200", "--dt", "0.05"];
    let o = fracdrift(&[&["integrate"][..], &sim, &["--out", out.to_str().unwrap()]].concat());
    assert!(o.status.success());
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("t,X1\n"));

    let o = fracdrift(&[&["skorohod"][..], &sim, &["--g", "sin", "--window", "1,5", "--rule", "trapezoid"]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["metadata"]["window"], serde_json::json!([1.0, 5.0]));

    let o = fracdrift(&[&["estimate"][..], &sim, &["--reps", "3", "--mode", "oracle"]].concat());
    assert!(o.status.success());
    let rows: Vec<serde_json::Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["theta_hat"].as_array().unwrap().len(), 2);
}

#[test]
fn bad_input_exits_with_two() {
    let o = fracdrift(&["sample-fbm", "--h", "1.5", "--n", "4", "--dt", "1", "--out", "/dev/null"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "reps = 3\ncolour = \"red\"\n");
    let o = fracdrift(&["experiment", "norms", "--config", &cfg, "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn experiment_exit_code_follows_the_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let small = "hursts = [0.3, 0.7]\nsteps = 8\nreps = 4\n";
    let ok = write(dir.path(), "ok.toml", small);
    let out = dir.path().join("ok");
    let o = fracdrift(&["experiment", "norms", "--config", &ok, "--out-dir", out.to_str().unwrap(), "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("rows.csv")).unwrap();
    assert!(csv.starts_with("experiment,criterion,params,statistic,value,std_error,verdict\n"));
    for f in ["summary.json", "verdicts.json", "metadata.json"] {
        assert!(out.join(f).exists(), "{f}");
    }

    // an impossible tolerance must turn the run red
    let bad = write(dir.path(), "bad.toml", &format!("{small}tol_rel = -1.0\n"));
    let o = fracdrift(&["experiment", "norms", "--config", &bad, "--out-dir", dir.path().join("bad").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL"));
}
