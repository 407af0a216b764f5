use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cyclical(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cyclical")).args(args).output().expect("binary runs")
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn unknown_reproduce_name_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = cyclical(&["--preset", "toy3d", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("toy1d-equal"));
}

#[test]
fn unknown_config_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"mode": "lyapunov", "lyapunov_typo": {}}"#);
    let out = cyclical(&["--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn missing_section_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"mode": "spectral", "target": {"preset": "toy1d-equal"}}"#);
    assert_eq!(cyclical(&["--config", &cfg]).status.code(), Some(2));
}

#[test]
fn no_config_or_preset_exits_2() {
    assert_eq!(cyclical(&[]).status.code(), Some(2));
}

#[test]
fn spectral_report_has_profile_and_recursion() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{
  "mode": "spectral",
  "out": {:?},
  "target": {{"preset": "toy1d-equal"}},
  "spectral": {{"N": 30, "m": 2, "interval": [-10, 10], "L": 32, "cycles": 3, "L_list": [32, 64], "random_chains": 2}}
}}"#,
            out_dir
        ),
    );
    let out = cyclical(&["--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out_dir);
    let results = &r["results"];
    assert_eq!(results["alpha"].as_array().unwrap().len(), 32);
    assert_eq!(results["lambda"].as_array().unwrap().len(), 32);
    assert!(results["capital_lambda"].as_f64().unwrap() > 0.0);
    assert_eq!(results["recursion_ok"], Value::Bool(true));
    // The report carries the defaulted config for replay.
    assert_eq!(r["config"]["spectral"]["path_nodes"], 32);
    for f in r["files"].as_array().unwrap() {
        assert!(out_dir.join(f.as_str().unwrap()).exists(), "{f}");
    }
}

#[test]
fn report_is_deterministic_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("timing");
        v
    };
    assert!(cyclical(&["--preset", "theorem2-demo", "--replicas", "200", "--out", out]).status.success());
    let first = strip(report(dir.path()));
    let escape = std::fs::read(dir.path().join("theorem2_regions.csv")).unwrap();
    assert!(cyclical(&["--preset", "theorem2-demo", "--replicas", "200", "--out", out]).status.success());
    assert_eq!(first, strip(report(dir.path())));
    assert_eq!(escape, std::fs::read(dir.path().join("theorem2_regions.csv")).unwrap());
}

#[test]
fn seed_flag_changes_samples() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cfg = write_config(
        dir.path(),
        r#"{"mode": "run", "target": {"preset": "toy1d-equal"},
  "run": {"K": 20, "schedule": {"L": 50, "r": 1.0},
          "proposal": {"family": "gaussian-isotropic", "base_variance": 0.25, "q": 1.0},
          "init": {"kind": "point-mass", "point": [0.0]}}}"#,
    );
    for (seed, out) in [("1", &a), ("2", &b)] {
        let o = cyclical(&["--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_ne!(std::fs::read(a.join("samples.csv")).unwrap(), std::fs::read(b.join("samples.csv")).unwrap());
}

#[test]
fn lyapunov_reproduce_prints_failing_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = cyclical(&["--preset", "lyapunov-demo", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max_violation_s1_c1"), "{stdout}");
    assert!(dir.path().join("lyapunov.csv").exists());
}
