use std::fs;
use std::process::Command;

fn nlwave() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nlwave"))
}

#[test]
fn criteria_subcommand() {
    let out = nlwave()
        .args(["criteria", "--m0", "-1", "--M0", "0", "--c0", "0"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["condition_holds"], true);
    let t = v["t_star_main"].as_f64().unwrap();
    assert!((t - 0.9128709291752768).abs() < 1e-12);
}

#[test]
fn configuration_errors_exit_one() {
    let bad = nlwave().args(["criteria", "--m0", "1", "--M0", "0", "--c0", "0"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let usage = nlwave().arg("no-such-command").output().unwrap();
    assert_eq!(usage.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"initial": {"family": "Triangle"}}"#).unwrap();
    let out = nlwave().arg("simulate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let missing = nlwave().args(["simulate", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn simulate_and_sweep_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"grid": {"n_points": 256, "half_length": 20.0},
            "stepper": {"dt0": 0.01, "t_max": 0.2, "adaptive": true, "dt_min": 1e-8,
                        "slope_blowup_threshold": 1e4, "spectral_tail_fraction_max": 1e-6,
                        "record_every": 5},
            "initial": {"family": "Gaussian", "amplitude": 0.1, "width": 2.0}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let status = nlwave()
        .arg("simulate")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--record-every", "2"])
        .output()
        .unwrap();
    assert!(status.status.success());
    for f in ["series.csv", "result.json", "m_vs_t.csv", "inv_m_fit.csv", "conserved.csv", "snapshots_xh.csv", "summary.txt"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["config_echo"]["stepper"]["record_every"], 2);

    let sweep_dir = dir.path().join("sweep");
    let status = nlwave()
        .arg("sweep")
        .arg(&cfg)
        .args(["--axis", "initial.amplitude", "--values=0.05,0.1", "--workers", "2", "--out"])
        .arg(&sweep_dir)
        .output()
        .unwrap();
    assert!(status.status.success());
    let summary = fs::read_to_string(sweep_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(sweep_dir.join("run_001/series.csv").exists());
}

#[test]
fn oracle_check_passes() {
    let out = nlwave().args(["oracle-check", "--count", "5"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["max_rel_error"].as_f64().unwrap() < 1e-6);
}
