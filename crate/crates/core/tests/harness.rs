use std::fs;
use std::path::Path;

use nlwave::diagnostics::{DiagnosticsRecord, BOUND_SLACK};
use nlwave::harness::config::{Family, GridSpec, InitialDataSpec, RunConfig};
use nlwave::harness::report::emit_report;
use nlwave::harness::runner::{
    evaluate_criterion, run_single, run_sweep, simulate, SWEEP_HEADER,
};
use nlwave::harness::compare_fw;
use nlwave::integrator::{run, StepperConfig, StopReason};
use nlwave::model::ModelKind;
use nlwave::spectral::{Grid, RealField};

fn quiet(dir: &Path) -> RunConfig {
    RunConfig {
        grid: GridSpec {
            n_points: 512,
            half_length: 20.0,
        },
        stepper: StepperConfig {
            dt0: 5e-3,
            t_max: 0.5,
            record_every: 20,
            ..StepperConfig::default()
        },
        initial: InitialDataSpec {
            family: Family::Gaussian,
            amplitude: 0.2,
            width: 2.0,
            ..InitialDataSpec::default()
        },
        output_dir: dir.to_path_buf(),
        ..RunConfig::default()
    }
}

fn breaking(dir: &Path) -> RunConfig {
    RunConfig {
        grid: GridSpec {
            n_points: 4096,
            half_length: 8.0,
        },
        stepper: StepperConfig {
            dt0: 3e-4,
            t_max: 5.0,
            record_every: 500,
            ..StepperConfig::default()
        },
        initial: InitialDataSpec {
            threshold_multiple: Some(2.0),
            ..InitialDataSpec::default()
        },
        blowup_growth_factor: Some(10.0),
        output_dir: dir.to_path_buf(),
        ..RunConfig::default()
    }
}

fn csv_header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn zero_datum_reaches_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quiet(dir.path());
    cfg.initial.amplitude = 0.0;
    let out = run_single(&cfg).unwrap();
    assert_eq!(out.result.stop, StopReason::HorizonReached);
    assert!(!out.result.verdict.condition_holds);
    assert!(out.result.theorem_consistent);
    assert!(out.result.t_sim.is_none());
}

#[test]
fn series_schema_and_reproducibility() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_single(&quiet(a.path())).unwrap();
    run_single(&quiet(b.path())).unwrap();
    let sa = fs::read(a.path().join("series.csv")).unwrap();
    let sb = fs::read(b.path().join("series.csv")).unwrap();
    assert_eq!(sa, sb);
    assert_eq!(csv_header(&a.path().join("series.csv")), DiagnosticsRecord::CSV_HEADER);
    assert_eq!(
        DiagnosticsRecord::CSV_HEADER,
        "t,mass,energy,m,M,x_at_m,x_at_M,h_inf,comm_dx_sup,lx_hx_sup,tail_fraction,dt_used"
    );
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("result.json")).unwrap()).unwrap();
    for key in ["verdict", "stop", "T_sim", "rate_fit", "theorem_consistent", "series_path", "snapshots_path", "config_echo"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    let echo: RunConfig = serde_json::from_value(json["config_echo"].clone()).unwrap();
    assert_eq!(echo, quiet(a.path()));
    let index = fs::read_to_string(a.path().join("snapshots/index.csv")).unwrap();
    assert!(index.starts_with("index,t,file\n"));
    assert_eq!(csv_header(&a.path().join("snapshots/snap_00000.csv")), "x,value");
}

#[test]
fn quiet_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(&quiet(dir.path())).unwrap();
    let report = dir.path().join("report");
    let files = emit_report(&[out], &report).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        ["m_vs_t.csv", "inv_m_fit.csv", "conserved.csv", "snapshots_xh.csv", "summary.txt"]
    );
    assert!(emit_report(&[], &report).is_err());
}

#[test]
fn breaking_run_properties() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_single(&breaking(dir.path())).unwrap();
    let r = &out.result;
    assert_eq!(r.stop, StopReason::BreakingDetected);
    assert!(r.theorem_consistent);
    let t_sim = r.t_sim.unwrap();
    assert!(t_sim <= r.verdict.t_star_main.unwrap());
    let fit = r.rate_fit.expect("breaking runs carry a rate fit");
    assert!((1.35..=1.65).contains(&fit.slope), "{fit:?}");

    let records = &out.trajectory.records;
    let first = records[0];
    let mut previous_dt = f64::INFINITY;
    for (i, rec) in records.iter().enumerate() {
        assert!(rec.m <= rec.big_m);
        assert!(rec.lx_hx_sup <= 0.5 * (rec.big_m - rec.m) + BOUND_SLACK);
        if rec.t <= 0.9 * t_sim {
            assert!((rec.mass - first.mass).abs() / (1.0 + first.mass.abs()) < 1e-10);
            assert!((rec.energy - first.energy).abs() / first.energy < 1e-6);
        }
        if i >= 2 && rec.m < records[i - 1].m {
            assert!(rec.dt_used <= previous_dt, "dt grew at t = {}", rec.t);
        }
        if i >= 1 {
            previous_dt = rec.dt_used;
        }
    }
    assert!(r.checks.final_decreasing_steps >= 10);

    let report = dir.path().join("report");
    emit_report(std::slice::from_ref(&out), &report).unwrap();
    let text = fs::read_to_string(report.join("inv_m_fit.csv")).unwrap();
    assert!(text.starts_with("t,inv_m,fit_inv_m,in_window\n"));
    let fitted: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .filter(|l| l.ends_with(",1"))
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            (cols[0].parse().unwrap(), cols[2].parse().unwrap())
        })
        .collect();
    let (t0, y0) = fitted[0];
    let (t1, y1) = fitted[fitted.len() - 1];
    assert!(((y1 - y0) / (t1 - t0) - 1.5).abs() < 0.15);
}

#[test]
fn fornberg_whitham_shares_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = breaking(dir.path());
    cfg.stepper.t_max = 0.2;
    let (a, b) = compare_fw(&cfg).unwrap();
    let keys = |r| -> Vec<String> {
        let v = serde_json::to_value(r).unwrap();
        v.as_object().unwrap().keys().cloned().collect()
    };
    assert_eq!(keys(&a.result), keys(&b.result));
    assert_eq!(b.result.config_echo.model, ModelKind::FornbergWhitham);
    emit_report(&[a, b], dir.path()).unwrap();
    assert_eq!(csv_header(&dir.path().join("difference_norms.csv")), "t,linf,l2");
    assert!(dir.path().join("nonlocal/summary.txt").exists());
    assert!(dir.path().join("fornberg_whitham/series.csv").exists());
}

#[test]
fn sweep_flips_at_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quiet(dir.path());
    cfg.initial.family = Family::DGaussian;
    cfg.initial.width = 1.0;
    cfg.stepper.t_max = 0.05;
    cfg.write_snapshots = false;
    let values = [-0.1, -0.2, -0.3, -0.4, -0.5, -0.6, -0.8, -1.0];
    let sweep = run_sweep(&cfg, "initial.target_m0", &values, 2).unwrap();
    let text = fs::read_to_string(&sweep.summary_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), SWEEP_HEADER);
    assert_eq!(lines.count(), values.len());
    for (v, r) in values.iter().zip(&sweep.results) {
        let mut single = cfg.clone();
        single.initial.target_m0 = Some(*v);
        let (_, verdict) = evaluate_criterion(&single).unwrap();
        let thr = verdict.threshold1.min(verdict.threshold2);
        assert_eq!(r.verdict.condition_holds, *v < thr, "value {v}, threshold {thr}");
    }
    let holds: Vec<bool> = sweep.results.iter().map(|r| r.verdict.condition_holds).collect();
    let flip = holds.iter().position(|h| *h).unwrap();
    assert!(flip > 0 && holds[flip..].iter().all(|h| *h));
}

#[test]
fn sweep_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quiet(dir.path());
    let sweep = run_sweep(&cfg, "initial.target_m0", &[], 1).unwrap();
    assert_eq!(fs::read_to_string(&sweep.summary_path).unwrap(), format!("{SWEEP_HEADER}\n"));
    assert!(run_sweep(&cfg, "initial.no_such_field", &[1.0], 1).is_err());
    assert!(run_sweep(&cfg, "grid", &[1.0], 1).is_err());
}

#[test]
fn evolution_commutes_with_shifts() {
    let g = Grid::new(256, 20.0).unwrap();
    let h0 = RealField::from_fn(g.clone(), |x| 0.5 * (-x * x / 4.0).exp() - 0.3 * (-(x - 3.0).powi(2)).exp()).unwrap();
    let cfg = StepperConfig {
        dt0: 0.01,
        t_max: 0.5,
        adaptive: false,
        record_every: 10,
        ..StepperConfig::default()
    };
    let a = run(&h0, ModelKind::Nonlocal, &cfg).unwrap();
    let b = run(&h0.shifted(37), ModelKind::Nonlocal, &cfg).unwrap();
    assert_eq!(a.snapshots.len(), b.snapshots.len());
    for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
        assert_eq!(sa.t, sb.t);
        assert!(sa.field.shifted(37).max_diff(&sb.field).unwrap() < 1e-9);
    }
    let again = run(&h0, ModelKind::Nonlocal, &cfg).unwrap();
    assert_eq!(a.final_field.values(), again.final_field.values());
}
