//! End-to-end runs: criterion evaluation, simulation, fits and persistence.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::criteria::{breaking_condition, riccati_compare, CriterionVerdict, RiccatiParams};
use crate::diagnostics::{
    bound_monitors, bracket_trend, extrapolate_blowup_time, final_decreasing_run, measure,
    riccati_residuals, riccati_violation_fraction, BracketTrend, DiagnosticsRecord, RateFit,
};
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::harness::initial::{build_initial_data, c0_for};
use crate::integrator::{run, RunTrajectory, StepperConfig, StopReason};
use crate::model::ModelKind;
use crate::spectral::{Grid, RealField};

/// Relative slack for the Riccati residual budget, applied as
/// `slack·(1 + y²)`.
pub const RICCATI_REL_SLACK: f64 = 1e-3;

/// Per-run verification summary.
#[derive(Debug, Clone, Serialize)]
pub struct RunChecks {
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub riccati_violation_fraction: Option<f64>,
    pub bound_violations: usize,
    pub bracket: Option<BracketTrend>,
    pub final_decreasing_steps: usize,
    pub comparison_blowup_time: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub verdict: CriterionVerdict,
    pub stop: StopReason,
    /// Detection time; present only when breaking was detected.
    #[serde(rename = "T_sim")]
    pub t_sim: Option<f64>,
    pub final_time: f64,
    pub rate_fit: Option<RateFit>,
    pub rate_fit_error: Option<String>,
    pub theorem_consistent: bool,
    pub checks: RunChecks,
    pub steps: usize,
    pub failure: Option<String>,
    pub series_path: PathBuf,
    pub snapshots_path: PathBuf,
    pub config_echo: RunConfig,
}

/// Everything produced by a run, kept in memory for reports and tests.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub trajectory: RunTrajectory,
    pub initial: RealField,
}

/// `T_sim ≤ t*` whenever the breaking condition holds. A run that stops
/// early for other reasons before `t*` is not evidence against it.
pub fn theorem_consistent(
    verdict: &CriterionVerdict,
    stop: StopReason,
    final_time: f64,
) -> bool {
    if !verdict.condition_holds {
        return true;
    }
    let Some(t_star) = verdict.t_star_main else {
        return false;
    };
    match stop {
        StopReason::BreakingDetected => final_time <= t_star,
        _ => final_time < t_star,
    }
}

fn relative_drifts(records: &[DiagnosticsRecord]) -> (f64, f64) {
    let Some(first) = records.first() else {
        return (0.0, 0.0);
    };
    let mut mass: f64 = 0.0;
    let mut energy: f64 = 0.0;
    for r in records {
        mass = mass.max((r.mass - first.mass).abs() / (1.0 + first.mass.abs()));
        if first.energy > 0.0 {
            energy = energy.max((r.energy - first.energy).abs() / first.energy);
        }
    }
    (mass, energy)
}

/// Build the initial datum and evaluate the breaking criterion on it.
pub fn evaluate_criterion(cfg: &RunConfig) -> Result<(RealField, CriterionVerdict)> {
    cfg.validate()?;
    let grid = Grid::new(cfg.grid.n_points, cfg.grid.half_length)
        .map_err(|e| Error::Config(e.to_string()))?;
    let h0 = build_initial_data(&cfg.initial, &grid, &cfg.c0_mode)?;
    let rec = measure(&h0, 0.0, 0.0)?;
    let c0 = c0_for(&h0, &cfg.c0_mode)?;
    let params = RiccatiParams::new(rec.m, rec.big_m, c0)?;
    Ok((h0, breaking_condition(&params)))
}

/// Simulate without touching the filesystem.
pub fn simulate(cfg: &RunConfig) -> Result<RunOutput> {
    let (h0, verdict) = evaluate_criterion(cfg)?;
    let mut stepper: StepperConfig = cfg.stepper;
    if let Some(factor) = cfg.blowup_growth_factor {
        stepper.slope_blowup_threshold = factor * verdict.params.m0.abs().max(f64::MIN_POSITIVE);
    }
    let trajectory = run(&h0, cfg.model, &stepper)?;
    let records = &trajectory.records;

    let breaking = trajectory.stop == StopReason::BreakingDetected;
    let t_sim = breaking.then_some(trajectory.final_time);
    let mut fit_opts = cfg.fit;
    fit_opts.tail_fraction_max = stepper.spectral_tail_fraction_max;
    let (rate_fit, rate_fit_error) = if breaking {
        match extrapolate_blowup_time(records, &fit_opts) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };

    let (mass_drift, energy_drift) = relative_drifts(records);
    let energy0 = records.first().map_or(0.0, |r| r.energy);
    let bound_violations = records
        .iter()
        .map(|r| bound_monitors(r, energy0).len())
        .sum();
    let riccati = riccati_residuals(records, verdict.params.c0)
        .ok()
        .map(|res| riccati_violation_fraction(&res, RICCATI_REL_SLACK));
    let comparison_blowup_time = if verdict.condition_holds {
        let horizon = verdict.t_star_main.unwrap_or(stepper.t_max).max(stepper.t_max);
        riccati_compare(&verdict.params, 1e-3, horizon)?.blowup_time
    } else {
        None
    };

    let result = RunResult {
        theorem_consistent: theorem_consistent(&verdict, trajectory.stop, trajectory.final_time),
        verdict,
        stop: trajectory.stop,
        t_sim,
        final_time: trajectory.final_time,
        rate_fit,
        rate_fit_error,
        checks: RunChecks {
            mass_drift,
            energy_drift,
            riccati_violation_fraction: riccati,
            bound_violations,
            bracket: bracket_trend(records),
            final_decreasing_steps: final_decreasing_run(records),
            comparison_blowup_time,
        },
        steps: records.len().saturating_sub(1),
        failure: trajectory.failure.clone(),
        series_path: cfg.output_dir.join("series.csv"),
        snapshots_path: cfg.output_dir.join("snapshots"),
        config_echo: cfg.clone(),
    };
    Ok(RunOutput {
        result,
        trajectory,
        initial: h0,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_series(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let err = |e| Error::io(path, e);
    writeln!(w, "{}", DiagnosticsRecord::CSV_HEADER).map_err(err)?;
    for r in records {
        writeln!(w, "{}", r.csv_row()).map_err(err)?;
    }
    w.flush().map_err(err)
}

pub fn write_field_csv(path: &Path, field: &RealField) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let err = |e| Error::io(path, e);
    writeln!(w, "x,value").map_err(err)?;
    let grid = field.grid();
    for (m, v) in field.values().iter().enumerate() {
        writeln!(w, "{:e},{:e}", grid.x(m), v).map_err(err)?;
    }
    w.flush().map_err(err)
}

/// Write series, snapshots and the result JSON for a finished run.
pub fn persist(output: &RunOutput) -> Result<()> {
    let cfg = &output.result.config_echo;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    write_series(&output.result.series_path, &output.trajectory.records)?;

    let snap_dir = &output.result.snapshots_path;
    create_dir(snap_dir)?;
    let snaps = &output.trajectory.snapshots;
    let chosen: Vec<usize> = if cfg.write_snapshots || snaps.len() <= 2 {
        (0..snaps.len()).collect()
    } else {
        vec![0, snaps.len() - 1]
    };
    let mut index = String::from("index,t,file\n");
    for (k, &i) in chosen.iter().enumerate() {
        let name = format!("snap_{k:05}.csv");
        write_field_csv(&snap_dir.join(&name), &snaps[i].field)?;
        index.push_str(&format!("{k},{:e},{name}\n", snaps[i].t));
    }
    write_file(&snap_dir.join("index.csv"), &index)?;

    let json = serde_json::to_string_pretty(&output.result)?;
    write_file(&dir.join("result.json"), &json)?;
    if let Some(msg) = &output.result.failure {
        write_file(&dir.join("FAILED"), &format!("numerical failure at t = {}: {msg}\n", output.result.final_time))?;
    }
    Ok(())
}

/// Run one configuration and persist all outputs under `cfg.output_dir`.
///
/// A numerical failure is returned as an error after the partial outputs
/// and the `FAILED` marker have been written.
pub fn run_single(cfg: &RunConfig) -> Result<RunOutput> {
    let output = simulate(cfg)?;
    persist(&output)?;
    match &output.result.failure {
        Some(msg) => Err(Error::NumericalFailure(format!(
            "{msg} (partial outputs in {})",
            cfg.output_dir.display()
        ))),
        None => Ok(output),
    }
}

fn run_persisted(cfg: &RunConfig) -> Result<RunResult> {
    let output = simulate(cfg)?;
    persist(&output)?;
    Ok(output.result)
}

/// Set a dotted path such as `initial.target_m0` in a JSON-serialized
/// config. The path must name an existing scalar (or null) field.
pub fn with_axis_value(base: &RunConfig, axis: &str, value: f64) -> Result<RunConfig> {
    let mut tree = serde_json::to_value(base)?;
    let mut node = &mut tree;
    let parts: Vec<&str> = axis.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("axis `{axis}`: `{key}` is not inside an object")))?;
        let child = obj
            .get_mut(*key)
            .ok_or_else(|| Error::Config(format!("axis `{axis}`: unknown field `{key}`")))?;
        if i + 1 == parts.len() {
            if !(child.is_number() || child.is_null()) {
                return Err(Error::Config(format!("axis `{axis}` is not a scalar field")));
            }
            *child = if child.is_u64() || child.is_i64() {
                if value.fract() != 0.0 {
                    return Err(Error::Config(format!("axis `{axis}` needs integer values, got {value}")));
                }
                serde_json::json!(value as i64)
            } else {
                serde_json::json!(value)
            };
            break;
        }
        node = child;
    }
    serde_json::from_value(tree).map_err(|e| Error::Config(format!("axis `{axis}`: {e}")))
}

pub const SWEEP_HEADER: &str =
    "value,condition_holds,t_star_main,t_star_refined,T_sim,rate_slope,stop_reason";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn sweep_row(value: f64, r: &RunResult) -> String {
    format!(
        "{value:e},{},{},{},{},{},{:?}",
        r.verdict.condition_holds,
        opt(r.verdict.t_star_main),
        opt(r.verdict.t_star_refined),
        opt(r.t_sim),
        opt(r.rate_fit.map(|f| f.slope)),
        r.stop
    )
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub results: Vec<RunResult>,
    pub summary_path: PathBuf,
}

/// Independent runs over `values` of `axis`, executed on a pool of
/// `workers` threads. Each run writes to `<output_dir>/run_NNN`; the summary
/// is written once all runs are in. A run that fails numerically is kept
/// and reported through its stop reason.
pub fn run_sweep(base: &RunConfig, axis: &str, values: &[f64], workers: usize) -> Result<SweepOutcome> {
    // reject a bad axis even for an empty sweep
    with_axis_value(base, axis, 0.0)?;
    let configs = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut cfg = with_axis_value(base, axis, v)?;
            cfg.output_dir = base.output_dir.join(format!("run_{i:03}"));
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<RunResult> = pool.install(|| {
        configs
            .par_iter()
            .map(run_persisted)
            .collect::<Result<Vec<_>>>()
    })?;

    create_dir(&base.output_dir)?;
    let summary_path = base.output_dir.join("summary.csv");
    let mut text = format!("{SWEEP_HEADER}\n");
    for (v, r) in values.iter().zip(&results) {
        text.push_str(&sweep_row(*v, r));
        text.push('\n');
    }
    write_file(&summary_path, &text)?;
    Ok(SweepOutcome {
        results,
        summary_path,
    })
}

/// Paired run of the non-local model and Fornberg-Whitham on the same datum.
pub fn compare_fw(base: &RunConfig) -> Result<(RunOutput, RunOutput)> {
    let run_kind = |kind: ModelKind, sub: &str| {
        let mut cfg = base.clone();
        cfg.model = kind;
        cfg.output_dir = base.output_dir.join(sub);
        run_single(&cfg)
    };
    let nonlocal = run_kind(ModelKind::Nonlocal, "nonlocal")?;
    let fw = run_kind(ModelKind::FornbergWhitham, "fornberg_whitham")?;
    Ok((nonlocal, fw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{Family, GridSpec, InitialDataSpec};

    fn small() -> RunConfig {
        RunConfig {
            grid: GridSpec {
                n_points: 256,
                half_length: 16.0,
            },
            stepper: StepperConfig {
                dt0: 1e-2,
                t_max: 0.2,
                record_every: 5,
                ..StepperConfig::default()
            },
            initial: InitialDataSpec {
                family: Family::Gaussian,
                amplitude: 0.2,
                width: 2.0,
                ..InitialDataSpec::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn axis_paths() {
        let base = small();
        let cfg = with_axis_value(&base, "initial.target_m0", -1.5).unwrap();
        assert_eq!(cfg.initial.target_m0, Some(-1.5));
        let cfg = with_axis_value(&base, "grid.n_points", 512.0).unwrap();
        assert_eq!(cfg.grid.n_points, 512);
        assert!(with_axis_value(&base, "grid.n_points", 512.5).is_err());
        assert!(with_axis_value(&base, "grid.nope", 1.0).is_err());
        assert!(with_axis_value(&base, "initial", 1.0).is_err());
        assert!(with_axis_value(&base, "model", 1.0).is_err());
    }

    #[test]
    fn consistency_rule() {
        let p = RiccatiParams::new(-1.0, 0.0, 0.0).unwrap();
        let v = breaking_condition(&p);
        let t = v.t_star_main.unwrap();
        assert!(theorem_consistent(&v, StopReason::BreakingDetected, 0.5 * t));
        assert!(!theorem_consistent(&v, StopReason::BreakingDetected, 1.1 * t));
        assert!(!theorem_consistent(&v, StopReason::HorizonReached, 1.1 * t));
        assert!(theorem_consistent(&v, StopReason::ResolutionLost, 0.5 * t));
        let quiet = breaking_condition(&RiccatiParams::new(-0.1, 0.0, 0.0).unwrap());
        assert!(theorem_consistent(&quiet, StopReason::HorizonReached, 100.0));
    }

    #[test]
    fn quiet_run_conserves() {
        let out = simulate(&small()).unwrap();
        assert_eq!(out.result.stop, StopReason::HorizonReached);
        assert!(out.result.checks.mass_drift < 1e-12);
        assert!(out.result.checks.energy_drift < 1e-8);
        assert!(out.result.theorem_consistent);
        assert_eq!(out.result.checks.bound_violations, 0);
    }
}
