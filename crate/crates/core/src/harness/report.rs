//! Plot-ready data files and a text summary for finished runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::runner::RunOutput;
use crate::integrator::Snapshot;
use crate::spectral::RealField;

/// Number of evenly spaced times in the `x` vs `h` table.
pub const PROFILE_TIMES: usize = 5;

fn write(path: &Path, text: &str) -> Result<PathBuf> {
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Linear interpolation in time between the two snapshots around `t`.
pub fn field_at(snapshots: &[Snapshot], t: f64) -> Result<RealField> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::InsufficientData("no snapshots".into()))?;
    if t <= first.t {
        return Ok(first.field.clone());
    }
    for w in snapshots.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if t <= b.t {
            let theta = (t - a.t) / (b.t - a.t);
            return a.field.scaled(1.0 - theta).add_scaled(theta, &b.field);
        }
    }
    Ok(snapshots[snapshots.len() - 1].field.clone())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn m_vs_t(out: &RunOutput) -> String {
    let mut s = String::from("t,m,M\n");
    for r in &out.trajectory.records {
        let _ = writeln!(s, "{:e},{:e},{:e}", r.t, r.m, r.big_m);
    }
    s
}

fn inv_m_fit(out: &RunOutput) -> String {
    let fit = out.result.rate_fit;
    let mut s = String::from("t,inv_m,fit_inv_m,in_window\n");
    for r in &out.trajectory.records {
        let inv = if r.m != 0.0 { format!("{:e}", 1.0 / r.m) } else { String::new() };
        let (line, inside) = match fit {
            Some(f) => (
                Some(f.intercept + f.slope * r.t),
                r.t >= f.window.0 && r.t <= f.window.1,
            ),
            None => (None, false),
        };
        let _ = writeln!(s, "{:e},{inv},{},{}", r.t, fmt_opt(line), u8::from(inside));
    }
    s
}

fn conserved(out: &RunOutput) -> String {
    let mut s = String::from("t,mass,energy,mass_drift,energy_drift\n");
    let Some(first) = out.trajectory.records.first() else {
        return s;
    };
    for r in &out.trajectory.records {
        let rel = if first.energy > 0.0 {
            (r.energy - first.energy) / first.energy
        } else {
            r.energy - first.energy
        };
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{:e},{:e}",
            r.t,
            r.mass,
            r.energy,
            r.mass - first.mass,
            rel
        );
    }
    s
}

fn profiles(out: &RunOutput) -> Result<String> {
    let t_end = out.trajectory.final_time;
    let times: Vec<f64> = (0..PROFILE_TIMES)
        .map(|i| t_end * i as f64 / (PROFILE_TIMES - 1) as f64)
        .collect();
    let fields = times
        .iter()
        .map(|&t| field_at(&out.trajectory.snapshots, t))
        .collect::<Result<Vec<_>>>()?;
    let mut s = String::from("x");
    for t in &times {
        let _ = write!(s, ",h_t={t:e}");
    }
    s.push('\n');
    let grid = out.initial.grid();
    for m in 0..grid.n_points() {
        let _ = write!(s, "{:e}", grid.x(m));
        for f in &fields {
            let _ = write!(s, ",{:e}", f.values()[m]);
        }
        s.push('\n');
    }
    Ok(s)
}

fn summary(out: &RunOutput) -> String {
    let r = &out.result;
    let v = &r.verdict;
    let mut s = String::new();
    let _ = writeln!(s, "model: {:?}", r.config_echo.model);
    let _ = writeln!(
        s,
        "grid: n = {}, half-length = {}",
        r.config_echo.grid.n_points, r.config_echo.grid.half_length
    );
    let _ = writeln!(s, "m0 = {:.6e}, M0 = {:.6e}, C0 = {:.6e}", v.params.m0, v.params.big_m0, v.params.c0);
    let _ = writeln!(s, "thresholds: {:.6e}, {:.6e}", v.threshold1, v.threshold2);
    let _ = writeln!(s, "condition holds: {}", v.condition_holds);
    let _ = writeln!(s, "t* main: {}", fmt_opt(v.t_star_main));
    let _ = writeln!(s, "t* refined: {}", fmt_opt(v.t_star_refined));
    let _ = writeln!(s, "stop: {:?} at t = {:.6e} after {} steps", r.stop, r.final_time, r.steps);
    match (&r.rate_fit, &r.rate_fit_error) {
        (Some(f), _) => {
            let _ = writeln!(
                s,
                "rate fit: slope = {:.4}, T_est = {:.6e}, r2 = {:.6}, {} samples",
                f.slope, f.t_est, f.r_squared, f.n_samples
            );
        }
        (None, Some(e)) => {
            let _ = writeln!(s, "rate fit: {e}");
        }
        _ => {}
    }
    let c = &r.checks;
    let _ = writeln!(s, "mass drift: {:.3e}, energy drift: {:.3e}", c.mass_drift, c.energy_drift);
    if let Some(f) = c.riccati_violation_fraction {
        let _ = writeln!(s, "riccati violation fraction: {f:.4}");
    }
    let _ = writeln!(s, "bound violations: {}", c.bound_violations);
    let _ = writeln!(s, "theorem consistent: {}", r.theorem_consistent);
    if let Some(msg) = &r.failure {
        let _ = writeln!(s, "numerical failure: {msg}");
    }
    s
}

/// Time series of `‖h_a − h_b‖` on the union of both runs' snapshot times
/// within their common interval.
fn difference_norms(a: &RunOutput, b: &RunOutput) -> Result<String> {
    let t_end = a.trajectory.final_time.min(b.trajectory.final_time);
    let mut times: Vec<f64> = a
        .trajectory
        .snapshots
        .iter()
        .chain(&b.trajectory.snapshots)
        .map(|s| s.t)
        .filter(|&t| t <= t_end)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut s = String::from("t,linf,l2\n");
    for t in times {
        let d = field_at(&a.trajectory.snapshots, t)?.sub(&field_at(&b.trajectory.snapshots, t)?)?;
        let _ = writeln!(s, "{t:e},{:e},{:e}", d.max_abs(), d.l2_norm());
    }
    Ok(s)
}

/// Write report files for `results` into `dir`.
///
/// Each run gets `m_vs_t.csv`, `inv_m_fit.csv`, `conserved.csv`,
/// `snapshots_xh.csv` and `summary.txt`: in `dir` for a single run, else in
/// the run's own output directory when it lies under `dir`, else in
/// `dir/run_NNN`. When the runs use more than one model,
/// `difference_norms.csv` compares the first run with every later one of a
/// different model (`difference_norms_NNN.csv` beyond the first pair).
pub fn emit_report(results: &[RunOutput], dir: &Path) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(Error::InsufficientData("no results to report".into()));
    }
    let mut written = Vec::new();
    for (i, out) in results.iter().enumerate() {
        let own = &out.result.config_echo.output_dir;
        let sub = if results.len() == 1 {
            dir.to_path_buf()
        } else if own.starts_with(dir) && own != dir {
            own.clone()
        } else {
            dir.join(format!("run_{i:03}"))
        };
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        written.push(write(&sub.join("m_vs_t.csv"), &m_vs_t(out))?);
        written.push(write(&sub.join("inv_m_fit.csv"), &inv_m_fit(out))?);
        written.push(write(&sub.join("conserved.csv"), &conserved(out))?);
        written.push(write(&sub.join("snapshots_xh.csv"), &profiles(out)?)?);
        written.push(write(&sub.join("summary.txt"), &summary(out))?);
    }
    let base = &results[0];
    let others = results[1..]
        .iter()
        .filter(|o| o.result.config_echo.model != base.result.config_echo.model);
    for (k, other) in others.enumerate() {
        let name = if k == 0 {
            "difference_norms.csv".to_string()
        } else {
            format!("difference_norms_{k:03}.csv")
        };
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        written.push(write(&dir.join(name), &difference_norms(base, other)?)?);
    }
    Ok(written)
}
