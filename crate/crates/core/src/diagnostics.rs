//! Per-step measurements, Riccati residuals, bound monitors and the
//! blow-up rate fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::commutator_derivative_supnorm;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::spectral::{check_finite, multiplied, tail_fraction_of, Grid, Multiplier, RealField};

/// Absolute slack used by the pointwise bound monitors.
pub const BOUND_SLACK: f64 = 1e-9;

/// One time sample of the tracked scalars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    /// Min of `h_x`, refined off-grid on the spectral interpolant.
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub x_at_m: f64,
    #[serde(rename = "x_at_M")]
    pub x_at_big_m: f64,
    pub h_inf: f64,
    pub comm_dx_sup: f64,
    pub lx_hx_sup: f64,
    pub tail_fraction: f64,
    pub dt_used: f64,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str =
        "t,mass,energy,m,M,x_at_m,x_at_M,h_inf,comm_dx_sup,lx_hx_sup,tail_fraction,dt_used";

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.t,
            self.mass,
            self.energy,
            self.m,
            self.big_m,
            self.x_at_m,
            self.x_at_big_m,
            self.h_inf,
            self.comm_dx_sup,
            self.lx_hx_sup,
            self.tail_fraction,
            self.dt_used
        )
    }
}

/// Measure every diagnostic of `h` at time `t`; `dt` is the step that led
/// here and is stored verbatim.
pub fn measure(h: &RealField, t: f64, dt: f64) -> Result<DiagnosticsRecord> {
    let grid = h.grid();
    check_finite(h.values(), "field")?;
    let spectrum = grid.forward_raw(h.values());
    let dh = multiplied(grid, Multiplier::Dx, &spectrum);
    let hx = grid.inverse_raw(&dh);
    let lx_hx = grid.inverse_raw(&multiplied(grid, Multiplier::HelmholtzDx, &dh));
    check_finite(&hx, "slope")?;

    // leftmost extremum on ties, then refined between the neighbours
    let (mut i_min, mut i_max) = (0, 0);
    for (i, v) in hx.iter().enumerate() {
        if *v < hx[i_min] {
            i_min = i;
        }
        if *v > hx[i_max] {
            i_max = i;
        }
    }
    let (m, x_at_m) = refine_extremum(grid, &dh, &hx, i_min, -1.0);
    let (big_m, x_at_big_m) = refine_extremum(grid, &dh, &hx, i_max, 1.0);

    Ok(DiagnosticsRecord {
        t,
        mass: h.integral(),
        energy: h.square_integral(),
        m,
        big_m,
        x_at_m,
        x_at_big_m,
        h_inf: h.max_abs(),
        comm_dx_sup: commutator_derivative_supnorm(h)?,
        lx_hx_sup: lx_hx.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())),
        tail_fraction: tail_fraction_of(grid, &spectrum),
        dt_used: dt,
    })
}

/// Value and first two derivatives at `x` of the trigonometric interpolant
/// whose half spectrum is `coeffs`.
fn interpolant_jet(grid: &Grid, coeffs: &[Complex64], x: f64) -> [f64; 3] {
    let theta = x + grid.half_length();
    let step = Complex64::from_polar(1.0, PI * theta / grid.half_length());
    let nyq = grid.nyquist_index();
    let mut z = Complex64::new(1.0, 0.0);
    let mut out = [0.0; 3];
    let top = coeffs.iter().rposition(|c| c.re != 0.0 || c.im != 0.0).map_or(0, |j| j + 1);
    for (j, (c, &k)) in coeffs[..top].iter().zip(grid.half_wavenumbers()).enumerate() {
        if j % 64 == 0 {
            z = Complex64::from_polar(1.0, PI * j as f64 * theta / grid.half_length());
        }
        let term = c * z * grid.mode_weight(j);
        out[0] += term.re;
        if j != nyq {
            out[1] -= k * term.im;
            out[2] -= k * k * term.re;
        }
        z *= step;
    }
    out
}

/// Extremum of the interpolant of `f` near grid index `i`, by safeguarded
/// Newton on `f' = 0` inside `[x_{i-1}, x_{i+1}]`. `sign` is `-1` for a
/// minimum and `+1` for a maximum. Falls back to the sample when `f'` does
/// not change sign across the bracket.
fn refine_extremum(grid: &Grid, coeffs: &[Complex64], f: &[f64], i: usize, sign: f64) -> (f64, f64) {
    let sample = (f[i], grid.x(i));
    let dx = grid.dx();
    let x0 = grid.x(i);
    // g = -sign·f' increases through the root for both cases
    let g = |x: f64| {
        let jet = interpolant_jet(grid, coeffs, x);
        (-sign * jet[1], -sign * jet[2], jet[0])
    };
    let (mut a, mut b) = (x0 - dx, x0 + dx);
    let (ga, _, _) = g(a);
    let (gb, _, _) = g(b);
    if !(ga <= 0.0 && gb >= 0.0) {
        return sample;
    }
    let mut x = x0;
    let mut best = g(x);
    for _ in 0..60 {
        let (gx, dgx, _) = best;
        if gx == 0.0 {
            break;
        }
        if gx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let newton = x - gx / dgx;
        let next = if dgx > 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        let converged = (next - x).abs() <= 1e-15 * grid.half_length();
        x = next;
        best = g(x);
        if converged || b - a <= 1e-15 * grid.half_length() {
            break;
        }
    }
    let value = best.2;
    // never report a less extreme value than the samples show
    if sign * (value - sample.0) < 0.0 {
        return sample;
    }
    let period = 2.0 * grid.half_length();
    let wrapped = (x + grid.half_length()).rem_euclid(period) - grid.half_length();
    (value, wrapped)
}

/// Residuals of the two Riccati inequalities at one sample; both should be
/// non-positive up to discretization slack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiccatiResidual {
    pub t: f64,
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    #[serde(rename = "r_M")]
    pub r_big_m: f64,
    pub r_m: f64,
}

/// Three-point derivative on a non-uniform stencil.
fn centered_derivative(t: [f64; 3], y: [f64; 3]) -> f64 {
    let h1 = t[1] - t[0];
    let h2 = t[2] - t[1];
    -h2 / (h1 * (h1 + h2)) * y[0] + (h2 - h1) / (h1 * h2) * y[1] + h1 / (h2 * (h1 + h2)) * y[2]
}

/// `r = y' - (-(3/2)y² + (M - m)/4 + C0)` for `y ∈ {M, m}` at every interior
/// sample, with `y'` from centered differences.
pub fn riccati_residuals(series: &[DiagnosticsRecord], c0: f64) -> Result<Vec<RiccatiResidual>> {
    if series.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "riccati residuals need at least 3 records, got {}",
            series.len()
        )));
    }
    if !(c0 >= 0.0) {
        return Err(Error::Config(format!("C0 must be non-negative, got {c0}")));
    }
    Ok(series
        .windows(3)
        .map(|w| {
            let t = [w[0].t, w[1].t, w[2].t];
            let dm = centered_derivative(t, [w[0].m, w[1].m, w[2].m]);
            let dbig = centered_derivative(t, [w[0].big_m, w[1].big_m, w[2].big_m]);
            let r = &w[1];
            let forcing = 0.25 * (r.big_m - r.m) + c0;
            RiccatiResidual {
                t: r.t,
                m: r.m,
                big_m: r.big_m,
                r_big_m: dbig - (-1.5 * r.big_m * r.big_m + forcing),
                r_m: dm - (-1.5 * r.m * r.m + forcing),
            }
        })
        .collect())
}

/// Fraction of residual samples where either inequality is violated by more
/// than `rel_slack·(1 + y²)`.
pub fn riccati_violation_fraction(residuals: &[RiccatiResidual], rel_slack: f64) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    let bad = residuals
        .iter()
        .filter(|r| {
            r.r_m > rel_slack * (1.0 + r.m * r.m)
                || r.r_big_m > rel_slack * (1.0 + r.big_m * r.big_m)
        })
        .count();
    bad as f64 / residuals.len() as f64
}

/// Least-squares line through `(t, 1/m)` near blow-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Root of the fitted line, the extrapolated blow-up time.
    #[serde(rename = "T_est")]
    pub t_est: f64,
    /// Fitted `d(1/m)/dt`; the asymptotic value is 3/2.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Lower end of the window as a fraction of `|m_final|`.
    pub window_fraction: f64,
    /// Minimum growth `|m_final| / |m(0)|` before a fit is attempted.
    pub min_growth: f64,
    /// Samples with a larger spectral-tail fraction (and everything after
    /// them) are discarded.
    pub tail_fraction_max: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            window_fraction: 0.1,
            min_growth: 10.0,
            tail_fraction_max: 1e-6,
        }
    }
}

/// Fit `1/m(t) ≈ slope·(t - T_est)` over the last decade of slope growth.
pub fn extrapolate_blowup_time(series: &[DiagnosticsRecord], opts: &FitOptions) -> Result<RateFit> {
    let first = series
        .first()
        .ok_or_else(|| Error::InsufficientData("empty series".into()))?;
    let usable = series
        .iter()
        .position(|r| r.tail_fraction > opts.tail_fraction_max)
        .unwrap_or(series.len());
    let usable = &series[..usable];
    let last = usable
        .last()
        .ok_or_else(|| Error::InsufficientData("no resolved samples".into()))?;
    let m_final = last.m.abs();
    if !(m_final >= opts.min_growth * first.m.abs()) || m_final == 0.0 {
        return Err(Error::InsufficientData(format!(
            "|m| grew from {:.3e} to {:.3e}, below the required factor {}",
            first.m.abs(),
            m_final,
            opts.min_growth
        )));
    }
    let lo = opts.window_fraction * m_final;
    let points: Vec<(f64, f64)> = usable
        .iter()
        .filter(|r| r.m < 0.0 && r.m.abs() >= lo)
        .map(|r| (r.t, 1.0 / r.m))
        .collect();
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "fit window holds {} samples",
            points.len()
        )));
    }
    check_trend(&points)?;

    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in &points {
        stt += (t - mt) * (t - mt);
        sty += (t - mt) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let ss_res: f64 = points
        .iter()
        .map(|(t, y)| (y - intercept - slope * t).powi(2))
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        0.0
    };
    if !(slope > 0.0) {
        return Err(Error::FitQuality(format!("non-positive fitted slope {slope}")));
    }
    let t_est = -intercept / slope;
    let window = (points[0].0, points[points.len() - 1].0);
    if !(window.0 < window.1 && window.1 <= t_est) {
        return Err(Error::FitQuality(format!(
            "extrapolated time {t_est} precedes the fit window end {}",
            window.1
        )));
    }
    Ok(RateFit {
        t_est,
        slope,
        intercept,
        r_squared,
        window,
        n_samples: points.len(),
    })
}

/// `1/m` has to increase across the window; compared on quarter means so
/// that sample noise alone does not reject a fit.
fn check_trend(points: &[(f64, f64)]) -> Result<()> {
    let q = points.len() / 4;
    let means: Vec<f64> = (0..4)
        .map(|i| {
            let end = if i == 3 { points.len() } else { (i + 1) * q };
            let chunk = &points[i * q..end];
            chunk.iter().map(|p| p.1).sum::<f64>() / chunk.len() as f64
        })
        .collect();
    if means.windows(2).all(|w| w[1] > w[0]) {
        Ok(())
    } else {
        Err(Error::FitQuality(format!(
            "1/m is not monotone across the window (quarter means {means:?})"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundKind {
    /// `|L_x h_x| ≤ (M - m)/2` from the split kernel integral.
    KernelSplit,
    /// `|L_x h_x| = |Lh - h| ≤ (1/2)‖h0‖₂ + ‖h‖∞`.
    LinftyL2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundViolation {
    pub t: f64,
    pub kind: BoundKind,
    pub value: f64,
    pub bound: f64,
}

/// Check both pointwise bounds on `L_x h_x` for one record. `energy0` is
/// `∫h0²`, giving `‖h0‖₂ = √energy0`.
pub fn bound_monitors(record: &DiagnosticsRecord, energy0: f64) -> Vec<BoundViolation> {
    let mut out = Vec::new();
    let split = 0.5 * (record.big_m - record.m);
    if record.lx_hx_sup > split + BOUND_SLACK {
        out.push(BoundViolation {
            t: record.t,
            kind: BoundKind::KernelSplit,
            value: record.lx_hx_sup,
            bound: split,
        });
    }
    let l2 = 0.5 * energy0.max(0.0).sqrt() + record.h_inf;
    if record.lx_hx_sup > l2 + BOUND_SLACK {
        out.push(BoundViolation {
            t: record.t,
            kind: BoundKind::LinftyL2,
            value: record.lx_hx_sup,
            bound: l2,
        });
    }
    out
}

/// Growth of the bracket derivative against the growth of the slope over
/// a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BracketTrend {
    pub comm_initial: f64,
    pub comm_final: f64,
    pub comm_growth: f64,
    pub slope_growth: f64,
}

pub fn bracket_trend(series: &[DiagnosticsRecord]) -> Option<BracketTrend> {
    let (first, last) = (series.first()?, series.last()?);
    let ratio = |a: f64, b: f64| if a > 0.0 { b / a } else { f64::INFINITY };
    Some(BracketTrend {
        comm_initial: first.comm_dx_sup,
        comm_final: last.comm_dx_sup,
        comm_growth: ratio(first.comm_dx_sup, last.comm_dx_sup),
        slope_growth: ratio(first.m.abs(), last.m.abs()),
    })
}

/// Length of the final stretch over which `m` strictly decreases.
pub fn final_decreasing_run(series: &[DiagnosticsRecord]) -> usize {
    series
        .windows(2)
        .rev()
        .take_while(|w| w[1].m < w[0].m)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::apply_l;

    fn record(t: f64, m: f64, big_m: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            mass: 0.0,
            energy: 0.0,
            m,
            big_m,
            x_at_m: 0.0,
            x_at_big_m: 0.0,
            h_inf: 0.0,
            comm_dx_sup: 0.0,
            lx_hx_sup: 0.0,
            tail_fraction: 0.0,
            dt_used: 0.0,
        }
    }

    #[test]
    fn header_matches_row_width() {
        let r = record(0.0, -1.0, 1.0);
        assert_eq!(
            r.csv_row().split(',').count(),
            DiagnosticsRecord::CSV_HEADER.split(',').count()
        );
    }

    #[test]
    fn zero_field() {
        let g = Grid::new(64, 8.0).unwrap();
        let r = measure(&RealField::zeros(g), 0.0, 0.0).unwrap();
        assert_eq!((r.mass, r.energy, r.m, r.big_m), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(r.x_at_m, -8.0);
    }

    #[test]
    fn sine_closed_forms() {
        let g = Grid::new(128, PI).unwrap();
        let h = RealField::from_fn(g, f64::sin).unwrap();
        let r = measure(&h, 0.0, 0.0).unwrap();
        assert!(r.mass.abs() < 1e-12);
        assert!((r.energy - PI).abs() < 1e-10);
        assert!((r.m + 1.0).abs() < 1e-13 && (r.big_m - 1.0).abs() < 1e-13);
        // cos attains -1 at both ends of the box, which are the same point
        let d = (r.x_at_m + PI).rem_euclid(2.0 * PI);
        assert!(d.min(2.0 * PI - d) < 1e-8, "{}", r.x_at_m);
    }

    #[test]
    fn gaussian_slope_extrema() {
        let g = Grid::new(2048, 40.0).unwrap();
        let h = RealField::from_fn(g.clone(), |x| (-x * x).exp()).unwrap();
        let r = measure(&h, 0.0, 0.0).unwrap();
        let peak = (2.0 / std::f64::consts::E).sqrt();
        assert!((r.m + peak).abs() < 1e-12);
        assert!((r.m + r.big_m).abs() < 1e-12);
        let xm = 1.0 / 2.0_f64.sqrt();
        assert!((r.x_at_m - xm).abs() < 1e-8);
        assert!((r.x_at_big_m + xm).abs() < 1e-8);
        assert!(r.lx_hx_sup <= 0.5 * (r.big_m - r.m) + BOUND_SLACK);
        assert!(bound_monitors(&r, r.energy).is_empty());
    }

    #[test]
    fn lx_hx_equals_l_minus_identity() {
        let g = Grid::new(1024, 20.0).unwrap();
        let h = RealField::from_fn(g, |x| x * (-x * x / 3.0).exp() + 0.2 * (-(x - 2.0).powi(2)).exp()).unwrap();
        let lmh = apply_l(&h).unwrap().sub(&h).unwrap();
        let r = measure(&h, 0.0, 0.0).unwrap();
        assert!((lmh.max_abs() - r.lx_hx_sup).abs() < 1e-12);
    }

    #[test]
    fn residuals_constant_series() {
        let series: Vec<_> = (0..10).map(|i| record(i as f64 * 0.1, 0.0, 0.0)).collect();
        let res = riccati_residuals(&series, 0.7).unwrap();
        assert_eq!(res.len(), 8);
        assert!(res.iter().all(|r| r.r_m == -0.7 && r.r_big_m == -0.7));
        assert!(riccati_residuals(&series[..2], 0.0).is_err());
    }

    #[test]
    fn residuals_vanish_on_riccati_solution() {
        let dt = 1e-4;
        let series: Vec<_> = (0..=2000)
            .map(|i| {
                let t = i as f64 * dt;
                let m = -1.0 / (1.0 - 1.5 * t);
                record(t, m, m)
            })
            .collect();
        let res = riccati_residuals(&series, 0.0).unwrap();
        let worst = res.iter().fold(0.0_f64, |a, r| a.max(r.r_m.abs()).max(r.r_big_m.abs()));
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn exact_rate_series() {
        let series: Vec<_> = (0..=90)
            .map(|i| {
                let t = 0.9 + i as f64 * 0.001;
                record(t, -2.0 / (3.0 * (1.0 - t)), 0.0)
            })
            .collect();
        let opts = FitOptions {
            min_growth: 1.0,
            ..FitOptions::default()
        };
        let fit = extrapolate_blowup_time(&series, &opts).unwrap();
        assert!((fit.t_est - 1.0).abs() < 1e-9);
        assert!((fit.slope - 1.5).abs() < 1e-9);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn fit_rejects_short_growth_and_reversals() {
        let flat: Vec<_> = (0..50).map(|i| record(i as f64, -1.0, 0.0)).collect();
        assert!(matches!(
            extrapolate_blowup_time(&flat, &FitOptions::default()),
            Err(Error::InsufficientData(_))
        ));
        // grows tenfold, then relaxes back inside the window
        let mut bumpy: Vec<_> = (0..40).map(|i| record(i as f64, -1.0 - i as f64, 0.0)).collect();
        bumpy.extend((0..40).map(|i| record(40.0 + i as f64, -40.0 + 0.9 * i as f64, 0.0)));
        bumpy.push(record(80.0, -50.0, 0.0));
        assert!(extrapolate_blowup_time(&bumpy, &FitOptions::default()).is_err());
    }

    #[test]
    fn tail_threshold_truncates_window() {
        let mut series: Vec<_> = (0..=90)
            .map(|i| {
                let t = 0.9 + i as f64 * 0.001;
                record(t, -2.0 / (3.0 * (1.0 - t)), 0.0)
            })
            .collect();
        for r in series.iter_mut().skip(80) {
            r.tail_fraction = 1.0;
        }
        let opts = FitOptions {
            min_growth: 1.0,
            ..FitOptions::default()
        };
        let fit = extrapolate_blowup_time(&series, &opts).unwrap();
        assert!(fit.window.1 < 0.98 + 1e-12);
    }
}
