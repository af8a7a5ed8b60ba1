//! Classical RK4 on the semi-discrete system, with a step controller driven
//! by the extremal slopes and the stopping rules for breaking and loss of
//! resolution.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{measure, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::model::{rhs, ModelKind};
use crate::spectral::{check_finite, to_real, to_spectral, RealField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt0: f64,
    pub t_max: f64,
    pub adaptive: bool,
    pub dt_min: f64,
    pub slope_blowup_threshold: f64,
    pub spectral_tail_fraction_max: f64,
    pub record_every: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            dt0: 1e-3,
            t_max: 5.0,
            adaptive: true,
            dt_min: 1e-8,
            slope_blowup_threshold: 1e4,
            spectral_tail_fraction_max: 1e-6,
            record_every: 100,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt0", self.dt0),
            ("t_max", self.t_max),
            ("dt_min", self.dt_min),
            ("slope_blowup_threshold", self.slope_blowup_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.dt_min < self.dt0) {
            return Err(Error::Config(format!(
                "dt_min ({}) must be below dt0 ({})",
                self.dt_min, self.dt0
            )));
        }
        if !(self.spectral_tail_fraction_max > 0.0 && self.spectral_tail_fraction_max < 1.0) {
            return Err(Error::Config(format!(
                "spectral_tail_fraction_max must lie in (0, 1), got {}",
                self.spectral_tail_fraction_max
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopReason {
    HorizonReached,
    BreakingDetected,
    ResolutionLost,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub field: RealField,
}

#[derive(Debug, Clone)]
pub struct RunTrajectory {
    pub snapshots: Vec<Snapshot>,
    /// One record per accepted step, starting at `t = 0`.
    pub records: Vec<DiagnosticsRecord>,
    pub stop: StopReason,
    pub final_time: f64,
    pub final_field: RealField,
    /// Set when `stop` is `NumericalFailure`.
    pub failure: Option<String>,
}

/// One classical RK4 step of `h' = rhs(h, kind)`.
pub fn step_rk4(h: &RealField, dt: f64, kind: ModelKind) -> Result<RealField> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let k1 = rhs(h, kind)?;
    let k2 = rhs(&h.add_scaled(0.5 * dt, &k1)?, kind)?;
    let k3 = rhs(&h.add_scaled(0.5 * dt, &k2)?, kind)?;
    let k4 = rhs(&h.add_scaled(dt, &k3)?, kind)?;
    let values: Vec<f64> = h
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v + dt / 6.0
                * (k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i])
        })
        .collect();
    check_finite(&values, "RK4 update")?;
    Ok(RealField::from_parts_unchecked(h.grid().clone(), values))
}

fn project(h: &RealField) -> Result<RealField> {
    to_real(&to_spectral(h)?.dealias())
}

/// March `h0` until the horizon, breaking, or loss of resolution.
///
/// The initial field is first projected onto the 2/3-rule band, so the whole
/// trajectory lives in the retained modes. In adaptive mode
/// `dt = min(dt0, c/(1 + max(|m|, M)))` with `c = dt0·(1 + |m(0)|)`.
pub fn run(h0: &RealField, kind: ModelKind, cfg: &StepperConfig) -> Result<RunTrajectory> {
    cfg.validate()?;
    let mut h = project(h0)?;
    let mut t = 0.0;
    let mut record = measure(&h, t, 0.0)?;
    let c_adapt = cfg.dt0 * (1.0 + record.m.abs());
    let mut traj = RunTrajectory {
        snapshots: vec![Snapshot {
            t,
            field: h.clone(),
        }],
        records: vec![record],
        stop: StopReason::HorizonReached,
        final_time: 0.0,
        final_field: h.clone(),
        failure: None,
    };
    let mut steps = 0usize;

    let stop = loop {
        if record.m.abs() >= cfg.slope_blowup_threshold {
            break StopReason::BreakingDetected;
        }
        if record.tail_fraction > cfg.spectral_tail_fraction_max {
            break StopReason::ResolutionLost;
        }
        if t >= cfg.t_max {
            break StopReason::HorizonReached;
        }
        let mut dt = if cfg.adaptive {
            cfg.dt0.min(c_adapt / (1.0 + record.m.abs().max(record.big_m)))
        } else {
            cfg.dt0
        };
        if dt < cfg.dt_min {
            break StopReason::BreakingDetected;
        }
        let remaining = cfg.t_max - t;
        let last = dt >= remaining;
        if last {
            dt = remaining;
        }
        let next = match step_rk4(&h, dt, kind).and_then(|f| Ok((measure(&f, 0.0, dt)?, f))) {
            Ok(v) => v,
            Err(Error::NumericalFailure(msg)) => {
                traj.failure = Some(msg);
                break StopReason::NumericalFailure;
            }
            Err(e) => return Err(e),
        };
        t = if last { cfg.t_max } else { t + dt };
        let (mut rec, field) = next;
        rec.t = t;
        h = field;
        record = rec;
        traj.records.push(record);
        steps += 1;
        if steps % cfg.record_every == 0 {
            traj.snapshots.push(Snapshot {
                t,
                field: h.clone(),
            });
        }
    };

    if traj.snapshots.last().map(|s| s.t) != Some(t) {
        traj.snapshots.push(Snapshot {
            t,
            field: h.clone(),
        });
    }
    traj.stop = stop;
    traj.final_time = t;
    traj.final_field = h;
    Ok(traj)
}

/// Result of a step-halving convergence study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RichardsonEstimate {
    /// Max-norm differences between successive refinements.
    pub differences: Vec<f64>,
    /// `log2` of successive difference ratios.
    pub orders: Vec<f64>,
    /// Last order, or `None` when the differences are at rounding level.
    pub order: Option<f64>,
}

/// Integrate to `t_end` with `dt, dt/2, …, dt/2^n_halvings` fixed steps and
/// estimate the order from successive differences.
pub fn richardson_order_estimate(
    h0: &RealField,
    kind: ModelKind,
    dt: f64,
    t_end: f64,
    n_halvings: usize,
) -> Result<RichardsonEstimate> {
    if n_halvings < 2 {
        return Err(Error::Config("need at least two halvings".into()));
    }
    let mut solutions = Vec::with_capacity(n_halvings + 1);
    for level in 0..=n_halvings {
        let steps = ((t_end / dt).round() as usize) << level;
        let h_step = t_end / steps as f64;
        let mut h = h0.clone();
        for _ in 0..steps {
            h = step_rk4(&h, h_step, kind)?;
        }
        solutions.push(h);
    }
    let differences = solutions
        .windows(2)
        .map(|w| w[0].max_diff(&w[1]))
        .collect::<Result<Vec<f64>>>()?;
    let scale = h0.max_abs().max(1.0);
    let floor = 1e3 * f64::EPSILON * scale;
    let orders: Vec<f64> = differences
        .windows(2)
        .filter(|w| w[0] > floor && w[1] > floor)
        .map(|w| (w[0] / w[1]).log2())
        .collect();
    let order = if differences.last().is_some_and(|d| *d > floor) {
        orders.last().copied()
    } else {
        None
    };
    Ok(RichardsonEstimate {
        differences,
        orders,
        order,
    })
}
