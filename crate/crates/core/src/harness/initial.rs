//! Initial-data library.

use std::sync::Arc;

use crate::criteria::{c0_empirical, c0_from_constant, threshold1, threshold2};
use crate::error::{Error, Result};
use crate::harness::config::{C0Mode, Family, InitialDataSpec};
use crate::spectral::{apply_dx, Grid, RealField};

fn shape(spec: &InitialDataSpec, grid: &Arc<Grid>) -> Result<RealField> {
    let (a, s, c) = (spec.amplitude, spec.width, spec.center);
    match spec.family {
        Family::Gaussian => {
            RealField::from_fn(grid.clone(), |x| a * (-(x - c).powi(2) / (2.0 * s * s)).exp())
        }
        Family::DGaussian => RealField::from_fn(grid.clone(), |x| {
            -a * (x - c) * (-(x - c).powi(2) / (2.0 * s * s)).exp()
        }),
        Family::SechSquared => RealField::from_fn(grid.clone(), |x| {
            let ch = ((x - c) / s).cosh();
            a / (ch * ch)
        }),
        Family::Custom => {
            let values = spec
                .values
                .clone()
                .ok_or_else(|| Error::Config("Custom family requires `values`".into()))?;
            RealField::new(grid.clone(), values).map_err(|e| Error::Config(e.to_string()))
        }
    }
}

pub fn min_slope(h: &RealField) -> Result<f64> {
    Ok(apply_dx(h)?.values().iter().copied().fold(f64::INFINITY, f64::min))
}

fn max_slope(h: &RealField) -> Result<f64> {
    Ok(apply_dx(h)?.values().iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Scale factor turning `base` (min slope `m_base`) into a field with min
/// slope `target`.
fn rescale_to(base: &RealField, target: f64) -> Result<RealField> {
    if !(target < 0.0) {
        return Err(Error::Config(format!(
            "target_m0 must be negative for a localized datum, got {target}"
        )));
    }
    let m_base = min_slope(base)?;
    if !(m_base < 0.0) {
        return Err(Error::Config(
            "cannot rescale a datum without a negative slope".into(),
        ));
    }
    Ok(base.scaled(target / m_base))
}

/// `C0` of `h` under the chosen mode.
pub fn c0_for(h: &RealField, mode: &C0Mode) -> Result<f64> {
    match *mode {
        C0Mode::Empirical { safety } => c0_empirical(h, safety),
        C0Mode::Explicit { constant } => c0_from_constant(constant, h.l2_norm()),
    }
}

/// Solve `|m0| = k·|min(threshold1, threshold2)|` for the datum `y·base/|m_base|`.
///
/// Both `C0` modes are quadratic in the amplitude and `M0` is linear, so
/// the unit datum fixes `C0 = κ y²` and `M0 = μ y`, leaving a scalar root
/// problem in `y = |m0|`.
fn self_consistent_m0(base: &RealField, multiple: f64, mode: &C0Mode) -> Result<f64> {
    let m_base = min_slope(base)?;
    if !(m_base < 0.0) {
        return Err(Error::Config(
            "cannot rescale a datum without a negative slope".into(),
        ));
    }
    let unit = base.scaled(1.0 / m_base.abs());
    let kappa = c0_for(&unit, mode)?;
    let mu = max_slope(&unit)?;
    let gap = |y: f64| {
        let c0 = kappa * y * y;
        let t2 = threshold2(mu * y, c0).unwrap_or(-1.0 / 12.0);
        y - multiple * threshold1(c0).min(t2).abs()
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while gap(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::Config(format!(
                "no self-consistent amplitude for threshold multiple {multiple}: \
                 the bracket constant grows too fast with amplitude"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(-0.5 * (lo + hi))
}

/// Sample the initial datum described by `spec` on `grid`.
pub fn build_initial_data(spec: &InitialDataSpec, grid: &Arc<Grid>, mode: &C0Mode) -> Result<RealField> {
    if !(spec.width > 0.0) {
        return Err(Error::Config(format!("width must be positive, got {}", spec.width)));
    }
    let base = shape(spec, grid)?;
    if let Some(target) = spec.target_m0 {
        return rescale_to(&base, target);
    }
    if let Some(multiple) = spec.threshold_multiple {
        let target = self_consistent_m0(&base, multiple, mode)?;
        return rescale_to(&base, target);
    }
    Ok(base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::{breaking_condition, RiccatiParams};

    fn dg(amplitude: f64, width: f64) -> InitialDataSpec {
        InitialDataSpec {
            family: Family::DGaussian,
            amplitude,
            width,
            ..InitialDataSpec::default()
        }
    }

    #[test]
    fn dgaussian_slope_extrema() {
        // h0_x = -a(1 - x²/σ²)e^{-x²/2σ²}: min -a at x = 0, max 2a·e^{-3/2} at x = ±√3σ
        let g = Grid::new(2048, 40.0).unwrap();
        let h = build_initial_data(&dg(1.0, 1.0), &g, &C0Mode::default()).unwrap();
        assert!((min_slope(&h).unwrap() + 1.0).abs() < 1e-6);
        let peak = 2.0 * (-1.5_f64).exp();
        assert!((max_slope(&h).unwrap() - peak).abs() < 1e-3);
    }

    #[test]
    fn target_slope_rescale() {
        let g = Grid::new(2048, 40.0).unwrap();
        for family in [Family::DGaussian, Family::Gaussian, Family::SechSquared] {
            let spec = InitialDataSpec {
                family,
                target_m0: Some(-2.0),
                ..InitialDataSpec::default()
            };
            let h = build_initial_data(&spec, &g, &C0Mode::default()).unwrap();
            assert!((min_slope(&h).unwrap() + 2.0).abs() < 2e-8, "{family:?}");
        }
        let bad = InitialDataSpec {
            target_m0: Some(0.5),
            ..InitialDataSpec::default()
        };
        assert!(build_initial_data(&bad, &g, &C0Mode::default()).is_err());
    }

    #[test]
    fn off_center_gaussian_is_localized() {
        let g = Grid::new(2048, 40.0).unwrap();
        let spec = InitialDataSpec {
            family: Family::Gaussian,
            center: 10.0,
            ..InitialDataSpec::default()
        };
        let h = build_initial_data(&spec, &g, &C0Mode::default()).unwrap();
        let v = h.values();
        assert!(v[0].abs() < 1e-10 && v[v.len() - 1].abs() < 1e-10);
    }

    #[test]
    fn custom_needs_matching_values() {
        let g = Grid::new(16, 1.0).unwrap();
        let spec = InitialDataSpec {
            family: Family::Custom,
            values: Some(vec![0.0; 15]),
            ..InitialDataSpec::default()
        };
        assert!(matches!(build_initial_data(&spec, &g, &C0Mode::default()), Err(Error::Config(_))));
        let missing = InitialDataSpec {
            family: Family::Custom,
            ..InitialDataSpec::default()
        };
        assert!(build_initial_data(&missing, &g, &C0Mode::default()).is_err());
    }

    #[test]
    fn threshold_multiple_is_self_consistent() {
        let g = Grid::new(1024, 20.0).unwrap();
        let mode = C0Mode::default();
        for k in [1.5, 2.0, 3.0] {
            let spec = InitialDataSpec {
                threshold_multiple: Some(k),
                ..InitialDataSpec::default()
            };
            let h = build_initial_data(&spec, &g, &mode).unwrap();
            let m0 = min_slope(&h).unwrap();
            let p = RiccatiParams::new(m0, max_slope(&h).unwrap(), c0_for(&h, &mode).unwrap()).unwrap();
            let v = breaking_condition(&p);
            let thr = v.threshold1.min(v.threshold2);
            assert!((m0 / thr - k).abs() < 1e-6 * k, "k={k}: m0={m0}, thr={thr}");
            assert!(v.condition_holds);
        }
    }
}
