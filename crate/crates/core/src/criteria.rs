//! Closed-form wave-breaking criterion, life-span bounds and the Riccati
//! comparison system for the extremal slopes.
//!
//! Everything here depends only on the triple `(m0, M0, C0)`: the infimum
//! and supremum of the initial slope and the bound on `|∂x [L, L h_x]h|`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::commutator_derivative_supnorm;
use crate::spectral::RealField;

/// Default multiplier applied to the measured bracket derivative when the
/// constant `C0` is estimated from data.
pub const DEFAULT_C0_SAFETY: f64 = 2.0;

/// Slope magnitude at which the comparison system is declared blown up.
pub const COMPARISON_BLOWUP_SLOPE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiccatiParams {
    pub m0: f64,
    #[serde(rename = "M0")]
    pub big_m0: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
}

impl RiccatiParams {
    pub fn new(m0: f64, big_m0: f64, c0: f64) -> Result<Self> {
        if !(m0.is_finite() && big_m0.is_finite() && c0.is_finite()) {
            return Err(Error::Domain(DomainViolation::InvalidParams(
                "parameters must be finite".into(),
            )));
        }
        if m0 > big_m0 {
            return Err(Error::Domain(DomainViolation::InvalidParams(format!(
                "m0 = {m0} exceeds M0 = {big_m0}"
            ))));
        }
        if c0 < 0.0 {
            return Err(Error::Domain(DomainViolation::InvalidParams(format!(
                "C0 = {c0} is negative"
            ))));
        }
        Ok(RiccatiParams { m0, big_m0, c0 })
    }
}

/// A violated validity condition of one of the closed-form expressions.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainViolation {
    InvalidParams(String),
    NonPositiveConstant(f64),
    /// `3m0² + m0/2 - 2C0 ≤ 0`
    NumeratorFactor(f64),
    /// `3m0² + m0 - 2C0 ≤ 0`
    DenominatorFactor(f64),
    /// `3m0² - M0/2 + m0/2 - 2C0 ≤ 0`
    Radicand(f64),
    /// `6m0² - M0 ≤ 0`
    SteepnessRadicand(f64),
    /// `4C0 - m0 ≤ 0`
    OffsetRadicand(f64),
    /// `2C0 - m0/2 ≤ 0`
    PrefactorRadicand(f64),
    /// `√(6m0² - M0) ≤ √(4C0 - m0)`
    LogArgument { steepness: f64, offset: f64 },
    /// breaking condition does not hold
    ConditionNotMet { m0: f64, threshold: f64 },
}

impl fmt::Display for DomainViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainViolation::InvalidParams(s) => write!(f, "invalid parameters: {s}"),
            DomainViolation::NonPositiveConstant(c) => {
                write!(f, "embedding constant must be positive, got {c}")
            }
            DomainViolation::NumeratorFactor(v) => {
                write!(f, "numerator factor 3m0^2 + m0/2 - 2C0 = {v} is not positive")
            }
            DomainViolation::DenominatorFactor(v) => {
                write!(f, "denominator factor 3m0^2 + m0 - 2C0 = {v} is not positive")
            }
            DomainViolation::Radicand(v) => {
                write!(f, "radicand 3m0^2 - M0/2 + m0/2 - 2C0 = {v} is not positive")
            }
            DomainViolation::SteepnessRadicand(v) => {
                write!(f, "6m0^2 - M0 = {v} is not positive")
            }
            DomainViolation::OffsetRadicand(v) => write!(f, "4C0 - m0 = {v} is not positive"),
            DomainViolation::PrefactorRadicand(v) => {
                write!(f, "2C0 - m0/2 = {v} is not positive")
            }
            DomainViolation::LogArgument { steepness, offset } => write!(
                f,
                "sqrt(6m0^2 - M0) = {steepness} does not exceed sqrt(4C0 - m0) = {offset}"
            ),
            DomainViolation::ConditionNotMet { m0, threshold } => write!(
                f,
                "breaking condition fails: m0 = {m0} is not below {threshold}"
            ),
        }
    }
}

fn domain<T>(v: DomainViolation) -> Result<T> {
    Err(Error::Domain(v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionVerdict {
    pub params: RiccatiParams,
    pub condition_holds: bool,
    pub threshold1: f64,
    pub threshold2: f64,
    pub t_star_main: Option<f64>,
    pub t_star_refined: Option<f64>,
    pub validity_notes: Vec<String>,
}

/// `C0 = C·‖h0‖²`.
pub fn c0_from_constant(constant: f64, l2_norm_h0: f64) -> Result<f64> {
    if !(constant > 0.0) || !constant.is_finite() {
        return domain(DomainViolation::NonPositiveConstant(constant));
    }
    if !(l2_norm_h0 >= 0.0) {
        return domain(DomainViolation::InvalidParams(format!(
            "L2 norm must be non-negative, got {l2_norm_h0}"
        )));
    }
    Ok(constant * l2_norm_h0 * l2_norm_h0)
}

/// `safety · max |∂x [L, L h0_x]h0|`, a concrete `C0` for the initial state.
pub fn c0_empirical(h0: &RealField, safety: f64) -> Result<f64> {
    if !(safety >= 1.0) {
        return Err(Error::Config(format!(
            "C0 safety factor must be at least 1, got {safety}"
        )));
    }
    Ok(safety * commutator_derivative_supnorm(h0)?)
}

pub fn threshold1(c0: f64) -> f64 {
    -(1.0 + (1.0 + 24.0 * c0).sqrt()) / 6.0
}

/// Second threshold; `None` when its radicand `1 + 24(M0 + 4C0)` is negative.
pub fn threshold2(big_m0: f64, c0: f64) -> Option<f64> {
    let radicand = 1.0 + 24.0 * (big_m0 + 4.0 * c0);
    (radicand >= 0.0).then(|| -(1.0 + radicand.sqrt()) / 12.0)
}

pub fn breaking_condition(p: &RiccatiParams) -> CriterionVerdict {
    let mut notes = Vec::new();
    let t1 = threshold1(p.c0);
    let t2 = threshold2(p.big_m0, p.c0).unwrap_or_else(|| {
        notes.push("threshold2 radicand negative; clamped to zero".to_string());
        -1.0 / 12.0
    });
    let condition_holds = p.m0 < t1.min(t2);
    let (t_star_main, t_star_refined) = if condition_holds {
        let main = lifespan_main(p);
        let refined = lifespan_refined(p);
        if let Err(e) = &main {
            notes.push(format!("main life span unavailable: {e}"));
        }
        if let Err(e) = &refined {
            notes.push(format!("refined life span unavailable: {e}"));
        }
        (main.ok(), refined.ok())
    } else {
        notes.push(format!(
            "m0 = {} is not below min(threshold1, threshold2) = {}",
            p.m0,
            t1.min(t2)
        ));
        (None, None)
    };
    CriterionVerdict {
        params: *p,
        condition_holds,
        threshold1: t1,
        threshold2: t2,
        t_star_main,
        t_star_refined,
        validity_notes: notes,
    }
}

fn check_condition(p: &RiccatiParams) -> Result<()> {
    let threshold = threshold1(p.c0).min(threshold2(p.big_m0, p.c0).unwrap_or(-1.0 / 12.0));
    if p.m0 < threshold {
        Ok(())
    } else {
        domain(DomainViolation::ConditionNotMet { m0: p.m0, threshold })
    }
}

struct Brackets {
    numerator: f64,
    denominator: f64,
    radicand: f64,
}

fn brackets(p: &RiccatiParams) -> Brackets {
    let m2 = 3.0 * p.m0 * p.m0;
    Brackets {
        numerator: m2 + 0.5 * p.m0 - 2.0 * p.c0,
        denominator: m2 + p.m0 - 2.0 * p.c0,
        radicand: m2 - 0.5 * p.big_m0 + 0.5 * p.m0 - 2.0 * p.c0,
    }
}

/// Upper bound on the breaking time,
/// `2√3 N / (3 D √R)` with `N = 3m0² + m0/2 - 2C0`, `D = 3m0² + m0 - 2C0`,
/// `R = 3m0² - M0/2 + m0/2 - 2C0`.
pub fn lifespan_main(p: &RiccatiParams) -> Result<f64> {
    let b = brackets(p);
    if !(b.numerator > 0.0) {
        return domain(DomainViolation::NumeratorFactor(b.numerator));
    }
    if !(b.denominator > 0.0) {
        return domain(DomainViolation::DenominatorFactor(b.denominator));
    }
    if !(b.radicand > 0.0) {
        return domain(DomainViolation::Radicand(b.radicand));
    }
    check_condition(p)?;
    Ok(2.0 * 3.0_f64.sqrt() * b.numerator / (3.0 * b.denominator * b.radicand.sqrt()))
}

/// Sharper bound obtained by keeping the `-m0/6 + 2C0/3` term in the lower
/// estimate of `m²`:
/// `√3 N / (3 √(2C0 - m0/2) D) · ln((√(6m0² - M0) + √(4C0 - m0)) / (√(6m0² - M0) - √(4C0 - m0)))`.
pub fn lifespan_refined(p: &RiccatiParams) -> Result<f64> {
    let b = brackets(p);
    let steep = 6.0 * p.m0 * p.m0 - p.big_m0;
    let offset = 4.0 * p.c0 - p.m0;
    let pre = 2.0 * p.c0 - 0.5 * p.m0;
    if !(steep > 0.0) {
        return domain(DomainViolation::SteepnessRadicand(steep));
    }
    if !(offset > 0.0) {
        return domain(DomainViolation::OffsetRadicand(offset));
    }
    if !(pre > 0.0) {
        return domain(DomainViolation::PrefactorRadicand(pre));
    }
    let (s, o) = (steep.sqrt(), offset.sqrt());
    if !(s > o) {
        return domain(DomainViolation::LogArgument {
            steepness: s,
            offset: o,
        });
    }
    if !(b.numerator > 0.0) {
        return domain(DomainViolation::NumeratorFactor(b.numerator));
    }
    if !(b.denominator > 0.0) {
        return domain(DomainViolation::DenominatorFactor(b.denominator));
    }
    check_condition(p)?;
    let prefactor = 3.0_f64.sqrt() * b.numerator / (3.0 * pre.sqrt() * b.denominator);
    Ok(prefactor * ((s + o) / (s - o)).ln())
}

/// `φ = -(3/2)m² + (1/4)(M - m) + C0`.
pub fn phi(m: f64, big_m: f64, c0: f64) -> f64 {
    -1.5 * m * m + 0.25 * (big_m - m) + c0
}

/// `δ = √6 (3m0² + m0 - 2C0) / (3m0² + m0/2 - 2C0)`.
pub fn delta(p: &RiccatiParams) -> Result<f64> {
    let b = brackets(p);
    if b.numerator == 0.0 {
        return domain(DomainViolation::NumeratorFactor(b.numerator));
    }
    Ok(6.0_f64.sqrt() * b.denominator / b.numerator)
}

/// Life span reconstructed from the proof quantities, `2 / (δ √(-φ(0)))`.
pub fn lifespan_from_phi_delta(p: &RiccatiParams) -> Result<f64> {
    let phi0 = phi(p.m0, p.big_m0, p.c0);
    if !(phi0 < 0.0) {
        return domain(DomainViolation::Radicand(-2.0 * phi0));
    }
    Ok(2.0 / (delta(p)? * (-phi0).sqrt()))
}

/// Solution curves of the equality system
/// `M' = -(3/2)M² + (M - m)/4 + C0`, `m' = -(3/2)m² + (M - m)/4 + C0`.
///
/// Exploratory: the coupling is not quasi-monotone, so these curves are not
/// claimed to bound the true extremal slopes.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonCurves {
    pub t: Vec<f64>,
    #[serde(rename = "M")]
    pub big_m: Vec<f64>,
    pub m: Vec<f64>,
    pub blowup_time: Option<f64>,
    pub exploratory: bool,
}

fn comparison_field(c0: f64, big_m: f64, m: f64) -> (f64, f64) {
    let coupling = 0.25 * (big_m - m) + c0;
    (-1.5 * big_m * big_m + coupling, -1.5 * m * m + coupling)
}

/// Integrates the comparison system with classical RK4. The nominal step
/// `dt` is reduced to `0.01 / max(1, |M|, |m|)` as the slopes grow.
pub fn riccati_compare(p: &RiccatiParams, dt: f64, t_end: f64) -> Result<ComparisonCurves> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let c0 = p.c0;
    let (mut t, mut big_m, mut m) = (0.0, p.big_m0, p.m0);
    let mut curves = ComparisonCurves {
        t: vec![t],
        big_m: vec![big_m],
        m: vec![m],
        blowup_time: None,
        exploratory: true,
    };
    while t < t_end {
        let scale = 1.0_f64.max(big_m.abs()).max(m.abs());
        let h = dt.min(0.01 / scale).min(t_end - t);
        let k1 = comparison_field(c0, big_m, m);
        let k2 = comparison_field(c0, big_m + 0.5 * h * k1.0, m + 0.5 * h * k1.1);
        let k3 = comparison_field(c0, big_m + 0.5 * h * k2.0, m + 0.5 * h * k2.1);
        let k4 = comparison_field(c0, big_m + h * k3.0, m + h * k3.1);
        big_m += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        m += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        t += h;
        curves.t.push(t);
        curves.big_m.push(big_m);
        curves.m.push(m);
        if !(big_m.is_finite() && m.is_finite())
            || big_m.abs() > COMPARISON_BLOWUP_SLOPE
            || m.abs() > COMPARISON_BLOWUP_SLOPE
        {
            curves.blowup_time = Some(t);
            break;
        }
    }
    Ok(curves)
}
