//! Seeded random test fields and the spectral-versus-quadrature check.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::model::{rhs, ModelKind};
use crate::spectral::{apply_l, convolve_direct, Grid, RealField};

/// Sum of a few random Gaussian bumps placed well inside the domain.
///
/// Widths stay above `6·dx` so the bumps are resolved, and centers stay in
/// the middle half so the field is negligible at the boundary.
pub fn random_localized_field(grid: &Arc<Grid>, rng: &mut impl Rng) -> Result<RealField> {
    let l = grid.half_length();
    let min_width = (6.0 * grid.dx()).max(0.02 * l);
    let max_width = 0.05 * l;
    let bumps: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..=4))
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-0.25 * l..0.25 * l),
                rng.gen_range(min_width..max_width),
            )
        })
        .collect();
    RealField::from_fn(grid.clone(), |x| {
        bumps
            .iter()
            .map(|&(a, c, w)| a * (-(x - c).powi(2) / (2.0 * w * w)).exp())
            .sum()
    })
}

/// Random fields from a fixed seed.
pub fn random_fields(grid: &Arc<Grid>, count: usize, seed: u64) -> Result<Vec<RealField>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_localized_field(grid, &mut rng)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub n_fields: usize,
    /// Largest `‖L_spec f − G*f‖∞ / ‖G*f‖∞`.
    pub max_rel_error: f64,
    /// Largest difference between the two forms of the model right-hand side.
    pub max_form_difference: f64,
    pub support_warnings: usize,
}

/// Compare the spectral Helmholtz inverse against direct quadrature, and
/// the two algebraic forms of the model, on seeded random fields.
pub fn oracle_check(grid: &Arc<Grid>, count: usize, seed: u64) -> Result<OracleReport> {
    let fields = random_fields(grid, count, seed)?;
    let mut max_rel_error: f64 = 0.0;
    let mut max_form_difference: f64 = 0.0;
    let mut support_warnings = 0;
    for f in &fields {
        let spectral = apply_l(f)?;
        let direct = convolve_direct(f)?;
        if direct.support_warning.is_some() {
            support_warnings += 1;
        }
        let scale = direct.field.max_abs().max(f64::MIN_POSITIVE);
        max_rel_error = max_rel_error.max(spectral.max_diff(&direct.field)? / scale);
        let a = rhs(f, ModelKind::Nonlocal)?;
        let b = rhs(f, ModelKind::NonlocalCommutatorForm)?;
        max_form_difference = max_form_difference.max(a.max_diff(&b)?);
    }
    Ok(OracleReport {
        n_fields: fields.len(),
        max_rel_error,
        max_form_difference,
        support_warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_fields_repeat() {
        let g = Grid::new(256, 20.0).unwrap();
        let a = random_fields(&g, 3, 7).unwrap();
        let b = random_fields(&g, 3, 7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.values(), y.values());
        }
        let v = a[0].values();
        assert!(v[0].abs() < 1e-10 && v[v.len() - 1].abs() < 1e-10);
    }

    #[test]
    fn oracle_agrees() {
        let g = Grid::new(1024, 20.0).unwrap();
        let rep = oracle_check(&g, 4, 1).unwrap();
        assert!(rep.max_rel_error < 1e-6, "{rep:?}");
        assert!(rep.max_form_difference < 1e-11, "{rep:?}");
        assert_eq!(rep.support_warnings, 0);
    }
}
