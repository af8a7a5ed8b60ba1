//! Right-hand sides of the non-local model, its alternative commutator form,
//! the Fornberg-Whitham comparison model and the differentiated slope
//! equation.
//!
//! Every pointwise product is taken in physical space and projected with the
//! 2/3 rule before any further operator acts on it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::spectral::{
    check_finite, dealias_in_place, multiplied, Grid, Multiplier, RealField,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// `h_t + (3/2)h h_x = (1/2)L h_x + (1/2)h_x - (1/2)[L, L h_x]h`.
    Nonlocal,
    /// The same model written with `[𝓛, 𝓝h]h + 𝓝h + h_x`; kept for
    /// cross-validation of the commutator algebra.
    NonlocalCommutatorForm,
    /// `u_t + (3/2)u u_x = L u_x`.
    FornbergWhitham,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::Nonlocal,
        ModelKind::NonlocalCommutatorForm,
        ModelKind::FornbergWhitham,
    ];
}

fn pointwise(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn dealiased_product(grid: &Grid, a: &[f64], b: &[f64]) -> Vec<Complex64> {
    let mut c = grid.forward_raw(&pointwise(a, b));
    dealias_in_place(grid, &mut c);
    c
}

/// Quantities shared by every right-hand side, computed once per field.
struct Parts<'a> {
    grid: &'a Grid,
    h: &'a [f64],
    spectrum: Vec<Complex64>,
    hx: Vec<f64>,
    /// `L h_x`
    lhx: Vec<f64>,
    /// `P(h·h_x)` in modal space
    advection: Vec<Complex64>,
}

impl<'a> Parts<'a> {
    fn new(field: &'a RealField) -> Result<Self> {
        let grid = field.grid().as_ref();
        let h = field.values();
        check_finite(h, "field")?;
        let spectrum = grid.forward_raw(h);
        let hx = grid.inverse_raw(&multiplied(grid, Multiplier::Dx, &spectrum));
        let lhx = grid.inverse_raw(&multiplied(grid, Multiplier::HelmholtzDx, &spectrum));
        let advection = dealiased_product(grid, h, &hx);
        Ok(Parts {
            grid,
            h,
            spectrum,
            hx,
            lhx,
            advection,
        })
    }

    /// `[L, L h_x]h = L(P((L h_x)·h)) - P((L h_x)·(L h))` in modal space.
    fn commutator(&self) -> Vec<Complex64> {
        let grid = self.grid;
        let lh = grid.inverse_raw(&multiplied(grid, Multiplier::Helmholtz, &self.spectrum));
        let mut outer = dealiased_product(grid, &self.lhx, self.h);
        for (j, c) in outer.iter_mut().enumerate() {
            *c *= Multiplier::Helmholtz.symbol(grid.half_wavenumbers()[j]);
        }
        let inner = dealiased_product(grid, &self.lhx, &lh);
        outer.iter().zip(&inner).map(|(a, b)| a - b).collect()
    }

    /// `[𝓛, 𝓝h]h = 𝓛(P((𝓝h)·h)) - P((𝓝h)·(𝓛h))` in modal space.
    fn curly_commutator(&self) -> Vec<Complex64> {
        let grid = self.grid;
        // 𝓝h has the same multiplier as L h_x
        let nh = &self.lhx;
        let curly_l_h = grid.inverse_raw(&multiplied(grid, Multiplier::CurlyL, &self.spectrum));
        let mut outer = dealiased_product(grid, nh, self.h);
        for (j, c) in outer.iter_mut().enumerate() {
            *c *= Multiplier::CurlyL.symbol(grid.half_wavenumbers()[j]);
        }
        let inner = dealiased_product(grid, nh, &curly_l_h);
        outer.iter().zip(&inner).map(|(a, b)| a - b).collect()
    }

    fn rhs_spectrum(&self, kind: ModelKind) -> Vec<Complex64> {
        let grid = self.grid;
        let dh = multiplied(grid, Multiplier::Dx, &self.spectrum);
        let lxh = multiplied(grid, Multiplier::HelmholtzDx, &self.spectrum);
        match kind {
            ModelKind::Nonlocal => {
                let comm = self.commutator();
                (0..self.spectrum.len())
                    .map(|j| {
                        -1.5 * self.advection[j] + 0.5 * lxh[j] + 0.5 * dh[j] - 0.5 * comm[j]
                    })
                    .collect()
            }
            ModelKind::NonlocalCommutatorForm => {
                let comm = self.curly_commutator();
                let nh = &lxh;
                (0..self.spectrum.len())
                    .map(|j| -1.5 * self.advection[j] + 0.5 * (comm[j] + nh[j] + dh[j]))
                    .collect()
            }
            ModelKind::FornbergWhitham => (0..self.spectrum.len())
                .map(|j| -1.5 * self.advection[j] + lxh[j])
                .collect(),
        }
    }
}

fn finish(grid: &std::sync::Arc<Grid>, values: Vec<f64>, what: &str) -> Result<RealField> {
    check_finite(&values, what)?;
    Ok(RealField::from_parts_unchecked(grid.clone(), values))
}

/// `[L, L h_x]h = L((L h_x)·h) - (L h_x)·(L h)`.
pub fn commutator_term(h: &RealField) -> Result<RealField> {
    let parts = Parts::new(h)?;
    let values = parts.grid.inverse_raw(&parts.commutator());
    finish(h.grid(), values, "commutator")
}

/// Time derivative `h_t` of the chosen model.
pub fn rhs(h: &RealField, kind: ModelKind) -> Result<RealField> {
    let parts = Parts::new(h)?;
    let values = parts.grid.inverse_raw(&parts.rhs_spectrum(kind));
    finish(h.grid(), values, "right-hand side")
}

/// `h_tx` of the non-local model, assembled term by term:
/// `-(3/2)(h_x² + h h_xx) + (1/2)L_x h_x + (1/2)h_xx - (1/2)∂x[L, L h_x]h`.
pub fn slope_rhs(h: &RealField) -> Result<RealField> {
    let parts = Parts::new(h)?;
    let grid = parts.grid;
    let dh = multiplied(grid, Multiplier::Dx, &parts.spectrum);
    let ddh = multiplied(grid, Multiplier::Dx, &dh);
    let hxx = grid.inverse_raw(&ddh);
    let square = dealiased_product(grid, &parts.hx, &parts.hx);
    let curvature = dealiased_product(grid, parts.h, &hxx);
    let lx_hx = multiplied(grid, Multiplier::HelmholtzDx, &dh);
    let dcomm = multiplied(grid, Multiplier::Dx, &parts.commutator());
    let spectrum: Vec<Complex64> = (0..parts.spectrum.len())
        .map(|j| {
            -1.5 * (square[j] + curvature[j]) + 0.5 * lx_hx[j] + 0.5 * ddh[j] - 0.5 * dcomm[j]
        })
        .collect();
    finish(h.grid(), grid.inverse_raw(&spectrum), "slope right-hand side")
}

/// `max |∂x [L, L h_x]h|` over the grid.
pub fn commutator_derivative_supnorm(h: &RealField) -> Result<f64> {
    let parts = Parts::new(h)?;
    let grid = parts.grid;
    let values = grid.inverse_raw(&multiplied(grid, Multiplier::Dx, &parts.commutator()));
    check_finite(&values, "commutator derivative")?;
    Ok(values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
}
