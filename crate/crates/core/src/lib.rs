//! Pseudo-spectral laboratory for wave breaking in the unidirectional
//! non-local wave model
//!
//! ```text
//! h_t + (3/2) h h_x = (1/2) L h_x + (1/2) h_x - (1/2) [L, L h_x] h,   L = (1 - ∂x²)^{-1}
//! ```
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`]: periodic grid, transforms, Fourier multipliers and a
//!   free-space quadrature oracle for `G * f`.
//! * [`model`]: right-hand sides (two equivalent commutator forms and the
//!   Fornberg-Whitham comparison model) and the slope equation.
//! * [`integrator`]: RK4 time stepping with slope-driven step control.
//! * [`diagnostics`]: conserved quantities, extremal slopes, bound monitors,
//!   Riccati residuals and the blow-up rate fit.
//! * [`criteria`]: the closed-form breaking condition and life-span bounds.
//! * [`harness`]: configuration, initial data, runs, sweeps and reports.

pub mod criteria;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod model;
pub mod spectral;

pub use error::{Error, Result};
