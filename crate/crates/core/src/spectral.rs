//! Periodic grid, real-to-complex transforms and Fourier-multiplier operators.
//!
//! Conventions used throughout the crate:
//!
//! * The domain is `[-half_length, half_length)` sampled at
//!   `x_m = -half_length + m·dx`, `m = 0..n`.
//! * Modal index `j` maps to wavenumber `k_j = π·j / half_length`. The full
//!   symmetric ordering is `j = 0, 1, …, n/2 - 1, -n/2, …, -1`.
//! * A [`SpectralField`] stores only the non-negative half `j = 0..=n/2`; the
//!   negative half is implied by Hermitian symmetry. Coefficients are
//!   normalized so that `f_m = Σ_j c_j e^{2πi·j·m/n}` (forward transform
//!   carries the `1/n`).
//! * Odd multipliers (`∂x`, `L_x`, `𝓝`) zero the Nyquist mode `j = n/2`.
//! * The 2/3-rule keeps `|j| ≤ n/3` and zeroes the rest.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};

/// Uniform periodic grid together with its transform plans.
pub struct Grid {
    n_points: usize,
    half_length: f64,
    dx: f64,
    wavenumbers: Vec<f64>,
    half_wavenumbers: Vec<f64>,
    /// Per-mode multiplier magnitudes, indexed by `Multiplier::index`.
    symbols: [Vec<f64>; 4],
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n_points", &self.n_points)
            .field("half_length", &self.half_length)
            .field("dx", &self.dx)
            .finish()
    }
}

impl Grid {
    pub fn new(n_points: usize, half_length: f64) -> Result<Arc<Grid>> {
        if n_points < 8 || n_points % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "n_points must be even and at least 8, got {n_points}"
            )));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half_length must be positive and finite, got {half_length}"
            )));
        }
        let dx = 2.0 * half_length / n_points as f64;
        let scale = std::f64::consts::PI / half_length;
        let half = n_points / 2;
        let wavenumbers = (0..n_points)
            .map(|m| {
                let j = if m < half {
                    m as i64
                } else {
                    m as i64 - n_points as i64
                };
                scale * j as f64
            })
            .collect();
        let half_wavenumbers: Vec<f64> = (0..=half).map(|j| scale * j as f64).collect();
        let symbols = Multiplier::ALL.map(|op| {
            half_wavenumbers
                .iter()
                .enumerate()
                .map(|(j, &k)| if j == half && op.is_odd() { 0.0 } else { op.magnitude(k) })
                .collect()
        });

        let mut planner = RealFftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(n_points);
        let inverse = planner.plan_fft_inverse(n_points);

        Ok(Arc::new(Grid {
            n_points,
            half_length,
            dx,
            wavenumbers,
            half_wavenumbers,
            symbols,
            forward,
            inverse,
        }))
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Wavenumbers in the full symmetric ordering (`n_points` entries).
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Wavenumbers of the stored half spectrum, `j = 0..=n/2`.
    pub fn half_wavenumbers(&self) -> &[f64] {
        &self.half_wavenumbers
    }

    /// Number of stored spectral coefficients, `n/2 + 1`.
    pub fn n_modes(&self) -> usize {
        self.n_points / 2 + 1
    }

    pub fn nyquist_index(&self) -> usize {
        self.n_points / 2
    }

    /// Largest modal index retained by the 2/3 rule.
    pub fn dealias_cutoff(&self) -> usize {
        self.n_points / 3
    }

    pub fn x(&self, m: usize) -> f64 {
        -self.half_length + m as f64 * self.dx
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n_points).map(|m| self.x(m)).collect()
    }

    /// Weight of half-spectrum entry `j` when summing energy over the full
    /// spectrum.
    pub(crate) fn mode_weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.nyquist_index() {
            1.0
        } else {
            2.0
        }
    }

    pub(crate) fn forward_raw(&self, values: &[f64]) -> Vec<Complex64> {
        let mut input = values.to_vec();
        let mut output = self.forward.make_output_vec();
        with_scratch(self.forward.get_scratch_len(), |scratch| {
            self.forward
                .process_with_scratch(&mut input, &mut output, scratch)
                .expect("buffer sizes come from the plan")
        });
        let norm = 1.0 / self.n_points as f64;
        for c in &mut output {
            *c *= norm;
        }
        output
    }

    pub(crate) fn inverse_raw(&self, coefficients: &[Complex64]) -> Vec<f64> {
        let mut input = coefficients.to_vec();
        // c2r requires real zero and Nyquist entries
        input[0].im = 0.0;
        let last = input.len() - 1;
        input[last].im = 0.0;
        let mut output = self.inverse.make_output_vec();
        with_scratch(self.inverse.get_scratch_len(), |scratch| {
            self.inverse
                .process_with_scratch(&mut input, &mut output, scratch)
                .expect("buffer sizes come from the plan")
        });
        output
    }

    pub(crate) fn same_as(self: &Arc<Self>, other: &Arc<Grid>) -> bool {
        Arc::ptr_eq(self, other)
            || (self.n_points == other.n_points && self.half_length == other.half_length)
    }
}

thread_local! {
    static SCRATCH: RefCell<Vec<Complex64>> = const { RefCell::new(Vec::new()) };
}

/// Run `f` with a per-thread transform scratch buffer of at least `len`.
fn with_scratch<R>(len: usize, f: impl FnOnce(&mut [Complex64]) -> R) -> R {
    SCRATCH.with(|cell| {
        let mut buf = cell.borrow_mut();
        if buf.len() < len {
            buf.resize(len, Complex64::new(0.0, 0.0));
        }
        f(&mut buf[..len])
    })
}

/// Grid samples of a real function.
#[derive(Debug, Clone)]
pub struct RealField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.n_points(),
                values.len()
            )));
        }
        check_finite(&values, "field")?;
        Ok(RealField { grid, values })
    }

    pub(crate) fn from_parts_unchecked(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        RealField { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.n_points();
        RealField {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn constant(grid: Arc<Grid>, value: f64) -> Self {
        let n = grid.n_points();
        RealField {
            grid,
            values: vec![value; n],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..grid.n_points()).map(|m| f(grid.x(m))).collect();
        RealField::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Trapezoidal integral over the periodic box, `dx·Σ f_m`.
    pub fn integral(&self) -> f64 {
        self.grid.dx() * self.values.iter().sum::<f64>()
    }

    /// `∫ f² dx` by the trapezoidal rule.
    pub fn square_integral(&self) -> f64 {
        self.grid.dx() * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.square_integral().sqrt()
    }

    pub fn scaled(&self, a: f64) -> RealField {
        self.map(|v| a * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealField {
        RealField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + a·other`.
    pub fn add_scaled(&self, a: f64, other: &RealField) -> Result<RealField> {
        self.ensure_same_grid(other)?;
        Ok(RealField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x + a * y)
                .collect(),
        })
    }

    pub fn sub(&self, other: &RealField) -> Result<RealField> {
        self.add_scaled(-1.0, other)
    }

    /// Max-norm distance to another field on the same grid.
    pub fn max_diff(&self, other: &RealField) -> Result<f64> {
        self.ensure_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (x, y)| acc.max((x - y).abs())))
    }

    /// Cyclic shift by `cells` grid cells: `out[m] = f[m - cells]`.
    pub fn shifted(&self, cells: isize) -> RealField {
        let n = self.values.len() as isize;
        let s = cells.rem_euclid(n) as usize;
        let mut values = self.values.clone();
        values.rotate_right(s);
        RealField {
            grid: self.grid.clone(),
            values,
        }
    }

    pub(crate) fn ensure_same_grid(&self, other: &RealField) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Half-spectrum modal coefficients of a real field.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: Arc<Grid>,
    coefficients: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: Arc<Grid>, coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() != grid.n_modes() {
            return Err(Error::InvalidGrid(format!(
                "expected {} coefficients, got {}",
                grid.n_modes(),
                coefficients.len()
            )));
        }
        if coefficients
            .iter()
            .any(|c| !(c.re.is_finite() && c.im.is_finite()))
        {
            return Err(Error::NumericalFailure(
                "non-finite spectral coefficient".into(),
            ));
        }
        Ok(SpectralField { grid, coefficients })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Coefficients for `j = 0..=n/2`.
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// Coefficients expanded to all `n` modes in the standard symmetric
    /// ordering, filling negative wavenumbers by conjugation.
    pub fn full_coefficients(&self) -> Vec<Complex64> {
        let n = self.grid.n_points();
        let half = n / 2;
        (0..n)
            .map(|m| {
                if m <= half {
                    self.coefficients[m]
                } else {
                    self.coefficients[n - m].conj()
                }
            })
            .collect()
    }

    /// Relative imaginary content of the self-conjugate modes (`j = 0` and
    /// Nyquist); zero for any spectrum of a real field.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self
            .coefficients
            .iter()
            .fold(0.0_f64, |acc, c| acc.max(c.norm()))
            .max(f64::MIN_POSITIVE);
        let last = self.coefficients.len() - 1;
        self.coefficients[0].im.abs().max(self.coefficients[last].im.abs()) / scale
    }

    /// 2/3-rule truncation. Idempotent; the zero mode is never touched.
    pub fn dealias(&self) -> SpectralField {
        let mut coefficients = self.coefficients.clone();
        dealias_in_place(&self.grid, &mut coefficients);
        SpectralField {
            grid: self.grid.clone(),
            coefficients,
        }
    }

    /// Energy over all modes, `Σ_full |c_j|²` (equals the mean of `f²`).
    pub fn modal_energy(&self) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(j, c)| self.grid.mode_weight(j) * c.norm_sqr())
            .sum()
    }

    /// Fraction of modal energy in the top sixth of the retained band,
    /// `5/6·cutoff < |j| ≤ cutoff`. Zero for a zero field.
    pub fn tail_fraction(&self) -> f64 {
        tail_fraction_of(&self.grid, &self.coefficients)
    }
}

pub(crate) fn tail_fraction_of(grid: &Grid, coefficients: &[Complex64]) -> f64 {
    let n = grid.n_points();
    let mut total = 0.0;
    let mut tail = 0.0;
    for (j, c) in coefficients.iter().enumerate() {
        let e = grid.mode_weight(j) * c.norm_sqr();
        total += e;
        if 18 * j > 5 * n && 3 * j <= n {
            tail += e;
        }
    }
    if total > 0.0 {
        tail / total
    } else {
        0.0
    }
}

pub(crate) fn dealias_in_place(grid: &Grid, coefficients: &mut [Complex64]) {
    let cutoff = grid.dealias_cutoff();
    for c in coefficients.iter_mut().skip(cutoff + 1) {
        *c = Complex64::new(0.0, 0.0);
    }
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::NumericalFailure(format!(
            "non-finite {what} value at index {i}"
        ))),
    }
}

pub fn to_spectral(f: &RealField) -> Result<SpectralField> {
    check_finite(&f.values, "field")?;
    Ok(SpectralField {
        grid: f.grid.clone(),
        coefficients: f.grid.forward_raw(&f.values),
    })
}

pub fn to_real(spectrum: &SpectralField) -> Result<RealField> {
    let values = spectrum.grid.inverse_raw(&spectrum.coefficients);
    check_finite(&values, "transformed field")?;
    Ok(RealField {
        grid: spectrum.grid.clone(),
        values,
    })
}

/// The diagonal Fourier multipliers used by the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Multiplier {
    /// `L = (1 - ∂x²)^{-1}`, symbol `1/(1+k²)`.
    Helmholtz,
    /// `∂x`, symbol `ik`.
    Dx,
    /// `L_x = ∂x L`, symbol `ik/(1+k²)`. Also `𝓝`.
    HelmholtzDx,
    /// `𝓛 = -∂x² L`, symbol `k²/(1+k²)`.
    CurlyL,
}

impl Multiplier {
    fn is_odd(self) -> bool {
        matches!(self, Multiplier::Dx | Multiplier::HelmholtzDx)
    }

    const ALL: [Multiplier; 4] = [
        Multiplier::Helmholtz,
        Multiplier::Dx,
        Multiplier::HelmholtzDx,
        Multiplier::CurlyL,
    ];

    fn index(self) -> usize {
        self as usize
    }

    /// Symbol divided by `i` for the odd multipliers.
    fn magnitude(self, k: f64) -> f64 {
        let k2 = k * k;
        match self {
            Multiplier::Helmholtz => 1.0 / (1.0 + k2),
            Multiplier::Dx => k,
            Multiplier::HelmholtzDx => k / (1.0 + k2),
            Multiplier::CurlyL => k2 / (1.0 + k2),
        }
    }

    pub fn symbol(self, k: f64) -> Complex64 {
        let k2 = k * k;
        match self {
            Multiplier::Helmholtz => Complex64::new(1.0 / (1.0 + k2), 0.0),
            Multiplier::Dx => Complex64::new(0.0, k),
            Multiplier::HelmholtzDx => Complex64::new(0.0, k / (1.0 + k2)),
            Multiplier::CurlyL => Complex64::new(k2 / (1.0 + k2), 0.0),
        }
    }
}

/// Multiplies a half spectrum by `op` in place.
pub(crate) fn apply_multiplier_in_place(grid: &Grid, op: Multiplier, coefficients: &mut [Complex64]) {
    let table = &grid.symbols[op.index()];
    if op.is_odd() {
        for (c, &s) in coefficients.iter_mut().zip(table) {
            *c = Complex64::new(-s * c.im, s * c.re);
        }
    } else {
        for (c, &s) in coefficients.iter_mut().zip(table) {
            *c *= s;
        }
    }
}

pub(crate) fn multiplied(grid: &Grid, op: Multiplier, coefficients: &[Complex64]) -> Vec<Complex64> {
    let mut out = coefficients.to_vec();
    apply_multiplier_in_place(grid, op, &mut out);
    out
}

impl SpectralField {
    pub fn apply(&self, op: Multiplier) -> SpectralField {
        SpectralField {
            grid: self.grid.clone(),
            coefficients: multiplied(&self.grid, op, &self.coefficients),
        }
    }
}

pub fn apply_multiplier(f: &RealField, op: Multiplier) -> Result<RealField> {
    to_real(&to_spectral(f)?.apply(op))
}

/// `L f = G * f`, multiplier `1/(1+k²)`.
pub fn apply_l(f: &RealField) -> Result<RealField> {
    apply_multiplier(f, Multiplier::Helmholtz)
}

/// Spectral derivative with the Nyquist mode zeroed.
pub fn apply_dx(f: &RealField) -> Result<RealField> {
    apply_multiplier(f, Multiplier::Dx)
}

/// `L_x f = ∂x L f = G_x * f`.
pub fn apply_lx(f: &RealField) -> Result<RealField> {
    apply_multiplier(f, Multiplier::HelmholtzDx)
}

/// `𝓛 f = -∂x²(1-∂x²)^{-1} f`.
pub fn apply_curly_l(f: &RealField) -> Result<RealField> {
    apply_multiplier(f, Multiplier::CurlyL)
}

/// `𝓝 f = ∂x(1-∂x²)^{-1} f`; shares its multiplier with [`apply_lx`].
pub fn apply_curly_n(f: &RealField) -> Result<RealField> {
    apply_multiplier(f, Multiplier::HelmholtzDx)
}

pub fn dealias(spectrum: &SpectralField) -> SpectralField {
    spectrum.dealias()
}

/// Green's function of `1 - ∂x²` on the line.
pub fn kernel_g(x: f64) -> f64 {
    0.5 * (-x.abs()).exp()
}

/// A derivative discontinuity of the integrand at a grid node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kink {
    pub index: usize,
    /// `f'(x⁺) - f'(x⁻)` at the node.
    pub slope_jump: f64,
}

/// Output of the free-space quadrature oracle.
#[derive(Debug, Clone)]
pub struct Convolution {
    pub field: RealField,
    /// Set when the input is not small on the outer tenth of the box.
    pub support_warning: Option<String>,
}

/// Free-space reference value of `G * f` by the trapezoidal rule over the
/// grid, using the untruncated kernel at plain (non-periodic) distances.
///
/// The kernel kink at `y = x` sits on a node, so the plain rule is only
/// second order; the leading two Euler-Maclaurin terms of the kink are
/// subtracted, giving `O(dx⁶)` for smooth `f`.
pub fn convolve_direct(f: &RealField) -> Result<Convolution> {
    convolve_direct_with_kinks(f, &[])
}

/// As [`convolve_direct`], with additional second-order corrections for
/// kinks of `f` itself at the given nodes.
pub fn convolve_direct_with_kinks(f: &RealField, kinks: &[Kink]) -> Result<Convolution> {
    check_finite(&f.values, "field")?;
    let grid = f.grid.clone();
    let n = grid.n_points();
    let dx = grid.dx();
    let values = &f.values;

    let table: Vec<f64> = (0..n).map(|d| kernel_g(d as f64 * dx)).collect();
    // centered second difference; the support precondition makes the wrap harmless
    let at = |m: isize| values[m.rem_euclid(n as isize) as usize];
    let mut second: Vec<f64> = (0..n as isize)
        .map(|m| (at(m - 1) - 2.0 * at(m) + at(m + 1)) / (dx * dx))
        .collect();
    // stencils must not straddle a declared kink
    for k in kinks {
        let k = k.index as isize;
        let right = |m: isize| (at(m) - 2.0 * at(m + 1) + at(m + 2)) / (dx * dx);
        let left = |m: isize| (at(m) - 2.0 * at(m - 1) + at(m - 2)) / (dx * dx);
        let idx = |m: isize| m.rem_euclid(n as isize) as usize;
        second[idx(k)] = 0.5 * (right(k) + left(k));
        second[idx(k + 1)] = right(k + 1);
        second[idx(k - 1)] = left(k - 1);
    }

    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, v) in values.iter().enumerate() {
            acc += table[i.abs_diff(j)] * v;
        }
        let mut s = dx * acc;
        s -= dx * dx / 12.0 * values[i];
        s += dx.powi(4) / 720.0 * (values[i] + 3.0 * second[i]);
        for k in kinks {
            s += dx * dx / 12.0 * table[i.abs_diff(k.index)] * k.slope_jump;
        }
        *o = s;
    }

    let peak = f.max_abs();
    let band = n / 10;
    let edge = values[..band]
        .iter()
        .chain(&values[n - band..])
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let support_warning = (peak > 0.0 && edge >= 1e-10 * peak).then(|| {
        format!(
            "field not localized: max |f| on outer 10% is {edge:.3e} (peak {peak:.3e})"
        )
    });
    if let Some(w) = &support_warning {
        log::warn!("convolve_direct: {w}");
    }

    Ok(Convolution {
        field: RealField::from_parts_unchecked(grid, out),
        support_warning,
    })
}
