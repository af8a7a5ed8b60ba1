#![allow(dead_code)]

use std::sync::Arc;

use nlwave::criteria::{threshold1, threshold2, RiccatiParams};
use nlwave::spectral::{Grid, RealField};
use proptest::prelude::*;

/// One Gaussian bump: amplitude, center and width as fractions of the box.
pub type Bump = (f64, f64, f64);

pub fn bumps() -> impl Strategy<Value = Vec<Bump>> {
    prop::collection::vec((-1.0..1.0f64, -0.25..0.25f64, 0.02..0.05f64), 1..4)
}

pub fn field(grid: &Arc<Grid>, bumps: &[Bump]) -> RealField {
    let l = grid.half_length();
    RealField::from_fn(grid.clone(), |x| {
        bumps
            .iter()
            .map(|&(a, c, w)| a * (-(x - c * l).powi(2) / (2.0 * (w * l).powi(2))).exp())
            .sum()
    })
    .unwrap()
}

/// Parameters inside the breaking region: `m0` below both thresholds.
pub fn valid_params() -> impl Strategy<Value = RiccatiParams> {
    (0.0..3.0f64, 0.0..5.0f64, 0.0..10.0f64).prop_map(|(c0, big_m0, excess)| {
        let thr = threshold1(c0).min(threshold2(big_m0, c0).unwrap_or(f64::INFINITY));
        RiccatiParams::new(thr * (1.0 + 1e-6 + excess), big_m0, c0).unwrap()
    })
}
