//! Shared fixtures for the benchmarks in `benches/`.

use std::f64::consts::PI;

use stochflow::fields::analytic::TaylorGreen2d;
use stochflow::fields::grid::GridLayout;
use stochflow::{GridField, Point, ScalarField};

/// Taylor–Green vorticity sampled on an `n x n` periodic grid.
pub fn taylor_green_vorticity(n: usize, viscosity: f64) -> GridField<2> {
    let w = TaylorGreen2d::new(viscosity).vorticity_at(0.0);
    GridField::sample_scalar(GridLayout::torus(2.0 * PI, n), |x| w.value(x)).expect("valid layout")
}

/// `n` probe points spread over `[-1, 1]^2` by a golden-ratio sequence.
pub fn probes(n: usize) -> Vec<Point<2>> {
    (0..n)
        .map(|i| {
            let a = i as f64;
            Point::<2>::new(2.0 * (a * 0.754_877_666).fract() - 1.0, 2.0 * (a * 0.569_840_291).fract() - 1.0)
        })
        .collect()
}
