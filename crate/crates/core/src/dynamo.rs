//! Kinematic dynamo: passive transport of a magnetic field by a prescribed
//! flow, and growth-rate estimation.
//!
//! The magnetic field is carried exactly like vorticity, with the magnetic
//! diffusivity in place of the viscosity: a vector weighted by the adjugate
//! of the path Jacobian in 3D, a plain scalar (the flux function) in 2D.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{divergence_of_vector_field, ScalarField, VectorField, VelocityField};
use crate::rng::RandomSource;
use crate::sde::Point;
use crate::stats::{linear_fit, pairwise_sum};
use crate::transport::{solve_scalar, solve_vorticity_3d, PointEstimate, TransportParams};

/// Number of independent path groups used for the resampling error bars.
pub const RATE_GROUPS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DynamoParams {
    /// Magnetic diffusivity.
    pub diffusivity: f64,
    /// Time of the initial field.
    pub t0: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub source: RandomSource,
    pub antithetic: bool,
}

impl DynamoParams {
    fn transport(&self) -> TransportParams {
        TransportParams {
            viscosity: self.diffusivity,
            t0: self.t0,
            horizon: self.horizon,
            n_steps: self.n_steps,
            n_paths: self.n_paths,
            source: self.source,
            antithetic: self.antithetic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.diffusivity > 0.0) || !self.diffusivity.is_finite() {
            return Err(Error::invalid(
                "diffusivity",
                format!("must be positive, got {}", self.diffusivity),
            ));
        }
        self.transport().validate()
    }

    /// Same settings at another horizon, with the step size kept.
    fn at_horizon(&self, horizon: f64) -> DynamoParams {
        let dt = self.horizon / self.n_steps as f64;
        DynamoParams {
            horizon,
            n_steps: ((horizon / dt).round() as usize).max(1),
            ..*self
        }
    }
}

/// Largest divergence of `b` over `points` that still counts as
/// divergence-free, relative to the field scale.
const DIVERGENCE_TOLERANCE: f64 = 1e-6;

/// Reject an initial field that is not divergence-free at the given points.
pub fn check_divergence_free(b: &dyn VectorField<3>, points: &[Point<3>]) -> Result<()> {
    let scale = points.iter().map(|x| b.value(x).amax()).fold(0.0, f64::max).max(1e-300);
    for x in points {
        let d = divergence_of_vector_field(b, x);
        if d.abs() > DIVERGENCE_TOLERANCE * scale.max(1.0) {
            return Err(Error::invalid(
                "initial_field",
                format!("divergence {d:.3e} at {:?} is not zero", x.as_slice()),
            ));
        }
    }
    Ok(())
}

/// Magnetic field at `t0 + horizon` at each point, for a 3D flow.
pub fn transport_magnetic_3d(
    params: &DynamoParams,
    velocity: &dyn VelocityField<3>,
    initial: &dyn VectorField<3>,
    points: &[Point<3>],
) -> Result<Vec<PointEstimate<3>>> {
    params.validate()?;
    check_divergence_free(initial, points)?;
    solve_vorticity_3d(&params.transport(), velocity, initial, points)
}

/// Flux function at `t0 + horizon` for a 2D flow.
pub fn transport_magnetic_2d(
    params: &DynamoParams,
    velocity: &dyn VelocityField<2>,
    initial: &dyn ScalarField<2>,
    points: &[Point<2>],
) -> Result<Vec<PointEstimate<2>>> {
    params.validate()?;
    solve_scalar(&params.transport(), velocity, initial, points, 0)
}

/// Divergence of a 3D field estimated on a periodic grid of nodes, by
/// central differences, with its Monte Carlo standard error.
#[derive(Clone, Debug, Serialize)]
pub struct DivergenceReport {
    pub max_abs_divergence: f64,
    /// Standard error of the divergence at the node where it is largest.
    pub stderr_at_max: f64,
    /// Largest `|div| / stderr` over the grid.
    pub max_ratio: f64,
}

/// `estimates` must be node values in the row-major order of `shape`
/// (first axis slowest) on a periodic grid with the given spacing.
pub fn grid_divergence(estimates: &[PointEstimate<3>], shape: [usize; 3], spacing: [f64; 3]) -> Result<DivergenceReport> {
    let n = shape[0] * shape[1] * shape[2];
    if estimates.len() != n {
        return Err(Error::Dimension(format!("{} estimates for a grid of {n} nodes", estimates.len())));
    }
    let flat = |i: [usize; 3]| (i[0] * shape[1] + i[1]) * shape[2] + i[2];
    let mut report = DivergenceReport {
        max_abs_divergence: 0.0,
        stderr_at_max: 0.0,
        max_ratio: 0.0,
    };
    for k in 0..n {
        let idx = [k / (shape[1] * shape[2]), (k / shape[2]) % shape[1], k % shape[2]];
        let mut div = 0.0;
        let mut var = 0.0;
        for a in 0..3 {
            let mut up = idx;
            let mut down = idx;
            up[a] = (idx[a] + 1) % shape[a];
            down[a] = (idx[a] + shape[a] - 1) % shape[a];
            let (eu, ed) = (&estimates[flat(up)].components[a], &estimates[flat(down)].components[a]);
            let h2 = 2.0 * spacing[a];
            div += (eu.mean - ed.mean) / h2;
            var += (eu.stderr.powi(2) + ed.stderr.powi(2)) / (h2 * h2);
        }
        let se = var.sqrt();
        if div.abs() > report.max_abs_divergence {
            report.max_abs_divergence = div.abs();
            report.stderr_at_max = se;
        }
        if se > 0.0 {
            report.max_ratio = report.max_ratio.max(div.abs() / se);
        }
    }
    Ok(report)
}

/// Growth-rate fit of the probe-averaged magnetic energy.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthRate {
    /// Exponential rate of the field amplitude: half the slope of the log
    /// energy.
    pub rate: f64,
    pub stderr: f64,
    /// 95% interval.
    pub interval: (f64, f64),
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub energy_stderr: Vec<f64>,
}

/// Unbiased estimate of the mean squared field over probes from independent
/// group means: the cross terms `B_g . B_h` with `g != h`.
fn cross_energy(groups: &[Vec<Vec<f64>>], skip: Option<usize>) -> f64 {
    let used: Vec<&Vec<Vec<f64>>> = groups
        .iter()
        .enumerate()
        .filter(|(g, _)| Some(*g) != skip)
        .map(|(_, v)| v)
        .collect();
    let m = used.len() as f64;
    let n_probes = used[0].len();
    let per_probe: Vec<f64> = (0..n_probes)
        .map(|p| {
            let dim = used[0][p].len();
            let mut total = 0.0;
            for c in 0..dim {
                let col: Vec<f64> = used.iter().map(|g| g[p][c]).collect();
                let s = pairwise_sum(&col);
                let sq = pairwise_sum(&col.iter().map(|v| v * v).collect::<Vec<_>>());
                total += (s * s - sq) / (m * (m - 1.0));
            }
            total
        })
        .collect();
    pairwise_sum(&per_probe) / n_probes as f64
}

/// Fit `ln E(t) = a + 2 r t` at `n_times` equally spaced times in the window
/// `[t1, t2]` (measured from `t0`), where `E` is the probe-averaged squared
/// field. Each time is a fresh backward run; paths are split into
/// [`RATE_GROUPS`] independent groups and the interval comes from a
/// delete-one-group jackknife.
///
/// `estimate(params)` returns per-probe component means for one
/// group.
pub fn growth_rate_with<F>(params: &DynamoParams, window: (f64, f64), n_times: usize, estimate: F) -> Result<GrowthRate>
where
    F: Fn(&DynamoParams) -> Result<Vec<Vec<f64>>>,
{
    params.validate()?;
    let (t1, t2) = window;
    if !(t1 > 0.0 && t2 > t1) {
        return Err(Error::invalid("window", format!("need 0 < t1 < t2, got [{t1}, {t2}]")));
    }
    if n_times < 2 {
        return Err(Error::invalid("n_times", "need at least two times"));
    }
    let per_group = params.n_paths / RATE_GROUPS;
    if per_group == 0 || (params.antithetic && per_group % 2 == 1) {
        return Err(Error::invalid(
            "n_paths",
            format!("must split into {RATE_GROUPS} equal groups of usable size"),
        ));
    }
    let times: Vec<f64> = (0..n_times).map(|i| t1 + (t2 - t1) * i as f64 / (n_times - 1) as f64).collect();
    // samples[time][group][probe][component]
    let mut samples = Vec::with_capacity(n_times);
    for &t in &times {
        let base = params.at_horizon(t);
        let mut groups = Vec::with_capacity(RATE_GROUPS);
        for g in 0..RATE_GROUPS {
            let p = DynamoParams {
                n_paths: per_group,
                source: params.source.split(g as u64),
                ..base
            };
            groups.push(estimate(&p)?);
        }
        samples.push(groups);
    }

    let fit_rate = |skip: Option<usize>| -> Result<(f64, Vec<f64>)> {
        let energies: Vec<f64> = samples.iter().map(|groups| cross_energy(groups, skip)).collect();
        if let Some((i, e)) = energies.iter().enumerate().find(|(_, e)| !(**e > 0.0)) {
            return Err(Error::IndeterminateRate(format!(
                "energy estimate {e:.3e} at t = {} is not positive",
                times[i]
            )));
        }
        let logs: Vec<f64> = energies.iter().map(|e| e.ln()).collect();
        Ok((0.5 * linear_fit(&times, &logs).slope, energies))
    };

    let (rate, energies) = fit_rate(None)?;
    let g = RATE_GROUPS as f64;
    let mut leave_out = Vec::with_capacity(RATE_GROUPS);
    let mut leave_out_energy = Vec::with_capacity(RATE_GROUPS);
    for k in 0..RATE_GROUPS {
        let (r, e) = fit_rate(Some(k))?;
        leave_out.push(r);
        leave_out_energy.push(e);
    }
    let jackknife = |vals: &[f64]| {
        let mean = pairwise_sum(vals) / g;
        ((g - 1.0) / g * pairwise_sum(&vals.iter().map(|v| (v - mean).powi(2)).collect::<Vec<_>>())).sqrt()
    };
    let stderr = jackknife(&leave_out);
    let energy_stderr: Vec<f64> = (0..n_times)
        .map(|i| jackknife(&leave_out_energy.iter().map(|e| e[i]).collect::<Vec<_>>()))
        .collect();
    for (i, (e, se)) in energies.iter().zip(&energy_stderr).enumerate() {
        if *e <= 2.0 * se {
            return Err(Error::IndeterminateRate(format!(
                "energy {e:.3e} at t = {} is within two standard errors ({se:.3e}) of zero",
                times[i]
            )));
        }
    }
    Ok(GrowthRate {
        rate,
        stderr,
        interval: (rate - 1.96 * stderr, rate + 1.96 * stderr),
        times,
        energies,
        energy_stderr,
    })
}

/// Growth rate of a 3D magnetic field on the given probes.
pub fn growth_rate_3d(
    params: &DynamoParams,
    velocity: &dyn VelocityField<3>,
    initial: &dyn VectorField<3>,
    window: (f64, f64),
    n_times: usize,
    probes: &[Point<3>],
) -> Result<GrowthRate> {
    check_divergence_free(initial, probes)?;
    growth_rate_with(params, window, n_times, |p| {
        let est = solve_vorticity_3d(&p.transport(), velocity, initial, probes)?;
        Ok(est.iter().map(|e| e.mean()).collect())
    })
}

/// Growth rate of a 2D flux function on the given probes.
pub fn growth_rate_2d(
    params: &DynamoParams,
    velocity: &dyn VelocityField<2>,
    initial: &dyn ScalarField<2>,
    window: (f64, f64),
    n_times: usize,
    probes: &[Point<2>],
) -> Result<GrowthRate> {
    growth_rate_with(params, window, n_times, |p| {
        let est = solve_scalar(&p.transport(), velocity, initial, probes, 0)?;
        Ok(est.iter().map(|e| e.mean()).collect())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::analytic::{FourierMode, UniformFlow};
    use crate::fields::FnVectorField;
    use nalgebra::Vector3;

    fn params(n_paths: usize) -> DynamoParams {
        DynamoParams {
            diffusivity: 0.1,
            t0: 0.0,
            horizon: 1.0,
            n_steps: 4,
            n_paths,
            source: RandomSource::new(11),
            antithetic: false,
        }
    }

    #[test]
    fn uniform_field_is_invariant_without_flow() {
        let b0 = FnVectorField(|_: &Point<3>| Vector3::new(0.3, -1.0, 2.0));
        let pts = [Vector3::new(0.1, 0.2, 0.3), Vector3::new(-2.0, 1.0, 5.0)];
        let est = transport_magnetic_3d(&params(64), &UniformFlow::<3>::zero(), &b0, &pts).unwrap();
        for e in est {
            // every path returns the same vector; only the averaging rounds
            let m = e.mean();
            for (a, b) in m.iter().zip([0.3, -1.0, 2.0]) {
                assert!((a - b).abs() < 1e-15);
            }
            assert!(e.components.iter().all(|c| c.stderr < 1e-15));
        }
    }

    #[test]
    fn divergent_initial_field_is_rejected() {
        let b0 = FnVectorField(|x: &Point<3>| *x);
        let r = transport_magnetic_3d(&params(8), &UniformFlow::<3>::zero(), &b0, &[Vector3::zeros()]);
        assert!(matches!(r, Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn bad_diffusivity_is_rejected() {
        let mut p = params(8);
        p.diffusivity = -0.1;
        let b0 = FnVectorField(|_: &Point<3>| Vector3::new(0.0, 0.0, 1.0));
        let r = transport_magnetic_3d(&p, &UniformFlow::<3>::zero(), &b0, &[Vector3::zeros()]);
        assert!(matches!(r, Err(Error::InvalidParameter { ref name, .. }) if name == "diffusivity"));
    }

    #[test]
    fn uniform_field_has_zero_rate() {
        // all paths give the same value, so the interval collapses to zero
        let b0 = FnVectorField(|_: &Point<3>| Vector3::new(0.0, 1.0, 0.0));
        let probes = [Vector3::new(0.0, 0.0, 0.0)];
        let r = growth_rate_3d(&params(100), &UniformFlow::<3>::zero(), &b0, (0.5, 1.0), 3, &probes).unwrap();
        assert!(r.rate.abs() < 1e-12);
    }

    #[test]
    fn pure_noise_is_indeterminate() {
        // mode of wavenumber 40 has decayed to nothing by t = 0.5
        let mode = FourierMode::new(Vector3::new(0.0, 1.0, 0.0), Vector3::new(40.0, 0.0, 0.0), 0.0).unwrap();
        let probes = [Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.7, 0.0, 0.0)];
        let r = growth_rate_3d(&params(200), &UniformFlow::<3>::zero(), &mode, (0.5, 1.0), 3, &probes);
        assert!(matches!(r, Err(Error::IndeterminateRate(_))), "{r:?}");
    }

    #[test]
    fn window_must_be_ordered() {
        let b0 = FnVectorField(|_: &Point<3>| Vector3::new(0.0, 1.0, 0.0));
        let r = growth_rate_3d(&params(100), &UniformFlow::<3>::zero(), &b0, (1.0, 0.5), 3, &[Vector3::zeros()]);
        assert!(r.is_err());
    }
}
