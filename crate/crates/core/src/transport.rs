//! Feynman–Kac transport of vorticity (and any scalar or 2-form carried by a
//! flow with diffusion).
//!
//! For target time `t0 + tau` and point `x`, particles run backward:
//! `dx_s = -u(t0 + tau - s, x_s) ds + sqrt(2 nu) dW_s`, `x_0 = x`, `s in [0, tau]`.
//!
//! * 2D: `omega(t0 + tau, x) = E[omega_0(x_tau)]`.
//! * 3D: `omega(t0 + tau, x) = E[adj(v_tau) omega_0(x_tau)]`, where `v` solves
//!   `dv/ds = -G v`, `v_0 = I`, `G = grad u` along the path, and `adj` is the
//!   adjugate (`det(v) v^-1`, which is `v^-1` for divergence-free `u`). This is
//!   the pull-back of the vorticity 2-form written on its adjoint vector:
//!   for constant `G` it gives `exp(tau G) omega_0`, the solution of
//!   `d_t omega = nu lap omega - (u . grad) omega + (omega . grad) u`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{ScalarField, VectorField, VelocityField};
use crate::rng::{path_stream, IncrementStream, RandomSource};
use crate::sde::{check_invalid, ito_endpoint, ito_endpoint_with_jacobian, ItoSdeSpec, Mat, Point, TimeGrid};
use crate::stats::Estimate;

/// Parameters shared by every transport query.
#[derive(Clone, Copy, Debug)]
pub struct TransportParams {
    /// `nu` (or the magnetic diffusivity).
    pub viscosity: f64,
    /// Time of the initial data.
    pub t0: f64,
    /// Elapsed time `tau`; results are for time `t0 + tau`.
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub source: RandomSource,
    /// Pair each path with its mirror image `-W`.
    pub antithetic: bool,
}

impl TransportParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.viscosity > 0.0) || !self.viscosity.is_finite() {
            return Err(Error::invalid("viscosity", format!("must be positive, got {}", self.viscosity)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths", "must be at least 1"));
        }
        if self.antithetic && self.n_paths % 2 == 1 {
            return Err(Error::invalid("n_paths", "antithetic sampling needs an even path count"));
        }
        TimeGrid::new(0.0, self.horizon, self.n_steps)?;
        Ok(())
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            t0: 0.0,
            t1: self.horizon,
            n_steps: self.n_steps,
        }
    }

    pub fn sigma(&self) -> f64 {
        (2.0 * self.viscosity).sqrt()
    }
}

/// Per-point Monte Carlo result.
#[derive(Clone, Debug, Serialize)]
pub struct PointEstimate<const D: usize> {
    pub point: Point<D>,
    pub components: Vec<Estimate>,
    pub n_paths: usize,
    pub n_excluded: usize,
    /// Smallest and largest single-path value of each component.
    pub sample_range: Vec<(f64, f64)>,
}

impl<const D: usize> PointEstimate<D> {
    pub fn mean(&self) -> Vec<f64> {
        self.components.iter().map(|e| e.mean).collect()
    }

    pub fn scalar(&self) -> &Estimate {
        &self.components[0]
    }

    pub fn vector(&self) -> Point<D> {
        Point::<D>::from_fn(|i, _| self.components[i].mean)
    }

    pub fn stderr_vector(&self) -> Point<D> {
        Point::<D>::from_fn(|i, _| self.components[i].stderr)
    }
}

/// Run `n_paths` samples per point. Point `j`, path `i` draws from stream
/// `stream_base + j * n_paths + i` (antithetic pairs share one stream).
/// Samples are reduced by pairwise summation in path order, so results do
/// not depend on the worker count.
pub(crate) fn sample_points<const D: usize, const C: usize, F>(
    points: &[Point<D>],
    n_paths: usize,
    source: RandomSource,
    stream_base: u64,
    antithetic: bool,
    sample: F,
) -> Result<Vec<PointEstimate<D>>>
where
    F: Fn(&Point<D>, &mut IncrementStream) -> Option<[f64; C]> + Sync,
{
    let per_point: Vec<Vec<Option<[f64; C]>>> = points
        .par_iter()
        .enumerate()
        .map(|(j, x)| {
            let offset = stream_base + (j * n_paths) as u64;
            (0..n_paths)
                .into_par_iter()
                .map(|i| {
                    let (id, mirrored) = path_stream(offset, i, antithetic);
                    let mut inc = IncrementStream::new(source.stream(id), mirrored);
                    sample(x, &mut inc)
                })
                .collect()
        })
        .collect();
    points
        .iter()
        .zip(per_point)
        .map(|(x, samples)| reduce_samples(*x, &samples, antithetic))
        .collect()
}

fn reduce_samples<const D: usize, const C: usize>(
    point: Point<D>,
    samples: &[Option<[f64; C]>],
    antithetic: bool,
) -> Result<PointEstimate<D>> {
    let n_paths = samples.len();
    // an antithetic pair is one independent draw; drop the pair if either half failed
    let group = if antithetic { 2 } else { 1 };
    let mut excluded = 0;
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n_paths / group); C];
    let mut range = vec![(f64::INFINITY, f64::NEG_INFINITY); C];
    for chunk in samples.chunks(group) {
        if chunk.iter().any(|s| s.is_none()) {
            excluded += chunk.len();
            continue;
        }
        for c in 0..C {
            let mut acc = 0.0;
            for s in chunk {
                let v = s.unwrap()[c];
                range[c] = (range[c].0.min(v), range[c].1.max(v));
                acc += v;
            }
            cols[c].push(acc / chunk.len() as f64);
        }
    }
    check_invalid(excluded, n_paths)?;
    Ok(PointEstimate {
        point,
        components: cols.iter().map(|c| Estimate::from_samples(c)).collect(),
        n_paths,
        n_excluded: excluded,
        sample_range: range,
    })
}

/// Adjugate (transposed cofactor matrix) of a 3 x 3 matrix.
pub fn adjugate3(m: &Mat<3>) -> Mat<3> {
    let c = |i: usize, j: usize| {
        let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
        let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
        m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)]
    };
    Mat::<3>::from_fn(|i, j| c(j, i))
}

/// Backward drift `-u(t0 + tau - s, x)` as a closure.
fn backward_drift<'a, const D: usize>(
    velocity: &'a dyn VelocityField<D>,
    t_end: f64,
) -> impl Fn(f64, &Point<D>) -> Point<D> + Sync + 'a {
    move |s, x| -velocity.velocity(t_end - s, x)
}

/// 2D scalar transport at the given points.
pub fn solve_vorticity_2d(
    params: &TransportParams,
    velocity: &dyn VelocityField<2>,
    initial: &dyn ScalarField<2>,
    points: &[Point<2>],
) -> Result<Vec<PointEstimate<2>>> {
    solve_scalar(params, velocity, initial, points, 0)
}

/// Scalar transport in any dimension (2D vorticity, passive scalars, the 2D
/// magnetic flux function).
pub fn solve_scalar<const D: usize>(
    params: &TransportParams,
    velocity: &dyn VelocityField<D>,
    initial: &dyn ScalarField<D>,
    points: &[Point<D>],
    stream_base: u64,
) -> Result<Vec<PointEstimate<D>>> {
    params.validate()?;
    let drift = backward_drift(velocity, params.t0 + params.horizon);
    let spec = ItoSdeSpec {
        drift: &drift,
        sigma: params.sigma(),
    };
    let grid = params.grid();
    sample_points::<D, 1, _>(points, params.n_paths, params.source, stream_base, params.antithetic, |x, inc| {
        ito_endpoint(&spec, *x, &grid, inc).map(|end| [initial.value(&end)])
    })
}

/// 3D transport of a vorticity (or magnetic) vector carried as the adjoint
/// of a 2-form.
pub fn solve_vorticity_3d(
    params: &TransportParams,
    velocity: &dyn VelocityField<3>,
    initial: &dyn VectorField<3>,
    points: &[Point<3>],
) -> Result<Vec<PointEstimate<3>>> {
    solve_vorticity_3d_with_base(params, velocity, initial, points, 0)
}

pub(crate) fn solve_vorticity_3d_with_base(
    params: &TransportParams,
    velocity: &dyn VelocityField<3>,
    initial: &dyn VectorField<3>,
    points: &[Point<3>],
    stream_base: u64,
) -> Result<Vec<PointEstimate<3>>> {
    params.validate()?;
    let t_end = params.t0 + params.horizon;
    let drift = backward_drift(velocity, t_end);
    let deformation = move |s: f64, x: &Point<3>| velocity.gradient(t_end - s, x);
    let spec = ItoSdeSpec {
        drift: &drift,
        sigma: params.sigma(),
    };
    let grid = params.grid();
    sample_points::<3, 3, _>(points, params.n_paths, params.source, stream_base, params.antithetic, |x, inc| {
        ito_endpoint_with_jacobian(&spec, &deformation, *x, &grid, inc).map(|(end, v)| {
            let w = adjugate3(&v) * initial.value(&end);
            [w[0], w[1], w[2]]
        })
    })
}

/// Per-path determinant of the Jacobian at the end of each path started at
/// `x` (diagnostic for the trace-free invariant).
pub fn jacobian_determinants(
    params: &TransportParams,
    velocity: &dyn VelocityField<3>,
    x: &Point<3>,
) -> Result<Vec<f64>> {
    params.validate()?;
    let t_end = params.t0 + params.horizon;
    let drift = backward_drift(velocity, t_end);
    let deformation = move |s: f64, x: &Point<3>| velocity.gradient(t_end - s, x);
    let spec = ItoSdeSpec {
        drift: &drift,
        sigma: params.sigma(),
    };
    let grid = params.grid();
    Ok((0..params.n_paths)
        .into_par_iter()
        .map(|i| {
            let (id, mirrored) = path_stream(0, i, params.antithetic);
            let mut inc = IncrementStream::new(params.source.stream(id), mirrored);
            ito_endpoint_with_jacobian(&spec, &deformation, *x, &grid, &mut inc)
                .map(|(_, v)| v.determinant())
                .unwrap_or(f64::NAN)
        })
        .collect())
}

/// `sum_k value_k h^D` over grid-node estimates (circulation of a 2D
/// vorticity on a torus grid).
pub fn grid_integral<const D: usize>(estimates: &[PointEstimate<D>], cell_volume: f64) -> Estimate {
    let means: Vec<f64> = estimates.iter().map(|e| e.scalar().mean).collect();
    let vars: Vec<f64> = estimates.iter().map(|e| e.scalar().stderr.powi(2)).collect();
    Estimate {
        mean: crate::stats::pairwise_sum(&means) * cell_volume,
        stderr: crate::stats::pairwise_sum(&vars).sqrt() * cell_volume,
        n: estimates.first().map_or(0, |e| e.scalar().n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::analytic::{ConstantScalar, UniformFlow};
    use nalgebra::{Matrix3, Vector2, Vector3};

    fn params(n_paths: usize) -> TransportParams {
        TransportParams {
            viscosity: 0.1,
            t0: 0.0,
            horizon: 1.0,
            n_steps: 10,
            n_paths,
            source: RandomSource::new(11),
            antithetic: false,
        }
    }

    #[test]
    fn adjugate_of_invertible_is_det_times_inverse() {
        let m = Matrix3::new(2.0, 1.0, 0.5, -1.0, 3.0, 0.2, 0.0, 0.4, 1.5);
        let adj = adjugate3(&m);
        assert!((adj - m.try_inverse().unwrap() * m.determinant()).amax() < 1e-12);
    }

    #[test]
    fn constant_scalar_is_exact_per_path() {
        let u = UniformFlow::<2>::new(Vector2::new(1.0, -0.5));
        let r = solve_vorticity_2d(&params(50), &u, &ConstantScalar(3.25), &[Vector2::new(0.1, 0.2)]).unwrap();
        assert_eq!(r[0].scalar().mean, 3.25);
        assert_eq!(r[0].scalar().stderr, 0.0);
        assert_eq!(r[0].sample_range[0], (3.25, 3.25));
    }

    #[test]
    fn uniform_translation_keeps_constant_vector() {
        let u = UniformFlow::<3>::new(Vector3::new(0.3, 0.1, -0.2));
        let c = Vector3::new(1.0, -2.0, 0.5);
        let w = UniformFlow::<3>::new(c);
        let r = solve_vorticity_3d(&params(20), &u, &w, &[Vector3::zeros()]).unwrap();
        assert!((r[0].vector() - c).amax() < 1e-12);
    }

    #[test]
    fn antithetic_needs_even_count() {
        let mut p = params(5);
        p.antithetic = true;
        assert!(p.validate().is_err());
        p.viscosity = -1.0;
        assert!(matches!(p.validate(), Err(Error::InvalidParameter { name, .. }) if name == "viscosity"));
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let u = UniformFlow::<2>::new(Vector2::new(0.2, 0.0));
        let f = |x: &Point<2>| (-x.norm_squared()).exp();
        let pts = [Vector2::new(0.0, 0.0), Vector2::new(0.5, -0.2)];
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| solve_vorticity_2d(&params(2000), &u, &f, &pts).unwrap())
        };
        let a = run(1);
        let b = run(4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.scalar().mean.to_bits(), y.scalar().mean.to_bits());
            assert_eq!(x.scalar().stderr.to_bits(), y.scalar().stderr.to_bits());
        }
    }
}
