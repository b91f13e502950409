//! Velocity, vorticity and scalar fields.
//!
//! Conventions used throughout the crate:
//!
//! * `gradient` of a vector field is the matrix `G[(i, j)] = d u_i / d x_j`.
//! * 2D curl is `d_1 u^2 - d_2 u^1`; 3D curl is the usual one.
//! * [`perp_grad`] is `(d_2 f, -d_1 f)`, so a 2D velocity with stream
//!   function `psi` is `u = perp_grad(psi)` and `curl u = -lap psi`.
//! * 3D vorticity (and magnetic field) is stored as its adjoint vector; the
//!   2-form itself is never built.
//! * The Laplacian is the analyst's `sum_i d_i^2`.

pub mod analytic;
pub mod grid;
pub mod spectral;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::sde::{Mat, Point};

pub use grid::GridField;

/// Step used by the central-difference fallbacks.
pub const FD_STEP: f64 = 1e-5;

/// Flat domain: all of `R^n`, or a periodic box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Domain<const D: usize> {
    FreeSpace,
    Torus { period: Point<D> },
}

impl<const D: usize> Domain<D> {
    pub fn torus(period: f64) -> Self {
        Domain::Torus {
            period: Point::<D>::repeat(period),
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Domain::Torus { .. })
    }

    /// Reduce a point into `[0, period)` on each periodic axis.
    pub fn wrap(&self, x: &Point<D>) -> Point<D> {
        match self {
            Domain::FreeSpace => *x,
            Domain::Torus { period } => Point::<D>::from_fn(|i, _| {
                let r = x[i].rem_euclid(period[i]);
                // rem_euclid may return `period` for tiny negative inputs
                if r >= period[i] {
                    0.0
                } else {
                    r
                }
            }),
        }
    }

    /// Minimal-image displacement.
    pub fn minimal_image(&self, d: &Point<D>) -> Point<D> {
        match self {
            Domain::FreeSpace => *d,
            Domain::Torus { period } => Point::<D>::from_fn(|i, _| d[i] - period[i] * (d[i] / period[i]).round()),
        }
    }

    /// A length scale: the smallest period, or 1 in free space.
    pub fn scale(&self) -> f64 {
        match self {
            Domain::FreeSpace => 1.0,
            Domain::Torus { period } => period.min(),
        }
    }
}

/// Axis-aligned box outside which a field is negligible.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Support<const D: usize> {
    pub lo: Point<D>,
    pub hi: Point<D>,
}

impl<const D: usize> Support<D> {
    pub fn centered(center: Point<D>, half_width: f64) -> Self {
        Support {
            lo: center.add_scalar(-half_width),
            hi: center.add_scalar(half_width),
        }
    }

    pub fn union(&self, other: &Support<D>) -> Support<D> {
        Support {
            lo: self.lo.inf(&other.lo),
            hi: self.hi.sup(&other.hi),
        }
    }

    /// Largest distance from `x` to any point of the box.
    pub fn max_distance(&self, x: &Point<D>) -> f64 {
        Point::<D>::from_fn(|i, _| (x[i] - self.lo[i]).abs().max((x[i] - self.hi[i]).abs())).norm()
    }
}

/// Time-dependent velocity with its gradient.
pub trait VelocityField<const D: usize>: Send + Sync {
    fn velocity(&self, t: f64, x: &Point<D>) -> Point<D>;

    /// `G[(i, j)] = d u_i / d x_j`.
    fn gradient(&self, t: f64, x: &Point<D>) -> Mat<D> {
        Mat::<D>::from_fn(|i, j| {
            let mut e = Point::<D>::zeros();
            e[j] = FD_STEP;
            (self.velocity(t, &(x + e))[i] - self.velocity(t, &(x - e))[i]) / (2.0 * FD_STEP)
        })
    }

    /// Stream function, when the field is 2D and carries one.
    fn stream(&self, _t: f64, _x: &Point<D>) -> Option<f64> {
        None
    }
}

/// Time-independent scalar field (2D vorticity, stream function, passive
/// scalar).
pub trait ScalarField<const D: usize>: Send + Sync {
    fn value(&self, x: &Point<D>) -> f64;

    fn gradient(&self, x: &Point<D>) -> Point<D> {
        Point::<D>::from_fn(|j, _| {
            let mut e = Point::<D>::zeros();
            e[j] = FD_STEP;
            (self.value(&(x + e)) - self.value(&(x - e))) / (2.0 * FD_STEP)
        })
    }

    fn support(&self) -> Option<Support<D>> {
        None
    }

    /// Bounds `[min, max]` of the field, when known.
    fn range(&self) -> Option<(f64, f64)> {
        None
    }
}

/// Time-independent vector field (3D vorticity or magnetic field).
pub trait VectorField<const D: usize>: Send + Sync {
    fn value(&self, x: &Point<D>) -> Point<D>;

    /// `J[(i, j)] = d w_i / d x_j`.
    fn jacobian(&self, x: &Point<D>) -> Mat<D> {
        Mat::<D>::from_fn(|i, j| {
            let mut e = Point::<D>::zeros();
            e[j] = FD_STEP;
            (self.value(&(x + e))[i] - self.value(&(x - e))[i]) / (2.0 * FD_STEP)
        })
    }

    fn support(&self) -> Option<Support<D>> {
        None
    }
}

impl<const D: usize, F> ScalarField<D> for F
where
    F: Fn(&Point<D>) -> f64 + Send + Sync,
{
    fn value(&self, x: &Point<D>) -> f64 {
        self(x)
    }
}

/// A vector field given by a closure (gradient by central differences).
pub struct FnVectorField<F>(pub F);

impl<const D: usize, F> VectorField<D> for FnVectorField<F>
where
    F: Fn(&Point<D>) -> Point<D> + Send + Sync,
{
    fn value(&self, x: &Point<D>) -> Point<D> {
        (self.0)(x)
    }
}

/// 2D curl `d_1 u^2 - d_2 u^1`.
pub fn curl_2d(v: &dyn VelocityField<2>, t: f64, x: &Point<2>) -> f64 {
    curl_of_gradient_2d(&v.gradient(t, x))
}

/// 3D curl.
pub fn curl_3d(v: &dyn VelocityField<3>, t: f64, x: &Point<3>) -> Point<3> {
    curl_of_gradient_3d(&v.gradient(t, x))
}

#[inline]
pub fn curl_of_gradient_2d(g: &Mat<2>) -> f64 {
    g[(1, 0)] - g[(0, 1)]
}

#[inline]
pub fn curl_of_gradient_3d(g: &Mat<3>) -> Point<3> {
    Vector3::new(g[(2, 1)] - g[(1, 2)], g[(0, 2)] - g[(2, 0)], g[(1, 0)] - g[(0, 1)])
}

/// `(d_2 f, -d_1 f)`.
pub fn perp_grad(f: &dyn ScalarField<2>, x: &Point<2>) -> Point<2> {
    perp(&f.gradient(x))
}

/// Clockwise quarter turn `(a, b) -> (b, -a)`.
#[inline]
pub fn perp(g: &Point<2>) -> Point<2> {
    Vector2::new(g[1], -g[0])
}

pub fn divergence<const D: usize>(v: &dyn VelocityField<D>, t: f64, x: &Point<D>) -> f64 {
    v.gradient(t, x).trace()
}

pub fn divergence_of_vector_field<const D: usize>(w: &dyn VectorField<D>, x: &Point<D>) -> f64 {
    w.jacobian(x).trace()
}

/// A velocity field with `t` shifted: `u(t + offset, x)`.
pub struct TimeShifted<'a, const D: usize> {
    pub inner: &'a dyn VelocityField<D>,
    pub offset: f64,
}

impl<const D: usize> VelocityField<D> for TimeShifted<'_, D> {
    fn velocity(&self, t: f64, x: &Point<D>) -> Point<D> {
        self.inner.velocity(t + self.offset, x)
    }
    fn gradient(&self, t: f64, x: &Point<D>) -> Mat<D> {
        self.inner.gradient(t + self.offset, x)
    }
    fn stream(&self, t: f64, x: &Point<D>) -> Option<f64> {
        self.inner.stream(t + self.offset, x)
    }
}

/// Velocity known at a list of time slices, linearly interpolated in time and
/// held constant outside the covered interval.
pub struct TimeSlices<'a, const D: usize> {
    slices: Vec<(f64, &'a dyn VelocityField<D>)>,
}

impl<'a, const D: usize> TimeSlices<'a, D> {
    /// Slices must be sorted by strictly increasing time.
    pub fn new(slices: Vec<(f64, &'a dyn VelocityField<D>)>) -> Self {
        assert!(!slices.is_empty(), "TimeSlices needs at least one slice");
        assert!(slices.windows(2).all(|w| w[0].0 < w[1].0), "slices must be time-ordered");
        TimeSlices { slices }
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.slices.len();
        if n == 1 || t <= self.slices[0].0 {
            return (0, 0.0);
        }
        if t >= self.slices[n - 1].0 {
            return (n - 1, 0.0);
        }
        let k = self.slices.partition_point(|(ts, _)| *ts <= t) - 1;
        let (t0, _) = self.slices[k];
        let (t1, _) = self.slices[k + 1];
        (k, (t - t0) / (t1 - t0))
    }
}

impl<const D: usize> VelocityField<D> for TimeSlices<'_, D> {
    fn velocity(&self, t: f64, x: &Point<D>) -> Point<D> {
        let (k, w) = self.locate(t);
        let a = self.slices[k].1.velocity(t, x);
        if w == 0.0 {
            a
        } else {
            a * (1.0 - w) + self.slices[k + 1].1.velocity(t, x) * w
        }
    }

    fn gradient(&self, t: f64, x: &Point<D>) -> Mat<D> {
        let (k, w) = self.locate(t);
        let a = self.slices[k].1.gradient(t, x);
        if w == 0.0 {
            a
        } else {
            a * (1.0 - w) + self.slices[k + 1].1.gradient(t, x) * w
        }
    }
}

#[cfg(test)]
mod tests {
    use super::analytic::*;
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn torus_wrap_and_minimal_image() {
        let d = Domain::<2>::torus(2.0 * PI);
        let w = d.wrap(&Vector2::new(-0.1, 7.0));
        assert!((w[0] - (2.0 * PI - 0.1)).abs() < 1e-12);
        assert!((w[1] - (7.0 - 2.0 * PI)).abs() < 1e-12);
        let m = d.minimal_image(&Vector2::new(6.0, -4.0));
        assert!((m[0] - (6.0 - 2.0 * PI)).abs() < 1e-12);
        assert!((m[1] - (2.0 * PI - 4.0)).abs() < 1e-12);
        let free = Domain::<2>::FreeSpace;
        assert_eq!(free.wrap(&Vector2::new(-9.0, 9.0)), Vector2::new(-9.0, 9.0));
    }

    #[test]
    fn taylor_green_curl_at_origin() {
        // u = (cos x sin y, -sin x cos y): curl = -2 cos x cos y
        let tg = TaylorGreen2d::new(0.1);
        assert!((curl_2d(&tg, 0.0, &Vector2::zeros()) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn constant_field_has_no_curl() {
        let u = UniformFlow::<2>::new(Vector2::new(1.0, 2.0));
        assert_eq!(curl_2d(&u, 0.0, &Vector2::new(0.3, 0.4)), 0.0);
        let u3 = UniformFlow::<3>::new(Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(curl_3d(&u3, 0.0, &Vector3::new(0.3, 0.4, 0.5)), Vector3::zeros());
    }

    #[test]
    fn abc_flow_is_beltrami() {
        let abc = Abc::new(1.0, 1.0, 1.0);
        let pts = [
            [0.1, 0.2, 0.3],
            [1.0, -2.0, 0.5],
            [3.0, 3.0, 3.0],
            [-0.7, 0.0, 2.2],
            [5.5, 1.1, -4.0],
            [0.0, 0.0, 0.0],
            [2.0, 4.0, 6.0],
            [-1.0, -1.5, 0.25],
            [0.33, 2.71, 1.41],
            [6.0, -6.0, 0.9],
        ];
        for p in pts {
            let x = Vector3::from(p);
            let c = curl_3d(&abc, 0.0, &x);
            assert!((c - abc.velocity(0.0, &x)).amax() < 1e-10);
            assert!(divergence(&abc, 0.0, &x).abs() < 1e-14);
        }
    }

    #[test]
    fn perp_grad_of_coordinates() {
        let fx = |x: &Point<2>| x[0];
        let fy = |x: &Point<2>| x[1];
        let p = Vector2::new(0.4, -0.2);
        assert!((perp_grad(&fx, &p) - Vector2::new(0.0, -1.0)).norm() < 1e-9);
        assert!((perp_grad(&fy, &p) - Vector2::new(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn perp_grad_of_cosine_product_matches_finite_differences() {
        // analytic: psi = cos x cos y -> (d2 psi, -d1 psi) = (-cos x sin y, sin x cos y)
        let psi = |x: &Point<2>| x[0].cos() * x[1].cos();
        for p in [Vector2::new(PI / 2.0, 0.0), Vector2::new(0.3, 1.7), Vector2::new(-2.0, 0.9)] {
            let exact = Vector2::new(-p[0].cos() * p[1].sin(), p[0].sin() * p[1].cos());
            assert!((perp_grad(&psi, &p) - exact).norm() < 1e-8);
        }
    }

    #[test]
    fn perp_grad_field_is_divergence_free() {
        // div(perp_grad f) by nested central differences for a generic f
        let f = |x: &Point<2>| (1.3 * x[0]).sin() * (0.7 * x[1] + x[0] * x[1]).exp();
        let h = 1e-4;
        for p in [Vector2::new(0.1, 0.2), Vector2::new(-0.5, 0.8)] {
            let ux = |q: Point<2>| perp_grad(&f, &q)[0];
            let uy = |q: Point<2>| perp_grad(&f, &q)[1];
            let dx = Vector2::new(h, 0.0);
            let dy = Vector2::new(0.0, h);
            let div = (ux(p + dx) - ux(p - dx)) / (2.0 * h) + (uy(p + dy) - uy(p - dy)) / (2.0 * h);
            assert!(div.abs() < 1e-5, "div = {div}");
        }
    }

    #[test]
    fn divergence_examples() {
        struct Radial;
        impl VelocityField<2> for Radial {
            fn velocity(&self, _t: f64, x: &Point<2>) -> Point<2> {
                *x
            }
        }
        let x = Vector2::new(0.5, 0.5);
        assert!((divergence(&Radial, 0.0, &x) - 2.0).abs() < 1e-9);
        assert!(divergence(&TaylorGreen2d::new(0.1), 0.3, &x).abs() < 1e-14);
    }

    #[test]
    fn time_slices_interpolate_linearly() {
        let a = UniformFlow::<2>::new(Vector2::new(1.0, 0.0));
        let b = UniformFlow::<2>::new(Vector2::new(3.0, 2.0));
        let s = TimeSlices::new(vec![(0.0, &a as &dyn VelocityField<2>), (1.0, &b)]);
        let v = s.velocity(0.25, &Vector2::zeros());
        assert!((v - Vector2::new(1.5, 0.5)).norm() < 1e-15);
        assert_eq!(s.velocity(-1.0, &Vector2::zeros()), Vector2::new(1.0, 0.0));
        assert_eq!(s.velocity(2.0, &Vector2::zeros()), Vector2::new(3.0, 2.0));
    }
}
