//! Driftless Stratonovich representation of drifted diffusions.
//!
//! A frame `K(t, x)` (an `n x m` matrix with columns `K_i`) defines the
//! Stratonovich SDE `dx = K o dW` whose generator is
//! `1/2 sum_i (K_i . grad)^2 = 1/2 K K^T : hess + b . grad`, with
//! `b = 1/2 sum_i (K_i . grad) K_i`. If `K K^T = c^2 I` the diffusion part is
//! isotropic and `b` is the drift the frame encodes.
//!
//! In 2D a rotation frame `K = c R(theta)` gives `b = c^2/2 J grad theta`,
//! `J` the counter-clockwise quarter turn. A divergence-free drift
//! `b = perp_grad psi = -J grad psi` is therefore encoded by
//! `theta = -2 psi / c^2`.

use nalgebra::{Matrix2, SMatrix, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{divergence, VelocityField, FD_STEP};
use crate::sde::{PathEnsemble, Point};
use crate::stats::Estimate;

/// `K(t, x)`, an `n x m` matrix, `m >= n`.
pub trait FrameField<const D: usize, const M: usize>: Send + Sync {
    fn frame(&self, t: f64, x: &Point<D>) -> SMatrix<f64, D, M>;

    /// `1/2 sum_i (K_i . grad) K_i` in closed form, if the frame knows it.
    fn encoded_drift(&self, _t: f64, _x: &Point<D>) -> Option<Point<D>> {
        None
    }
}

/// `1/2 sum_i (K_i . grad) K_i` by central differences along each column.
pub fn encoded_drift_fd<const D: usize, const M: usize>(
    frame: &dyn FrameField<D, M>,
    t: f64,
    x: &Point<D>,
) -> Point<D> {
    let k = frame.frame(t, x);
    let mut acc = Point::<D>::zeros();
    for i in 0..M {
        let col: Point<D> = k.column(i).into_owned();
        let plus = frame.frame(t, &(x + col * FD_STEP)).column(i).into_owned();
        let minus = frame.frame(t, &(x - col * FD_STEP)).column(i).into_owned();
        acc += (plus - minus) / (2.0 * FD_STEP);
    }
    acc * 0.5
}

/// 2D stream function `psi(t, x)`.
pub trait StreamFunction: Send + Sync {
    fn value(&self, t: f64, x: &Point<2>) -> f64;

    fn gradient(&self, t: f64, x: &Point<2>) -> Point<2> {
        let dx = Vector2::new(FD_STEP, 0.0);
        let dy = Vector2::new(0.0, FD_STEP);
        Vector2::new(
            (self.value(t, &(x + dx)) - self.value(t, &(x - dx))) / (2.0 * FD_STEP),
            (self.value(t, &(x + dy)) - self.value(t, &(x - dy))) / (2.0 * FD_STEP),
        )
    }
}

impl<F> StreamFunction for F
where
    F: Fn(f64, &Point<2>) -> f64 + Send + Sync,
{
    fn value(&self, t: f64, x: &Point<2>) -> f64 {
        self(t, x)
    }
}

/// Stream function of a velocity field that carries one. The gradient comes
/// from the velocity itself: `grad psi = (-u_2, u_1)`.
pub struct VelocityStream<'a> {
    velocity: &'a dyn VelocityField<2>,
    /// Evaluate at `time_origin + time_sign * t` (backward runs use `-1`).
    time_origin: f64,
    time_sign: f64,
}

impl<'a> VelocityStream<'a> {
    pub fn forward(velocity: &'a dyn VelocityField<2>) -> Self {
        VelocityStream {
            velocity,
            time_origin: 0.0,
            time_sign: 1.0,
        }
    }

    /// `psi(t_end - s, x)`, for paths run backward from `t_end`.
    pub fn backward_from(velocity: &'a dyn VelocityField<2>, t_end: f64) -> Self {
        VelocityStream {
            velocity,
            time_origin: t_end,
            time_sign: -1.0,
        }
    }

    fn time(&self, t: f64) -> f64 {
        self.time_origin + self.time_sign * t
    }
}

impl StreamFunction for VelocityStream<'_> {
    fn value(&self, t: f64, x: &Point<2>) -> f64 {
        self.velocity
            .stream(self.time(t), x)
            .expect("checked for a stream function at construction")
    }

    fn gradient(&self, t: f64, x: &Point<2>) -> Point<2> {
        let u = self.velocity.velocity(self.time(t), x);
        Vector2::new(-u[1], u[0])
    }
}

/// `K(t, x) = scale * R(angle_factor * psi(t, x))`.
pub struct RotationFrame2d<S> {
    stream: S,
    scale: f64,
    angle_factor: f64,
}

impl<S: StreamFunction> RotationFrame2d<S> {
    /// Frame with `K K^T = scale^2 I` encoding the drift `perp_grad psi`.
    pub fn new(stream: S, scale: f64) -> Self {
        RotationFrame2d {
            stream,
            scale,
            angle_factor: -2.0 / (scale * scale),
        }
    }

    /// Encode `-perp_grad psi` instead.
    pub fn reversed(mut self) -> Self {
        self.angle_factor = -self.angle_factor;
        self
    }

    /// Multiply the rotation angle by `factor` (used to build deliberately
    /// wrong frames in tests).
    pub fn with_angle_scaled(mut self, factor: f64) -> Self {
        self.angle_factor *= factor;
        self
    }

    pub fn angle(&self, t: f64, x: &Point<2>) -> f64 {
        self.angle_factor * self.stream.value(t, x)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl<S: StreamFunction> FrameField<2, 2> for RotationFrame2d<S> {
    fn frame(&self, t: f64, x: &Point<2>) -> SMatrix<f64, 2, 2> {
        let (s, c) = self.angle(t, x).sin_cos();
        Matrix2::new(c, -s, s, c) * self.scale
    }

    fn encoded_drift(&self, t: f64, x: &Point<2>) -> Option<Point<2>> {
        let g = self.stream.gradient(t, x) * self.angle_factor;
        // J grad theta with J = [[0, -1], [1, 0]]
        Some(Vector2::new(-g[1], g[0]) * (0.5 * self.scale * self.scale))
    }
}

/// Rotation frame for the particle SDE `dx = b dt + scale dW` with
/// `b = sign * u`, checking first that `u` is a divergence-free 2D field with a
/// stream function.
pub fn build_rotation_frame_2d<'a>(
    velocity: &'a dyn VelocityField<2>,
    stream: VelocityStream<'a>,
    scale: f64,
    reverse: bool,
    check_points: &[(f64, Point<2>)],
    tol: f64,
) -> Result<RotationFrame2d<VelocityStream<'a>>> {
    if !(scale > 0.0) {
        return Err(Error::invalid("scale", "frame scale must be positive"));
    }
    for (t, x) in check_points {
        let div = divergence(velocity, *t, x);
        if div.abs() > tol {
            return Err(Error::UnsupportedDrift(format!(
                "drift divergence {div:.3e} at ({:.3}, {:.3}) exceeds {tol:.1e}; rotation frames encode only divergence-free drifts",
                x[0], x[1]
            )));
        }
        if velocity.stream(*t, x).is_none() {
            return Err(Error::UnsupportedDrift("drift has no stream function".into()));
        }
    }
    let frame = RotationFrame2d::new(stream, scale);
    Ok(if reverse { frame.reversed() } else { frame })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftDerivative {
    Analytic,
    FiniteDifference,
}

#[derive(Clone, Debug, Serialize)]
pub struct FrameReport {
    /// `max |K K^T - c^2 I|` (entrywise).
    pub isotropy_residual: f64,
    /// `max |1/2 sum (K_i . grad) K_i - b|`.
    pub drift_residual: f64,
    /// `drift_residual / max |b|` (or the absolute residual if `b` vanishes).
    pub relative_drift_residual: f64,
    pub max_target_drift: f64,
    pub derivative: DriftDerivative,
}

impl FrameReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.isotropy_residual < tol && self.drift_residual < tol
    }
}

/// Residuals of the two generator-matching conditions at the given
/// `(t, x)` points. `noise_scale` is `c` in `K K^T = c^2 I`.
pub fn verify_frame_conditions<const D: usize, const M: usize>(
    frame: &dyn FrameField<D, M>,
    noise_scale: f64,
    target_drift: &(dyn Fn(f64, &Point<D>) -> Point<D> + Sync),
    points: &[(f64, Point<D>)],
    derivative: DriftDerivative,
) -> FrameReport {
    let mut iso = 0.0f64;
    let mut drift = 0.0f64;
    let mut bmax = 0.0f64;
    let mut used = derivative;
    for (t, x) in points {
        let k = frame.frame(*t, x);
        let kkt = k * k.transpose() - nalgebra::SMatrix::<f64, D, D>::identity() * (noise_scale * noise_scale);
        iso = iso.max(kkt.amax());
        let encoded = match derivative {
            DriftDerivative::Analytic => frame.encoded_drift(*t, x).unwrap_or_else(|| {
                used = DriftDerivative::FiniteDifference;
                encoded_drift_fd(frame, *t, x)
            }),
            DriftDerivative::FiniteDifference => encoded_drift_fd(frame, *t, x),
        };
        let b = target_drift(*t, x);
        bmax = bmax.max(b.amax());
        drift = drift.max((encoded - b).amax());
    }
    FrameReport {
        isotropy_residual: iso,
        drift_residual: drift,
        relative_drift_residual: if bmax > 0.0 { drift / bmax } else { drift },
        max_target_drift: bmax,
        derivative: used,
    }
}

/// Drift one-form and torsion of the connection behind a drifted diffusion
/// in dimension `n >= 2`; for the fluid particles `Q = -u / (2 nu)`.
#[derive(Clone, Copy, Debug)]
pub struct TorsionSpec {
    pub dimension: usize,
    pub viscosity: f64,
}

impl TorsionSpec {
    pub fn new(dimension: usize, viscosity: f64) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::invalid("dimension", "torsion needs dimension at least 2"));
        }
        if !(viscosity > 0.0) {
            return Err(Error::invalid("viscosity", "must be positive"));
        }
        Ok(TorsionSpec { dimension, viscosity })
    }

    /// `Q = -u / (2 nu)`.
    pub fn drift_form<const D: usize>(&self, u: &Point<D>) -> Point<D> {
        -u / (2.0 * self.viscosity)
    }

    /// `2/(n-1) (a ^ b) Q = 2/(n-1) (a Q(b) - b Q(a))`.
    pub fn torsion<const D: usize>(&self, q: &Point<D>, a: &Point<D>, b: &Point<D>) -> Point<D> {
        (a * q.dot(b) - b * q.dot(a)) * (2.0 / (self.dimension as f64 - 1.0))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentComparison {
    /// Power of each displacement coordinate.
    pub exponents: Vec<usize>,
    pub frame: Estimate,
    pub drift: Estimate,
    pub z: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LawReport {
    pub moments: Vec<MomentComparison>,
    pub max_abs_z: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// All exponent vectors of total degree `1..=max_order` in `d` variables, in
/// graded lexicographic order.
fn monomials(d: usize, max_order: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == d - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            rec(d, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for order in 1..=max_order {
        rec(d, order, &mut Vec::new(), &mut out);
    }
    out
}

fn displacement_moment<const D: usize>(ens: &PathEnsemble<D>, exps: &[usize]) -> Estimate {
    let samples: Vec<f64> = ens
        .valid_indices()
        .map(|i| {
            let d = ens.endpoint(i) - ens.start(i);
            exps.iter().enumerate().map(|(a, &e)| d[a].powi(e as i32)).product()
        })
        .collect();
    Estimate::from_samples(&samples)
}

/// Compare mixed moments of the displacement `x_T - x_0` up to `max_order`
/// between two independent ensembles; pass when every `|z| < 4`.
pub fn compare_laws<const D: usize>(
    frame_run: &PathEnsemble<D>,
    drift_run: &PathEnsemble<D>,
    max_order: usize,
) -> Result<LawReport> {
    if frame_run.grid.horizon() != drift_run.grid.horizon() {
        return Err(Error::invalid("ensembles", "runs must share the horizon"));
    }
    const THRESHOLD: f64 = 4.0;
    let moments: Vec<MomentComparison> = monomials(D, max_order)
        .into_iter()
        .map(|exps| {
            let f = displacement_moment(frame_run, &exps);
            let d = displacement_moment(drift_run, &exps);
            MomentComparison {
                z: f.z_difference(&d),
                exponents: exps,
                frame: f,
                drift: d,
            }
        })
        .collect();
    let max_abs_z = moments.iter().map(|m| m.z.abs()).fold(0.0, f64::max);
    Ok(LawReport {
        passed: max_abs_z < THRESHOLD,
        moments,
        max_abs_z,
        threshold: THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::analytic::TaylorGreen2d;
    use crate::fields::perp_grad;

    fn points(n: usize) -> Vec<(f64, Point<2>)> {
        (0..n)
            .map(|i| {
                let a = i as f64;
                (0.0, Vector2::new((a * 0.7548).fract() * 6.2, (a * 0.5698).fract() * 6.2))
            })
            .collect()
    }

    #[test]
    fn self_advection_identity_holds_by_finite_differences() {
        // K = R(theta(x)) with theta arbitrary: 1/2 sum (K_i . grad) K_i = 1/2 J grad theta
        struct Arbitrary;
        impl FrameField<2, 2> for Arbitrary {
            fn frame(&self, _t: f64, x: &Point<2>) -> SMatrix<f64, 2, 2> {
                let th = (1.3 * x[0]).sin() + x[0] * x[1] * 0.4;
                let (s, c) = th.sin_cos();
                Matrix2::new(c, -s, s, c)
            }
        }
        for (_, x) in points(20) {
            let g = Vector2::new(1.3 * (1.3 * x[0]).cos() + 0.4 * x[1], 0.4 * x[0]);
            let expect = Vector2::new(-g[1], g[0]) * 0.5;
            assert!((encoded_drift_fd(&Arbitrary, 0.0, &x) - expect).amax() < 1e-8);
        }
    }

    #[test]
    fn constant_stream_gives_zero_drift() {
        let f = RotationFrame2d::new(|_t: f64, _x: &Point<2>| 0.7, 1.0);
        let r = verify_frame_conditions(&f, 1.0, &|_, _| Point::<2>::zeros(), &points(10), DriftDerivative::FiniteDifference);
        assert!(r.isotropy_residual < 1e-15 && r.drift_residual < 1e-9, "{r:?}");
    }

    #[test]
    fn linear_stream_encodes_its_perp_gradient() {
        let psi = |_t: f64, x: &Point<2>| 0.3 * x[0] - 1.1 * x[1];
        let f = RotationFrame2d::new(psi, 1.0);
        let target = |_t: f64, x: &Point<2>| perp_grad(&|y: &Point<2>| psi(0.0, y), x);
        let r = verify_frame_conditions(&f, 1.0, &target, &points(10), DriftDerivative::FiniteDifference);
        assert!(r.drift_residual < 1e-6, "{r:?}");
    }

    #[test]
    fn taylor_green_frame_matches_backward_drift() {
        let nu = 0.25;
        let tg = TaylorGreen2d::new(nu);
        let t_end = 0.5;
        let scale = (2.0 * nu).sqrt();
        let pts = points(100);
        let frame = build_rotation_frame_2d(&tg, VelocityStream::backward_from(&tg, t_end), scale, true, &pts, 1e-8).unwrap();
        let target = |s: f64, x: &Point<2>| -tg.velocity(t_end - s, x);
        let timed: Vec<(f64, Point<2>)> = pts.iter().enumerate().map(|(i, (_, x))| (0.005 * i as f64, *x)).collect();
        let a = verify_frame_conditions(&frame, scale, &target, &timed, DriftDerivative::Analytic);
        assert!(a.isotropy_residual < 1e-12 && a.drift_residual < 1e-6, "{a:?}");
        let f = verify_frame_conditions(&frame, scale, &target, &timed, DriftDerivative::FiniteDifference);
        assert!(f.drift_residual < 1e-4, "{f:?}");
    }

    #[test]
    fn corrupted_angle_is_flagged() {
        let tg = TaylorGreen2d::new(0.25);
        let frame = RotationFrame2d::new(VelocityStream::forward(&tg), 1.0).with_angle_scaled(1.1);
        let target = |t: f64, x: &Point<2>| tg.velocity(t, x);
        let r = verify_frame_conditions(&frame, 1.0, &target, &points(100), DriftDerivative::Analytic);
        assert!((r.relative_drift_residual - 0.1).abs() < 0.01, "{r:?}");
    }

    #[test]
    fn divergent_drift_is_rejected() {
        struct Source;
        impl VelocityField<2> for Source {
            fn velocity(&self, _t: f64, x: &Point<2>) -> Point<2> {
                *x
            }
            fn stream(&self, _t: f64, _x: &Point<2>) -> Option<f64> {
                Some(0.0)
            }
        }
        let r = build_rotation_frame_2d(&Source, VelocityStream::forward(&Source), 1.0, false, &points(3), 1e-6);
        assert!(matches!(r, Err(Error::UnsupportedDrift(_))));
    }

    #[test]
    fn torsion_needs_two_dimensions() {
        assert!(TorsionSpec::new(1, 0.1).is_err());
        let t = TorsionSpec::new(3, 0.5).unwrap();
        let q = t.drift_form(&nalgebra::Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(q, nalgebra::Vector3::new(-1.0, 0.0, 0.0));
        let a = nalgebra::Vector3::new(1.0, 0.0, 0.0);
        assert_eq!(t.torsion(&q, &a, &a), nalgebra::Vector3::zeros());
    }

    #[test]
    fn monomial_count() {
        assert_eq!(monomials(2, 4).len(), 2 + 3 + 4 + 5);
        assert_eq!(monomials(3, 2).len(), 3 + 6);
    }
}
