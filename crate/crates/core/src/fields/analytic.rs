//! Closed-form fields used as initial data and as test oracles.

use nalgebra::{Vector2, Vector3};
use std::f64::consts::PI;

use super::{Domain, ScalarField, Support, VectorField, VelocityField};
use crate::error::{Error, Result};
use crate::sde::{Mat, Point};

/// Radial profile `f(q) = (1 - exp(-q/a)) / q` of a Gaussian-core vortex,
/// with `q = r^2`, and its derivative. `a = 0` gives the point vortex `1/q`.
#[inline]
fn core_profile(q: f64, a: f64) -> (f64, f64) {
    if a == 0.0 {
        return (1.0 / q, -1.0 / (q * q));
    }
    let z = q / a;
    if z < 1e-4 {
        // series: f = (1 - z/2 + z^2/6 - z^3/24) / a
        let f = (1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0) / a;
        let df = (-0.5 + z / 3.0 - z * z / 8.0) / (a * a);
        (f, df)
    } else {
        let e = (-z).exp();
        let f = -(-z).exp_m1() / q;
        let df = (e * z + (-z).exp_m1()) / (q * q);
        (f, df)
    }
}

/// Velocity and gradient of a Gaussian-core vortex of circulation `gamma`,
/// at displacement `d` from its centre.
#[inline]
fn core_velocity(d: &Point<2>, gamma: f64, a: f64) -> (Point<2>, Mat<2>) {
    let q = d.norm_squared();
    if q == 0.0 {
        // solid-body rotation at the centre
        let w = if a == 0.0 { 0.0 } else { gamma / (2.0 * PI * a) };
        return (Point::<2>::zeros(), Mat::<2>::new(0.0, -w, w, 0.0));
    }
    let (f, df) = core_profile(q, a);
    let c = gamma / (2.0 * PI);
    let jd = Vector2::new(-d[1], d[0]);
    let u = jd * (c * f);
    // d/dx_j [f(q) (J d)_i] = f'(q) 2 d_j (J d)_i + f J_ij
    let grad = Mat::<2>::from_fn(|i, j| {
        let jij = match (i, j) {
            (0, 1) => -1.0,
            (1, 0) => 1.0,
            _ => 0.0,
        };
        c * (df * 2.0 * d[j] * jd[i] + f * jij)
    });
    (u, grad)
}

/// The Lamb–Oseen diffusing vortex. At field time `t` its core parameter is
/// `4 nu (age + t)`.
#[derive(Clone, Copy, Debug)]
pub struct LambOseen {
    pub circulation: f64,
    pub viscosity: f64,
    /// Age of the vortex at field time 0.
    pub age: f64,
    pub center: Point<2>,
}

impl LambOseen {
    pub fn new(circulation: f64, viscosity: f64, age: f64) -> Self {
        LambOseen {
            circulation,
            viscosity,
            age,
            center: Point::<2>::zeros(),
        }
    }

    fn core(&self, t: f64) -> f64 {
        4.0 * self.viscosity * (self.age + t)
    }

    /// `Gamma / (4 pi nu T) exp(-r^2 / 4 nu T)` with `T = age + t`.
    pub fn vorticity_profile(&self, t: f64, r: f64) -> f64 {
        let a = self.core(t);
        self.circulation / (PI * a) * (-r * r / a).exp()
    }

    /// `Gamma / (2 pi r) (1 - exp(-r^2 / 4 nu T))`.
    pub fn azimuthal_velocity(&self, t: f64, r: f64) -> f64 {
        let a = self.core(t);
        self.circulation / (2.0 * PI * r) * -(-r * r / a).exp_m1()
    }

    pub fn peak_vorticity(&self, t: f64) -> f64 {
        self.vorticity_profile(t, 0.0)
    }

    /// The vorticity at field time `t`.
    pub fn vorticity_at(&self, t: f64) -> GaussianVortexCore {
        GaussianVortexCore {
            circulation: self.circulation,
            core: self.core(t),
            center: self.center,
        }
    }
}

impl VelocityField<2> for LambOseen {
    fn velocity(&self, t: f64, x: &Point<2>) -> Point<2> {
        core_velocity(&(x - self.center), self.circulation, self.core(t)).0
    }
    fn gradient(&self, t: f64, x: &Point<2>) -> Mat<2> {
        core_velocity(&(x - self.center), self.circulation, self.core(t)).1
    }
}

/// Vorticity `Gamma / (pi a) exp(-|x - c|^2 / a)`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianVortexCore {
    pub circulation: f64,
    pub core: f64,
    pub center: Point<2>,
}

impl ScalarField<2> for GaussianVortexCore {
    fn value(&self, x: &Point<2>) -> f64 {
        let q = (x - self.center).norm_squared();
        self.circulation / (PI * self.core) * (-q / self.core).exp()
    }
    fn gradient(&self, x: &Point<2>) -> Point<2> {
        let d = x - self.center;
        d * (-2.0 / self.core * self.value(x))
    }
    fn support(&self) -> Option<Support<2>> {
        // exp(-q/a) < 1e-18 beyond q = 41.5 a
        Some(Support::centered(self.center, (41.5 * self.core).sqrt()))
    }
    fn range(&self) -> Option<(f64, f64)> {
        let p = self.circulation / (PI * self.core);
        Some((p.min(0.0), p.max(0.0)))
    }
}

/// Decaying Taylor–Green vortex on the `2 pi` torus:
/// `u = e^{-2 nu t} (cos x sin y, -sin x cos y)`,
/// `psi = -e^{-2 nu t} cos x cos y`, `omega = -2 e^{-2 nu t} cos x cos y`.
#[derive(Clone, Copy, Debug)]
pub struct TaylorGreen2d {
    pub viscosity: f64,
    pub amplitude: f64,
}

impl TaylorGreen2d {
    pub fn new(viscosity: f64) -> Self {
        TaylorGreen2d {
            viscosity,
            amplitude: 1.0,
        }
    }

    /// A steady copy (viscosity set to zero in the decay factor).
    pub fn frozen(&self) -> Self {
        TaylorGreen2d {
            viscosity: 0.0,
            amplitude: self.amplitude,
        }
    }

    fn decay(&self, t: f64) -> f64 {
        self.amplitude * (-2.0 * self.viscosity * t).exp()
    }

    pub fn domain() -> Domain<2> {
        Domain::torus(2.0 * PI)
    }

    pub fn stream_value(&self, t: f64, x: &Point<2>) -> f64 {
        -self.decay(t) * x[0].cos() * x[1].cos()
    }

    pub fn stream_gradient(&self, t: f64, x: &Point<2>) -> Point<2> {
        let a = self.decay(t);
        Vector2::new(a * x[0].sin() * x[1].cos(), a * x[0].cos() * x[1].sin())
    }

    /// Kinetic energy `1/2 int |u|^2` over one period cell.
    pub fn kinetic_energy(&self, t: f64) -> f64 {
        let a = self.decay(t);
        PI * PI * a * a
    }

    pub fn vorticity_at(&self, t: f64) -> TaylorGreenVorticity {
        TaylorGreenVorticity {
            amplitude: -2.0 * self.decay(t),
        }
    }
}

impl VelocityField<2> for TaylorGreen2d {
    fn velocity(&self, t: f64, x: &Point<2>) -> Point<2> {
        let a = self.decay(t);
        let (sx, cx) = x[0].sin_cos();
        let (sy, cy) = x[1].sin_cos();
        Vector2::new(a * cx * sy, -a * sx * cy)
    }
    fn gradient(&self, t: f64, x: &Point<2>) -> Mat<2> {
        let a = self.decay(t);
        let (sx, cx) = x[0].sin_cos();
        let (sy, cy) = x[1].sin_cos();
        Mat::<2>::new(-a * sx * sy, a * cx * cy, -a * cx * cy, a * sx * sy)
    }
    fn stream(&self, t: f64, x: &Point<2>) -> Option<f64> {
        Some(self.stream_value(t, x))
    }
}

/// `amplitude * cos x cos y`.
#[derive(Clone, Copy, Debug)]
pub struct TaylorGreenVorticity {
    pub amplitude: f64,
}

impl ScalarField<2> for TaylorGreenVorticity {
    fn value(&self, x: &Point<2>) -> f64 {
        self.amplitude * x[0].cos() * x[1].cos()
    }
    fn gradient(&self, x: &Point<2>) -> Point<2> {
        Vector2::new(
            -self.amplitude * x[0].sin() * x[1].cos(),
            -self.amplitude * x[0].cos() * x[1].sin(),
        )
    }
    fn range(&self) -> Option<(f64, f64)> {
        Some((-self.amplitude.abs(), self.amplitude.abs()))
    }
}

/// Steady Arnold–Beltrami–Childress flow on the `2 pi` torus.
#[derive(Clone, Copy, Debug)]
pub struct Abc {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Abc {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Abc { a, b, c }
    }

    fn eval(&self, x: &Point<3>) -> Point<3> {
        let (sx, cx) = x[0].sin_cos();
        let (sy, cy) = x[1].sin_cos();
        let (sz, cz) = x[2].sin_cos();
        Vector3::new(
            self.a * sz + self.c * cy,
            self.b * sx + self.a * cz,
            self.c * sy + self.b * cx,
        )
    }

    fn grad(&self, x: &Point<3>) -> Mat<3> {
        let (sx, cx) = x[0].sin_cos();
        let (sy, cy) = x[1].sin_cos();
        let (sz, cz) = x[2].sin_cos();
        Mat::<3>::new(
            0.0,
            -self.c * sy,
            self.a * cz,
            self.b * cx,
            0.0,
            -self.a * sz,
            -self.b * sx,
            self.c * cy,
            0.0,
        )
    }
}

impl VelocityField<3> for Abc {
    fn velocity(&self, _t: f64, x: &Point<3>) -> Point<3> {
        self.eval(x)
    }
    fn gradient(&self, _t: f64, x: &Point<3>) -> Mat<3> {
        self.grad(x)
    }
}

impl VectorField<3> for Abc {
    fn value(&self, x: &Point<3>) -> Point<3> {
        self.eval(x)
    }
    fn jacobian(&self, x: &Point<3>) -> Mat<3> {
        self.grad(x)
    }
}

/// Linear flow `u = A x` with trace-free `A`.
#[derive(Clone, Copy, Debug)]
pub struct ConstantStrain<const D: usize> {
    pub matrix: Mat<D>,
}

impl<const D: usize> ConstantStrain<D> {
    pub fn new(matrix: Mat<D>) -> Result<Self> {
        let scale = matrix.amax().max(1.0);
        if matrix.trace().abs() > 1e-12 * scale {
            return Err(Error::invalid(
                "matrix",
                format!("constant strain must be trace-free, trace = {}", matrix.trace()),
            ));
        }
        Ok(ConstantStrain { matrix })
    }
}

impl<const D: usize> VelocityField<D> for ConstantStrain<D> {
    fn velocity(&self, _t: f64, x: &Point<D>) -> Point<D> {
        self.matrix * x
    }
    fn gradient(&self, _t: f64, _x: &Point<D>) -> Mat<D> {
        self.matrix
    }
}

/// Spatially uniform velocity (zero gradient).
#[derive(Clone, Copy, Debug)]
pub struct UniformFlow<const D: usize> {
    pub value: Point<D>,
}

impl<const D: usize> UniformFlow<D> {
    pub fn new(value: Point<D>) -> Self {
        UniformFlow { value }
    }
    pub fn zero() -> Self {
        UniformFlow {
            value: Point::<D>::zeros(),
        }
    }
}

impl<const D: usize> VelocityField<D> for UniformFlow<D> {
    fn velocity(&self, _t: f64, _x: &Point<D>) -> Point<D> {
        self.value
    }
    fn gradient(&self, _t: f64, _x: &Point<D>) -> Mat<D> {
        Mat::<D>::zeros()
    }
    fn stream(&self, _t: f64, x: &Point<D>) -> Option<f64> {
        // u = (d2 psi, -d1 psi) with psi = u1 y - u2 x
        (D == 2).then(|| self.value[0] * x[1] - self.value[1] * x[0])
    }
}

impl<const D: usize> VectorField<D> for UniformFlow<D> {
    fn value(&self, _x: &Point<D>) -> Point<D> {
        self.value
    }
    fn jacobian(&self, _x: &Point<D>) -> Mat<D> {
        Mat::<D>::zeros()
    }
}

/// One vortex of the many-vortices initial data: Gaussian core of radius
/// `radius` (the point vortex when `radius == 0`).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VortexBlob {
    pub center: [f64; 2],
    pub radius: f64,
    pub circulation: f64,
}

/// Superposition of Gaussian-core vortices in free space, with closed-form
/// velocity `sum Gamma/(2 pi r) (1 - exp(-r^2 / 2 delta^2))`.
#[derive(Clone, Debug)]
pub struct PointVortexSum {
    pub blobs: Vec<VortexBlob>,
}

impl PointVortexSum {
    pub fn new(blobs: Vec<VortexBlob>) -> Result<Self> {
        if blobs.iter().any(|b| !(b.radius >= 0.0)) {
            return Err(Error::invalid("radius", "vortex radii must be >= 0"));
        }
        Ok(PointVortexSum { blobs })
    }

    pub fn total_circulation(&self) -> f64 {
        self.blobs.iter().map(|b| b.circulation).sum()
    }
}

impl VelocityField<2> for PointVortexSum {
    fn velocity(&self, _t: f64, x: &Point<2>) -> Point<2> {
        self.blobs
            .iter()
            .map(|b| core_velocity(&(x - Point::<2>::from(b.center)), b.circulation, 2.0 * b.radius * b.radius).0)
            .sum()
    }
    fn gradient(&self, _t: f64, x: &Point<2>) -> Mat<2> {
        self.blobs
            .iter()
            .map(|b| core_velocity(&(x - Point::<2>::from(b.center)), b.circulation, 2.0 * b.radius * b.radius).1)
            .sum()
    }
}

/// Vorticity of the blobs; point vortices (radius 0) carry no smooth
/// vorticity and are skipped.
impl ScalarField<2> for PointVortexSum {
    fn value(&self, x: &Point<2>) -> f64 {
        self.blobs
            .iter()
            .filter(|b| b.radius > 0.0)
            .map(|b| {
                let q = (x - Point::<2>::from(b.center)).norm_squared();
                let s2 = b.radius * b.radius;
                b.circulation / (2.0 * PI * s2) * (-q / (2.0 * s2)).exp()
            })
            .sum()
    }
    fn gradient(&self, x: &Point<2>) -> Point<2> {
        self.blobs
            .iter()
            .filter(|b| b.radius > 0.0)
            .map(|b| {
                let d = x - Point::<2>::from(b.center);
                let s2 = b.radius * b.radius;
                let v = b.circulation / (2.0 * PI * s2) * (-d.norm_squared() / (2.0 * s2)).exp();
                d * (-v / s2)
            })
            .sum()
    }
    fn support(&self) -> Option<Support<2>> {
        self.blobs
            .iter()
            .filter(|b| b.radius > 0.0)
            .map(|b| Support::centered(Point::<2>::from(b.center), 9.2 * b.radius))
            .reduce(|a, b| a.union(&b))
    }
}

/// `amplitude * exp(-|x - c|^2 / (2 sigma^2))`, wrapped by minimal image on a
/// torus.
#[derive(Clone, Copy, Debug)]
pub struct GaussianBlob<const D: usize> {
    pub center: Point<D>,
    pub sigma: f64,
    pub amplitude: f64,
    pub domain: Domain<D>,
}

impl<const D: usize> GaussianBlob<D> {
    pub fn new(center: Point<D>, sigma: f64, amplitude: f64) -> Self {
        GaussianBlob {
            center,
            sigma,
            amplitude,
            domain: Domain::FreeSpace,
        }
    }

    /// The free-space heat flow `d_t f = nu lap f` applied for time `tau`.
    pub fn heat_evolved(&self, viscosity: f64, tau: f64) -> Self {
        let s2 = self.sigma * self.sigma;
        let s2_new = s2 + 2.0 * viscosity * tau;
        GaussianBlob {
            center: self.center,
            sigma: s2_new.sqrt(),
            amplitude: self.amplitude * (s2 / s2_new).powf(D as f64 / 2.0),
            domain: self.domain,
        }
    }
}

impl<const D: usize> ScalarField<D> for GaussianBlob<D> {
    fn value(&self, x: &Point<D>) -> f64 {
        let d = self.domain.minimal_image(&(x - self.center));
        self.amplitude * (-d.norm_squared() / (2.0 * self.sigma * self.sigma)).exp()
    }
    fn gradient(&self, x: &Point<D>) -> Point<D> {
        let d = self.domain.minimal_image(&(x - self.center));
        d * (-self.value(x) / (self.sigma * self.sigma))
    }
    fn support(&self) -> Option<Support<D>> {
        Some(Support::centered(self.center, 9.2 * self.sigma))
    }
    fn range(&self) -> Option<(f64, f64)> {
        Some((self.amplitude.min(0.0), self.amplitude.max(0.0)))
    }
}

/// `slope . x + offset`.
#[derive(Clone, Copy, Debug)]
pub struct LinearScalar<const D: usize> {
    pub slope: Point<D>,
    pub offset: f64,
}

impl<const D: usize> ScalarField<D> for LinearScalar<D> {
    fn value(&self, x: &Point<D>) -> f64 {
        self.slope.dot(x) + self.offset
    }
    fn gradient(&self, _x: &Point<D>) -> Point<D> {
        self.slope
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConstantScalar(pub f64);

impl<const D: usize> ScalarField<D> for ConstantScalar {
    fn value(&self, _x: &Point<D>) -> f64 {
        self.0
    }
    fn gradient(&self, _x: &Point<D>) -> Point<D> {
        Point::<D>::zeros()
    }
    fn range(&self) -> Option<(f64, f64)> {
        Some((self.0, self.0))
    }
}

/// Divergence-free Fourier mode `a cos(k . x + phase)` with `a . k = 0`.
#[derive(Clone, Copy, Debug)]
pub struct FourierMode<const D: usize> {
    pub amplitude: Point<D>,
    pub wavevector: Point<D>,
    pub phase: f64,
}

impl<const D: usize> FourierMode<D> {
    pub fn new(amplitude: Point<D>, wavevector: Point<D>, phase: f64) -> Result<Self> {
        if amplitude.dot(&wavevector).abs() > 1e-12 * amplitude.norm().max(1.0) * wavevector.norm().max(1.0) {
            return Err(Error::invalid("amplitude", "Fourier mode amplitude must be orthogonal to its wavevector"));
        }
        Ok(FourierMode {
            amplitude,
            wavevector,
            phase,
        })
    }
}

impl<const D: usize> VectorField<D> for FourierMode<D> {
    fn value(&self, x: &Point<D>) -> Point<D> {
        self.amplitude * (self.wavevector.dot(x) + self.phase).cos()
    }
    fn jacobian(&self, x: &Point<D>) -> Mat<D> {
        let s = -(self.wavevector.dot(x) + self.phase).sin();
        self.amplitude * self.wavevector.transpose() * s
    }
}

/// Straight vortex tube along `z` with a Gaussian cross-section:
/// `(0, 0, Gamma / (2 pi sigma^2) exp(-rho^2 / 2 sigma^2))`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianTube {
    pub circulation: f64,
    pub sigma: f64,
    pub center: [f64; 2],
}

impl VectorField<3> for GaussianTube {
    fn value(&self, x: &Point<3>) -> Point<3> {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        let s2 = self.sigma * self.sigma;
        let w = self.circulation / (2.0 * PI * s2) * (-(dx * dx + dy * dy) / (2.0 * s2)).exp();
        Vector3::new(0.0, 0.0, w)
    }
    fn jacobian(&self, x: &Point<3>) -> Mat<3> {
        let w = self.value(x)[2];
        let s2 = self.sigma * self.sigma;
        let mut j = Mat::<3>::zeros();
        j[(2, 0)] = -(x[0] - self.center[0]) / s2 * w;
        j[(2, 1)] = -(x[1] - self.center[1]) / s2 * w;
        j
    }
}
