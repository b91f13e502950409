//! Velocity from vorticity.
//!
//! Three independent routes:
//!
//! * Brownian (Bismut–Elworthy) integrals, with `W_s ~ N(0, s I)` sampled
//!   directly at each quadrature node:
//!   - 2D: `u(x) = int_0^inf 1/(2s) E[omega(x + W_s) W_s^perp] ds`,
//!     `W^perp = (W^2, -W^1)`;
//!   - 3D: `u(x) = -int_0^inf 1/(2s) E[omega(x + W_s) x W_s] ds`.
//! * Gradient form: `u = 1/2 int perp_grad E[omega(x + W_s)] ds` (2D) and
//!   `u = 1/2 int curl E[omega(x + W_s)] ds` (3D), the derivative taken by
//!   central differences of the expectation with common random numbers.
//! * Direct Biot–Savart quadrature (free space) or spectral inversion
//!   (torus), as a deterministic reference.
//!
//! Both Brownian routes rest on `psi = 1/2 int_0^inf P_s omega ds`, where
//! `P_s` is the heat semigroup of `1/2 lap`, and on
//! `d_i P_s f(x) = E[f(x + W_s) W_s^i] / s`.
//!
//! The `s` integral uses log-spaced nodes with the trapezoid rule in `ln s`,
//! plus a head term `s_min I(s_min)` and, in free space, a tail term
//! `(2/n) s_max I(s_max)` from the `s^-(n/2 + 1)` decay of the integrand. The
//! size of the tail term is reported as the truncation bound.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::spectral::{biot_savart_series_2d, biot_savart_series_3d};
use crate::fields::{curl_of_gradient_3d, perp, Domain, GridField, ScalarField, VectorField, FD_STEP};
use crate::fields::grid::GridLayout;
use crate::rng::{IncrementStream, RandomSource};
use crate::sde::Point;
use crate::stats::Estimate;
use crate::transport::{sample_points, PointEstimate};

/// Log-spaced nodes on `[s_min, s_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SQuadrature {
    pub s_min: f64,
    pub s_max: f64,
    pub n_nodes: usize,
}

impl SQuadrature {
    pub fn new(s_min: f64, s_max: f64, n_nodes: usize) -> Result<Self> {
        let q = SQuadrature { s_min, s_max, n_nodes };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_min > 0.0 && self.s_max > self.s_min && self.s_max.is_finite()) {
            return Err(Error::invalid(
                "s_quadrature",
                format!("need 0 < s_min < s_max, got [{}, {}]", self.s_min, self.s_max),
            ));
        }
        if self.n_nodes < 2 {
            return Err(Error::invalid("s_quadrature.n_nodes", "need at least 2 nodes"));
        }
        Ok(())
    }

    /// Defaults: 40 nodes from `1e-3 l^2`; up to `1e3 l^2` in free space
    /// (`l` the vorticity length scale) or one box-diffusion time `L^2 / 2`
    /// on a torus of smallest period `L`.
    pub fn default_for<const D: usize>(domain: &Domain<D>, length_scale: f64) -> Self {
        let l2 = length_scale * length_scale;
        let s_max = match domain {
            Domain::FreeSpace => 1e3 * l2,
            Domain::Torus { period } => 0.5 * period.min().powi(2),
        };
        SQuadrature {
            s_min: 1e-3 * l2,
            s_max,
            n_nodes: 40,
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        let step = self.log_step();
        (0..self.n_nodes)
            .map(|k| {
                if k + 1 == self.n_nodes {
                    self.s_max
                } else {
                    self.s_min * (step * k as f64).exp()
                }
            })
            .collect()
    }

    fn log_step(&self) -> f64 {
        (self.s_max / self.s_min).ln() / (self.n_nodes - 1) as f64
    }

    /// Weights `c_k` with `int_0^inf I ds ~ sum_k c_k I(s_k)`, including the
    /// head term and, if `tail_dimension` is given, the power-law tail.
    pub fn weights(&self, tail_dimension: Option<usize>) -> Vec<f64> {
        let step = self.log_step();
        let nodes = self.nodes();
        let mut w: Vec<f64> = nodes.iter().map(|s| step * s).collect();
        w[0] *= 0.5;
        w[self.n_nodes - 1] *= 0.5;
        w[0] += self.s_min;
        if let Some(n) = tail_dimension {
            w[self.n_nodes - 1] += self.tail_factor(n);
        }
        w
    }

    /// `(2/n) s_max`: multiplies `I(s_max)` in the tail term.
    pub fn tail_factor(&self, dimension: usize) -> f64 {
        2.0 / dimension as f64 * self.s_max
    }
}

/// Settings for the Brownian recovery routes.
#[derive(Clone, Copy, Debug)]
pub struct RecoveryParams<const D: usize> {
    pub domain: Domain<D>,
    pub quadrature: SQuadrature,
    /// Samples per target point (each sample draws one `W_s` per node).
    pub n_paths: usize,
    pub source: RandomSource,
    pub antithetic: bool,
    /// Step of the central differences in the gradient form.
    pub fd_step: f64,
    /// Warn when the tail bound exceeds this fraction of `|u|`.
    pub tail_tolerance: f64,
}

impl<const D: usize> RecoveryParams<D> {
    pub fn new(domain: Domain<D>, quadrature: SQuadrature, n_paths: usize, source: RandomSource) -> Self {
        RecoveryParams {
            domain,
            quadrature,
            n_paths,
            source,
            antithetic: false,
            fd_step: 1e-4,
            tail_tolerance: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.quadrature.validate()?;
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths", "must be at least 1"));
        }
        if self.antithetic && self.n_paths % 2 == 1 {
            return Err(Error::invalid("n_paths", "antithetic sampling needs an even path count"));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::invalid("fd_step", "must be positive"));
        }
        Ok(())
    }

    /// The quadrature actually used: on a torus `s_max` is capped at one
    /// box-diffusion time.
    fn effective_quadrature(&self) -> SQuadrature {
        let mut q = self.quadrature;
        if let Domain::Torus { period } = self.domain {
            let cap = 0.5 * period.min().powi(2);
            if q.s_max > cap {
                q.s_max = cap.max(q.s_min * 2.0);
            }
        }
        q
    }

    fn tail_dimension(&self) -> Option<usize> {
        (!self.domain.is_periodic()).then_some(D)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoveryMethod {
    BismutElworthy,
    GradientForm,
    Direct,
}

impl RecoveryMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            RecoveryMethod::BismutElworthy => "bismut-elworthy",
            RecoveryMethod::GradientForm => "gradient-form",
            RecoveryMethod::Direct => "direct",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoveredVelocity<const D: usize> {
    pub point: Point<D>,
    pub velocity: Point<D>,
    pub stderr: Point<D>,
    /// Tail term included in `velocity` (zero on a torus); its norm is the
    /// reported truncation bound.
    pub tail: Point<D>,
    pub tail_exceeds_tolerance: bool,
    pub n_paths: usize,
    pub n_excluded: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Recovery<const D: usize> {
    pub method: RecoveryMethod,
    pub quadrature: SQuadrature,
    pub values: Vec<RecoveredVelocity<D>>,
    pub warnings: Vec<String>,
}

impl<const D: usize> Recovery<D> {
    pub fn velocities(&self) -> Vec<Point<D>> {
        self.values.iter().map(|v| v.velocity).collect()
    }
}

/// Draws of `W_{s_k}`, one per node, from one stream.
#[inline]
fn draw<const D: usize>(inc: &mut IncrementStream, sqrt_s: f64) -> Point<D> {
    inc.next::<D>(sqrt_s)
}

/// Shared driver: per sample, sum `c_k I_k(x, W_{s_k})` over nodes; also
/// keep `I(s_max)` for the tail bound. `C` must be `2 D`.
fn brownian_recovery<const D: usize, const C: usize, F>(
    params: &RecoveryParams<D>,
    method: RecoveryMethod,
    points: &[Point<D>],
    integrand: F,
) -> Result<Recovery<D>>
where
    F: Fn(&Point<D>, f64, &Point<D>) -> Point<D> + Sync,
{
    debug_assert_eq!(C, 2 * D);
    params.validate()?;
    let q = params.effective_quadrature();
    let nodes = q.nodes();
    let sqrt_nodes: Vec<f64> = nodes.iter().map(|s| s.sqrt()).collect();
    let weights = q.weights(params.tail_dimension());
    let last = nodes.len() - 1;
    let raw = sample_points::<D, C, _>(points, params.n_paths, params.source, 0, params.antithetic, |x, inc| {
        let mut acc = Point::<D>::zeros();
        let mut tail_raw = Point::<D>::zeros();
        for k in 0..nodes.len() {
            let w = draw::<D>(inc, sqrt_nodes[k]);
            let v = integrand(x, nodes[k], &w);
            acc += v * weights[k];
            if k == last {
                tail_raw = v;
            }
        }
        let mut out = [0.0; C];
        for a in 0..D {
            out[a] = acc[a];
            out[D + a] = tail_raw[a];
        }
        if out.iter().all(|v| v.is_finite()) {
            Some(out)
        } else {
            None
        }
    })?;
    Ok(assemble(params, method, q, raw))
}

fn assemble<const D: usize>(
    params: &RecoveryParams<D>,
    method: RecoveryMethod,
    q: SQuadrature,
    raw: Vec<PointEstimate<D>>,
) -> Recovery<D> {
    let tail_factor = params.tail_dimension().map(|n| q.tail_factor(n));
    let mut warnings = Vec::new();
    let values = raw
        .into_iter()
        .map(|e| {
            let velocity = Point::<D>::from_fn(|a, _| e.components[a].mean);
            let stderr = Point::<D>::from_fn(|a, _| e.components[a].stderr);
            let tail = match tail_factor {
                Some(f) => Point::<D>::from_fn(|a, _| f * e.components[D + a].mean),
                None => Point::<D>::zeros(),
            };
            let exceeds = tail.norm() > params.tail_tolerance * velocity.norm();
            if exceeds {
                warnings.push(format!(
                    "s-quadrature tail bound {:.3e} exceeds {:.1e} of |u| = {:.3e} at {:?}; increase s_max",
                    tail.norm(),
                    params.tail_tolerance,
                    velocity.norm(),
                    e.point.as_slice()
                ));
            }
            RecoveredVelocity {
                point: e.point,
                velocity,
                stderr,
                tail,
                tail_exceeds_tolerance: exceeds,
                n_paths: e.n_paths,
                n_excluded: e.n_excluded,
            }
        })
        .collect();
    Recovery {
        method,
        quadrature: q,
        values,
        warnings,
    }
}

/// 2D Bismut–Elworthy recovery.
pub fn recover_velocity_2d(
    params: &RecoveryParams<2>,
    vorticity: &dyn ScalarField<2>,
    points: &[Point<2>],
) -> Result<Recovery<2>> {
    brownian_recovery::<2, 4, _>(params, RecoveryMethod::BismutElworthy, points, |x, s, w| {
        perp(w) * (vorticity.value(&(x + w)) / (2.0 * s))
    })
}

/// 3D Bismut–Elworthy recovery.
pub fn recover_velocity_3d(
    params: &RecoveryParams<3>,
    vorticity: &dyn VectorField<3>,
    points: &[Point<3>],
) -> Result<Recovery<3>> {
    brownian_recovery::<3, 6, _>(params, RecoveryMethod::BismutElworthy, points, |x, s, w| {
        -vorticity.value(&(x + w)).cross(w) / (2.0 * s)
    })
}

/// 2D gradient-form recovery.
pub fn recover_velocity_gradform_2d(
    params: &RecoveryParams<2>,
    vorticity: &dyn ScalarField<2>,
    points: &[Point<2>],
) -> Result<Recovery<2>> {
    let h = params.fd_step;
    brownian_recovery::<2, 4, _>(params, RecoveryMethod::GradientForm, points, |x, _s, w| {
        let y = x + w;
        let dx = Vector2::new(h, 0.0);
        let dy = Vector2::new(0.0, h);
        let g = Vector2::new(
            vorticity.value(&(y + dx)) - vorticity.value(&(y - dx)),
            vorticity.value(&(y + dy)) - vorticity.value(&(y - dy)),
        ) / (2.0 * h);
        perp(&g) * 0.5
    })
}

/// 3D gradient-form recovery.
pub fn recover_velocity_gradform_3d(
    params: &RecoveryParams<3>,
    vorticity: &dyn VectorField<3>,
    points: &[Point<3>],
) -> Result<Recovery<3>> {
    let h = params.fd_step;
    brownian_recovery::<3, 6, _>(params, RecoveryMethod::GradientForm, points, |x, _s, w| {
        let y = x + w;
        let jac = crate::sde::Mat::<3>::from_fn(|i, j| {
            let mut e = Vector3::zeros();
            e[j] = h;
            (vorticity.value(&(y + e))[i] - vorticity.value(&(y - e))[i]) / (2.0 * h)
        });
        curl_of_gradient_3d(&jac) * 0.5
    })
}

/// Monte Carlo gradient `E[f(x + W_s) W_s] / s` of the smoothed field
/// `P_s f` at `x`, one estimate per coordinate.
pub fn bismut_gradient<const D: usize>(
    f: &dyn ScalarField<D>,
    x: &Point<D>,
    s: f64,
    n_paths: usize,
    source: RandomSource,
) -> Result<Vec<Estimate>> {
    if !(s > 0.0) {
        return Err(Error::invalid("s", "must be positive"));
    }
    let sqrt_s = s.sqrt();
    // C = D is not expressible generically; evaluate in a 3-slot array
    let est = sample_points::<D, 3, _>(&[*x], n_paths, source, 0, false, |x, inc| {
        let w = draw::<D>(inc, sqrt_s);
        let v = f.value(&(x + w)) / s;
        let mut out = [0.0; 3];
        for a in 0..D.min(3) {
            out[a] = v * w[a];
        }
        Some(out)
    })?;
    Ok(est[0].components[..D].to_vec())
}

/// Per-node integrand estimates `I(s_k)` of the 2D Bismut–Elworthy formula
/// at `x` (diagnostic; nodes use independent sources).
pub fn node_profile_2d(
    params: &RecoveryParams<2>,
    vorticity: &dyn ScalarField<2>,
    x: &Point<2>,
) -> Result<Vec<(f64, [Estimate; 2])>> {
    params.validate()?;
    let q = params.effective_quadrature();
    q.nodes()
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            let g = bismut_gradient(vorticity, x, s, params.n_paths, params.source.split(k as u64))?;
            // I = 1/2 perp(grad P_s omega)
            let mut a = g[1];
            a.mean *= 0.5;
            a.stderr *= 0.5;
            let mut b = g[0];
            b.mean *= -0.5;
            b.stderr *= 0.5;
            Ok((s, [a, b]))
        })
        .collect()
}

/// Resolution of the deterministic Biot–Savart quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectQuadrature {
    /// Radial panels of 8-point Gauss–Legendre.
    pub radial_panels: usize,
    /// Angular nodes (2D: trapezoid in the angle; 3D: azimuth).
    pub angular_nodes: usize,
    /// 3D only: Gauss–Legendre nodes in the polar cosine.
    pub polar_nodes: usize,
    /// Grid size per axis for the spectral torus route.
    pub torus_grid: usize,
    /// Accept the result if a half-resolution rerun agrees to this relative
    /// tolerance (free space); otherwise report unresolved support.
    pub resolution_tolerance: f64,
}

impl Default for DirectQuadrature {
    fn default() -> Self {
        DirectQuadrature {
            radial_panels: 64,
            angular_nodes: 512,
            polar_nodes: 48,
            torus_grid: 64,
            resolution_tolerance: 1e-4,
        }
    }
}

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Composite 8-point Gauss–Legendre rule on `[0, r]`.
fn radial_rule(r: f64, panels: usize) -> Vec<(f64, f64)> {
    let h = r / panels as f64;
    (0..panels)
        .flat_map(|p| {
            let a = p as f64 * h;
            GL8_NODES
                .iter()
                .zip(GL8_WEIGHTS.iter())
                .map(move |(x, w)| (a + 0.5 * h * (x + 1.0), 0.5 * h * w))
        })
        .collect()
}

/// Gauss–Legendre rule on `[-1, 1]` with `n` nodes (Newton on `P_n`).
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

fn support_radius<const D: usize>(support: Option<crate::fields::Support<D>>, x: &Point<D>) -> Result<f64> {
    support
        .map(|s| s.max_distance(x))
        .ok_or_else(|| Error::UnresolvedSupport("free-space quadrature needs a vorticity with bounded support".into()))
}

fn free_direct_2d(w: &dyn ScalarField<2>, x: &Point<2>, radius: f64, panels: usize, angular: usize) -> Point<2> {
    let radial = radial_rule(radius, panels);
    let dphi = 2.0 * std::f64::consts::PI / angular as f64;
    let dirs: Vec<(f64, f64)> = (0..angular).map(|j| (j as f64 * dphi).sin_cos()).collect();
    let mut u = Vector2::zeros();
    for (rho, wr) in radial {
        let mut ring = Vector2::zeros();
        for (s, c) in &dirs {
            let v = w.value(&(x + Vector2::new(rho * c, rho * s)));
            ring += Vector2::new(*s, -c) * v;
        }
        u += ring * wr;
    }
    u * (dphi / (2.0 * std::f64::consts::PI))
}

fn free_direct_3d(
    w: &dyn VectorField<3>,
    x: &Point<3>,
    radius: f64,
    panels: usize,
    polar: usize,
    azimuth: usize,
) -> Point<3> {
    let radial = radial_rule(radius, panels);
    let dphi = 2.0 * std::f64::consts::PI / azimuth as f64;
    let mut dirs = Vec::with_capacity(polar * azimuth);
    for (ct, wt) in gauss_legendre(polar) {
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        for j in 0..azimuth {
            let (sp, cp) = (j as f64 * dphi).sin_cos();
            dirs.push((Vector3::new(st * cp, st * sp, ct), wt * dphi));
        }
    }
    let mut u = Vector3::zeros();
    for (rho, wr) in radial {
        let mut shell = Vector3::zeros();
        for (n, wn) in &dirs {
            shell += w.value(&(x + n * rho)).cross(n) * *wn;
        }
        u += shell * wr;
    }
    -u / (4.0 * std::f64::consts::PI)
}

fn check_resolution<const D: usize>(fine: &[Point<D>], coarse: &[Point<D>], tol: f64) -> Result<()> {
    let scale = fine.iter().map(|u| u.norm()).fold(0.0, f64::max);
    for (f, c) in fine.iter().zip(coarse) {
        let diff = (f - c).norm();
        if diff > tol * (f.norm() + scale) && diff > 1e-14 {
            return Err(Error::UnresolvedSupport(format!(
                "Biot–Savart quadrature changes by {diff:.3e} under refinement; increase the resolution"
            )));
        }
    }
    Ok(())
}

/// Deterministic reference velocity of a 2D vorticity.
pub fn biot_savart_direct_2d(
    vorticity: &dyn ScalarField<2>,
    domain: &Domain<2>,
    points: &[Point<2>],
    quad: &DirectQuadrature,
) -> Result<Vec<Point<2>>> {
    match domain {
        Domain::FreeSpace => {
            let support = vorticity.support();
            let radii = points.iter().map(|x| support_radius(support, x)).collect::<Result<Vec<_>>>()?;
            let run = |panels: usize, angular: usize| -> Vec<Point<2>> {
                points
                    .par_iter()
                    .zip(radii.par_iter())
                    .map(|(x, r)| free_direct_2d(vorticity, x, *r, panels, angular))
                    .collect()
            };
            let fine = run(quad.radial_panels, quad.angular_nodes);
            let coarse = run((quad.radial_panels / 2).max(1), (quad.angular_nodes / 2).max(4));
            check_resolution(&fine, &coarse, quad.resolution_tolerance)?;
            Ok(fine)
        }
        Domain::Torus { period } => {
            let layout = torus_layout(period, quad.torus_grid)?;
            let grid = GridField::sample_scalar(layout, |x| vorticity.value(x))?;
            biot_savart_series_2d(&grid, points)
        }
    }
}

/// Deterministic reference velocity of a 3D vorticity.
pub fn biot_savart_direct_3d(
    vorticity: &dyn VectorField<3>,
    domain: &Domain<3>,
    points: &[Point<3>],
    quad: &DirectQuadrature,
) -> Result<Vec<Point<3>>> {
    match domain {
        Domain::FreeSpace => {
            let support = vorticity.support();
            let radii = points.iter().map(|x| support_radius(support, x)).collect::<Result<Vec<_>>>()?;
            let angular = quad.angular_nodes.min(2 * quad.polar_nodes);
            let run = |panels: usize, polar: usize, azimuth: usize| -> Vec<Point<3>> {
                points
                    .par_iter()
                    .zip(radii.par_iter())
                    .map(|(x, r)| free_direct_3d(vorticity, x, *r, panels, polar, azimuth))
                    .collect()
            };
            let fine = run(quad.radial_panels, quad.polar_nodes, angular);
            let coarse = run(
                (quad.radial_panels / 2).max(1),
                (quad.polar_nodes / 2).max(2),
                (angular / 2).max(4),
            );
            check_resolution(&fine, &coarse, quad.resolution_tolerance)?;
            Ok(fine)
        }
        Domain::Torus { period } => {
            let layout = torus_layout(period, quad.torus_grid)?;
            let grid = GridField::sample_vector(layout, |x| vorticity.value(x))?;
            biot_savart_series_3d(&grid, points)
        }
    }
}

fn torus_layout<const D: usize>(period: &Point<D>, n: usize) -> Result<GridLayout<D>> {
    let layout = GridLayout {
        domain: Domain::Torus { period: *period },
        origin: Point::<D>::zeros(),
        spacing: Point::<D>::from_fn(|a, _| period[a] / n as f64),
        shape: [n; D],
    };
    layout.validate()?;
    Ok(layout)
}

/// Central-difference divergence of a velocity given at arbitrary points by
/// a closure (used to check recovered fields).
pub fn fd_divergence<const D: usize>(u: impl Fn(&Point<D>) -> Point<D>, x: &Point<D>, h: f64) -> f64 {
    (0..D)
        .map(|a| {
            let mut e = Point::<D>::zeros();
            e[a] = h.max(FD_STEP);
            (u(&(x + e))[a] - u(&(x - e))[a]) / (2.0 * e[a])
        })
        .sum()
}
