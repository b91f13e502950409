//! Particle SDE integrators.
//!
//! * Ito paths `dx = b(s, x) ds + sigma dW` by Euler–Maruyama.
//! * The derived (Jacobian) process `dv/ds = -A(s, x_s) v`, `v_0 = I`, by the
//!   exponential midpoint rule `v_{k+1} = exp(-dt A(s_{k+1/2}, x_{k+1/2})) v_k`.
//!   For trace-free `A` this keeps `det v = 1` to rounding.
//! * Stratonovich paths `dx = K(s, x) o dW` by the Heun predictor–corrector.
//!
//! Positions are kept in lifted (unwrapped) coordinates; periodic fields wrap
//! their arguments themselves. Paths whose state becomes non-finite, or whose
//! Jacobian norm exceeds [`JACOBIAN_OVERFLOW`], are flagged and excluded; a
//! run with more than [`MAX_INVALID_FRACTION`] flagged paths is an error.

use nalgebra::{SMatrix, SVector};
use rayon::prelude::*;

use crate::driftless::FrameField;
use crate::error::{Error, Result};
use crate::rng::{path_stream, IncrementStream, RandomSource};

pub type Point<const D: usize> = SVector<f64, D>;
pub type Mat<const D: usize> = SMatrix<f64, D, D>;

pub const MAX_INVALID_FRACTION: f64 = 0.01;
pub const JACOBIAN_OVERFLOW: f64 = 1e12;

/// Uniform time grid on `[t0, t1]`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite()) || t1 <= t0 {
            return Err(Error::invalid("time grid", format!("need t0 < t1, got [{t0}, {t1}]")));
        }
        if n_steps == 0 {
            return Err(Error::invalid("n_steps", "must be at least 1"));
        }
        Ok(TimeGrid { t0, t1, n_steps })
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.n_steps as f64
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t1
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    pub fn horizon(&self) -> f64 {
        self.t1 - self.t0
    }
}

/// Drift callable `(time, point) -> vector`.
pub type DriftFn<'a, const D: usize> = dyn Fn(f64, &Point<D>) -> Point<D> + Sync + 'a;
/// Matrix-valued callable `(time, point) -> n x n`.
pub type MatrixFn<'a, const D: usize> = dyn Fn(f64, &Point<D>) -> Mat<D> + Sync + 'a;

/// `dx = drift(s, x) ds + sigma dW`.
pub struct ItoSdeSpec<'a, const D: usize> {
    pub drift: &'a DriftFn<'a, D>,
    pub sigma: f64,
}

impl<const D: usize> ItoSdeSpec<'_, D> {
    fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("sigma", format!("must be finite and >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum Start<const D: usize> {
    /// Every path starts at the same point.
    Single(Point<D>),
    /// Path `i` starts at `points[i]`; the path count is the list length.
    PerPath(Vec<Point<D>>),
}

impl<const D: usize> Start<D> {
    #[inline]
    fn point(&self, i: usize) -> Point<D> {
        match self {
            Start::Single(p) => *p,
            Start::PerPath(ps) => ps[i],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Record {
    /// Every grid time is stored.
    Full,
    /// Only the start and end points are stored.
    Endpoints,
}

#[derive(Clone, Copy, Debug)]
pub struct SimOptions {
    pub record: Record,
    pub antithetic: bool,
    /// Stream id of path 0; path `i` uses `stream_offset + i`.
    pub stream_offset: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            record: Record::Full,
            antithetic: false,
            stream_offset: 0,
        }
    }
}

/// Simulated paths plus the bookkeeping needed to regenerate them.
#[derive(Clone, Debug)]
pub struct PathEnsemble<const D: usize> {
    pub grid: TimeGrid,
    pub source: RandomSource,
    pub options: SimOptions,
    pub n_paths: usize,
    positions: Vec<Point<D>>,
    jacobians: Option<Vec<Mat<D>>>,
    valid: Vec<bool>,
}

impl<const D: usize> PathEnsemble<D> {
    fn stride(&self) -> usize {
        match self.options.record {
            Record::Full => self.grid.n_steps + 1,
            Record::Endpoints => 2,
        }
    }

    /// Stored positions of path `i` (all grid times, or start and end).
    pub fn path(&self, i: usize) -> &[Point<D>] {
        let s = self.stride();
        &self.positions[i * s..(i + 1) * s]
    }

    pub fn start(&self, i: usize) -> Point<D> {
        self.path(i)[0]
    }

    pub fn endpoint(&self, i: usize) -> Point<D> {
        *self.path(i).last().unwrap()
    }

    pub fn jacobian_path(&self, i: usize) -> Option<&[Mat<D>]> {
        let s = self.stride();
        self.jacobians.as_ref().map(|j| &j[i * s..(i + 1) * s])
    }

    pub fn end_jacobian(&self, i: usize) -> Option<Mat<D>> {
        self.jacobian_path(i).map(|j| *j.last().unwrap())
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.valid[i]
    }

    pub fn n_excluded(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    /// Indices of paths that were not excluded.
    pub fn valid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_paths).filter(move |&i| self.valid[i])
    }

    /// Endpoints of valid paths, in path order.
    pub fn valid_endpoints(&self) -> Vec<Point<D>> {
        self.valid_indices().map(|i| self.endpoint(i)).collect()
    }
}

pub(crate) fn check_invalid(excluded: usize, total: usize) -> Result<()> {
    if total > 0 && excluded as f64 > MAX_INVALID_FRACTION * total as f64 {
        return Err(Error::TooManyInvalidPaths { excluded, total });
    }
    Ok(())
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
/// Accurate to rounding for the small, well-scaled arguments produced by the
/// Jacobian integrator.
pub fn expm<const D: usize>(m: &Mat<D>) -> Mat<D> {
    let norm = (0..D)
        .map(|i| (0..D).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if norm == 0.0 {
        return Mat::<D>::identity();
    }
    let mut squarings = 0u32;
    let mut scaled_norm = norm;
    while scaled_norm > 0.5 {
        scaled_norm *= 0.5;
        squarings += 1;
    }
    let a = m * 0.5f64.powi(squarings as i32);
    let mut term = Mat::<D>::identity();
    let mut sum = Mat::<D>::identity();
    for k in 1..=24 {
        term = term * a / k as f64;
        sum += term;
        if term.amax() <= f64::EPSILON * 1e-3 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// One Euler–Maruyama step. Returns `None` on a non-finite state.
#[inline]
fn em_step<const D: usize>(
    spec: &ItoSdeSpec<'_, D>,
    t: f64,
    x: &Point<D>,
    dt: f64,
    sqrt_dt: f64,
    inc: &mut IncrementStream,
) -> Option<Point<D>> {
    let b = (spec.drift)(t, x);
    let dw: Point<D> = inc.next(sqrt_dt);
    let next = x + b * dt + dw * spec.sigma;
    next.iter().all(|v| v.is_finite()).then_some(next)
}

/// Exponential-midpoint Jacobian update. Returns `None` on overflow.
#[inline]
fn jacobian_step<const D: usize>(
    deformation: &MatrixFn<'_, D>,
    t_mid: f64,
    x_mid: &Point<D>,
    dt: f64,
    jac: &Mat<D>,
) -> Option<Mat<D>> {
    let a = deformation(t_mid, x_mid);
    let next = expm(&(a * (-dt))) * jac;
    let ok = next.iter().all(|v| v.is_finite()) && next.amax() <= JACOBIAN_OVERFLOW;
    ok.then_some(next)
}

/// Endpoint of a single Ito path, without storing the trajectory.
pub(crate) fn ito_endpoint<const D: usize>(
    spec: &ItoSdeSpec<'_, D>,
    start: Point<D>,
    grid: &TimeGrid,
    inc: &mut IncrementStream,
) -> Option<Point<D>> {
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut x = start;
    for k in 0..grid.n_steps {
        x = em_step(spec, grid.time(k), &x, dt, sqrt_dt, inc)?;
    }
    Some(x)
}

/// Endpoint and Jacobian of a single Ito path. Bit-identical to running
/// [`simulate_ito`] followed by [`simulate_jacobian`].
pub(crate) fn ito_endpoint_with_jacobian<const D: usize>(
    spec: &ItoSdeSpec<'_, D>,
    deformation: &MatrixFn<'_, D>,
    start: Point<D>,
    grid: &TimeGrid,
    inc: &mut IncrementStream,
) -> Option<(Point<D>, Mat<D>)> {
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut x = start;
    let mut jac = Mat::<D>::identity();
    for k in 0..grid.n_steps {
        let t = grid.time(k);
        let next = em_step(spec, t, &x, dt, sqrt_dt, inc)?;
        let mid = (x + next) * 0.5;
        jac = jacobian_step(deformation, t + 0.5 * dt, &mid, dt, &jac)?;
        x = next;
    }
    Some((x, jac))
}

fn new_ensemble<const D: usize>(
    grid: TimeGrid,
    source: RandomSource,
    n_paths: usize,
    options: SimOptions,
) -> PathEnsemble<D> {
    let stride = match options.record {
        Record::Full => grid.n_steps + 1,
        Record::Endpoints => 2,
    };
    PathEnsemble {
        grid,
        source,
        options,
        n_paths,
        positions: vec![Point::<D>::zeros(); n_paths * stride],
        jacobians: None,
        valid: vec![true; n_paths],
    }
}

fn resolve_count<const D: usize>(start: &Start<D>, n_paths: usize) -> Result<usize> {
    match start {
        Start::Single(_) => {
            if n_paths == 0 {
                return Err(Error::invalid("n_paths", "must be at least 1"));
            }
            Ok(n_paths)
        }
        Start::PerPath(ps) => {
            if ps.is_empty() {
                return Err(Error::invalid("start", "empty start-point list"));
            }
            Ok(ps.len())
        }
    }
}

/// Euler–Maruyama ensemble of `dx = b(s, x) ds + sigma dW`.
///
/// With [`Start::PerPath`] the path count is taken from the start list and
/// `n_paths` is ignored.
pub fn simulate_ito<const D: usize>(
    spec: &ItoSdeSpec<'_, D>,
    start: &Start<D>,
    grid: TimeGrid,
    source: RandomSource,
    n_paths: usize,
    options: SimOptions,
) -> Result<PathEnsemble<D>> {
    spec.validate()?;
    let n_paths = resolve_count(start, n_paths)?;
    let mut ens = new_ensemble::<D>(grid, source, n_paths, options);
    let stride = ens.stride();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    ens.positions
        .par_chunks_mut(stride)
        .zip(ens.valid.par_iter_mut())
        .enumerate()
        .for_each(|(i, (slots, valid))| {
            let (id, mirrored) = path_stream(options.stream_offset, i, options.antithetic);
            let mut inc = IncrementStream::new(source.stream(id), mirrored);
            let mut x = start.point(i);
            slots[0] = x;
            for k in 0..grid.n_steps {
                match em_step(spec, grid.time(k), &x, dt, sqrt_dt, &mut inc) {
                    Some(next) => x = next,
                    None => {
                        *valid = false;
                        slots.iter_mut().skip(1).for_each(|s| *s = Point::<D>::repeat(f64::NAN));
                        return;
                    }
                }
                if options.record == Record::Full {
                    slots[k + 1] = x;
                }
            }
            slots[stride - 1] = x;
        });
    check_invalid(ens.n_excluded(), n_paths)?;
    Ok(ens)
}

/// Fill in the Jacobian process `dv/ds = -A(s, x_s) v`, `v_0 = I`, along the
/// stored paths. Requires an ensemble recorded with [`Record::Full`].
pub fn simulate_jacobian<const D: usize>(
    mut ens: PathEnsemble<D>,
    deformation: &MatrixFn<'_, D>,
) -> Result<PathEnsemble<D>> {
    if ens.options.record != Record::Full {
        return Err(Error::invalid(
            "ensemble",
            "Jacobian integration needs fully recorded paths",
        ));
    }
    let stride = ens.stride();
    let grid = ens.grid;
    let dt = grid.dt();
    let mut jacs = vec![Mat::<D>::identity(); ens.n_paths * stride];
    let positions = &ens.positions;
    jacs.par_chunks_mut(stride)
        .zip(ens.valid.par_iter_mut())
        .enumerate()
        .for_each(|(i, (slots, valid))| {
            if !*valid {
                slots.iter_mut().for_each(|m| *m = Mat::<D>::repeat(f64::NAN));
                return;
            }
            let path = &positions[i * stride..(i + 1) * stride];
            let mut jac = Mat::<D>::identity();
            for k in 0..grid.n_steps {
                let mid = (path[k] + path[k + 1]) * 0.5;
                match jacobian_step(deformation, grid.time(k) + 0.5 * dt, &mid, dt, &jac) {
                    Some(next) => jac = next,
                    None => {
                        *valid = false;
                        slots.iter_mut().skip(k + 1).for_each(|m| *m = Mat::<D>::repeat(f64::NAN));
                        return;
                    }
                }
                slots[k + 1] = jac;
            }
        });
    ens.jacobians = Some(jacs);
    check_invalid(ens.n_excluded(), ens.n_paths)?;
    Ok(ens)
}

/// Heun ensemble of the driftless Stratonovich SDE `dx = K(s, x) o dW`,
/// `W` being `M`-dimensional.
pub fn simulate_stratonovich<const D: usize, const M: usize>(
    frame: &dyn FrameField<D, M>,
    start: &Start<D>,
    grid: TimeGrid,
    source: RandomSource,
    n_paths: usize,
    options: SimOptions,
) -> Result<PathEnsemble<D>> {
    if M < D {
        return Err(Error::Dimension(format!("frame fiber dimension {M} < {D}")));
    }
    let n_paths = resolve_count(start, n_paths)?;
    let mut ens = new_ensemble::<D>(grid, source, n_paths, options);
    let stride = ens.stride();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    ens.positions
        .par_chunks_mut(stride)
        .zip(ens.valid.par_iter_mut())
        .enumerate()
        .for_each(|(i, (slots, valid))| {
            let (id, mirrored) = path_stream(options.stream_offset, i, options.antithetic);
            let mut inc = IncrementStream::new(source.stream(id), mirrored);
            let mut x = start.point(i);
            slots[0] = x;
            for k in 0..grid.n_steps {
                let t = grid.time(k);
                let dw: SVector<f64, M> = inc.next(sqrt_dt);
                let k0 = frame.frame(t, &x);
                let pred = x + k0 * dw;
                let k1 = frame.frame(t + dt, &pred);
                x += (k0 + k1) * dw * 0.5;
                if !x.iter().all(|v| v.is_finite()) {
                    *valid = false;
                    slots.iter_mut().skip(1).for_each(|s| *s = Point::<D>::repeat(f64::NAN));
                    return;
                }
                if options.record == Record::Full {
                    slots[k + 1] = x;
                }
            }
            slots[stride - 1] = x;
        });
    check_invalid(ens.n_excluded(), n_paths)?;
    Ok(ens)
}
