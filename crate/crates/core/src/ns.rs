//! Navier–Stokes by vorticity transport plus velocity recovery.
//!
//! Each step of length `dtau`:
//!
//! 1. Transport the vorticity grid over `[tau, tau + dtau]` by the backward
//!    particle representation, with the velocity frozen at `tau`.
//! 2. Rebuild the velocity from the new vorticity: spectral Biot–Savart on a
//!    torus, Brownian recovery at the grid nodes in free space.
//! 3. Optionally repeat 1–2 with the velocity interpolated linearly in time
//!    between the old and the newest estimate (Picard iteration with common
//!    random numbers), until successive velocities differ by less than the
//!    tolerance in the sup norm.
//!
//! The vorticity between steps is a grid field with cubic interpolation; in
//! 2D it is clamped to its node range so the single-path maximum principle
//! carries over to the interpolant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::analytic::VortexBlob;
use crate::fields::grid::GridLayout;
use crate::fields::spectral;
use crate::fields::{Domain, GridField, TimeSlices, VelocityField};
use crate::recovery::{recover_velocity_2d, recover_velocity_3d, RecoveryParams};
use crate::rng::RandomSource;
use crate::sde::Point;
use crate::stats::{pairwise_sum, Estimate};
use crate::transport::{solve_scalar, solve_vorticity_3d_with_base, PointEstimate, TransportParams};

/// Monte Carlo settings of one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McParams {
    /// Paths per grid node.
    pub n_paths: usize,
    /// Euler–Maruyama steps per transport step.
    pub n_substeps: usize,
    #[serde(default)]
    pub antithetic: bool,
    /// 1 means frozen velocity without re-transport.
    #[serde(default = "default_picard_iterations")]
    pub picard_max_iterations: usize,
    #[serde(default = "default_picard_tolerance")]
    pub picard_tolerance: f64,
}

fn default_picard_iterations() -> usize {
    1
}

fn default_picard_tolerance() -> f64 {
    1e-3
}

impl McParams {
    pub fn new(n_paths: usize, n_substeps: usize) -> Self {
        McParams {
            n_paths,
            n_substeps,
            antithetic: false,
            picard_max_iterations: 1,
            picard_tolerance: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths", "must be at least 1"));
        }
        if self.n_substeps == 0 {
            return Err(Error::invalid("n_substeps", "must be at least 1"));
        }
        if self.picard_max_iterations == 0 || self.picard_max_iterations > 5 {
            return Err(Error::invalid("picard_max_iterations", "must be between 1 and 5"));
        }
        if !(self.picard_tolerance > 0.0) {
            return Err(Error::invalid("picard_tolerance", "must be positive"));
        }
        Ok(())
    }
}

/// Per-step diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub step: u64,
    pub time: f64,
    /// `1/2 sum |u|^2 h^n`.
    pub kinetic_energy: f64,
    /// `1/2 sum |omega|^2 h^n`.
    pub enstrophy: f64,
    pub max_vorticity: f64,
    /// `sum omega h^2` (2D only).
    pub circulation: Option<f64>,
    pub circulation_stderr: Option<f64>,
    pub mc_stderr_max: f64,
    pub mc_stderr_rms: f64,
    /// `max |curl u - omega|` over the grid (on a torus against the mean-free
    /// vorticity).
    pub curl_residual: f64,
    pub divergence_residual: f64,
    pub n_excluded: usize,
    pub picard_iterations: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct NsState<const D: usize> {
    pub time: f64,
    pub step_index: u64,
    /// 1 component in 2D, 3 in 3D.
    pub vorticity: GridField<D>,
    pub velocity: GridField<D>,
    pub diagnostics: Diagnostics,
}

/// Initial vorticity as a sum of Gaussian blobs,
/// `Gamma / (2 pi r^2) exp(-|x - c|^2 / (2 r^2))` per blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexBlobInit {
    pub blobs: Vec<VortexBlob>,
}

impl VortexBlobInit {
    pub fn validate(&self, domain: &Domain<2>) -> Result<()> {
        if self.blobs.is_empty() {
            return Err(Error::invalid("blobs", "need at least one blob"));
        }
        for (i, b) in self.blobs.iter().enumerate() {
            if !(b.radius > 0.0) {
                return Err(Error::invalid(format!("blobs[{i}].radius"), "must be positive"));
            }
        }
        if domain.is_periodic() {
            let total: f64 = self.blobs.iter().map(|b| b.circulation).sum();
            let scale: f64 = self.blobs.iter().map(|b| b.circulation.abs()).sum();
            if total.abs() > 1e-12 * scale {
                return Err(Error::invalid(
                    "blobs",
                    format!("total circulation on a torus must be zero, got {total}"),
                ));
            }
        }
        Ok(())
    }

    pub fn vorticity(&self, domain: &Domain<2>, x: &Point<2>) -> f64 {
        self.blobs
            .iter()
            .map(|b| {
                let d = domain.minimal_image(&(x - Point::<2>::from(b.center)));
                let r2 = b.radius * b.radius;
                b.circulation / (2.0 * std::f64::consts::PI * r2) * (-d.norm_squared() / (2.0 * r2)).exp()
            })
            .sum()
    }

    pub fn vorticity_grid(&self, layout: GridLayout<2>) -> Result<GridField<2>> {
        self.validate(&layout.domain)?;
        GridField::sample_scalar(layout, |x| self.vorticity(&layout.domain, x))
    }
}

pub struct NsSolver<const D: usize> {
    pub viscosity: f64,
    pub mc: McParams,
    pub source: RandomSource,
    /// Brownian recovery settings, used in free space.
    pub recovery: Option<RecoveryParams<D>>,
}

/// Dimension-specific half of the scheme.
pub trait Stepper<const D: usize> {
    /// Velocity (and warnings) from a vorticity grid.
    fn rebuild_velocity(&self, vorticity: &GridField<D>, step: u64) -> Result<(GridField<D>, Vec<String>)>;

    /// New vorticity grid after transport by `velocity` over
    /// `[t, t + dtau]`, with the per-node estimates.
    fn transport(
        &self,
        vorticity: &GridField<D>,
        velocity: &dyn VelocityField<D>,
        t: f64,
        dtau: f64,
        source: RandomSource,
    ) -> Result<(GridField<D>, Vec<PointEstimate<D>>)>;

    fn diagnostics(&self, state: &NsState<D>, estimates: Option<&[PointEstimate<D>]>) -> Result<Diagnostics>;
}

fn sup_diff<const D: usize>(a: &GridField<D>, b: &GridField<D>) -> f64 {
    a.values().iter().zip(b.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn half_sum_squares<const D: usize>(g: &GridField<D>) -> f64 {
    0.5 * pairwise_sum(&g.values().iter().map(|v| v * v).collect::<Vec<_>>()) * g.layout().cell_volume()
}

fn node_max_norm<const D: usize>(g: &GridField<D>) -> f64 {
    let c = g.components();
    g.values()
        .chunks(c)
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn stderr_summary<const D: usize>(est: &[PointEstimate<D>]) -> (f64, f64, usize) {
    let ses: Vec<f64> = est.iter().flat_map(|e| e.components.iter().map(|c| c.stderr)).collect();
    let max = ses.iter().copied().fold(0.0, f64::max);
    let rms = if ses.is_empty() {
        0.0
    } else {
        (pairwise_sum(&ses.iter().map(|s| s * s).collect::<Vec<_>>()) / ses.len() as f64).sqrt()
    };
    (max, rms, est.iter().map(|e| e.n_excluded).sum())
}

/// Central differences on grid nodes: `d/dx_axis` of component `c`. On a
/// free-space box the outermost nodes use one-sided differences.
fn grid_derivative<const D: usize>(g: &GridField<D>, k: usize, c: usize, axis: usize) -> f64 {
    let l = g.layout();
    let idx = l.multi_index(k);
    let n = l.shape[axis];
    let h = l.spacing[axis];
    let at = |i: usize| {
        let mut j = idx;
        j[axis] = i;
        g.at(l.flat_index(&j), c)
    };
    let i = idx[axis];
    if l.domain.is_periodic() {
        (at((i + 1) % n) - at((i + n - 1) % n)) / (2.0 * h)
    } else if i == 0 {
        (at(1) - at(0)) / h
    } else if i == n - 1 {
        (at(n - 1) - at(n - 2)) / h
    } else {
        (at(i + 1) - at(i - 1)) / (2.0 * h)
    }
}

impl<const D: usize> NsSolver<D>
where
    NsSolver<D>: Stepper<D>,
{
    pub fn new(viscosity: f64, mc: McParams, source: RandomSource) -> Self {
        NsSolver {
            viscosity,
            mc,
            source,
            recovery: None,
        }
    }

    pub fn with_recovery(mut self, params: RecoveryParams<D>) -> Self {
        self.recovery = Some(params);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.viscosity > 0.0) || !self.viscosity.is_finite() {
            return Err(Error::invalid("viscosity", format!("must be positive, got {}", self.viscosity)));
        }
        self.mc.validate()
    }

    /// State at time `t0` from a vorticity grid.
    pub fn initial_state(&self, vorticity: GridField<D>, t0: f64) -> Result<NsState<D>> {
        self.validate()?;
        let (velocity, warnings) = self.rebuild_velocity(&vorticity, 0)?;
        let mut state = NsState {
            time: t0,
            step_index: 0,
            vorticity,
            velocity,
            diagnostics: Diagnostics::default(),
        };
        state.diagnostics = self.diagnostics(&state, None)?;
        state.diagnostics.warnings = warnings;
        Ok(state)
    }

    /// Advance by `dtau`.
    pub fn step(&self, state: &NsState<D>, dtau: f64) -> Result<NsState<D>> {
        self.validate()?;
        if !(dtau > 0.0) || !dtau.is_finite() {
            return Err(Error::invalid("dtau", format!("must be positive, got {dtau}")));
        }
        let step = state.step_index + 1;
        let source = self.source.split(step);
        let t = state.time;
        let (mut omega, mut est) = self.transport(&state.vorticity, &state.velocity, t, dtau, source)?;
        let (mut velocity, mut warnings) = self.rebuild_velocity(&omega, step)?;
        let mut iterations = 1;
        let mut previous = f64::INFINITY;
        while iterations < self.mc.picard_max_iterations {
            let slices = TimeSlices::new(vec![
                (t, &state.velocity as &dyn VelocityField<D>),
                (t + dtau, &velocity as &dyn VelocityField<D>),
            ]);
            let (o2, e2) = self.transport(&state.vorticity, &slices, t, dtau, source)?;
            let (u2, w2) = self.rebuild_velocity(&o2, step)?;
            let dist = sup_diff(&u2, &velocity);
            iterations += 1;
            if dist > previous {
                return Err(Error::PicardDiverged {
                    time: t,
                    previous,
                    current: dist,
                });
            }
            omega = o2;
            est = e2;
            velocity = u2;
            warnings = w2;
            previous = dist;
            if dist < self.mc.picard_tolerance {
                break;
            }
        }
        let mut next = NsState {
            time: t + dtau,
            step_index: step,
            vorticity: omega,
            velocity,
            diagnostics: Diagnostics::default(),
        };
        let mut d = self.diagnostics(&next, Some(&est))?;
        d.picard_iterations = iterations;
        d.warnings = warnings;
        next.diagnostics = d;
        Ok(next)
    }

    /// Repeated steps up to `t_final`; the last step is shortened to land on
    /// `t_final` exactly. Returns every state including the initial one.
    pub fn run(&self, initial: NsState<D>, t_final: f64, dtau: f64) -> Result<Vec<NsState<D>>> {
        if !(dtau > 0.0) {
            return Err(Error::invalid("dtau", "must be positive"));
        }
        if t_final < initial.time {
            return Err(Error::invalid("t_final", "must not precede the initial time"));
        }
        let mut states = vec![initial];
        loop {
            let cur = states.last().unwrap();
            let left = t_final - cur.time;
            if left <= 1e-9 * dtau {
                break;
            }
            let h = if left < dtau * (1.0 + 1e-9) { left } else { dtau };
            let next = self.step(cur, h)?;
            states.push(next);
        }
        Ok(states)
    }

    fn transport_params(&self, t: f64, dtau: f64, source: RandomSource) -> TransportParams {
        TransportParams {
            viscosity: self.viscosity,
            t0: t,
            horizon: dtau,
            n_steps: self.mc.n_substeps,
            n_paths: self.mc.n_paths,
            source,
            antithetic: self.mc.antithetic,
        }
    }

    fn recovery_for_step(&self, step: u64) -> Result<RecoveryParams<D>> {
        let mut p = self.recovery.ok_or_else(|| {
            Error::invalid("recovery", "free-space runs need Brownian recovery settings")
        })?;
        p.source = p.source.split(step);
        Ok(p)
    }
}

impl Stepper<2> for NsSolver<2> {
    fn rebuild_velocity(&self, vorticity: &GridField<2>, step: u64) -> Result<(GridField<2>, Vec<String>)> {
        let layout = *vorticity.layout();
        match layout.domain {
            Domain::Torus { .. } => Ok((spectral::biot_savart_2d(vorticity)?, Vec::new())),
            Domain::FreeSpace => {
                let params = self.recovery_for_step(step)?;
                let field = vorticity.clone().clamped_to_node_range();
                let r = recover_velocity_2d(&params, &field, &layout.nodes())?;
                let values = r.values.iter().flat_map(|v| [v.velocity[0], v.velocity[1]]).collect();
                Ok((GridField::from_values(layout, 2, values)?, r.warnings))
            }
        }
    }

    fn transport(
        &self,
        vorticity: &GridField<2>,
        velocity: &dyn VelocityField<2>,
        t: f64,
        dtau: f64,
        source: RandomSource,
    ) -> Result<(GridField<2>, Vec<PointEstimate<2>>)> {
        let layout = *vorticity.layout();
        let initial = vorticity.clone().clamped_to_node_range();
        let est = solve_scalar(&self.transport_params(t, dtau, source), velocity, &initial, &layout.nodes(), 0)?;
        let values = est.iter().map(|e| e.scalar().mean).collect();
        Ok((GridField::from_values(layout, 1, values)?, est))
    }

    fn diagnostics(&self, state: &NsState<2>, est: Option<&[PointEstimate<2>]>) -> Result<Diagnostics> {
        let w = &state.vorticity;
        let u = &state.velocity;
        let l = w.layout();
        let h2 = l.cell_volume();
        let (mc_max, mc_rms, excluded) = est.map(stderr_summary).unwrap_or((0.0, 0.0, 0));
        let circ_se = est.map(|e| {
            (pairwise_sum(&e.iter().map(|p| p.scalar().stderr.powi(2)).collect::<Vec<_>>())).sqrt() * h2
        });
        let (curl_res, div_res) = match l.domain {
            Domain::Torus { .. } => {
                let mean = w.integral(0) / (h2 * l.n_nodes() as f64);
                let c = spectral::curl_2d(u)?;
                let curl_res = (0..l.n_nodes()).map(|k| (c.at(k, 0) - (w.at(k, 0) - mean)).abs()).fold(0.0, f64::max);
                let d = spectral::divergence(u)?;
                (curl_res, d.values().iter().fold(0.0f64, |m, v| m.max(v.abs())))
            }
            Domain::FreeSpace => {
                let mut cr = 0.0f64;
                let mut dr = 0.0f64;
                for k in 0..l.n_nodes() {
                    let curl = grid_derivative(u, k, 1, 0) - grid_derivative(u, k, 0, 1);
                    let div = grid_derivative(u, k, 0, 0) + grid_derivative(u, k, 1, 1);
                    cr = cr.max((curl - w.at(k, 0)).abs());
                    dr = dr.max(div.abs());
                }
                (cr, dr)
            }
        };
        Ok(Diagnostics {
            step: state.step_index,
            time: state.time,
            kinetic_energy: half_sum_squares(u),
            enstrophy: half_sum_squares(w),
            max_vorticity: node_max_norm(w),
            circulation: Some(w.integral(0)),
            circulation_stderr: Some(circ_se.unwrap_or(0.0)),
            mc_stderr_max: mc_max,
            mc_stderr_rms: mc_rms,
            curl_residual: curl_res,
            divergence_residual: div_res,
            n_excluded: excluded,
            picard_iterations: 0,
            warnings: Vec::new(),
        })
    }
}

impl Stepper<3> for NsSolver<3> {
    fn rebuild_velocity(&self, vorticity: &GridField<3>, step: u64) -> Result<(GridField<3>, Vec<String>)> {
        let layout = *vorticity.layout();
        match layout.domain {
            Domain::Torus { .. } => Ok((spectral::biot_savart_3d(vorticity)?, Vec::new())),
            Domain::FreeSpace => {
                let params = self.recovery_for_step(step)?;
                let r = recover_velocity_3d(&params, vorticity, &layout.nodes())?;
                let values = r.values.iter().flat_map(|v| [v.velocity[0], v.velocity[1], v.velocity[2]]).collect();
                Ok((GridField::from_values(layout, 3, values)?, r.warnings))
            }
        }
    }

    fn transport(
        &self,
        vorticity: &GridField<3>,
        velocity: &dyn VelocityField<3>,
        t: f64,
        dtau: f64,
        source: RandomSource,
    ) -> Result<(GridField<3>, Vec<PointEstimate<3>>)> {
        let layout = *vorticity.layout();
        let est = solve_vorticity_3d_with_base(&self.transport_params(t, dtau, source), velocity, vorticity, &layout.nodes(), 0)?;
        let values = est.iter().flat_map(|e| e.mean()).collect();
        Ok((GridField::from_values(layout, 3, values)?, est))
    }

    fn diagnostics(&self, state: &NsState<3>, est: Option<&[PointEstimate<3>]>) -> Result<Diagnostics> {
        let w = &state.vorticity;
        let u = &state.velocity;
        let l = w.layout();
        let (mc_max, mc_rms, excluded) = est.map(stderr_summary).unwrap_or((0.0, 0.0, 0));
        let (curl_res, div_res) = match l.domain {
            Domain::Torus { .. } => {
                let means: Vec<f64> = (0..3).map(|c| w.integral(c) / (l.cell_volume() * l.n_nodes() as f64)).collect();
                let c = spectral::curl_3d(u)?;
                let mut cr = 0.0f64;
                for k in 0..l.n_nodes() {
                    for a in 0..3 {
                        cr = cr.max((c.at(k, a) - (w.at(k, a) - means[a])).abs());
                    }
                }
                let d = spectral::divergence(u)?;
                (cr, d.values().iter().fold(0.0f64, |m, v| m.max(v.abs())))
            }
            Domain::FreeSpace => {
                let mut cr = 0.0f64;
                let mut dr = 0.0f64;
                for k in 0..l.n_nodes() {
                    let g = |i: usize, j: usize| grid_derivative(u, k, i, j);
                    let curl = [g(2, 1) - g(1, 2), g(0, 2) - g(2, 0), g(1, 0) - g(0, 1)];
                    for a in 0..3 {
                        cr = cr.max((curl[a] - w.at(k, a)).abs());
                    }
                    dr = dr.max((g(0, 0) + g(1, 1) + g(2, 2)).abs());
                }
                (cr, dr)
            }
        };
        Ok(Diagnostics {
            step: state.step_index,
            time: state.time,
            kinetic_energy: half_sum_squares(u),
            enstrophy: half_sum_squares(w),
            max_vorticity: node_max_norm(w),
            circulation: None,
            circulation_stderr: None,
            mc_stderr_max: mc_max,
            mc_stderr_rms: mc_rms,
            curl_residual: curl_res,
            divergence_residual: div_res,
            n_excluded: excluded,
            picard_iterations: 0,
            warnings: Vec::new(),
        })
    }
}

/// Kinetic-energy decay rate `-d ln E / dt` by least squares over a run.
pub fn energy_decay_rate(diags: &[Diagnostics]) -> crate::stats::LinearFit {
    let t: Vec<f64> = diags.iter().map(|d| d.time).collect();
    let y: Vec<f64> = diags.iter().map(|d| -d.kinetic_energy.ln()).collect();
    crate::stats::linear_fit(&t, &y)
}

/// Circulation `sum omega h^2` of the initial grid with a zero error bar, for
/// comparing against later steps.
pub fn circulation_estimate(state: &NsState<2>) -> Estimate {
    Estimate {
        mean: state.diagnostics.circulation.unwrap_or(0.0),
        stderr: state.diagnostics.circulation_stderr.unwrap_or(0.0),
        n: 1,
    }
}
