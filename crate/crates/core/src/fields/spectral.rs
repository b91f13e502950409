//! Fourier-space operators on periodic grids: Leray projection, spectral
//! Biot–Savart inversion, curl and divergence.
//!
//! Odd derivatives zero the Nyquist mode (its sign is ambiguous for real
//! data); the Laplacian keeps it. The mean (k = 0) mode of the vorticity is
//! dropped by the inversion, which is the solvability condition on a torus.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::grid::{GridField, GridLayout};
use super::Domain;
use crate::error::{Error, Result};
use crate::sde::Point;

type C64 = Complex<f64>;

/// Multi-component spectrum of a periodic grid field.
struct Spectrum<const D: usize> {
    layout: GridLayout<D>,
    period: Point<D>,
    comps: Vec<Vec<C64>>,
}

fn torus_period<const D: usize>(layout: &GridLayout<D>) -> Result<Point<D>> {
    match layout.domain {
        Domain::Torus { period } => Ok(period),
        Domain::FreeSpace => Err(Error::UnsupportedDomain(
            "spectral operators need a periodic domain".into(),
        )),
    }
}

/// In-place N-d FFT of a row-major array (last axis fastest).
fn fft_nd(data: &mut [C64], shape: &[usize], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let total: usize = shape.iter().product();
    for (axis, &n) in shape.iter().enumerate() {
        let fft = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        let stride: usize = shape[axis + 1..].iter().product();
        let mut line = vec![C64::new(0.0, 0.0); n];
        for start in 0..total {
            // visit each line once, from its first element
            if (start / stride) % n != 0 {
                continue;
            }
            for (i, slot) in line.iter_mut().enumerate() {
                *slot = data[start + i * stride];
            }
            fft.process(&mut line);
            for (i, v) in line.iter().enumerate() {
                data[start + i * stride] = *v;
            }
        }
    }
    if inverse {
        let scale = 1.0 / total as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

impl<const D: usize> Spectrum<D> {
    fn forward(field: &GridField<D>) -> Result<Self> {
        let layout = *field.layout();
        let period = torus_period(&layout)?;
        let n = layout.n_nodes();
        let comps = (0..field.components())
            .map(|c| {
                let mut data: Vec<C64> = (0..n).map(|k| C64::new(field.at(k, c), 0.0)).collect();
                fft_nd(&mut data, &layout.shape, false);
                data
            })
            .collect();
        Ok(Spectrum { layout, period, comps })
    }

    fn zeros(layout: GridLayout<D>, period: Point<D>, components: usize) -> Self {
        Spectrum {
            layout,
            period,
            comps: vec![vec![C64::new(0.0, 0.0); layout.n_nodes()]; components],
        }
    }

    /// Physical wavevector of mode `k` and its derivative version (Nyquist
    /// entries zeroed).
    fn wavevector(&self, k: usize) -> (Point<D>, Point<D>) {
        let idx = self.layout.multi_index(k);
        let mut full = Point::<D>::zeros();
        let mut deriv = Point::<D>::zeros();
        for a in 0..D {
            let n = self.layout.shape[a];
            let i = idx[a] as isize;
            let signed = if i as usize > n / 2 { i - n as isize } else { i };
            let base = 2.0 * std::f64::consts::PI / self.period[a];
            full[a] = base * signed as f64;
            deriv[a] = if n % 2 == 0 && i as usize == n / 2 { 0.0 } else { full[a] };
        }
        (full, deriv)
    }

    fn inverse(mut self) -> GridField<D> {
        let n = self.layout.n_nodes();
        let ncomp = self.comps.len();
        for c in self.comps.iter_mut() {
            fft_nd(c, &self.layout.shape, true);
        }
        let mut values = vec![0.0; n * ncomp];
        for k in 0..n {
            for c in 0..ncomp {
                values[k * ncomp + c] = self.comps[c][k].re;
            }
        }
        GridField::from_values(self.layout, ncomp, values).expect("layout already validated")
    }
}

fn require_components<const D: usize>(field: &GridField<D>, n: usize, what: &str) -> Result<()> {
    if field.components() != n {
        return Err(Error::Dimension(format!(
            "{what} expects {n} component(s), got {}",
            field.components()
        )));
    }
    Ok(())
}

/// Leray projection onto divergence-free fields, mode by mode. The mean is
/// kept.
pub fn project_div_free<const D: usize>(v: &GridField<D>) -> Result<GridField<D>> {
    require_components(v, D, "projection")?;
    let mut s = Spectrum::forward(v)?;
    for k in 0..s.layout.n_nodes() {
        let (_, kd) = s.wavevector(k);
        let k2 = kd.norm_squared();
        if k2 == 0.0 {
            continue;
        }
        let mut dot = C64::new(0.0, 0.0);
        for a in 0..D {
            dot += s.comps[a][k] * kd[a];
        }
        for a in 0..D {
            s.comps[a][k] -= dot * (kd[a] / k2);
        }
    }
    Ok(s.inverse())
}

/// Stream function `psi` with `-lap psi = omega - mean(omega)`, zero mean.
pub fn stream_function_2d(omega: &GridField<2>) -> Result<GridField<2>> {
    require_components(omega, 1, "stream function")?;
    let mut s = Spectrum::forward(omega)?;
    for k in 0..s.layout.n_nodes() {
        let (kf, _) = s.wavevector(k);
        let k2 = kf.norm_squared();
        s.comps[0][k] = if k2 == 0.0 { C64::new(0.0, 0.0) } else { s.comps[0][k] / k2 };
    }
    Ok(s.inverse())
}

/// Periodic velocity `perp_grad psi` whose curl is `omega - mean(omega)`.
pub fn biot_savart_2d(omega: &GridField<2>) -> Result<GridField<2>> {
    require_components(omega, 1, "2D Biot–Savart")?;
    let s = Spectrum::forward(omega)?;
    let mut out = Spectrum::zeros(s.layout, s.period, 2);
    let i = C64::new(0.0, 1.0);
    for k in 0..s.layout.n_nodes() {
        let (kf, kd) = s.wavevector(k);
        let k2 = kf.norm_squared();
        if k2 == 0.0 {
            continue;
        }
        let psi = s.comps[0][k] / k2;
        out.comps[0][k] = i * kd[1] * psi;
        out.comps[1][k] = -i * kd[0] * psi;
    }
    Ok(out.inverse())
}

/// Periodic divergence-free velocity with `curl u = omega` (mean-free,
/// divergence-free part of `omega`).
pub fn biot_savart_3d(omega: &GridField<3>) -> Result<GridField<3>> {
    require_components(omega, 3, "3D Biot–Savart")?;
    let s = Spectrum::forward(omega)?;
    let mut out = Spectrum::zeros(s.layout, s.period, 3);
    let i = C64::new(0.0, 1.0);
    for k in 0..s.layout.n_nodes() {
        let (kf, kd) = s.wavevector(k);
        let k2 = kf.norm_squared();
        if k2 == 0.0 {
            continue;
        }
        let a = [s.comps[0][k] / k2, s.comps[1][k] / k2, s.comps[2][k] / k2];
        out.comps[0][k] = i * (a[2] * kd[1] - a[1] * kd[2]);
        out.comps[1][k] = i * (a[0] * kd[2] - a[2] * kd[0]);
        out.comps[2][k] = i * (a[1] * kd[0] - a[0] * kd[1]);
    }
    Ok(out.inverse())
}

/// Spectral 2D curl `d_1 u^2 - d_2 u^1` of a periodic velocity grid.
pub fn curl_2d(u: &GridField<2>) -> Result<GridField<2>> {
    require_components(u, 2, "2D curl")?;
    let s = Spectrum::forward(u)?;
    let mut out = Spectrum::zeros(s.layout, s.period, 1);
    let i = C64::new(0.0, 1.0);
    for k in 0..s.layout.n_nodes() {
        let (_, kd) = s.wavevector(k);
        out.comps[0][k] = i * (s.comps[1][k] * kd[0] - s.comps[0][k] * kd[1]);
    }
    Ok(out.inverse())
}

/// Spectral 3D curl.
pub fn curl_3d(u: &GridField<3>) -> Result<GridField<3>> {
    require_components(u, 3, "3D curl")?;
    let s = Spectrum::forward(u)?;
    let mut out = Spectrum::zeros(s.layout, s.period, 3);
    let i = C64::new(0.0, 1.0);
    for k in 0..s.layout.n_nodes() {
        let (_, kd) = s.wavevector(k);
        let v = [s.comps[0][k], s.comps[1][k], s.comps[2][k]];
        out.comps[0][k] = i * (v[2] * kd[1] - v[1] * kd[2]);
        out.comps[1][k] = i * (v[0] * kd[2] - v[2] * kd[0]);
        out.comps[2][k] = i * (v[1] * kd[0] - v[0] * kd[1]);
    }
    Ok(out.inverse())
}

/// Spectral divergence of a periodic `D`-vector grid.
pub fn divergence<const D: usize>(u: &GridField<D>) -> Result<GridField<D>> {
    require_components(u, D, "divergence")?;
    let s = Spectrum::forward(u)?;
    let mut out = Spectrum::zeros(s.layout, s.period, 1);
    let i = C64::new(0.0, 1.0);
    for k in 0..s.layout.n_nodes() {
        let (_, kd) = s.wavevector(k);
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..D {
            acc += s.comps[a][k] * kd[a];
        }
        out.comps[0][k] = i * acc;
    }
    Ok(out.inverse())
}

/// Evaluate the Biot–Savart velocity of a periodic vorticity grid at
/// arbitrary points by summing its Fourier series (no interpolation error).
pub fn biot_savart_series_2d(omega: &GridField<2>, points: &[Point<2>]) -> Result<Vec<Point<2>>> {
    require_components(omega, 1, "2D Biot–Savart")?;
    let s = Spectrum::forward(omega)?;
    let n = s.layout.n_nodes() as f64;
    let modes: Vec<(Point<2>, Point<2>, C64)> = (0..s.layout.n_nodes())
        .filter_map(|k| {
            let (kf, kd) = s.wavevector(k);
            let k2 = kf.norm_squared();
            (k2 > 0.0).then(|| (kf, kd, s.comps[0][k] / (k2 * n)))
        })
        .collect();
    Ok(points
        .iter()
        .map(|x| {
            let mut u = [C64::new(0.0, 0.0); 2];
            for (kf, kd, psi) in &modes {
                let phase = kf.dot(&(x - s.layout.origin));
                let e = C64::new(phase.cos(), phase.sin()) * psi * C64::new(0.0, 1.0);
                u[0] += e * kd[1];
                u[1] -= e * kd[0];
            }
            nalgebra::Vector2::new(u[0].re, u[1].re)
        })
        .collect())
}

/// 3D counterpart of [`biot_savart_series_2d`].
pub fn biot_savart_series_3d(omega: &GridField<3>, points: &[Point<3>]) -> Result<Vec<Point<3>>> {
    require_components(omega, 3, "3D Biot–Savart")?;
    let s = Spectrum::forward(omega)?;
    let n = s.layout.n_nodes() as f64;
    let modes: Vec<(Point<3>, Point<3>, [C64; 3])> = (0..s.layout.n_nodes())
        .filter_map(|k| {
            let (kf, kd) = s.wavevector(k);
            let k2 = kf.norm_squared();
            (k2 > 0.0).then(|| {
                let d = k2 * n;
                (kf, kd, [s.comps[0][k] / d, s.comps[1][k] / d, s.comps[2][k] / d])
            })
        })
        .collect();
    Ok(points
        .iter()
        .map(|x| {
            let mut u = [C64::new(0.0, 0.0); 3];
            for (kf, kd, a) in &modes {
                let phase = kf.dot(&(x - s.layout.origin));
                let e = C64::new(phase.cos(), phase.sin()) * C64::new(0.0, 1.0);
                u[0] += e * (a[2] * kd[1] - a[1] * kd[2]);
                u[1] += e * (a[0] * kd[2] - a[2] * kd[0]);
                u[2] += e * (a[1] * kd[0] - a[0] * kd[1]);
            }
            nalgebra::Vector3::new(u[0].re, u[1].re, u[2].re)
        })
        .collect())
}
