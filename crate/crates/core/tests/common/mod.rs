//! Independent oracles shared by the integration tests. Nothing here calls
//! into the solver code except for plain data types.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::{Mutex, MutexGuard};

use nalgebra::{Matrix3, Vector3};

static SERIAL: Mutex<()> = Mutex::new(());

/// Run timed tests one at a time so wall-clock limits mean something.
pub fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Heat flow of `a exp(-|x - c|^2 / (2 s0^2))` in 2D for time `tau` at
/// diffusivity `nu`.
pub fn heat_gaussian_2d(amp: f64, s0: f64, center: [f64; 2], nu: f64, tau: f64, x: [f64; 2]) -> f64 {
    let v0 = s0 * s0;
    let v = v0 + 2.0 * nu * tau;
    let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
    amp * v0 / v * (-r2 / (2.0 * v)).exp()
}

/// Lamb–Oseen vorticity `G / (4 pi nu t) exp(-r^2 / (4 nu t))`.
pub fn lamb_oseen_vorticity(gamma: f64, nu: f64, t: f64, r: f64) -> f64 {
    gamma / (4.0 * PI * nu * t) * (-r * r / (4.0 * nu * t)).exp()
}

/// Lamb–Oseen azimuthal speed `G / (2 pi r) (1 - exp(-r^2 / (4 nu t)))`.
pub fn lamb_oseen_speed(gamma: f64, nu: f64, t: f64, r: f64) -> f64 {
    gamma / (2.0 * PI * r) * (1.0 - (-r * r / (4.0 * nu * t)).exp())
}

/// Vorticity transport by the linear flow `u = G x` at diffusivity `nu`,
/// starting from `c exp(-|x|^2 / (2 s0^2))`. The stretched amplitude is
/// `exp(tau G) c`; the profile is a Gaussian whose covariance grows by
/// `2 nu int_0^tau e^{-rG} e^{-rG^T} dr` (Simpson's rule).
pub fn strained_gaussian(g: &Matrix3<f64>, c: &Vector3<f64>, s0: f64, nu: f64, tau: f64, x: &Vector3<f64>) -> Vector3<f64> {
    let n = 400;
    let h = tau / n as f64;
    let mut cov = Matrix3::zeros();
    for k in 0..=n {
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let e = (-g * (k as f64 * h)).exp();
        cov += e * e.transpose() * w;
    }
    cov *= 2.0 * nu * h / 3.0;
    let s0m = Matrix3::identity() * (s0 * s0);
    let total = s0m + cov;
    let m = (-g * tau).exp() * x;
    let profile = (s0m.determinant() / total.determinant()).sqrt()
        * (-0.5 * m.dot(&(total.try_inverse().unwrap() * m))).exp();
    (g * tau).exp() * c * profile
}

/// Periodic 3D grid of `n^3` nodes on `[0, 2 pi)^3`, first axis slowest.
pub struct PeriodicGrid3 {
    pub n: usize,
    pub h: f64,
}

impl PeriodicGrid3 {
    pub fn new(n: usize) -> Self {
        PeriodicGrid3 { n, h: 2.0 * PI / n as f64 }
    }

    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        Vector3::new(i as f64 * self.h, j as f64 * self.h, k as f64 * self.h)
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Fourth-order central first derivative of component `c` along `axis`.
    fn d1(&self, f: &[Vector3<f64>], i: usize, j: usize, k: usize, axis: usize, c: usize) -> f64 {
        let n = self.n;
        let at = |o: isize| {
            let mut ix = [i, j, k];
            ix[axis] = ((ix[axis] as isize + o).rem_euclid(n as isize)) as usize;
            f[self.idx(ix[0], ix[1], ix[2])][c]
        };
        (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * self.h)
    }

    /// Fourth-order central second derivative.
    fn d2(&self, f: &[Vector3<f64>], i: usize, j: usize, k: usize, axis: usize, c: usize) -> f64 {
        let n = self.n;
        let at = |o: isize| {
            let mut ix = [i, j, k];
            ix[axis] = ((ix[axis] as isize + o).rem_euclid(n as isize)) as usize;
            f[self.idx(ix[0], ix[1], ix[2])][c]
        };
        (-at(2) + 16.0 * at(1) - 30.0 * at(0) + 16.0 * at(-1) - at(-2)) / (12.0 * self.h * self.h)
    }

    /// `curl(u x B) + nu lap B` at every node.
    fn induction_rhs(&self, u: &[Vector3<f64>], b: &[Vector3<f64>], nu: f64) -> Vec<Vector3<f64>> {
        let e: Vec<Vector3<f64>> = u.iter().zip(b).map(|(u, b)| u.cross(b)).collect();
        let mut out = vec![Vector3::zeros(); self.len()];
        for i in 0..self.n {
            for j in 0..self.n {
                for k in 0..self.n {
                    let d = |axis, c| self.d1(&e, i, j, k, axis, c);
                    let curl = Vector3::new(d(1, 2) - d(2, 1), d(2, 0) - d(0, 2), d(0, 1) - d(1, 0));
                    let lap = Vector3::from_fn(|c, _| (0..3).map(|a| self.d2(b, i, j, k, a, c)).sum::<f64>());
                    out[self.idx(i, j, k)] = curl + lap * nu;
                }
            }
        }
        out
    }

    /// Induction equation for a steady flow by classical RK4; returns the
    /// field at each of `snapshots` (which must be multiples of `dt`).
    pub fn solve_induction(
        &self,
        velocity: impl Fn(&Vector3<f64>) -> Vector3<f64>,
        b0: impl Fn(&Vector3<f64>) -> Vector3<f64>,
        nu: f64,
        dt: f64,
        snapshots: &[f64],
    ) -> Vec<Vec<Vector3<f64>>> {
        let n = self.n;
        let mut u = Vec::with_capacity(self.len());
        let mut b = Vec::with_capacity(self.len());
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let x = self.node(i, j, k);
                    u.push(velocity(&x));
                    b.push(b0(&x));
                }
            }
        }
        let axpy = |x: &[Vector3<f64>], a: f64, y: &[Vector3<f64>]| -> Vec<Vector3<f64>> {
            x.iter().zip(y).map(|(x, y)| x + y * a).collect()
        };
        let mut out = Vec::new();
        let mut t = 0.0;
        for &target in snapshots {
            let steps = ((target - t) / dt).round() as usize;
            for _ in 0..steps {
                let k1 = self.induction_rhs(&u, &b, nu);
                let k2 = self.induction_rhs(&u, &axpy(&b, 0.5 * dt, &k1), nu);
                let k3 = self.induction_rhs(&u, &axpy(&b, 0.5 * dt, &k2), nu);
                let k4 = self.induction_rhs(&u, &axpy(&b, dt, &k3), nu);
                for m in 0..b.len() {
                    b[m] += (k1[m] + k2[m] * 2.0 + k3[m] * 2.0 + k4[m]) * (dt / 6.0);
                }
            }
            t += steps as f64 * dt;
            out.push(b.clone());
        }
        out
    }
}

/// ABC flow `(A sin z + C cos y, B sin x + A cos z, C sin y + B cos x)`.
pub fn abc(a: f64, b: f64, c: f64, x: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(
        a * x[2].sin() + c * x[1].cos(),
        b * x[0].sin() + a * x[2].cos(),
        c * x[1].sin() + b * x[0].cos(),
    )
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
