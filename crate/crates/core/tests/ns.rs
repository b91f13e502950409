mod common;

use std::f64::consts::PI;

use stochflow::fields::analytic::{Abc, LambOseen, TaylorGreen2d, VortexBlob};
use stochflow::fields::grid::GridLayout;
use stochflow::ns::{circulation_estimate, McParams, NsSolver, VortexBlobInit};
use stochflow::recovery::{RecoveryParams, SQuadrature};
use stochflow::{Domain, Estimate, GridField, Point, RandomSource, ScalarField, VectorField};

fn free_recovery(length: f64, n_paths: usize, seed: u64) -> RecoveryParams<2> {
    RecoveryParams::new(
        Domain::FreeSpace,
        SQuadrature::default_for(&Domain::<2>::FreeSpace, length),
        n_paths,
        RandomSource::new(seed),
    )
}

#[test]
fn free_space_lamb_oseen_peak_decays_like_one_over_t() {
    let (gamma, nu, age, tau) = (1.0, 0.05, 1.0, 0.4);
    let lo = LambOseen::new(gamma, nu, age);
    let w0 = lo.vorticity_at(0.0);
    let layout = GridLayout::<2>::free_box(-2.5, 2.5, 21);
    let omega = GridField::sample_scalar(layout, |x| w0.value(x)).unwrap();
    let core = (4.0 * nu * age).sqrt();
    let solver = NsSolver::<2>::new(nu, McParams::new(4_000, 4), RandomSource::new(1))
        .with_recovery(free_recovery(core, 1_000, 2));
    let s0 = solver.initial_state(omega, 0.0).unwrap();
    let states = solver.run(s0, tau, 0.2).unwrap();
    let center = layout.flat_index(&[10, 10]);
    let last = states.last().unwrap();
    let want = common::lamb_oseen_vorticity(gamma, nu, age + tau, 0.0);
    let got = last.vorticity.at(center, 0);
    assert!((got - want).abs() < 0.05 * want, "peak {got} vs {want}");
    // the recovered velocity carries the vortex's swirl
    let k = layout.flat_index(&[14, 10]);
    let r = layout.node(k)[0];
    let speed = common::lamb_oseen_speed(gamma, nu, age + tau, r);
    assert!((last.velocity.at(k, 1) - speed).abs() < 0.1 * speed);
}

/// Initial circulation and circulation after one step with `n_substeps`
/// Euler–Maruyama substeps (same seeds for every substep count).
fn blob_pair_circulation(n_substeps: usize) -> (f64, Estimate) {
    let blobs = VortexBlobInit {
        blobs: vec![
            VortexBlob {
                center: [-0.5, 0.0],
                radius: 0.3,
                circulation: 3.0,
            },
            VortexBlob {
                center: [0.5, 0.0],
                radius: 0.3,
                circulation: 3.0,
            },
        ],
    };
    let layout = GridLayout::<2>::free_box(-1.5, 1.5, 31);
    let omega = blobs.vorticity_grid(layout).unwrap();
    let solver = NsSolver::<2>::new(0.01, McParams::new(2_000, n_substeps), RandomSource::new(30))
        .with_recovery(free_recovery(0.3, 1_000, 31));
    let s0 = solver.initial_state(omega, 0.0).unwrap();
    let c0 = circulation_estimate(&s0).mean;
    let s1 = solver.step(&s0, 0.1).unwrap();
    (c0, circulation_estimate(&s1))
}

#[test]
fn co_rotating_blobs_keep_their_circulation() {
    // a discrete Euler–Maruyama map of a rotating flow is not measure
    // preserving, so the grid circulation drifts at first order in the
    // substep; the drift must halve with the substep and extrapolate to zero
    let runs: Vec<(f64, Estimate)> = [1, 2, 4].iter().map(|&n| blob_pair_circulation(n)).collect();
    let c0 = runs[0].0;
    assert!((c0 - 6.0).abs() < 0.05, "initial grid circulation {c0}");
    let loss: Vec<f64> = runs.iter().map(|r| c0 - r.1.mean).collect();
    for w in loss.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.5..2.7).contains(&ratio), "losses {loss:?}");
    }
    let (c2, c4) = (&runs[1].1, &runs[2].1);
    let extrapolated = 2.0 * c4.mean - c2.mean;
    let se = (4.0 * c4.stderr.powi(2) + c2.stderr.powi(2)).sqrt();
    assert!((extrapolated - c0).abs() <= 4.0 * se, "extrapolated {extrapolated} +- {se} vs {c0} (losses {loss:?})");
}

/// Deterministic rough torus data: modes up to wavenumber 6.
fn rough(x: &Point<2>) -> f64 {
    let mut v = 0.0;
    for kx in 1..=6 {
        for ky in 0..=6 {
            let a = ((kx * 7 + ky * 13) % 11) as f64 / 11.0 - 0.5;
            let p = (kx * 3 + ky * 5) as f64;
            v += a / (kx * kx + ky * ky) as f64 * (kx as f64 * x[0] + ky as f64 * x[1] + p).cos();
        }
    }
    v * 4.0
}

#[test]
fn enstrophy_decreases_for_rough_data() {
    let layout = GridLayout::<2>::torus(2.0 * PI, 16);
    let omega = GridField::sample_scalar(layout, rough).unwrap();
    let solver = NsSolver::<2>::new(1.0, McParams::new(500, 2), RandomSource::new(5));
    let s0 = solver.initial_state(omega, 0.0).unwrap();
    let states = solver.run(s0, 0.2, 0.05).unwrap();
    let area = 4.0 * PI * PI;
    for w in states.windows(2) {
        let (a, b) = (&w[0].diagnostics, &w[1].diagnostics);
        // Monte Carlo noise adds about 1/2 se^2 area to the enstrophy
        let noise = 0.5 * b.mc_stderr_rms.powi(2) * area;
        assert!(b.enstrophy <= a.enstrophy + 4.0 * noise, "{} -> {} (noise {noise})", a.enstrophy, b.enstrophy);
    }
    let (first, last) = (&states[0].diagnostics, &states.last().unwrap().diagnostics);
    assert!(last.enstrophy < 0.5 * first.enstrophy);
}

fn taylor_green_error(dtau: f64, n_paths: usize, seed: u64) -> f64 {
    let nu = 0.1;
    let tg = TaylorGreen2d::new(nu);
    let layout = GridLayout::<2>::torus(2.0 * PI, 32);
    let omega = GridField::sample_scalar(layout, |x| tg.vorticity_at(0.0).value(x)).unwrap();
    let solver = NsSolver::<2>::new(nu, McParams::new(n_paths, 2), RandomSource::new(seed));
    let s0 = solver.initial_state(omega, 0.0).unwrap();
    let t_final = 0.2;
    let last = solver.run(s0, t_final, dtau).unwrap().pop().unwrap();
    let exact = tg.vorticity_at(t_final);
    let sq: f64 = layout
        .nodes()
        .iter()
        .enumerate()
        .map(|(k, x)| (last.vorticity.at(k, 0) - exact.value(x)).powi(2))
        .sum();
    (sq / layout.n_nodes() as f64).sqrt()
}

#[test]
fn refinement_reduces_the_error() {
    let errs: Vec<f64> = [(0.1, 250), (0.05, 500), (0.025, 1_000)]
        .iter()
        .enumerate()
        .map(|(i, &(dt, n))| taylor_green_error(dt, n, 10 + i as u64))
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "errors {errs:?}");
    assert!(errs[0] / errs[2] > 1.5, "errors {errs:?}");
}

#[test]
fn torus_velocity_is_the_exact_biot_savart_inverse() {
    let tg = TaylorGreen2d::new(0.1);
    let layout = GridLayout::<2>::torus(2.0 * PI, 16);
    let omega = GridField::sample_scalar(layout, |x| tg.vorticity_at(0.0).value(x) + 0.3 * (x[0] + 2.0 * x[1]).sin())
        .unwrap();
    let solver = NsSolver::<2>::new(0.1, McParams::new(200, 2), RandomSource::new(20));
    let s0 = solver.initial_state(omega, 0.0).unwrap();
    let s1 = solver.step(&s0, 0.05).unwrap();
    // band-limited data invert exactly; after a step the only mismatch is
    // the Nyquist content of the noisy vorticity, which has no curl partner
    assert!(s0.diagnostics.curl_residual < 1e-10, "curl residual {}", s0.diagnostics.curl_residual);
    let bound = nyquist_bound(&s1.vorticity, 16);
    assert!(s1.diagnostics.curl_residual > 0.0);
    assert!(s1.diagnostics.curl_residual <= bound + 1e-12, "{} vs {bound}", s1.diagnostics.curl_residual);
    for s in [&s0, &s1] {
        assert!(s.diagnostics.divergence_residual < 1e-10);
    }
    assert!(s1.diagnostics.mc_stderr_max > 0.0);
}

/// `sum |w_k|` over modes with a Nyquist index, by a direct DFT: bounds the
/// part of an `n x n` periodic grid that the odd derivatives drop.
fn nyquist_bound(w: &GridField<2>, n: usize) -> f64 {
    let mut total = 0.0;
    for kx in 0..n {
        for ky in 0..n {
            if kx != n / 2 && ky != n / 2 {
                continue;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let v = w.at(w.layout().flat_index(&[i, j]), 0);
                    let ph = -2.0 * PI * ((kx * i) as f64 + (ky * j) as f64) / n as f64;
                    re += v * ph.cos();
                    im += v * ph.sin();
                }
            }
            total += re.hypot(im) / (n * n) as f64;
        }
    }
    total
}

#[test]
fn abc_flow_decays_in_3d() {
    // ABC is a steady Euler flow; under viscosity it keeps its shape and its
    // energy decays like exp(-2 nu t)
    let nu = 0.1;
    let abc = Abc::new(1.0, 1.0, 1.0);
    let layout = GridLayout::<3>::torus(2.0 * PI, 12);
    let omega = GridField::sample_vector(layout, |x| abc.value(x)).unwrap();
    let solver = NsSolver::<3>::new(nu, McParams::new(200, 2), RandomSource::new(21));
    let s0 = solver.initial_state(omega, 0.0).unwrap();
    let states = solver.run(s0, 0.2, 0.1).unwrap();
    let ratio = states[2].diagnostics.kinetic_energy / states[0].diagnostics.kinetic_energy;
    let want = (-2.0 * nu * 0.2f64).exp();
    assert!((ratio - want).abs() < 0.02, "energy ratio {ratio} vs {want}");
    let probe = layout.flat_index(&[3, 5, 7]);
    let u = states[2].velocity.node_vector(probe);
    let exact = abc.value(&layout.node(probe)) * (-nu * 0.2f64).exp();
    assert!((u - exact).norm() < 0.1 * exact.norm(), "{u} vs {exact}");
}

#[test]
fn bad_solver_settings_are_rejected() {
    let layout = GridLayout::<2>::torus(2.0 * PI, 8);
    let omega = GridField::sample_scalar(layout, |x: &Point<2>| x[0].sin()).unwrap();
    assert!(NsSolver::<2>::new(-1.0, McParams::new(10, 1), RandomSource::new(0))
        .initial_state(omega.clone(), 0.0)
        .is_err());
    assert!(NsSolver::<2>::new(0.1, McParams::new(0, 1), RandomSource::new(0))
        .initial_state(omega.clone(), 0.0)
        .is_err());
    let ok = NsSolver::<2>::new(0.1, McParams::new(10, 1), RandomSource::new(0));
    let s0 = ok.initial_state(omega, 0.0).unwrap();
    assert!(ok.step(&s0, 0.0).is_err());
}
