mod common;

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};

use stochflow::dynamo::{grid_divergence, growth_rate_3d, transport_magnetic_2d, transport_magnetic_3d, DynamoParams};
use stochflow::fields::analytic::{Abc, FourierMode, GaussianBlob, TaylorGreen2d, UniformFlow};
use stochflow::fields::grid::GridLayout;
use stochflow::fields::FnVectorField;
use stochflow::{Point, RandomSource, ScalarField};

fn params(nu: f64, horizon: f64, n_steps: usize, n_paths: usize, seed: u64) -> DynamoParams {
    DynamoParams {
        diffusivity: nu,
        t0: 0.0,
        horizon,
        n_steps,
        n_paths,
        source: RandomSource::new(seed),
        antithetic: false,
    }
}

fn box_probes(n: usize) -> Vec<Point<3>> {
    (0..n)
        .map(|i| {
            let a = i as f64 + 1.0;
            Vector3::new(
                (a * 0.819_172_5).fract() * 2.0 * PI,
                (a * 0.671_043_5).fract() * 2.0 * PI,
                (a * 0.549_700_5).fract() * 2.0 * PI,
            )
        })
        .collect()
}

fn b0(x: &Point<3>) -> Point<3> {
    Vector3::new(x[2].sin(), x[0].sin(), x[1].sin())
}

#[test]
fn a_single_mode_decays_at_the_diffusive_rate() {
    let nu = 0.2;
    let mode = FourierMode::new(Vector3::new(0.0, 1.0, 0.5), Vector3::new(2.0, 0.0, 0.0), 0.3).unwrap();
    let g = growth_rate_3d(&params(nu, 1.0, 1, 20_000, 1), &UniformFlow::<3>::zero(), &mode, (0.2, 1.0), 4, &box_probes(12))
        .unwrap();
    let want = -nu * 4.0;
    assert!((g.rate - want).abs() <= 4.0 * g.stderr, "rate {} +- {} vs {want}", g.rate, g.stderr);
    assert!(g.interval.0 < g.rate && g.rate < g.interval.1);
    assert_eq!(g.times.len(), 4);
}

#[test]
fn abc_growth_rate_matches_the_induction_solver() {
    let nu = 0.1;
    let abc = Abc::new(1.0, 1.0, 1.0);
    let fd = common::PeriodicGrid3::new(24);
    let times = [0.2, 0.4, 0.6];
    let snaps = fd.solve_induction(|x| common::abc(1.0, 1.0, 1.0, x), b0, nu, 0.01, &times);
    let mut probes = Vec::new();
    let mut idx = Vec::new();
    for i in (0..24).step_by(8) {
        for j in (0..24).step_by(8) {
            for k in (0..24).step_by(8) {
                probes.push(fd.node(i + 1, j + 3, k + 5));
                idx.push(fd.idx(i + 1, j + 3, k + 5));
            }
        }
    }
    let log_e: Vec<f64> = snaps
        .iter()
        .map(|b| (idx.iter().map(|&m| b[m].norm_squared()).sum::<f64>() / idx.len() as f64).ln())
        .collect();
    let oracle = 0.5 * common::slope(&times, &log_e);

    let g = growth_rate_3d(&params(nu, 0.6, 24, 10_000, 2), &abc, &FnVectorField(b0), (0.2, 0.6), 3, &probes).unwrap();
    assert!((g.rate - oracle).abs() <= 4.0 * g.stderr, "rate {} +- {} vs induction solver {oracle}", g.rate, g.stderr);
    for (e, l) in g.energies.iter().zip(&log_e) {
        assert!((e.ln() - l).abs() < 0.05, "energy {e} vs {}", l.exp());
    }
}

#[test]
fn transport_is_linear_in_the_initial_field() {
    let abc = Abc::new(1.0, 0.7, 0.4);
    let p = params(0.1, 0.4, 10, 500, 3);
    let b1 = FourierMode::new(Vector3::new(0.0, 1.0, 0.0), Vector3::new(1.0, 0.0, 0.0), 0.0).unwrap();
    let b2 = FnVectorField(b0);
    let (a, b) = (1.7, -0.6);
    let mix = FnVectorField(move |x: &Point<3>| {
        use stochflow::VectorField;
        b1.value(x) * a + b0(x) * b
    });
    let pts = box_probes(5);
    let e1 = transport_magnetic_3d(&p, &abc, &b1, &pts).unwrap();
    let e2 = transport_magnetic_3d(&p, &abc, &b2, &pts).unwrap();
    let em = transport_magnetic_3d(&p, &abc, &mix, &pts).unwrap();
    for i in 0..pts.len() {
        let want = e1[i].vector() * a + e2[i].vector() * b;
        assert!((em[i].vector() - want).amax() < 1e-12 * (1.0 + want.amax()));
    }
}

#[test]
fn transported_field_stays_divergence_free_on_the_grid() {
    let abc = Abc::new(1.0, 1.0, 1.0);
    let layout = GridLayout::<3>::torus(2.0 * PI, 12);
    let est = transport_magnetic_3d(&params(0.1, 0.3, 10, 300, 4), &abc, &FnVectorField(b0), &layout.nodes()).unwrap();
    let h = 2.0 * PI / 12.0;
    let rep = grid_divergence(&est, [12; 3], [h; 3]).unwrap();
    assert!(rep.max_ratio <= 5.0, "max |div| / stderr = {}", rep.max_ratio);
    assert!(rep.stderr_at_max > 0.0);
}

#[test]
fn divergent_initial_fields_are_rejected() {
    let radial = FnVectorField(|x: &Point<3>| *x);
    let err = transport_magnetic_3d(&params(0.1, 0.3, 2, 10, 5), &Abc::new(1.0, 1.0, 1.0), &radial, &box_probes(3));
    assert!(err.is_err());
    assert!(transport_magnetic_3d(&params(0.0, 0.3, 2, 10, 5), &Abc::new(1.0, 1.0, 1.0), &FnVectorField(b0), &box_probes(3))
        .is_err());
}

#[test]
fn planar_flux_function_is_a_passive_scalar() {
    // without flow the flux function just diffuses
    let blob = GaussianBlob::<2>::new(Vector2::new(0.2, -0.1), 0.6, 1.0);
    let (nu, tau) = (0.05, 1.0);
    let evolved = blob.heat_evolved(nu, tau);
    let pts = [Vector2::new(0.0, 0.0), Vector2::new(0.5, 0.4)];
    let est = transport_magnetic_2d(&params(nu, tau, 1, 50_000, 6), &UniformFlow::<2>::zero(), &blob, &pts).unwrap();
    for e in &est {
        assert!(e.scalar().z_score(evolved.value(&e.point)).abs() < 4.0);
    }
    // and under a 2D flow its sup norm cannot grow: no planar dynamo
    let tg = TaylorGreen2d::new(0.05).frozen();
    let torus_blob = GaussianBlob {
        domain: TaylorGreen2d::domain(),
        ..blob
    };
    let grid = GridLayout::<2>::torus(2.0 * PI, 12);
    let est = transport_magnetic_2d(&params(nu, 2.0, 20, 500, 7), &tg, &torus_blob, &grid.nodes()).unwrap();
    assert!(est.iter().all(|e| e.sample_range[0].1 <= 1.0 && e.sample_range[0].0 >= 0.0));
}
