use std::f64::consts::PI;

use nalgebra::{Matrix2, SMatrix, Vector2};

use stochflow::driftless::{
    build_rotation_frame_2d, compare_laws, verify_frame_conditions, DriftDerivative, FrameField, RotationFrame2d,
    TorsionSpec, VelocityStream,
};
use stochflow::fields::analytic::{ConstantStrain, TaylorGreen2d};
use stochflow::sde::{simulate_ito, simulate_stratonovich, ItoSdeSpec, Record, SimOptions, Start};
use stochflow::{Error, Point, RandomSource, TimeGrid, VelocityField};

fn check_points(n: usize, t_max: f64) -> Vec<(f64, Point<2>)> {
    (0..n)
        .map(|i| {
            let a = i as f64 + 0.5;
            (
                (a * 0.618_034).fract() * t_max,
                Vector2::new((a * 0.754_877_7).fract() * 2.0 * PI, (a * 0.569_840_3).fract() * 2.0 * PI),
            )
        })
        .collect()
}

fn endpoints() -> SimOptions {
    SimOptions {
        record: Record::Endpoints,
        ..SimOptions::default()
    }
}

#[test]
fn linear_stream_gives_a_constant_encoded_drift() {
    // hand-derived: K = c R(-2 psi / c^2) with psi = p . x encodes (p_2, -p_1)
    let p = Vector2::new(0.8, -0.35);
    let c = 0.7;
    let frame = RotationFrame2d::new(move |_t: f64, x: &Point<2>| p.dot(x), c);
    let target = move |_t: f64, _x: &Point<2>| Vector2::new(p[1], -p[0]);
    for d in [DriftDerivative::Analytic, DriftDerivative::FiniteDifference] {
        let r = verify_frame_conditions(&frame, c, &target, &check_points(30, 1.0), d);
        assert!(r.isotropy_residual < 1e-14 && r.drift_residual < 1e-8, "{r:?}");
    }
}

#[test]
fn taylor_green_frames_encode_the_flow_both_ways() {
    let nu = 0.25;
    let tg = TaylorGreen2d::new(nu);
    let scale = (2.0 * nu).sqrt();
    let pts = check_points(100, 1.0);
    // forward: drift +u(t, x)
    let fwd = build_rotation_frame_2d(&tg, VelocityStream::forward(&tg), scale, false, &pts, 1e-8).unwrap();
    let plus = |t: f64, x: &Point<2>| tg.velocity(t, x);
    let a = verify_frame_conditions(&fwd, scale, &plus, &pts, DriftDerivative::Analytic);
    let f = verify_frame_conditions(&fwd, scale, &plus, &pts, DriftDerivative::FiniteDifference);
    assert!(a.passes(1e-6), "{a:?}");
    assert!(f.passes(1e-4), "{f:?}");
    assert_eq!(a.derivative, DriftDerivative::Analytic);
    // backward particles: drift -u(T - s, x)
    let bwd = build_rotation_frame_2d(&tg, VelocityStream::backward_from(&tg, 1.0), scale, true, &pts, 1e-8).unwrap();
    let minus = |s: f64, x: &Point<2>| -tg.velocity(1.0 - s, x);
    let a = verify_frame_conditions(&bwd, scale, &minus, &pts, DriftDerivative::Analytic);
    let f = verify_frame_conditions(&bwd, scale, &minus, &pts, DriftDerivative::FiniteDifference);
    assert!(a.passes(1e-6) && f.passes(1e-4), "{a:?} {f:?}");
    // the unreversed frame encodes the opposite drift
    let wrong = build_rotation_frame_2d(&tg, VelocityStream::backward_from(&tg, 1.0), scale, false, &pts, 1e-8).unwrap();
    assert!(!verify_frame_conditions(&wrong, scale, &minus, &pts, DriftDerivative::Analytic).passes(1e-4));
}

#[test]
fn a_scaled_angle_is_flagged_in_proportion() {
    let nu = 0.25;
    let tg = TaylorGreen2d::new(nu);
    let scale = (2.0 * nu).sqrt();
    let pts = check_points(100, 1.0);
    let frame = build_rotation_frame_2d(&tg, VelocityStream::forward(&tg), scale, false, &pts, 1e-8)
        .unwrap()
        .with_angle_scaled(1.1);
    let plus = |t: f64, x: &Point<2>| tg.velocity(t, x);
    let r = verify_frame_conditions(&frame, scale, &plus, &pts, DriftDerivative::FiniteDifference);
    assert!(!r.passes(1e-4));
    assert!(r.isotropy_residual < 1e-12, "a rotation stays isotropic");
    assert!((r.relative_drift_residual - 0.1).abs() < 0.01, "relative residual {}", r.relative_drift_residual);
}

/// `c I`, the frame for the zero drift.
struct Identity(f64);

impl FrameField<2, 2> for Identity {
    fn frame(&self, _t: f64, _x: &Point<2>) -> SMatrix<f64, 2, 2> {
        Matrix2::identity() * self.0
    }
}

fn zero_drift_run(sigma: f64, seed: u64) -> stochflow::PathEnsemble<2> {
    let zero = |_: f64, _: &Point<2>| Point::<2>::zeros();
    let spec = ItoSdeSpec { drift: &zero, sigma };
    let grid = TimeGrid::new(0.0, 0.5, 20).unwrap();
    simulate_ito(&spec, &Start::Single(Vector2::new(1.0, 1.0)), grid, RandomSource::new(seed), 50_000, endpoints()).unwrap()
}

#[test]
fn the_identity_frame_matches_brownian_motion() {
    let grid = TimeGrid::new(0.0, 0.5, 20).unwrap();
    let sigma = (2.0f64 * 0.5).sqrt();
    let frame = simulate_stratonovich(&Identity(sigma), &Start::Single(Vector2::new(1.0, 1.0)), grid, RandomSource::new(1), 50_000, endpoints())
        .unwrap();
    let law = compare_laws(&frame, &zero_drift_run(sigma, 2), 4).unwrap();
    assert!(law.passed, "max |z| = {}", law.max_abs_z);
    assert_eq!(law.moments.len(), 2 + 3 + 4 + 5);
}

#[test]
fn a_mismatched_viscosity_is_detected() {
    let grid = TimeGrid::new(0.0, 0.5, 20).unwrap();
    let frame = simulate_stratonovich(
        &Identity((2.0f64 * 0.25).sqrt()),
        &Start::Single(Vector2::new(1.0, 1.0)),
        grid,
        RandomSource::new(3),
        50_000,
        endpoints(),
    )
    .unwrap();
    let law = compare_laws(&frame, &zero_drift_run((2.0f64 * 0.5).sqrt(), 4), 4).unwrap();
    assert!(!law.passed);
    let second = law.moments.iter().find(|m| m.exponents == vec![2, 0]).unwrap();
    assert!(second.z.abs() > 4.0, "second-moment z = {}", second.z);
}

#[test]
fn compressible_or_streamless_drifts_are_refused() {
    let pts = check_points(10, 1.0);
    let strain = ConstantStrain::<2>::new(Matrix2::new(0.5, 0.0, 0.0, -0.5)).unwrap();
    // trace-free but without a stream function on the velocity object
    let err = build_rotation_frame_2d(&strain, VelocityStream::forward(&strain), 1.0, false, &pts, 1e-8);
    assert!(matches!(err, Err(Error::UnsupportedDrift(_))));
    struct Source;
    impl VelocityField<2> for Source {
        fn velocity(&self, _t: f64, x: &Point<2>) -> Point<2> {
            x * 0.3
        }
        fn stream(&self, _t: f64, _x: &Point<2>) -> Option<f64> {
            Some(0.0)
        }
    }
    let err = build_rotation_frame_2d(&Source, VelocityStream::forward(&Source), 1.0, false, &pts, 1e-8);
    assert!(matches!(err, Err(Error::UnsupportedDrift(_))));
    let tg = TaylorGreen2d::new(0.1);
    assert!(build_rotation_frame_2d(&tg, VelocityStream::forward(&tg), 0.0, false, &pts, 1e-8).is_err());
}

#[test]
fn torsion_is_antisymmetric_and_scaled_by_dimension() {
    let spec = TorsionSpec::new(3, 0.5).unwrap();
    let u = nalgebra::Vector3::new(1.0, -2.0, 0.5);
    let q = spec.drift_form(&u);
    assert!((q + u).amax() < 1e-15, "Q = -u / (2 nu) at nu = 1/2");
    let a = nalgebra::Vector3::new(0.3, 0.1, -0.7);
    let b = nalgebra::Vector3::new(-1.0, 0.4, 0.2);
    let tab = spec.torsion(&q, &a, &b);
    let tba = spec.torsion(&q, &b, &a);
    assert!((tab + tba).amax() < 1e-15);
    assert!(spec.torsion(&q, &a, &a).amax() == 0.0);
    // (a Q(b) - b Q(a)) with the 2/(n-1) = 1 prefactor in 3D
    let want = a * q.dot(&b) - b * q.dot(&a);
    assert!((tab - want).amax() < 1e-15);
    assert!(TorsionSpec::new(1, 0.5).is_err());
    assert!(TorsionSpec::new(2, 0.0).is_err());
}
