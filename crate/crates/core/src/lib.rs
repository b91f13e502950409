//! Monte Carlo solvers for incompressible Navier–Stokes and the kinematic
//! dynamo built on stochastic Lagrangian representations.
//!
//! The building blocks are:
//!
//! * [`sde`]: Euler–Maruyama and Heun integrators for the particle SDEs, plus
//!   the Jacobian (derived) process carried along each path.
//! * [`fields`]: analytic and gridded velocity/vorticity fields, vector
//!   calculus helpers and periodic spectral operators.
//! * [`transport`]: Feynman–Kac evaluation of the vorticity Cauchy problem
//!   (scalar in 2D, Jacobian-weighted in 3D).
//! * [`recovery`]: velocity from vorticity through Brownian expectations and
//!   through deterministic Biot–Savart quadrature.
//! * [`ns`]: the coupled vorticity/velocity stepping scheme.
//! * [`dynamo`]: passive magnetic transport and growth-rate estimation.
//! * [`driftless`]: rotation frames that absorb the drift into a
//!   Stratonovich diffusion, and the checks that go with them.
//!
//! All randomness flows from [`rng::RandomSource`], a counter-based
//! generator split into one stream per path, so results do not depend on the
//! number of worker threads.

pub mod driftless;
pub mod dynamo;
pub mod error;
pub mod fields;
pub mod ns;
pub mod output;
pub mod recovery;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
pub use fields::{Domain, GridField, ScalarField, VectorField, VelocityField};
pub use rng::RandomSource;
pub use sde::{Mat, PathEnsemble, Point, TimeGrid};
pub use stats::Estimate;
