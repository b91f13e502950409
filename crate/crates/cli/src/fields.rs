//! Turn field specs into solver field objects.

use stochflow::fields::analytic::{
    Abc, ConstantScalar, ConstantStrain, FourierMode, GaussianBlob, LambOseen, PointVortexSum, TaylorGreen2d,
    UniformFlow,
};
use stochflow::fields::Support;
use stochflow::ns::VortexBlobInit;
use stochflow::{Domain, GridField, Point, ScalarField, VectorField, VelocityField};

use crate::config::FieldSpec;
use crate::error::CliError;

/// What a spec needs besides its own parameters.
#[derive(Clone, Copy, Debug)]
pub struct FieldContext<'a, const D: usize> {
    /// Config key of the spec, for error messages (`velocity`, `initial`).
    pub key: &'a str,
    pub domain: Domain<D>,
    pub viscosity: Option<f64>,
}

impl<const D: usize> FieldContext<'_, D> {
    fn schema(&self, field: &str, message: impl Into<String>) -> CliError {
        CliError::Schema {
            field: format!("{}.{field}", self.key),
            message: message.into(),
        }
    }

    fn unsupported(&self, spec: &FieldSpec, role: &str) -> CliError {
        self.schema("type", format!("{} cannot be used as a {D}D {role}", type_name(spec)))
    }

    fn point(&self, field: &str, v: &[f64]) -> Result<Point<D>, CliError> {
        if v.len() != D {
            return Err(self.schema(field, format!("need {D} entries, got {}", v.len())));
        }
        Ok(Point::<D>::from_column_slice(v))
    }

    fn viscosity(&self, spec: &FieldSpec) -> Result<f64, CliError> {
        self.viscosity
            .ok_or_else(|| self.schema("type", format!("{} needs physics.viscosity", type_name(spec))))
    }

    fn core(&self, e: stochflow::Error) -> CliError {
        CliError::from_core(self.key, e)
    }

    fn grid(&self, path: &std::path::Path, components: usize) -> Result<GridField<D>, CliError> {
        let g = GridField::<D>::load(path).map_err(|e| self.schema("path", format!("{}: {e}", path.display())))?;
        if g.components() != components {
            return Err(self.schema(
                "path",
                format!("grid has {} component(s), expected {components}", g.components()),
            ));
        }
        Ok(g)
    }

    fn gaussian(&self, center: &[f64], sigma: f64, amplitude: f64) -> Result<GaussianBlob<D>, CliError> {
        let mut g = GaussianBlob::new(self.point("center", center)?, sigma, amplitude);
        g.domain = self.domain;
        Ok(g)
    }
}

pub fn type_name(spec: &FieldSpec) -> &'static str {
    match spec {
        FieldSpec::Zero => "zero",
        FieldSpec::Gaussian { .. } => "gaussian",
        FieldSpec::LambOseen { .. } => "lamb-oseen",
        FieldSpec::TaylorGreen => "taylor-green",
        FieldSpec::Abc { .. } => "abc",
        FieldSpec::ConstantStrain { .. } => "constant-strain",
        FieldSpec::Uniform { .. } => "uniform",
        FieldSpec::Blobs { .. } => "blobs",
        FieldSpec::FourierMode { .. } => "fourier-mode",
        FieldSpec::GridFile { .. } => "grid-file",
    }
}

/// Velocities available in any dimension; `None` for dimension-specific ones.
fn velocity_any<const D: usize>(
    spec: &FieldSpec,
    ctx: &FieldContext<D>,
) -> Result<Option<Box<dyn VelocityField<D>>>, CliError> {
    Ok(Some(match spec {
        FieldSpec::Zero => Box::new(UniformFlow::<D>::zero()),
        FieldSpec::Uniform { value } => Box::new(UniformFlow::new(ctx.point("value", value)?)),
        FieldSpec::ConstantStrain { matrix } => {
            if matrix.len() != D || matrix.iter().any(|r| r.len() != D) {
                return Err(ctx.schema("matrix", format!("need a {D} x {D} matrix")));
            }
            let m = stochflow::Mat::<D>::from_fn(|i, j| matrix[i][j]);
            Box::new(ConstantStrain::new(m).map_err(|e| ctx.core(e))?)
        }
        FieldSpec::GridFile { path } => Box::new(ctx.grid(path, D)?),
        _ => return Ok(None),
    }))
}

pub fn velocity_2d(spec: &FieldSpec, ctx: &FieldContext<2>) -> Result<Box<dyn VelocityField<2>>, CliError> {
    if let Some(v) = velocity_any(spec, ctx)? {
        return Ok(v);
    }
    Ok(match spec {
        FieldSpec::LambOseen { circulation, age } => Box::new(LambOseen::new(*circulation, ctx.viscosity(spec)?, *age)),
        FieldSpec::TaylorGreen => Box::new(TaylorGreen2d::new(ctx.viscosity(spec)?)),
        FieldSpec::Blobs { blobs } => {
            if ctx.domain.is_periodic() {
                return Err(ctx.schema("type", "blob velocities are free-space only"));
            }
            Box::new(PointVortexSum::new(blobs.clone()).map_err(|e| ctx.core(e))?)
        }
        _ => return Err(ctx.unsupported(spec, "velocity")),
    })
}

pub fn velocity_3d(spec: &FieldSpec, ctx: &FieldContext<3>) -> Result<Box<dyn VelocityField<3>>, CliError> {
    if let Some(v) = velocity_any(spec, ctx)? {
        return Ok(v);
    }
    Ok(match spec {
        FieldSpec::Abc { a, b, c } => Box::new(Abc::new(*a, *b, *c)),
        _ => return Err(ctx.unsupported(spec, "velocity")),
    })
}

/// 2D scalar data: vorticity, flux function or passive scalar.
pub fn scalar_2d(spec: &FieldSpec, ctx: &FieldContext<2>) -> Result<Box<dyn ScalarField<2>>, CliError> {
    Ok(match spec {
        FieldSpec::Zero => Box::new(ConstantScalar(0.0)),
        FieldSpec::Gaussian {
            center,
            sigma,
            amplitude,
            direction: None,
        } => Box::new(ctx.gaussian(center, *sigma, *amplitude)?),
        FieldSpec::LambOseen { circulation, age } => {
            Box::new(LambOseen::new(*circulation, ctx.viscosity(spec)?, *age).vorticity_at(0.0))
        }
        FieldSpec::TaylorGreen => Box::new(TaylorGreen2d::new(ctx.viscosity(spec)?).vorticity_at(0.0)),
        FieldSpec::Blobs { blobs } => {
            if ctx.domain.is_periodic() {
                let init = VortexBlobInit { blobs: blobs.clone() };
                init.validate(&ctx.domain).map_err(|e| ctx.core(e))?;
                let domain = ctx.domain;
                Box::new(move |x: &Point<2>| init.vorticity(&domain, x))
            } else {
                Box::new(PointVortexSum::new(blobs.clone()).map_err(|e| ctx.core(e))?)
            }
        }
        FieldSpec::GridFile { path } => Box::new(ctx.grid(path, 1)?),
        _ => return Err(ctx.unsupported(spec, "scalar")),
    })
}

/// 3D vector data: vorticity or magnetic field.
pub fn vector_3d(spec: &FieldSpec, ctx: &FieldContext<3>) -> Result<Box<dyn VectorField<3>>, CliError> {
    Ok(match spec {
        FieldSpec::Zero => Box::new(UniformFlow::<3>::zero()),
        FieldSpec::Uniform { value } => Box::new(UniformFlow::new(ctx.point("value", value)?)),
        FieldSpec::Gaussian {
            center,
            sigma,
            amplitude,
            direction,
        } => {
            let d = direction
                .as_deref()
                .ok_or_else(|| ctx.schema("direction", "required for a 3D vector Gaussian"))?;
            Box::new(DirectedGaussian {
                blob: ctx.gaussian(center, *sigma, *amplitude)?,
                direction: ctx.point("direction", d)?,
            })
        }
        FieldSpec::Abc { a, b, c } => Box::new(Abc::new(*a, *b, *c)),
        FieldSpec::FourierMode {
            amplitude,
            wavevector,
            phase,
        } => Box::new(
            FourierMode::new(ctx.point("amplitude", amplitude)?, ctx.point("wavevector", wavevector)?, *phase)
                .map_err(|e| ctx.core(e))?,
        ),
        FieldSpec::GridFile { path } => Box::new(ctx.grid(path, 3)?),
        _ => return Err(ctx.unsupported(spec, "vector field")),
    })
}

/// Fixed vector times a Gaussian profile; keeps the profile's support so the
/// direct quadrature can find it.
struct DirectedGaussian {
    blob: GaussianBlob<3>,
    direction: Point<3>,
}

impl VectorField<3> for DirectedGaussian {
    fn value(&self, x: &Point<3>) -> Point<3> {
        self.direction * self.blob.value(x)
    }
    fn jacobian(&self, x: &Point<3>) -> stochflow::Mat<3> {
        self.direction * ScalarField::gradient(&self.blob, x).transpose()
    }
    fn support(&self) -> Option<Support<3>> {
        ScalarField::support(&self.blob)
    }
}
