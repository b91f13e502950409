//! Scenario files: versioned JSON, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stochflow::fields::analytic::VortexBlob;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub mode: Mode,
    /// Needed by `recover`, `ns` and `dynamo`; implied by the other modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    pub domain: DomainSpec,
    pub physics: Physics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<Sampling>,
    pub mc: McSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery: Option<RecoverySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ns: Option<NsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamo: Option<DynamoSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driftless: Option<DriftlessSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Transport2d,
    Transport3d,
    Recover,
    Ns,
    Dynamo,
    DriftlessVerify,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainSpec {
    FreeSpace,
    Torus { period: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viscosity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnetic_diffusivity: Option<f64>,
}

/// Named analytic fields, or a grid file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    /// `amplitude exp(-|x - center|^2 / (2 sigma^2))`, times `direction` for
    /// vector fields.
    Gaussian {
        center: Vec<f64>,
        sigma: f64,
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Vec<f64>>,
    },
    LambOseen {
        circulation: f64,
        /// Vortex age at time 0.
        age: f64,
    },
    /// Decaying Taylor–Green cell at the run viscosity.
    TaylorGreen,
    Abc { a: f64, b: f64, c: f64 },
    ConstantStrain { matrix: Vec<Vec<f64>> },
    Uniform { value: Vec<f64> },
    Blobs { blobs: Vec<VortexBlob> },
    FourierMode {
        amplitude: Vec<f64>,
        wavevector: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
    GridFile { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(default)]
    pub t0: f64,
    pub horizon: f64,
    /// Euler–Maruyama steps over the horizon (transport, dynamo, driftless).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    /// Coupling step of the Navier–Stokes scheme.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtau: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sampling {
    Points {
        points: Vec<Vec<f64>>,
    },
    /// `n` nodes per axis: the torus cell, or `[lo, hi]` per axis in free
    /// space.
    Grid {
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lo: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hi: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoveryMethodSpec {
    BismutElworthy,
    GradientForm,
    Direct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySpec {
    pub method: RecoveryMethodSpec,
    /// Vorticity length scale used for the default s-range.
    #[serde(default = "one")]
    pub length_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsSpec {
    pub substeps: usize,
    #[serde(default = "one_usize")]
    pub picard_max_iterations: usize,
    #[serde(default = "default_picard_tolerance")]
    pub picard_tolerance: f64,
    /// Write the vorticity grid every this many steps (0: final only).
    #[serde(default)]
    pub dump_every: usize,
}

fn one_usize() -> usize {
    1
}

fn default_picard_tolerance() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamoSpec {
    /// Growth-rate window `[t1, t2]`; omitted means no rate fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(default = "default_n_times")]
    pub n_times: usize,
}

fn default_n_times() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftlessSpec {
    pub start: [f64; 2],
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    #[serde(default = "default_check_points")]
    pub check_points: usize,
}

fn default_max_order() -> usize {
    4
}

fn default_check_points() -> usize {
    100
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Png,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("output")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv]
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Schema {
        field: field.into(),
        message: message.into(),
    }
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(schema(field, format!("must be positive and finite, got {v}")))
    }
}

fn require<'a, T>(v: &'a Option<T>, field: &str, mode: Mode) -> Result<&'a T, CliError> {
    v.as_ref()
        .ok_or_else(|| schema(field, format!("required for mode {}", mode.name())))
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Transport2d => "transport2d",
            Mode::Transport3d => "transport3d",
            Mode::Recover => "recover",
            Mode::Ns => "ns",
            Mode::Dynamo => "dynamo",
            Mode::DriftlessVerify => "driftless-verify",
        }
    }
}

impl ScenarioConfig {
    /// Parse a config file, reporting serde errors as schema violations.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| schema("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    /// Grid-file paths are taken relative to `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| schema(json_path(&e), e.to_string()))?;
        if let Some(base) = base {
            for spec in [&mut cfg.velocity, &mut cfg.initial].into_iter().flatten() {
                if let FieldSpec::GridFile { path } = spec {
                    if path.is_relative() {
                        *path = base.join(&*path);
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        match self.mode {
            Mode::Transport2d | Mode::DriftlessVerify => 2,
            Mode::Transport3d => 3,
            _ => self.dimension.unwrap_or(if self.mode == Mode::Dynamo { 3 } else { 2 }),
        }
    }

    pub fn viscosity(&self) -> Result<f64, CliError> {
        let v = self
            .physics
            .viscosity
            .ok_or_else(|| schema("physics.viscosity", format!("required for mode {}", self.mode.name())))?;
        positive("physics.viscosity", v)?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(schema(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        let mode = self.mode;
        let dim = self.dim();
        if !(dim == 2 || dim == 3) {
            return Err(schema("dimension", "must be 2 or 3"));
        }
        if let Some(d) = self.dimension {
            if matches!(mode, Mode::Transport2d | Mode::Transport3d | Mode::DriftlessVerify) && d != dim {
                return Err(schema("dimension", format!("mode {} is {dim}D", mode.name())));
            }
        }
        if let DomainSpec::Torus { period } = self.domain {
            positive("domain.period", period)?;
        }
        if let Some(v) = self.physics.viscosity {
            positive("physics.viscosity", v)?;
        }
        if let Some(v) = self.physics.magnetic_diffusivity {
            positive("physics.magnetic_diffusivity", v)?;
        }
        if self.mc.n_paths == 0 {
            return Err(schema("mc.n_paths", "must be at least 1"));
        }
        if self.mc.antithetic && self.mc.n_paths % 2 == 1 {
            return Err(schema("mc.n_paths", "antithetic sampling needs an even path count"));
        }
        match mode {
            Mode::Transport2d | Mode::Transport3d => {
                self.viscosity()?;
                require(&self.velocity, "velocity", mode)?;
                require(&self.initial, "initial", mode)?;
                self.check_time(true, false)?;
                require(&self.sampling, "sampling", mode)?;
            }
            Mode::Recover => {
                require(&self.initial, "initial", mode)?;
                require(&self.sampling, "sampling", mode)?;
                let r = require(&self.recovery, "recovery", mode)?;
                positive("recovery.length_scale", r.length_scale)?;
            }
            Mode::Ns => {
                self.viscosity()?;
                require(&self.initial, "initial", mode)?;
                self.check_time(false, true)?;
                match require(&self.sampling, "sampling", mode)? {
                    Sampling::Grid { .. } => {}
                    Sampling::Points { .. } => return Err(schema("sampling.kind", "ns runs need a grid")),
                }
                let ns = require(&self.ns, "ns", mode)?;
                if ns.substeps == 0 {
                    return Err(schema("ns.substeps", "must be at least 1"));
                }
                if ns.picard_max_iterations == 0 || ns.picard_max_iterations > 5 {
                    return Err(schema("ns.picard_max_iterations", "must be between 1 and 5"));
                }
                positive("ns.picard_tolerance", ns.picard_tolerance)?;
                if matches!(self.domain, DomainSpec::FreeSpace) {
                    require(&self.recovery, "recovery", mode)?;
                }
            }
            Mode::Dynamo => {
                let v = self.physics.magnetic_diffusivity.ok_or_else(|| {
                    schema("physics.magnetic_diffusivity", "required for mode dynamo")
                })?;
                positive("physics.magnetic_diffusivity", v)?;
                require(&self.velocity, "velocity", mode)?;
                require(&self.initial, "initial", mode)?;
                self.check_time(true, false)?;
                require(&self.sampling, "sampling", mode)?;
                if let Some(DynamoSpec { window: Some([t1, t2]), n_times }) = &self.dynamo {
                    if !(*t1 > 0.0 && t2 > t1) {
                        return Err(schema("dynamo.window", "need 0 < t1 < t2"));
                    }
                    if *n_times < 2 {
                        return Err(schema("dynamo.n_times", "need at least 2"));
                    }
                }
            }
            Mode::DriftlessVerify => {
                self.viscosity()?;
                require(&self.velocity, "velocity", mode)?;
                self.check_time(true, false)?;
                let d = require(&self.driftless, "driftless", mode)?;
                if d.max_order == 0 {
                    return Err(schema("driftless.max_order", "must be at least 1"));
                }
            }
        }
        if let Some(s) = &self.sampling {
            self.check_sampling(s, dim)?;
        }
        for (name, spec) in [("velocity", &self.velocity), ("initial", &self.initial)] {
            if let Some(spec) = spec {
                check_field(name, spec, dim)?;
            }
        }
        Ok(())
    }

    fn check_time(&self, steps: bool, dtau: bool) -> Result<(), CliError> {
        let t = require(&self.time, "time", self.mode)?;
        if !t.t0.is_finite() {
            return Err(schema("time.t0", "must be finite"));
        }
        if self.mode == Mode::Ns {
            if !(t.horizon >= 0.0 && t.horizon.is_finite()) {
                return Err(schema("time.horizon", "must be >= 0"));
            }
        } else {
            positive("time.horizon", t.horizon)?;
        }
        if steps {
            match t.n_steps {
                Some(n) if n > 0 => {}
                _ => return Err(schema("time.n_steps", "must be at least 1")),
            }
        }
        if dtau {
            positive("time.dtau", t.dtau.unwrap_or(f64::NAN))?;
        }
        Ok(())
    }

    fn check_sampling(&self, s: &Sampling, dim: usize) -> Result<(), CliError> {
        match s {
            Sampling::Points { points } => {
                if points.is_empty() {
                    return Err(schema("sampling.points", "need at least one point"));
                }
                for (i, p) in points.iter().enumerate() {
                    if p.len() != dim || p.iter().any(|v| !v.is_finite()) {
                        return Err(schema(format!("sampling.points[{i}]"), format!("need {dim} finite coordinates")));
                    }
                }
            }
            Sampling::Grid { n, lo, hi } => {
                if *n < 4 {
                    return Err(schema("sampling.n", "need at least 4 nodes per axis"));
                }
                match (&self.domain, lo, hi) {
                    (DomainSpec::Torus { .. }, None, None) => {}
                    (DomainSpec::Torus { .. }, _, _) => {
                        return Err(schema("sampling.lo", "torus grids cover the period cell; omit lo/hi"))
                    }
                    (DomainSpec::FreeSpace, Some(lo), Some(hi)) if hi > lo => {}
                    (DomainSpec::FreeSpace, _, _) => {
                        return Err(schema("sampling.lo", "free-space grids need lo < hi"))
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_field(name: &str, spec: &FieldSpec, dim: usize) -> Result<(), CliError> {
    let len = |field: &str, v: &[f64], n: usize| {
        if v.len() != n {
            Err(schema(format!("{name}.{field}"), format!("need {n} entries, got {}", v.len())))
        } else {
            Ok(())
        }
    };
    match spec {
        FieldSpec::Gaussian { center, sigma, direction, .. } => {
            len("center", center, dim)?;
            positive(&format!("{name}.sigma"), *sigma)?;
            if let Some(d) = direction {
                len("direction", d, dim)?;
            }
        }
        FieldSpec::LambOseen { age, .. } => positive(&format!("{name}.age"), *age)?,
        FieldSpec::ConstantStrain { matrix } => {
            if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                return Err(schema(format!("{name}.matrix"), format!("need a {dim} x {dim} matrix")));
            }
        }
        FieldSpec::Uniform { value } => len("value", value, dim)?,
        FieldSpec::FourierMode { amplitude, wavevector, .. } => {
            len("amplitude", amplitude, dim)?;
            len("wavevector", wavevector, dim)?;
        }
        FieldSpec::Blobs { blobs } => {
            if dim != 2 {
                return Err(schema(format!("{name}.type"), "blobs are 2D"));
            }
            if blobs.is_empty() {
                return Err(schema(format!("{name}.blobs"), "need at least one blob"));
            }
            for (i, b) in blobs.iter().enumerate() {
                positive(&format!("{name}.blobs[{i}].radius"), b.radius)?;
            }
        }
        FieldSpec::GridFile { path } => {
            if !path.exists() {
                return Err(schema(format!("{name}.path"), format!("file {} does not exist", path.display())));
            }
        }
        FieldSpec::Zero | FieldSpec::TaylorGreen | FieldSpec::Abc { .. } => {}
    }
    Ok(())
}

/// Best-effort field path for a serde error: the unknown or missing key
/// named in the message, else the whole config.
fn json_path(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    for marker in ["unknown field `", "missing field `", "unknown variant `"] {
        if let Some(start) = msg.find(marker) {
            let rest = &msg[start + marker.len()..];
            if let Some(end) = rest.find('`') {
                return rest[..end].to_string();
            }
        }
    }
    "config".to_string()
}
