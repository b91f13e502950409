//! Dispatch a validated scenario to the solvers and write its artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;
use stochflow::driftless::{
    build_rotation_frame_2d, compare_laws, verify_frame_conditions, DriftDerivative, FrameReport, LawReport,
    VelocityStream,
};
use stochflow::dynamo::{growth_rate_2d, growth_rate_3d, transport_magnetic_2d, transport_magnetic_3d, DynamoParams};
use stochflow::fields::grid::GridLayout;
use stochflow::ns::{McParams, NsSolver, NsState};
use stochflow::output;
use stochflow::recovery::{
    biot_savart_direct_2d, biot_savart_direct_3d, recover_velocity_2d, recover_velocity_3d,
    recover_velocity_gradform_2d, recover_velocity_gradform_3d, DirectQuadrature, Recovery, RecoveryParams,
    SQuadrature,
};
use stochflow::sde::{simulate_ito, simulate_stratonovich, ItoSdeSpec, Record, SimOptions, Start};
use stochflow::transport::{solve_vorticity_2d, solve_vorticity_3d, PointEstimate, TransportParams};
use stochflow::{Domain, GridField, Point, RandomSource, TimeGrid};

use crate::config::{DomainSpec, Format, Mode, RecoveryMethodSpec, Sampling, ScenarioConfig};
use crate::error::CliError;
use crate::fields::{scalar_2d, vector_3d, velocity_2d, velocity_3d, FieldContext};
use crate::plot::write_heatmap;

pub const METADATA_VERSION: u32 = 1;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub strict: bool,
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
    /// Overrides `output.directory`.
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    /// Artifact file names, in the order written.
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    metadata_version: u32,
    code_version: &'static str,
    rng_algorithm: &'static str,
    config: &'a ScenarioConfig,
    artifacts: &'a [String],
    warnings: &'a [String],
}

/// Collects artifacts and warnings while a mode runs.
struct Sink {
    dir: PathBuf,
    cfg: ScenarioConfig,
    files: Vec<String>,
    warnings: Vec<String>,
}

impl Sink {
    fn wants(&self, f: Format) -> bool {
        self.cfg.output.formats.contains(&f)
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut BufWriter<File>) -> stochflow::Result<()>) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// A 2D or 3D grid in every requested format (plots only for 2D).
    fn grid<const D: usize>(&mut self, stem: &str, grid: &GridField<D>) -> Result<(), CliError> {
        if self.wants(Format::Csv) {
            self.csv(&format!("{stem}.grid.csv"), |w| grid.write_csv(w))?;
        }
        if self.wants(Format::Json) {
            let mut w = self.create(&format!("{stem}.grid.json"))?;
            w.write_all(grid.to_json_string()?.as_bytes())?;
            w.flush()?;
        }
        let plane = (grid as &dyn std::any::Any).downcast_ref::<GridField<2>>();
        if let (Some(g2), true) = (plane, self.wants(Format::Png)) {
            for c in 0..g2.components() {
                let name = if g2.components() == 1 {
                    format!("{stem}.png")
                } else {
                    format!("{stem}_{c}.png")
                };
                write_heatmap(&self.dir.join(&name), &g2, c)?;
                self.files.push(name);
            }
        }
        Ok(())
    }

    fn excluded<const D: usize>(&mut self, what: &str, est: &[PointEstimate<D>]) {
        let excluded: usize = est.iter().map(|e| e.n_excluded).sum();
        if excluded > 0 {
            self.warnings
                .push(format!("{what}: {excluded} path evaluations excluded as non-finite"));
        }
    }
}

/// Validate, run and write artifacts. With `strict`, warnings turn into an
/// error after the artifacts are written.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    if let Some(dir) = &opts.output_dir {
        cfg.output.directory = dir.clone();
    }
    let dir = cfg.output.directory.clone();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut sink = Sink {
        dir: dir.clone(),
        cfg: cfg.clone(),
        files: Vec::new(),
        warnings: Vec::new(),
    };
    let body = |sink: &mut Sink| dispatch(&cfg, sink);
    match opts.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Io(e.to_string()))?;
            pool.install(|| body(&mut sink))?
        }
        None => body(&mut sink)?,
    }
    let mut artifacts = sink.files.clone();
    artifacts.push("metadata.json".into());
    let meta = Metadata {
        metadata_version: METADATA_VERSION,
        code_version: env!("CARGO_PKG_VERSION"),
        rng_algorithm: RandomSource::new(cfg.mc.seed).algorithm(),
        config: &cfg,
        artifacts: &artifacts,
        warnings: &sink.warnings,
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(dir.join("metadata.json"), text + "\n")?;
    if opts.strict && !sink.warnings.is_empty() {
        return Err(CliError::Strict(sink.warnings));
    }
    Ok(RunSummary {
        output_dir: dir,
        files: artifacts,
        warnings: sink.warnings,
    })
}

fn dispatch(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<(), CliError> {
    match (cfg.mode, cfg.dim()) {
        (Mode::Transport2d, _) => transport_2d(cfg, sink),
        (Mode::Transport3d, _) => transport_3d(cfg, sink),
        (Mode::Recover, 2) => recover_2d(cfg, sink),
        (Mode::Recover, _) => recover_3d(cfg, sink),
        (Mode::Ns, 2) => ns::<2>(cfg, sink),
        (Mode::Ns, _) => ns::<3>(cfg, sink),
        (Mode::Dynamo, 2) => dynamo_2d(cfg, sink),
        (Mode::Dynamo, _) => dynamo_3d(cfg, sink),
        (Mode::DriftlessVerify, _) => driftless(cfg, sink),
    }
}

fn domain<const D: usize>(cfg: &ScenarioConfig) -> Domain<D> {
    match cfg.domain {
        DomainSpec::FreeSpace => Domain::FreeSpace,
        DomainSpec::Torus { period } => Domain::torus(period),
    }
}

fn ctx<'a, const D: usize>(cfg: &ScenarioConfig, key: &'a str) -> FieldContext<'a, D> {
    FieldContext {
        key,
        domain: domain(cfg),
        viscosity: cfg.physics.viscosity,
    }
}

fn layout<const D: usize>(cfg: &ScenarioConfig) -> Option<GridLayout<D>> {
    match (&cfg.sampling, &cfg.domain) {
        (Some(Sampling::Grid { n, .. }), DomainSpec::Torus { period }) => Some(GridLayout::torus(*period, *n)),
        (Some(Sampling::Grid { n, lo, hi }), DomainSpec::FreeSpace) => {
            Some(GridLayout::free_box(lo.unwrap_or(-1.0), hi.unwrap_or(1.0), *n))
        }
        _ => None,
    }
}

fn points<const D: usize>(cfg: &ScenarioConfig) -> Vec<Point<D>> {
    match &cfg.sampling {
        Some(Sampling::Points { points }) => points.iter().map(|p| Point::<D>::from_column_slice(p)).collect(),
        _ => layout::<D>(cfg).map(|l| l.nodes()).unwrap_or_default(),
    }
}

fn transport_params(cfg: &ScenarioConfig, viscosity: f64) -> TransportParams {
    let t = cfg.time.as_ref().expect("validated");
    TransportParams {
        viscosity,
        t0: t.t0,
        horizon: t.horizon,
        n_steps: t.n_steps.expect("validated"),
        n_paths: cfg.mc.n_paths,
        source: RandomSource::new(cfg.mc.seed),
        antithetic: cfg.mc.antithetic,
    }
}

fn core(prefix: &str) -> impl Fn(stochflow::Error) -> CliError + '_ {
    move |e| CliError::from_core(prefix, e)
}

/// Grid of the estimate means, when sampling is a grid.
fn estimate_grid<const D: usize>(cfg: &ScenarioConfig, est: &[PointEstimate<D>]) -> Result<Option<GridField<D>>, CliError> {
    let Some(l) = layout::<D>(cfg) else { return Ok(None) };
    let values: Vec<f64> = est.iter().flat_map(|e| e.mean()).collect();
    let comps = est.first().map_or(1, |e| e.components.len());
    Ok(Some(GridField::from_values(l, comps, values)?))
}

fn transport_2d(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<(), CliError> {
    let params = transport_params(cfg, cfg.viscosity()?);
    let u = velocity_2d(cfg.velocity.as_ref().expect("validated"), &ctx(cfg, "velocity"))?;
    let w0 = scalar_2d(cfg.initial.as_ref().expect("validated"), &ctx(cfg, "initial"))?;
    let pts = points::<2>(cfg);
    let est = solve_vorticity_2d(&params, u.as_ref(), w0.as_ref(), &pts).map_err(core("physics"))?;
    sink.excluded("transport", &est);
    sink.csv("vorticity.csv", |w| output::write_estimates(w, &est, &["omega"]))?;
    if let Some(g) = estimate_grid(cfg, &est)? {
        sink.grid("vorticity", &g)?;
    }
    Ok(())
}

fn transport_3d(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<(), CliError> {
    let params = transport_params(cfg, cfg.viscosity()?);
    let u = velocity_3d(cfg.velocity.as_ref().expect("validated"), &ctx(cfg, "velocity"))?;
    let w0 = vector_3d(cfg.initial.as_ref().expect("validated"), &ctx(cfg, "initial"))?;
    let pts = points::<3>(cfg);
    let est = solve_vorticity_3d(&params, u.as_ref(), w0.as_ref(), &pts).map_err(core("physics"))?;
    sink.excluded("transport", &est);
    sink.csv("vorticity.csv", |w| {
        output::write_estimates(w, &est, &["omega_x", "omega_y", "omega_z"])
    })?;
    if let Some(g) = estimate_grid(cfg, &est)? {
        sink.grid("vorticity", &g)?;
    }
    Ok(())
}

fn recovery_params<const D: usize>(cfg: &ScenarioConfig) -> Result<RecoveryParams<D>, CliError> {
    let r = cfg.recovery.as_ref().expect("validated");
    let dom = domain::<D>(cfg);
    let mut q = SQuadrature::default_for(&dom, r.length_scale);
    if let Some(v) = r.s_min {
        q.s_min = v;
    }
    if let Some(v) = r.s_max {
        q.s_max = v;
    }
    if let Some(v) = r.n_nodes {
        q.n_nodes = v;
    }
    q.validate().map_err(core("recovery"))?;
    let mut p = RecoveryParams::new(dom, q, cfg.mc.n_paths, RandomSource::new(cfg.mc.seed));
    p.antithetic = cfg.mc.antithetic;
    if let Some(t) = r.tail_tolerance {
        p.tail_tolerance = t;
    }
    p.validate().map_err(core("recovery"))?;
    Ok(p)
}

fn write_direct<const D: usize>(sink: &mut Sink, pts: &[Point<D>], u: &[Point<D>]) -> Result<(), CliError> {
    const AXES: [&str; 3] = ["x", "y", "z"];
    let mut w = sink.create("velocity.csv")?;
    writeln!(w, "{},component,estimate,stderr,tail,n_paths,n_excluded,method", AXES[..D].join(","))?;
    for (x, v) in pts.iter().zip(u) {
        let coords: Vec<String> = x.iter().map(|c| c.to_string()).collect();
        for c in 0..D {
            writeln!(w, "{},u{},{},0,0,0,0,direct", coords.join(","), AXES[c], v[c])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn finish_recovery<const D: usize>(cfg: &ScenarioConfig, sink: &mut Sink, rec: &Recovery<D>) -> Result<(), CliError> {
    sink.warnings.extend(rec.warnings.iter().cloned());
    sink.csv("velocity.csv", |w| output::write_recovery(w, rec))?;
    if let Some(l) = layout::<D>(cfg) {
        let values: Vec<f64> = rec.values.iter().flat_map(|v| v.velocity.iter().copied().collect::<Vec<_>>()).collect();
        sink.grid("velocity", &GridField::from_values(l, D, values)?)?;
    }
    Ok(())
}

fn recover_2d(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<(), CliError> {
    let w = scalar_2d(cfg.initial.as_ref().expect("validated"), &ctx(cfg, "initial"))?;
    let pts = points::<2>(cfg);
    let rec = match cfg.recovery.as_ref().expect("validated").method {
        RecoveryMethodSpec::BismutElworthy => recover_velocity_2d(&recovery_params(cfg)?, w.as_ref(), &pts),
        RecoveryMethodSpec::GradientForm => recover_velocity_gradform_2d(&recovery_params(cfg)?, w.as_ref(), &pts),
        RecoveryMethodSpec::Direct => {
            let u = biot_savart_direct_2d(w.as_ref(), &domain(cfg), &pts, &DirectQuadrature::default())?;
            return write_direct(sink, &pts, &u);
        }
    }
    .map_err(core("recovery"))?;
    finish_recovery(cfg, sink, &rec)
}

fn recover_3d(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<(), CliError> {
    let w = vector_3d(cfg.initial.as_ref().expect("validated"), &ctx(cfg, "initial"))?;
    let pts = points::<3>(cfg);
    let rec = match cfg.recovery.as_ref().expect("validated").method {
        RecoveryMethodSpec::BismutElworthy => recover_velocity_3d(&recovery_params(cfg)?, w.as_ref(), &pts),
        RecoveryMethodSpec::GradientForm => recover_velocity_gradform_3d(&recovery_params(cfg)?, w.as_ref(), &pts),
        RecoveryMethodSpec::Direct => {
            let u = biot_savart_direct_3d(w.as_ref(), &domain(cfg), &pts, &DirectQuadrature::default())?;
            return write_direct(sink, &pts, &u);
        }
    }
    .map_err(core("recovery"))?;
    finish_recovery(cfg, sink, &rec)
}

fn ns_initial_2d(cfg: &ScenarioConfig, l: GridLayout<2>) -> Result<GridField<2>, CliError> {
    let w = scalar_2d(cfg.initial.as_ref().expect("validated"), &ctx(cfg, "initial"))?;
    Ok(GridField::sample_scalar(l, |x| w.value(x))?)
}

fn ns_initial_3d(cfg: &ScenarioConfig, l: GridLayout<3>) -> Result<GridField<3>, CliError> {
    let w = vector_3d(cfg.initial.as_ref().expect("validated"), &ctx(cfg, "initial"))?;
    Ok(GridField::sample_vector(l, |x| w.value(x))?)
}

trait NsDim<const D: usize> {
    fn initial(cfg: &ScenarioConfig, l: GridLayout<D>) -> Result<GridField<D>, CliError>;
}

struct Dim;

impl NsDim<2> for Dim {
    fn initial(cfg: &ScenarioConfig, l: GridLayout<2>) -> Result<GridField<2>, CliError> {
        ns_initial_2d(cfg, l)
    }
}

impl NsDim<3> for Dim {
    fn initial(cfg: &ScenarioConfig, l: GridLayout<3>) -> Result<GridField<3>, CliError> {
        ns_initial_3d(cfg, l)
    }
}

fn ns<const D: usize>(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<(), CliError>
where
    Dim: NsDim<D>,
    NsSolver<D>: stochflow::ns::Stepper<D>,
{
    let spec = cfg.ns.as_ref().expect("validated");
    let time = cfg.time.as_ref().expect("validated");
    let l = layout::<D>(cfg).expect("validated");
    let omega = <Dim as NsDim<D>>::initial(cfg, l)?;
    let mut mc = McParams::new(cfg.mc.n_paths, spec.substeps);
    mc.antithetic = cfg.mc.antithetic;
    mc.picard_max_iterations = spec.picard_max_iterations;
    mc.picard_tolerance = spec.picard_tolerance;
    let mut solver = NsSolver::<D>::new(cfg.viscosity()?, mc, RandomSource::new(cfg.mc.seed));
    if matches!(cfg.domain, DomainSpec::FreeSpace) {
        solver = solver.with_recovery(recovery_params(cfg)?);
    }
    let s0 = solver.initial_state(omega, time.t0).map_err(core("ns"))?;
    let states: Vec<NsState<D>> = solver
        .run(s0, time.t0 + time.horizon, time.dtau.expect("validated"))
        .map_err(core("ns"))?;
    let diags: Vec<_> = states.iter().map(|s| s.diagnostics.clone()).collect();
    for d in &diags {
        for w in &d.warnings {
            sink.warnings.push(format!("step {}: {w}", d.step));
        }
        if d.n_excluded > 0 {
            sink.warnings
                .push(format!("step {}: {} path evaluations excluded", d.step, d.n_excluded));
        }
    }
    sink.csv("diagnostics.csv", |w| output::write_diagnostics(w, &diags))?;
    if spec.dump_every > 0 {
        for s in states.iter().skip(1).filter(|s| s.step_index % spec.dump_every as u64 == 0) {
            sink.grid(&format!("vorticity_step{:04}", s.step_index), &s.vorticity)?;
        }
    }
    let last = states.last().expect("run returns the initial state");
    sink.grid("vorticity_final", &last.vorticity)?;
    sink.grid("velocity_final", &last.velocity)?;
    Ok(())
}

fn dynamo_params(cfg: &ScenarioConfig) -> DynamoParams {
    let t = transport_params(cfg, cfg.physics.magnetic_diffusivity.expect("validated"));
    DynamoParams {
        diffusivity: t.viscosity,
        t0: t.t0,
        horizon: t.horizon,
        n_steps: t.n_steps,
        n_paths: t.n_paths,
        source: t.source,
        antithetic: t.antithetic,
    }
}

fn window(cfg: &ScenarioConfig) -> Option<((f64, f64), usize)> {
    let d = cfg.dynamo.as_ref()?;
    d.window.map(|[a, b]| ((a, b), d.n_times))
}

fn dynamo_3d(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<(), CliError> {
    let params = dynamo_params(cfg);
    let u = velocity_3d(cfg.velocity.as_ref().expect("validated"), &ctx(cfg, "velocity"))?;
    let b0 = vector_3d(cfg.initial.as_ref().expect("validated"), &ctx(cfg, "initial"))?;
    let pts = points::<3>(cfg);
    let est = transport_magnetic_3d(&params, u.as_ref(), b0.as_ref(), &pts).map_err(core("dynamo"))?;
    sink.excluded("magnetic transport", &est);
    sink.csv("magnetic.csv", |w| output::write_estimates(w, &est, &["b_x", "b_y", "b_z"]))?;
    if let Some(g) = estimate_grid(cfg, &est)? {
        sink.grid("magnetic", &g)?;
    }
    if let Some((win, n)) = window(cfg) {
        let g = growth_rate_3d(&params, u.as_ref(), b0.as_ref(), win, n, &pts).map_err(core("dynamo"))?;
        sink.csv("growth.csv", |w| output::write_growth(w, &g))?;
    }
    Ok(())
}

fn dynamo_2d(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<(), CliError> {
    let params = dynamo_params(cfg);
    let u = velocity_2d(cfg.velocity.as_ref().expect("validated"), &ctx(cfg, "velocity"))?;
    let a0 = scalar_2d(cfg.initial.as_ref().expect("validated"), &ctx(cfg, "initial"))?;
    let pts = points::<2>(cfg);
    let est = transport_magnetic_2d(&params, u.as_ref(), a0.as_ref(), &pts).map_err(core("dynamo"))?;
    sink.excluded("magnetic transport", &est);
    sink.csv("flux.csv", |w| output::write_estimates(w, &est, &["a"]))?;
    if let Some(g) = estimate_grid(cfg, &est)? {
        sink.grid("flux", &g)?;
    }
    if let Some((win, n)) = window(cfg) {
        let g = growth_rate_2d(&params, u.as_ref(), a0.as_ref(), win, n, &pts).map_err(core("dynamo"))?;
        sink.csv("growth.csv", |w| output::write_growth(w, &g))?;
    }
    Ok(())
}

/// Check points spread over the sampling box (or the torus cell) and the
/// horizon by a low-discrepancy sequence.
fn check_points(cfg: &ScenarioConfig, n: usize, tau: f64) -> Vec<(f64, Point<2>)> {
    let (lo, hi) = match (&cfg.domain, &cfg.sampling) {
        (DomainSpec::Torus { period }, _) => (0.0, *period),
        (_, Some(Sampling::Grid { lo: Some(lo), hi: Some(hi), .. })) => (*lo, *hi),
        _ => (-2.0, 2.0),
    };
    (0..n)
        .map(|i| {
            let a = i as f64;
            let x = Point::<2>::new(
                lo + (a * 0.754_877_666).fract() * (hi - lo),
                lo + (a * 0.569_840_291).fract() * (hi - lo),
            );
            ((a * 0.618_033_989).fract() * tau, x)
        })
        .collect()
}

fn driftless(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<(), CliError> {
    let nu = cfg.viscosity()?;
    let spec = cfg.driftless.as_ref().expect("validated");
    let time = cfg.time.as_ref().expect("validated");
    let tau = time.horizon;
    let t_end = time.t0 + tau;
    let u = velocity_2d(cfg.velocity.as_ref().expect("validated"), &ctx(cfg, "velocity"))?;
    let scale = (2.0 * nu).sqrt();
    let check = check_points(cfg, spec.check_points, tau);
    let frame = build_rotation_frame_2d(u.as_ref(), VelocityStream::backward_from(u.as_ref(), t_end), scale, true, &check, 1e-8)
        .map_err(core("velocity"))?;
    let target = |s: f64, x: &Point<2>| -u.velocity(t_end - s, x);
    let analytic = verify_frame_conditions(&frame, scale, &target, &check, DriftDerivative::Analytic);
    let fd = verify_frame_conditions(&frame, scale, &target, &check, DriftDerivative::FiniteDifference);

    let x0 = Point::<2>::from(spec.start);
    let grid = TimeGrid::new(0.0, tau, time.n_steps.expect("validated")).map_err(core("time"))?;
    let opts = SimOptions {
        record: Record::Endpoints,
        antithetic: cfg.mc.antithetic,
        ..SimOptions::default()
    };
    let source = RandomSource::new(cfg.mc.seed);
    let frame_run =
        simulate_stratonovich(&frame, &Start::Single(x0), grid, source.split(1), cfg.mc.n_paths, opts).map_err(core("mc"))?;
    let ito = ItoSdeSpec {
        drift: &target,
        sigma: scale,
    };
    let drift_run = simulate_ito(&ito, &Start::Single(x0), grid, source.split(2), cfg.mc.n_paths, opts).map_err(core("mc"))?;
    let law = compare_laws(&frame_run, &drift_run, spec.max_order).map_err(core("driftless"))?;

    const FRAME_TOL: f64 = 1e-4;
    for (name, r) in [("analytic", &analytic), ("finite-difference", &fd)] {
        if !r.passes(FRAME_TOL) {
            sink.warnings.push(format!(
                "frame conditions ({name}) exceed {FRAME_TOL:e}: isotropy {:e}, drift {:e}",
                r.isotropy_residual, r.drift_residual
            ));
        }
    }
    if !law.passed {
        sink.warnings.push(format!(
            "moment comparison failed: max |z| = {} >= {}",
            law.max_abs_z, law.threshold
        ));
    }
    sink.csv("frame_residuals.csv", |w| write_frame(w, &[&analytic, &fd]))?;
    sink.csv("moments.csv", |w| write_law(w, &law))?;
    Ok(())
}

fn write_frame(mut w: impl Write, reports: &[&FrameReport]) -> stochflow::Result<()> {
    writeln!(w, "derivative,isotropy_residual,drift_residual,relative_drift_residual,max_target_drift")?;
    for r in reports {
        let tag = serde_json::to_value(r.derivative)?;
        writeln!(
            w,
            "{},{},{},{},{}",
            tag.as_str().unwrap_or_default(),
            r.isotropy_residual,
            r.drift_residual,
            r.relative_drift_residual,
            r.max_target_drift
        )?;
    }
    Ok(())
}

fn write_law(mut w: impl Write, law: &LawReport) -> stochflow::Result<()> {
    writeln!(w, "exponents,frame,frame_stderr,drift,drift_stderr,z")?;
    for m in &law.moments {
        let e: Vec<String> = m.exponents.iter().map(|e| e.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            e.join(" "),
            m.frame.mean,
            m.frame.stderr,
            m.drift.mean,
            m.drift.stderr,
            m.z
        )?;
    }
    Ok(())
}

/// Output directory for a config, honouring an override.
pub fn output_dir(cfg: &ScenarioConfig, opts: &RunOptions) -> PathBuf {
    opts.output_dir.clone().unwrap_or_else(|| cfg.output.directory.clone())
}
