//! The five subcommands. Each writes its artifacts into the output directory
//! through rename-commit writes and returns the process exit code.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use ymlab_core::asymptotics::{classify_regimes, lojasiewicz_fit, rate_fit, window_sup_norms};
use ymlab_core::cone::{
    builtin_field, cylinder_transform, rescale, ym_system_residual, ResidualGrid, SampledBallField, SystemResidual,
    ToricAbelianCone,
};
use ymlab_core::configs::{constant_flux_u1, embed_u1_in_su2};
use ymlab_core::flow::run_flow_observed;
use ymlab_core::functional::spectrum;
use ymlab_core::gauge::standard_form;
use ymlab_core::io::{self, IoError};
use ymlab_core::{
    CoulombOptions, Error, FlowConfig, FlowOutcome, FlowSample, GaugeError, GroupId, LabRng, Lattice, LinkField,
    PathConnection, RateFit, SpectrumReport, StandardFormCertificate,
};

use crate::config::{Background, FlowStart, RunConfig};
use crate::CliError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ENERGY_DROP: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;
pub const EXIT_PARTIAL: i32 = 5;

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    metadata: Metadata<'a>,
    report: T,
}

fn write_report<T: Serialize>(cfg: &RunConfig, command: &'static str, dir: &Path, name: &str, report: T) -> Result<(), CliError> {
    let doc = Document {
        metadata: Metadata { tool: "ymlab", version: env!("CARGO_PKG_VERSION"), command, config: cfg },
        report,
    };
    io::write_json(&doc, &dir.join(name)).map_err(Error::from)?;
    Ok(())
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(IoError::from(e)))?;
    Ok(())
}

fn lattice(cfg: &RunConfig) -> Result<Lattice, CliError> {
    Ok(Lattice::cubic(cfg.lattice.dim, cfg.lattice.extent, cfg.lattice.spacing).map_err(Error::from)?)
}

/// Unit flux through the `(0, 1)` planes, embedded along the diagonal
/// subgroup for SU(2).
fn flux_background(l: &Lattice, group: GroupId) -> LinkField {
    let u = constant_flux_u1(l, 1);
    match group {
        GroupId::U1 => u,
        GroupId::Su2 => embed_u1_in_su2(&u),
    }
}

fn read_field(path: &Path) -> Result<LinkField, CliError> {
    Ok(io::read_checkpoint(path).map_err(Error::from)?)
}

pub fn outcome_code(outcome: FlowOutcome) -> i32 {
    match outcome {
        FlowOutcome::Converged => EXIT_OK,
        FlowOutcome::EnergyDrop => EXIT_ENERGY_DROP,
        FlowOutcome::Timeout => EXIT_TIMEOUT,
        FlowOutcome::Error => EXIT_ERROR,
    }
}

#[derive(Serialize)]
struct FlowReport {
    outcome: FlowOutcome,
    seed: u64,
    start: &'static str,
    steps: usize,
    initial: FlowSample,
    terminal: FlowSample,
    reference_energy: f64,
    error: Option<String>,
    checkpoints: Vec<String>,
    path: Option<String>,
    path_note: Option<String>,
}

/// Start and reference configurations of one flow run.
fn flow_start(cfg: &RunConfig, seed: u64, input: Option<&Path>) -> Result<(LinkField, LinkField, &'static str), CliError> {
    if let Some(path) = input {
        let u = read_field(path)?;
        let reference = LinkField::identity(u.lattice(), u.group());
        return Ok((u, reference, "checkpoint"));
    }
    let l = lattice(cfg)?;
    let flat = LinkField::identity(&l, cfg.group);
    Ok(match cfg.flow.start {
        FlowStart::Flat => (flat.clone(), flat, "flat"),
        FlowStart::Random => {
            let mut rng = LabRng::new(seed);
            (LinkField::random_near_identity(&l, cfg.group, cfg.flow.amplitude, &mut rng), flat, "random")
        }
        FlowStart::NegativeMode => {
            let critical = flux_background(&l, cfg.group);
            let spec = spectrum(&critical, 1).map_err(Error::from)?;
            let lowest = spec.eigenvalues[0];
            if !(lowest < -1e-8) {
                return Err(CliError::Usage(format!(
                    "flow.start = negative_mode needs a negative Jacobi eigenvalue at the flux background, lowest is {lowest:e}"
                )));
            }
            let mode = &spec.eigenforms[0];
            let u = critical.perturb(&mode.scaled(cfg.flow.amplitude / mode.norm()), 1.0);
            (u, critical, "negative_mode")
        }
    })
}

fn flow_one(cfg: &RunConfig, seed: u64, input: Option<&Path>, dir: &Path) -> Result<i32, CliError> {
    prepare_dir(dir)?;
    let (u, reference, start) = flow_start(cfg, seed, input)?;
    let fc = FlowConfig {
        dt: cfg.flow.dt,
        t_max: cfg.flow.t_max,
        grad_tol: cfg.flow.grad_tol,
        energy_drop_eps: cfg.flow.energy_drop_eps,
        ..FlowConfig::default()
    };
    let every = cfg.flow.checkpoint_every;
    let mut calls = 0usize;
    let mut checkpoints = Vec::new();
    let mut frames: Vec<(f64, LinkField)> = Vec::new();
    let mut write_error: Option<IoError> = None;
    let mut observer = |s: &FlowSample, field: &LinkField| {
        if every > 0 && calls.is_multiple_of(every) && write_error.is_none() {
            let name = format!("checkpoint-{calls:06}.ymlf");
            match io::write_checkpoint(field, &dir.join(&name)) {
                Ok(()) => checkpoints.push(name),
                Err(e) => write_error = Some(e),
            }
            frames.push((s.t, field.clone()));
        }
        calls += 1;
    };
    let trace = run_flow_observed(&u, &reference, &fc, &mut observer).map_err(Error::from)?;
    if let Some(e) = write_error {
        return Err(Error::from(e).into());
    }
    io::emit_trace_csv(&trace, &dir.join("trace.csv")).map_err(Error::from)?;
    io::write_checkpoint(&trace.terminal, &dir.join("final.ymlf")).map_err(Error::from)?;
    let (mut path, mut path_note) = (None, None);
    if frames.len() >= 2 {
        let (times, fields): (Vec<f64>, Vec<LinkField>) = frames.into_iter().unzip();
        match PathConnection::temporal(times, fields) {
            Ok(p) => {
                io::write_path(&p, &dir.join("path.ymlp")).map_err(Error::from)?;
                path = Some("path.ymlp".to_owned());
            }
            Err(e) => path_note = Some(format!("checkpoint times do not form a uniform grid: {e}")),
        }
    }
    let code = outcome_code(trace.outcome);
    let report = FlowReport {
        outcome: trace.outcome,
        seed,
        start,
        steps: trace.samples.len(),
        initial: trace.initial,
        terminal: *trace.last(),
        reference_energy: trace.reference_energy,
        error: trace.error.as_ref().map(|e| e.to_string()),
        checkpoints,
        path,
        path_note,
    };
    let mut seeded = cfg.clone();
    seeded.seed = seed;
    write_report(&seeded, "flow", dir, "outcome.json", report)?;
    Ok(code)
}

#[derive(Serialize)]
struct RunSummary {
    seed: u64,
    dir: String,
    exit_code: i32,
    error: Option<String>,
}

/// Runs seeds `seed, seed + 1, ...` on up to `jobs` worker threads. With more
/// than one run each seed writes into `seed-<seed>/` and a `runs.json`
/// summary is added; the exit code is the first nonzero code in seed order.
pub fn cmd_flow(cfg: &RunConfig, input: Option<&Path>, runs: usize, jobs: usize) -> Result<i32, CliError> {
    let dir = cfg.output_dir.clone();
    if runs <= 1 {
        return flow_one(cfg, cfg.seed, input, &dir);
    }
    prepare_dir(&dir)?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<i32, CliError>>>> = Mutex::new((0..runs).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, runs) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= runs {
                    break;
                }
                let seed = cfg.seed.wrapping_add(k as u64);
                let r = flow_one(cfg, seed, input, &dir.join(format!("seed-{seed}")));
                results.lock().unwrap()[k] = Some(r);
            });
        }
    });
    let results = results.into_inner().unwrap();
    let mut summary = Vec::with_capacity(runs);
    let mut code = EXIT_OK;
    for (k, r) in results.into_iter().enumerate() {
        let seed = cfg.seed.wrapping_add(k as u64);
        let (exit_code, error) = match r.expect("every run reports") {
            Ok(c) => (c, None),
            Err(e) => (e.exit_code(), Some(e.to_string())),
        };
        if code == EXIT_OK {
            code = exit_code;
        }
        summary.push(RunSummary { seed, dir: format!("seed-{seed}"), exit_code, error });
    }
    write_report(cfg, "flow", &dir, "runs.json", summary)?;
    Ok(code)
}

fn gauge_error_kind(e: &GaugeError) -> &'static str {
    match e {
        GaugeError::Algebra(_) => "algebra",
        GaugeError::Lattice(_) => "lattice",
        GaugeError::NonConvergence { .. } => "non_convergence",
        GaugeError::KernelComponent { .. } => "kernel_component",
        GaugeError::NewtonDivergence { .. } => "newton_divergence",
        GaugeError::Partial { .. } => "partial",
    }
}

#[derive(Serialize)]
struct GaugeReport {
    completed: usize,
    total: usize,
    certificate: Option<StandardFormCertificate>,
    path: Option<String>,
    cause_kind: Option<&'static str>,
    cause: Option<String>,
}

fn read_path_or_checkpoint(path: &Path) -> Result<PathConnection, CliError> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(IoError::from(e)))?;
    if bytes.starts_with(io::PATH_MAGIC) {
        Ok(io::decode_path(&bytes).map_err(Error::from)?)
    } else {
        let u = io::decode_checkpoint(&bytes).map_err(Error::from)?;
        Ok(PathConnection::temporal(vec![0.0], vec![u]).map_err(Error::from)?)
    }
}

/// Puts a stored path (or a single checkpoint) into standard form around
/// `reference`, the flat connection when not given.
pub fn cmd_gauge(cfg: &RunConfig, input: &Path, reference: Option<&Path>) -> Result<i32, CliError> {
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let path = read_path_or_checkpoint(input)?;
    let u0 = match reference {
        Some(r) => read_field(r)?,
        None => LinkField::identity(path.lattice(), path.group()),
    };
    let opts = CoulombOptions { tol: cfg.gauge.newton_tol, ..CoulombOptions::default() };
    let total = path.len();
    let (report, code) = match standard_form(&path, &u0, &opts) {
        Ok(sf) => {
            io::write_path(&sf.path, &dir.join("standard_form.ymlp")).map_err(Error::from)?;
            let report = GaugeReport {
                completed: total,
                total,
                certificate: Some(sf.certificate),
                path: Some("standard_form.ymlp".into()),
                cause_kind: None,
                cause: None,
            };
            (report, EXIT_OK)
        }
        Err(GaugeError::Partial { completed, total, cause, prefix }) => {
            let mut report = GaugeReport {
                completed,
                total,
                certificate: None,
                path: None,
                cause_kind: Some(gauge_error_kind(&cause)),
                cause: Some(cause.to_string()),
            };
            if let Some(p) = prefix {
                io::write_path(&p.path, &dir.join("standard_form.ymlp")).map_err(Error::from)?;
                report.certificate = Some(p.certificate);
                report.path = Some("standard_form.ymlp".into());
            }
            (report, EXIT_PARTIAL)
        }
        Err(e) => return Err(Error::from(e).into()),
    };
    write_report(cfg, "gauge", dir, "certificate.json", report)?;
    Ok(code)
}

#[derive(Serialize)]
struct SpectrumOutput {
    background: &'static str,
    smallest_positive: Option<f64>,
    negative_count: usize,
    #[serde(flatten)]
    spectrum: SpectrumReport,
}

/// Lowest Jacobi eigenvalues on the Coulomb slice of the background.
pub fn cmd_spectrum(cfg: &RunConfig, input: Option<&Path>) -> Result<i32, CliError> {
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let (u0, background) = match input {
        Some(p) => (read_field(p)?, "checkpoint"),
        None => {
            let l = lattice(cfg)?;
            match cfg.spectrum.background {
                Background::Flat => (LinkField::identity(&l, cfg.group), "flat"),
                Background::Flux => (flux_background(&l, cfg.group), "flux"),
            }
        }
    };
    let rep = spectrum(&u0, cfg.spectrum.count).map_err(Error::from)?;
    let out = SpectrumOutput {
        background,
        smallest_positive: rep.smallest_positive(1e-8),
        negative_count: rep.negative_count(1e-8),
        spectrum: rep,
    };
    write_report(cfg, "spectrum", dir, "spectrum.json", out)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
#[serde(untagged)]
enum Fallible<T> {
    Ok(T),
    Failed { error: String },
}

impl<T, E: std::fmt::Display> From<Result<T, E>> for Fallible<T> {
    fn from(r: Result<T, E>) -> Self {
        match r {
            Ok(v) => Fallible::Ok(v),
            Err(e) => Fallible::Failed { error: e.to_string() },
        }
    }
}

#[derive(Serialize)]
struct AsymptoticsOutput {
    samples: usize,
    rate: RateFit,
    lojasiewicz: Fallible<ymlab_core::LojasiewiczFit>,
    regimes: Fallible<ymlab_core::RegimeReport>,
}

/// Rate, Lojasiewicz and regime fits of a flow trace. The rate fit of
/// `dist_ref` against `t` must succeed; the other two record their failure
/// in the report instead.
pub fn cmd_asymptotics(cfg: &RunConfig, input: &Path) -> Result<i32, CliError> {
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let rows = io::read_trace_csv(input).map_err(Error::from)?;
    let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let d: Vec<f64> = rows.iter().map(|r| r.dist_ref).collect();
    let e: Vec<f64> = rows.iter().map(|r| r.energy).collect();
    let g: Vec<f64> = rows.iter().map(|r| r.grad_norm).collect();
    let a = &cfg.asymptotics;
    let rate = rate_fit(&t, &d).map_err(Error::from)?;
    let regimes = window_sup_norms(&t, &d, a.window_l)
        .and_then(|s| classify_regimes(&s, a.delta1, a.delta2, a.delta, a.window_l, a.eta));
    let out = AsymptoticsOutput {
        samples: rows.len(),
        rate,
        lojasiewicz: lojasiewicz_fit(&e, &g, a.e0).into(),
        regimes: regimes.into(),
    };
    write_report(cfg, "asymptotics", dir, "asymptotics.json", out)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ConeOutput {
    field: String,
    dimension: usize,
    radii: Vec<f64>,
    density_profile: Vec<f64>,
    density_ratio_outer: f64,
    ratio_spread: f64,
    monotonicity_defect: f64,
    lambda: f64,
    rescale_defect: f64,
    radial_defect: f64,
    transport_error: f64,
    cylinder_times: Vec<f64>,
    cylinder_norm_mismatch: f64,
    cylinder_time_variation: f64,
    system_residual: Option<SystemResidual>,
}

/// Density and cone diagnostics of a built-in continuum field.
pub fn cmd_cone(cfg: &RunConfig) -> Result<i32, CliError> {
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let c = &cfg.cone;
    let field = builtin_field(&c.field, c.n).map_err(Error::from)?;
    let sampled = SampledBallField::new(field, cfg.ball_grid()).map_err(Error::from)?;
    let (radii, density_profile) = sampled.density_profile().into_iter().unzip();
    let outer = sampled.density_ratio(1.0).map_err(Error::from)?;
    let defects = sampled.cone_defects(c.lambda).map_err(Error::from)?;
    let scaled = rescale(&sampled, c.lambda).map_err(Error::from)?;
    let moved = scaled.density_ratio(1.0).map_err(Error::from)?;
    let direct = sampled.density_ratio(c.lambda).map_err(Error::from)?;
    let transport_error = if direct == 0.0 { moved.abs() } else { (moved - direct).abs() / direct.abs() };
    let times: Vec<f64> = [0.0f64, 1.0, 2.0].into_iter().filter(|t| (-t).exp() >= c.rho_min).collect();
    let cyl = cylinder_transform(&sampled, &times).map_err(Error::from)?;
    let system_residual = if c.field == "abelian_cone" {
        let torus = ToricAbelianCone { base_dim: c.n - 1, c: 1.0 };
        Some(ym_system_residual(&torus, &ResidualGrid::default()).map_err(Error::from)?)
    } else {
        None
    };
    let out = ConeOutput {
        field: c.field.clone(),
        dimension: c.n,
        radii,
        density_profile,
        density_ratio_outer: outer,
        ratio_spread: sampled.ratio_spread(),
        monotonicity_defect: sampled.monotonicity_defect(),
        lambda: c.lambda,
        rescale_defect: defects.rescale,
        radial_defect: defects.radial,
        transport_error,
        cylinder_times: times,
        cylinder_norm_mismatch: cyl.max_norm_mismatch(),
        cylinder_time_variation: cyl.time_variation(),
        system_residual,
    };
    write_report(cfg, "cone", dir, "cone.json", out)?;
    Ok(EXIT_OK)
}
