//! `tamed`: extrinsic invariants of sampled submanifolds from the command
//! line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use tamed_core::battery::{curvature_samples, run_battery, BatteryOptions};
use tamed_core::catalog::entries;
use tamed_core::invariants::{
    default_radii, invariant_tails, pinching_functions, threshold_c_star, InvariantReport, DEFAULT_RADII,
};
use tamed_core::mesh::{build_mesh, MeshGraph};
use tamed_core::volumetrics::{verify_growth_bounds, volume_curve, VolumeProfile};
use tamed_core::{Error, Exec};

use config::{ConfigError, Immersion, ImmersionSource, RunConfig};
use report::{header, num, numbered, Outputs};

#[derive(Parser)]
#[command(name = "tamed", version, about = "Extrinsic tameness invariants of sampled submanifolds")]
struct Cli {
    #[command(flatten)]
    opts: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for report files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel pipelines.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Grid points per chart axis, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    resolution: Option<Vec<usize>>,
    /// Truncation of every unbounded chart axis.
    #[arg(long, global = true)]
    truncation: Option<f64>,
    /// Use a catalog immersion.
    #[arg(long, global = true, conflicts_with = "chart")]
    catalog: Option<String>,
    /// Catalog parameter, `name=value`; repeatable.
    #[arg(long = "param", global = true, value_parser = parse_param)]
    params: Vec<(String, f64)>,
    /// Read the immersion from a chart source file.
    #[arg(long, global = true)]
    chart: Option<PathBuf>,
    /// Sequential or parallel execution.
    #[arg(long, global = true, value_parser = parse_exec)]
    exec: Option<Exec>,
    /// Threshold on |grad r| below which a vertex counts as critical.
    #[arg(long, global = true)]
    epsilon_crit: Option<f64>,
    /// Seed for curvature sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of curvature samples.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Also write the sampled mesh as mesh.csv.
    #[arg(long, global = true)]
    dump_mesh: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Tail curves of the tameness invariants and a classification.
    Invariants,
    /// Extrinsic ball and sphere volumes and the growth verdicts.
    Volume,
    /// Number of ends across a range of radii.
    Ends,
    /// Sampled curvatures of extrinsic spheres with their bounds.
    Curvature,
    /// Run every self-check on one immersion.
    Verify,
    /// Built-in immersions.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
}

#[derive(Subcommand)]
enum CatalogAction {
    /// List entries and their parameters.
    List {
        #[arg(long)]
        json: bool,
    },
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("bad value for `{k}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_exec(s: &str) -> Result<Exec, String> {
    match s {
        "sequential" => Ok(Exec::Sequential),
        "parallel" => Ok(Exec::Parallel),
        _ => Err(format!("expected `sequential` or `parallel`, got `{s}`")),
    }
}

enum AppError {
    Config(String),
    Numeric(Error),
    Io(String),
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e.0)
    }
}

impl From<Error> for AppError {
    fn from(e: Error) -> Self {
        AppError::Numeric(e)
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Evaluation { .. } => "evaluation",
        Error::Syntax { .. } => "syntax",
        Error::UnknownIdentifier { .. } => "unknown-identifier",
        Error::Arity { .. } => "arity",
        Error::DimensionMismatch(_) => "dimension-mismatch",
        Error::OutOfDomain { .. } => "out-of-domain",
        Error::Geometry(_) => "geometry",
        Error::Singularity(_) => "singularity",
        Error::DegenerateImmersion { .. } => "degenerate-immersion",
        Error::DegeneratePlane(_) => "degenerate-plane",
        Error::CriticalPoint(_) => "critical-point",
        Error::Truncation(_) => "truncation",
        Error::HypothesisViolated { .. } => "hypothesis-violated",
        Error::EmptyTail(_) => "empty-tail",
        Error::MissingInput(_) => "missing-input",
    }
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numeric(_) | AppError::Io(_) => 3,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let (kind, detail, message) = match self {
            AppError::Config(m) => ("config", None, m.clone()),
            AppError::Numeric(e) => ("numeric", Some(error_kind(e)), e.to_string()),
            AppError::Io(m) => ("io", None, m.clone()),
        };
        json!({ "error": { "kind": kind, "detail": detail, "message": message, "exit_code": self.exit_code() } })
    }
}

type AppResult<T> = Result<T, AppError>;

/// Load the config file, then apply command-line overrides.
fn build_config(o: &Overrides) -> AppResult<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => config::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(name) = &o.catalog {
        cfg.immersion = Some(ImmersionSource::Catalog {
            name: name.clone(),
            params: Default::default(),
        });
    }
    if let Some(path) = &o.chart {
        cfg.immersion = Some(ImmersionSource::ChartFile(path.clone()));
    }
    if !o.params.is_empty() {
        match &mut cfg.immersion {
            Some(ImmersionSource::Catalog { params, .. }) => params.extend(o.params.iter().cloned()),
            _ => return Err(AppError::Config("--param needs a catalog immersion".into())),
        }
    }
    if o.out.is_some() {
        cfg.out = o.out.clone();
    }
    if o.threads.is_some() {
        cfg.threads = o.threads;
    }
    if o.resolution.is_some() {
        cfg.resolution = o.resolution.clone();
    }
    if o.truncation.is_some() {
        cfg.truncation = o.truncation;
    }
    if let Some(e) = o.exec {
        cfg.exec = e;
    }
    if let Some(e) = o.epsilon_crit {
        cfg.epsilon_crit = e;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(s) = o.samples {
        cfg.curvature_samples = s;
    }
    cfg.dump_mesh |= o.dump_mesh;
    cfg.validate()?;
    Ok(cfg)
}

struct Run {
    cfg: RunConfig,
    imm: Immersion,
    out: Outputs,
}

impl Run {
    fn mesh(&mut self) -> AppResult<MeshGraph> {
        let mesh = build_mesh(&self.imm.ambient, self.imm.chart(), &self.imm.resolution, self.cfg.exec)?;
        if self.cfg.dump_mesh {
            let m = mesh.dim();
            let mut cols = header(&["vertex"]);
            cols.extend(numbered("u", m));
            cols.extend(header(&["r", "rho", "alpha_norm", "grad_r"]));
            let rows = mesh.vertices.iter().enumerate().map(|(i, v)| {
                let mut row = vec![i.to_string()];
                row.extend(v.param.iter().map(|&x| num(x)));
                row.extend([num(v.r), num(v.rho), num(v.alpha_norm), num(v.tangential_norm)]);
                row
            });
            self.out.csv("mesh.csv", &cols, rows)?;
        }
        Ok(mesh)
    }

    fn meta(&self) -> serde_json::Value {
        let chart = self.imm.chart();
        let space = chart.space();
        json!({
            "chart": chart.name(),
            "m": chart.dim(),
            "n": space.n,
            "kappa": space.kappa,
            "resolution": self.imm.resolution,
            "pole": self.imm.ambient.pole,
        })
    }

    fn tails(&self, mesh: &MeshGraph) -> AppResult<InvariantReport> {
        let radii = match &self.cfg.exhaustion_radii {
            Some(r) => r.clone(),
            None => default_radii(mesh, DEFAULT_RADII),
        };
        Ok(invariant_tails(mesh, &radii)?)
    }
}

#[derive(Serialize)]
struct PinchingSummary {
    c: f64,
    c_star: f64,
    below_threshold: bool,
    critical_radius: f64,
    delta: String,
    at_infinity: Option<tamed_core::invariants::Pinching>,
    note: Option<String>,
}

fn pinching_summary(run: &Run, mesh: &MeshGraph, rep: &InvariantReport) -> PinchingSummary {
    let c = rep.a_estimate.last;
    let c_star = threshold_c_star().closed_form;
    let r0 = mesh.critical_free_radius(run.cfg.epsilon_crit);
    let (at_infinity, note) = match pinching_functions(rep.kappa, c, None, run.cfg.delta, r0) {
        Ok(p) => (Some(p), None),
        Err(e) => (None, Some(e.to_string())),
    };
    PinchingSummary {
        c,
        c_star,
        below_threshold: c < c_star,
        critical_radius: r0,
        delta: run.cfg.delta.label(),
        at_infinity,
        note,
    }
}

fn cmd_invariants(run: &mut Run) -> AppResult<u8> {
    let mesh = run.mesh()?;
    let rep = run.tails(&mesh)?;
    let pinching = pinching_summary(run, &mesh, &rep);
    run.out.json(
        "invariants.json",
        &json!({ "run": run.meta(), "report": rep, "pinching": pinching }),
    )?;
    // Empty shells have no maximum and are left blank.
    let shell = |c: &tamed_core::curve::Curve, t: f64| {
        c.t.iter().position(|&s| s == t).map_or(String::new(), |k| num(c.values[k]))
    };
    let rows = (0..rep.radii.len()).map(|i| {
        let t = rep.radii[i];
        vec![
            num(t),
            num(rep.a_tail.values[i]),
            num(rep.b_tail.values[i]),
            shell(&rep.a_shell, t),
            shell(&rep.b_shell, t),
        ]
    });
    run.out.csv(
        "invariants.csv",
        &header(&["t", "a_tail", "b_tail", "a_shell", "b_shell"]),
        rows,
    )?;
    let b = match rep.b_estimate {
        _ if rep.b_infinite => "inf".to_string(),
        Some(e) => format!("{:.6}", e.last),
        None => "n/a".to_string(),
    };
    println!(
        "{}: a ~ {:.6}, b ~ {b}, classification {}",
        run.imm.chart().name(),
        rep.a_estimate.last,
        serde_json::to_value(rep.classification).unwrap_or_default().as_str().unwrap_or("?")
    );
    Ok(0)
}

fn cmd_volume(run: &mut Run) -> AppResult<u8> {
    let mesh = run.mesh()?;
    let profile = VolumeProfile::build(&mesh, run.imm.chart(), run.cfg.exec)?;
    let radii = profile.default_radii(run.cfg.volume_points)?;
    let curve = volume_curve(&profile, &radii)?;
    let rep = run.tails(&mesh)?;
    let ends = mesh.ends_stability(run.cfg.epsilon_crit, 12).ok().map(|s| s.count);
    let verdicts = verify_growth_bounds(&curve, &rep, ends, run.cfg.tolerance)?;
    let rows = (0..curve.radii.len()).map(|i| {
        vec![
            num(curve.radii[i]),
            num(curve.ball_vol[i]),
            num(curve.sphere_vol[i]),
            num(curve.ball_ratio[i]),
            num(curve.sphere_ratio[i]),
        ]
    });
    run.out.csv(
        "volume.csv",
        &header(&["t", "ball_vol", "sphere_vol", "ball_ratio", "sphere_ratio"]),
        rows,
    )?;
    run.out.json("verdicts.json", &json!({ "run": run.meta(), "verdicts": verdicts }))?;
    for v in &verdicts.verdicts {
        let status = serde_json::to_value(v.status).unwrap_or_default();
        println!("{}: {}", v.check, status.as_str().unwrap_or("?"));
    }
    Ok(0)
}

fn cmd_ends(run: &mut Run) -> AppResult<u8> {
    let mesh = run.mesh()?;
    let st = mesh.ends_stability(run.cfg.epsilon_crit, 12)?;
    run.out.json("ends.json", &json!({ "run": run.meta(), "ends": st }))?;
    let rows = st.rows.iter().map(|&(r, c)| vec![num(r), c.to_string()]);
    run.out.csv("ends.csv", &header(&["R", "count"]), rows)?;
    match st.stable_interval {
        Some((lo, hi)) => println!("ends: {} (stable on [{lo:.6}, {hi:.6}])", st.count),
        None => println!("ends: {}", st.count),
    }
    Ok(0)
}

fn cmd_curvature(run: &mut Run) -> AppResult<u8> {
    let mesh = run.mesh()?;
    let samples = curvature_samples(
        &mesh,
        run.imm.chart(),
        run.cfg.curvature_samples,
        run.cfg.seed,
        run.cfg.exec,
    )?;
    let m = mesh.dim();
    let mut cols = header(&["vertex"]);
    cols.extend(numbered("u", m));
    cols.extend(header(&["r", "exact", "lower", "upper", "admissible"]));
    let rows = samples.iter().map(|s| {
        let mut row = vec![s.vertex.to_string()];
        row.extend(s.param.iter().map(|&x| num(x)));
        row.extend([num(s.r), num(s.exact), num(s.lower), num(s.upper), s.admissible.to_string()]);
        row
    });
    run.out.csv("curvature.csv", &cols, rows)?;
    let admissible = samples.iter().filter(|s| s.admissible).count();
    println!("{} samples, {admissible} admissible", samples.len());
    Ok(0)
}

fn cmd_verify(run: &mut Run) -> AppResult<u8> {
    if run.cfg.dump_mesh {
        run.mesh()?;
    }
    let opts = BatteryOptions {
        resolution: run.imm.resolution.clone(),
        epsilon_crit: run.cfg.epsilon_crit,
        tolerance: run.cfg.tolerance,
        curvature_samples: run.cfg.curvature_samples,
        seed: run.cfg.seed,
        exec: run.cfg.exec,
    };
    let rep = run_battery(run.imm.chart(), run.imm.truth.as_ref(), &opts)?;
    run.out.json("verify.json", &rep)?;
    for c in &rep.checks {
        let status = serde_json::to_value(c.status).unwrap_or_default();
        println!("{:<28} {:<8} {}", c.name, status.as_str().unwrap_or("?"), c.detail);
    }
    Ok(if rep.passed() { 0 } else { 1 })
}

fn catalog_list(as_json: bool) -> AppResult<u8> {
    let all = entries();
    if as_json {
        let text = serde_json::to_string_pretty(&all).map_err(|e| AppError::Io(e.to_string()))?;
        println!("{text}");
        return Ok(0);
    }
    for e in all {
        println!("{}: {}", e.name, e.summary);
        for p in e.params {
            match p.default {
                Some(d) => println!("    {} = {d}  ({})", p.name, p.range),
                None => println!("    {}  ({})", p.name, p.range),
            }
        }
    }
    Ok(0)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> AppResult<T> {
    #[cfg(feature = "parallel")]
    if let Some(k) = threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| AppError::Config(format!("cannot start {k} threads: {e}")))?;
        return Ok(pool.install(f));
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(f())
}

fn run(cli: Cli) -> AppResult<u8> {
    let Command::Catalog { action } = &cli.command else {
        let cfg = build_config(&cli.opts)?;
        let imm = config::resolve(&cfg)?;
        let out = Outputs::new(&cfg.out_dir())?;
        let threads = cfg.threads;
        let mut run = Run { cfg, imm, out };
        return with_threads(threads, || match cli.command {
            Command::Invariants => cmd_invariants(&mut run),
            Command::Volume => cmd_volume(&mut run),
            Command::Ends => cmd_ends(&mut run),
            Command::Curvature => cmd_curvature(&mut run),
            Command::Verify => cmd_verify(&mut run),
            Command::Catalog { .. } => unreachable!(),
        })?;
    };
    match action {
        CatalogAction::List { json } => catalog_list(*json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
