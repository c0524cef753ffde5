//! Batch driver: configuration, run orchestration and data export.
//!
//! Exit codes: 0 success, 1 numerical failure (or a failed check), 2 usage or
//! configuration error.

pub mod config;
pub mod export;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twophase::identities::{consistency_gap, identity_suite};
use twophase::mesh::{check_acuteness, load_mesh};
use twophase::mms::{convergence_study, l2_error};
use twophase::stepper::LogRow;
use twophase::{run, Error, ExactSolution, MeshGeometry, RunLog, StudyConfig, ValidationSolution};

use config::{parse_config, Format, RunConfig, SourceMode};
use export::{export_fields, write_file, Provenance};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Relative tolerance of the identity checks.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "twophase", version, about = "Two-phase porous-media flow solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a single simulation.
    Run {
        config: PathBuf,
        /// Overrides output.dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Overrides output.snapshot_every.
        #[arg(long)]
        snapshot_every: Option<usize>,
    },
    /// Convergence study against the manufactured solution.
    Mms {
        config: PathBuf,
        /// Overrides output.dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Run the levels one after another (overrides solver.parallel).
        #[arg(long)]
        serial: bool,
    },
    /// Angle condition and geometry report for a mesh file.
    CheckMesh { file: PathBuf },
    /// Discrete identities on random acute meshes.
    Identities {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        count: usize,
    },
}

/// A failure with its exit code.
struct Failure {
    code: i32,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, msg: msg.into() }
    }

    fn numerical(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_NUMERICAL, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: exit_code(&e), msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::numerical(format!("output failed: {e}"))
    }
}

/// Input problems map to 2, failures during the computation to 1.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Parse { .. } | Error::Acuteness { .. } | Error::ModelInvalid(_) => {
            EXIT_USAGE
        }
        Error::Quadrature { .. } | Error::Data(_) | Error::Solver(_) | Error::Step { .. } => EXIT_NUMERICAL,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run { config, output_dir, snapshot_every } => cmd_run(&config, output_dir, snapshot_every, out, err),
        Command::Mms { config, output_dir, serial } => cmd_mms(&config, output_dir, serial, out),
        Command::CheckMesh { file } => cmd_check_mesh(&file, out),
        Command::Identities { seed, count } => cmd_identities(seed, count, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.msg);
            f.code
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base).map_err(|e| Failure::usage(format!("invalid configuration {}:\n{e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::numerical(format!("cannot create {}: {e}", dir.display())))
}

fn log_csv(log: &RunLog, prov: &Provenance) -> String {
    prov.csv_header() + &log.to_csv()
}

fn cmd_run(
    path: &Path,
    output_dir: Option<PathBuf>,
    snapshot_every: Option<usize>,
    out: &mut impl Write,
    err: &mut impl Write,
) -> Result<i32, Failure> {
    let mut cfg = load_config(path)?;
    if let Some(d) = output_dir {
        cfg.output.dir = d;
    }
    if let Some(k) = snapshot_every {
        cfg.output.snapshot_every = k;
    }
    let Some(mesh_src) = &cfg.mesh else {
        return Err(Failure::usage("run needs mesh.n or mesh.file"));
    };
    if cfg.levels.is_some() {
        return Err(Failure::usage("mesh.levels is for the mms command; run uses mesh.n or mesh.file"));
    }
    let Some(tau) = cfg.solver.tau else {
        return Err(Failure::usage("run needs solver.tau; solver.tau_per_h is for the mms command"));
    };
    let mesh = mesh_src.build()?;
    let geom = MeshGeometry::with_policy(&mesh, cfg.angle_policy)?;
    let acute = geom.acuteness();
    if !acute.ok {
        let _ = writeln!(
            err,
            "warning: {} element(s) violate the angle condition (worst angle {:.6} rad); the maximum principle is not guaranteed",
            acute.offenders.len(),
            acute.worst_angle
        );
    }
    let model = cfg.model.build()?;
    let (sources, initial) = cfg.build_problem(&geom, &model)?;
    let problem = twophase::Problem::new(&geom, &model, cfg.porosity.sample(&geom), sources)?;
    let solver = cfg.solver_config(tau);
    solver.validate()?;

    let prov = Provenance::new(&cfg.hash);
    let o = &cfg.output;
    create_dir(&o.dir)?;
    let steps = solver.num_steps();
    let mut log = RunLog::default();
    let mut io_error = None;
    let result = run(&problem, initial, &solver, |state, row: &LogRow| {
        log.push(*row);
        let due = (o.snapshot_every > 0 && state.n % o.snapshot_every == 0) || state.n == steps;
        if due {
            for &f in &o.formats {
                let ext = if f == Format::Csv { "csv" } else { "vtk" };
                let file = o.dir.join(format!("{}_{:06}.{ext}", o.prefix, state.n));
                if let Err(e) = export_fields(state, &geom, &file, f, &prov) {
                    io_error = Some(e);
                    return Err(Error::Data("output failed".into()));
                }
            }
        }
        Ok(())
    });
    let log_path = o.dir.join(&o.log);
    if let Some(e) = io_error {
        return Err(e.into());
    }
    write_file(&log_path, &log_csv(&log, &prov))?;
    let final_state = match result {
        Ok(r) => r.state,
        Err(e) => {
            return Err(Failure { code: exit_code(&e), msg: format!("{e} (partial log in {})", log_path.display()) });
        }
    };
    let _ = writeln!(
        out,
        "steps={steps} t={} min_S={:e} max_S={:e}",
        final_state.t,
        final_state.s.min(),
        final_state.s.max()
    );
    if cfg.sources.mode == SourceMode::Manufactured {
        let t = final_state.t;
        let ex = ValidationSolution;
        let ep = l2_error(&geom, &final_state.pw, |x, y| ex.pw(t, x, y))?;
        let es = l2_error(&geom, &final_state.s, |x, y| ex.s(t, x, y))?;
        let _ = writeln!(out, "err_pw={ep:e} err_s={es:e}");
    }
    let _ = writeln!(out, "log={}", log_path.display());
    Ok(EXIT_OK)
}

fn cmd_mms(path: &Path, output_dir: Option<PathBuf>, serial: bool, out: &mut impl Write) -> Result<i32, Failure> {
    let mut cfg = load_config(path)?;
    if let Some(d) = output_dir {
        cfg.output.dir = d;
    }
    if cfg.sources.mode != SourceMode::Manufactured {
        return Err(Failure::usage("mms needs sources.mode = \"manufactured\""));
    }
    if cfg.mesh.is_some() {
        return Err(Failure::usage(
            "mms refines the unit square itself; use mesh.levels instead of mesh.n or mesh.file",
        ));
    }
    let Some(tau_scale) = cfg.solver.tau_per_h else {
        return Err(Failure::usage("mms needs solver.tau_per_h (τ = tau_per_h · h)"));
    };
    let defaults = StudyConfig::default();
    let study = StudyConfig {
        levels: cfg.levels.clone().unwrap_or(defaults.levels),
        t_final: cfg.solver.t_final,
        scheme: cfg.solver.scheme,
        tau_scale,
        linear_solver: cfg.solver.linear_solver,
        sampling: cfg.sources.sampling,
        parallel: cfg.solver.parallel && !serial,
    };
    for &n in &study.levels {
        cfg.solver_config(tau_scale / n as f64).validate()?;
    }
    let model = cfg.model.build()?;
    let prov = Provenance::new(&cfg.hash);
    let o = &cfg.output;
    create_dir(&o.dir)?;
    let (table, failure) = match convergence_study(&model, Arc::new(ValidationSolution), &study) {
        Ok(t) => (t, None),
        Err(e) => {
            let f = Failure { code: exit_code(&e.source), msg: e.to_string() };
            (e.partial, Some(f))
        }
    };
    write_file(&o.dir.join(&o.table), &(prov.csv_header() + &table.to_csv()))?;
    write_file(&o.dir.join(&o.table_text), &table.to_text())?;
    let _ = write!(out, "{}", table.to_text());
    let _ = writeln!(out, "table={}", o.dir.join(&o.table).display());
    match failure {
        Some(f) => Err(f),
        None => Ok(EXIT_OK),
    }
}

fn cmd_check_mesh(file: &Path, out: &mut impl Write) -> Result<i32, Failure> {
    let text =
        std::fs::read_to_string(file).map_err(|e| Failure::usage(format!("cannot read {}: {e}", file.display())))?;
    let mesh = load_mesh(&text).map_err(|e| Failure::usage(format!("{}: {e}", file.display())))?;
    let report = check_acuteness(&mesh);
    let areas: Vec<f64> = (0..mesh.num_elements()).map(|k| mesh.element_area(k)).collect();
    let (amin, amax) = areas.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let _ = writeln!(out, "file={}", file.display());
    let _ = writeln!(out, "nodes={}", mesh.num_nodes());
    let _ = writeln!(out, "elements={}", mesh.num_elements());
    let _ = writeln!(out, "boundary_nodes={}", mesh.boundary_nodes().len());
    let _ = writeln!(out, "area={:e}", areas.iter().sum::<f64>());
    let _ = writeln!(out, "min_element_area={amin:e}");
    let _ = writeln!(out, "max_element_area={amax:e}");
    let _ = writeln!(out, "worst_angle={}", report.worst_angle);
    let _ = writeln!(out, "worst_angle_deg={}", report.worst_angle.to_degrees());
    let _ = writeln!(out, "offenders={}", report.offenders.len());
    let _ = writeln!(out, "acute={}", report.ok);
    if report.ok {
        let geom = MeshGeometry::new(&mesh)?;
        let _ = writeln!(out, "diameter={:e}", geom.diameter());
        let _ = writeln!(out, "edges={}", geom.edges().len());
        Ok(EXIT_OK)
    } else {
        let list: Vec<String> = report.offenders.iter().take(20).map(|k| k.to_string()).collect();
        let _ = writeln!(out, "offending_elements={}", list.join(","));
        Ok(EXIT_NUMERICAL)
    }
}

fn cmd_identities(seed: u64, count: usize, out: &mut impl Write) -> Result<i32, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let suite = identity_suite(&mut rng, count)?;
    let mut failures = 0;
    let mut checks = 0;
    let status = |ok: bool| if ok { "PASS" } else { "FAIL" };
    for (k, m) in suite.iter().enumerate() {
        let _ = writeln!(
            out,
            "mesh id={k} nodes={} worst={:e} status={} description=\"{}\"",
            m.nodes,
            m.worst(),
            status(m.worst() <= IDENTITY_TOLERANCE),
            m.description
        );
        for c in &m.checks {
            checks += 1;
            let ok = c.rel_error <= IDENTITY_TOLERANCE;
            failures += usize::from(!ok);
            let _ = writeln!(
                out,
                "check mesh={k} name={} lhs={:e} rhs={:e} rel_error={:e} status={}",
                c.name,
                c.lhs,
                c.rhs,
                c.rel_error,
                status(ok)
            );
        }
    }
    let gaps: Vec<(usize, f64)> =
        [8, 16, 32].iter().map(|&n| Ok((n, consistency_gap(n)?))).collect::<twophase::Result<_>>()?;
    for w in gaps.windows(2) {
        let rate = (w[0].1 / w[1].1).log2();
        let _ = writeln!(out, "consistency n={} gap={:e} rate={rate:.3}", w[1].0, w[1].1);
    }
    let _ = writeln!(
        out,
        "summary seed={seed} meshes={} checks={checks} failures={failures} status={}",
        suite.len(),
        status(failures == 0)
    );
    Ok(if failures == 0 { EXIT_OK } else { EXIT_NUMERICAL })
}
