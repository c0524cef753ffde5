//! Run configuration: TOML text with the sections `[mesh]`, `[model]`,
//! `[sources]`, `[solver]` and `[output]`. Unknown keys are rejected and every
//! semantic problem is reported, not just the first.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use twophase::fem::{integrate_high_order, interpolate_nodal, sample_at_centroids};
use twophase::mesh::{jittered_lattice, load_mesh};
use twophase::mms::{manufactured_sources, validation_porosity};
use twophase::stepper::scalar_fn;
use twophase::{
    make_power_law_model, AnglePolicy, ElementField, ExactSolution, FluidModel, LinearSolver, MeshGeometry,
    PowerLawParams, Sampling, Scheme, SimplicialMesh, SolverConfig, SourceModel, TimeState, ValidationSolution,
};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    #[serde(default)]
    mesh: RawMesh,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    sources: RawSources,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    n: Option<usize>,
    file: Option<PathBuf>,
    levels: Option<Vec<usize>>,
    jitter: Option<f64>,
    seed: Option<u64>,
    angle_policy: Option<PolicyName>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PolicyName {
    Reject,
    Warn,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    preset: Option<PresetName>,
    capillary_amplitude: Option<f64>,
    theta_w: Option<f64>,
    theta_o: Option<f64>,
    alpha_w: Option<f64>,
    alpha_o: Option<f64>,
    beta3: Option<f64>,
    beta4: Option<f64>,
    alpha3: Option<f64>,
    k_w: Option<f64>,
    k_o: Option<f64>,
    c: Option<f64>,
    offset: Option<f64>,
    porosity: Option<RawPorosity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PresetName {
    Validation,
    BrooksCorey,
    PowerLaw,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum RawPorosity {
    Constant(f64),
    Named(PorosityName),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PorosityName {
    Validation,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSources {
    mode: Option<SourceMode>,
    boundary: Option<BoundaryName>,
    sampling: Option<SamplingName>,
    initial_saturation: Option<f64>,
    injection_saturation: Option<f64>,
    background_rate: Option<f64>,
    s_boundary: Option<f64>,
    pw_boundary: Option<f64>,
    #[serde(default)]
    injector: Vec<Well>,
    #[serde(default)]
    producer: Vec<Well>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    None,
    Wells,
    Manufactured,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum BoundaryName {
    NoFlux,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SamplingName {
    Nodal,
    Averaged,
}

/// Gaussian well `rate · exp(−|x − (x, y)|² / width²)`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Well {
    pub x: f64,
    pub y: f64,
    pub rate: f64,
    pub width: f64,
}

impl Well {
    fn eval(&self, x: f64, y: f64) -> f64 {
        self.rate * (-((x - self.x).powi(2) + (y - self.y).powi(2)) / (self.width * self.width)).exp()
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    scheme: Option<SchemeName>,
    tau: Option<f64>,
    tau_per_h: Option<f64>,
    t_final: Option<f64>,
    newton_tol: Option<f64>,
    newton_max_iters: Option<usize>,
    linear_solver: Option<LinearName>,
    linear_tol: Option<f64>,
    linear_max_iters: Option<usize>,
    parallel: Option<bool>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SchemeName {
    SemiImplicit,
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum LinearName {
    Direct,
    Iterative,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    formats: Option<Vec<Format>>,
    snapshot_every: Option<usize>,
    prefix: Option<String>,
    log: Option<String>,
    table: Option<String>,
    table_text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Vtk,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    UnitSquare {
        n: usize,
    },
    /// Equilateral lattice of `n × n` cells of spacing `1/n`, nodes displaced
    /// by up to `jitter / n`.
    Lattice {
        n: usize,
        jitter: f64,
        seed: u64,
    },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Validation,
    BrooksCorey(f64),
    PowerLaw(PowerLawParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PorositySpec {
    Constant(f64),
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub mode: SourceMode,
    pub dirichlet: bool,
    pub sampling: Sampling,
    pub initial_saturation: f64,
    pub injection_saturation: f64,
    pub background_rate: f64,
    pub s_boundary: f64,
    pub pw_boundary: f64,
    pub injectors: Vec<Well>,
    pub producers: Vec<Well>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSpec {
    pub scheme: Scheme,
    pub tau: Option<f64>,
    pub tau_per_h: Option<f64>,
    pub t_final: f64,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub linear_solver: LinearSolver,
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
    /// Write fields every this many steps; 0 writes only the final state.
    pub snapshot_every: usize,
    pub prefix: String,
    pub log: String,
    pub table: String,
    pub table_text: String,
}

/// Validated configuration. Relative paths are resolved against `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: Option<MeshSource>,
    pub levels: Option<Vec<usize>>,
    pub angle_policy: AnglePolicy,
    pub model: ModelSpec,
    pub porosity: PorositySpec,
    pub sources: SourceSpec,
    pub solver: SolverSpec,
    pub output: OutputSpec,
    /// Hex SHA-256 of the configuration text.
    pub hash: String,
}

/// Every problem found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub errors: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, e) in self.errors.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses and validates `text`; relative paths in it are taken relative to `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
    let raw: Raw =
        toml::from_str(text).map_err(|e| ConfigError { errors: vec![e.to_string().trim_end().to_string()] })?;
    let mut errs = Vec::new();
    let mut err = |m: String| errs.push(m);

    let finite_in = |v: f64, lo: f64, hi: f64| v.is_finite() && v >= lo && v <= hi;

    // mesh
    let m = &raw.mesh;
    if m.n.is_some() && m.file.is_some() {
        err("mesh.n and mesh.file are mutually exclusive".into());
    }
    if m.n == Some(0) {
        err("mesh.n must be at least 1".into());
    }
    if let Some(levels) = &m.levels {
        if levels.is_empty() {
            err("mesh.levels must not be empty".into());
        }
        if levels.contains(&0) {
            err("mesh.levels entries must be at least 1".into());
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            err("mesh.levels must be strictly increasing".into());
        }
    }
    if let Some(j) = m.jitter {
        if !finite_in(j, 0.0, 0.2) {
            err(format!("mesh.jitter must lie in [0, 0.2], got {j}"));
        }
        if m.n.is_none() {
            err("mesh.jitter needs mesh.n".into());
        }
    }
    if m.seed.is_some() && m.jitter.is_none() {
        err("mesh.seed only applies to a lattice mesh (mesh.jitter)".into());
    }
    let mesh = match (m.n, &m.file) {
        (Some(n), _) => Some(match m.jitter {
            Some(jitter) => MeshSource::Lattice { n, jitter, seed: m.seed.unwrap_or(0) },
            _ => MeshSource::UnitSquare { n },
        }),
        (None, Some(f)) => Some(MeshSource::File(base.join(f))),
        _ => None,
    };
    let angle_policy = match m.angle_policy {
        Some(PolicyName::Warn) => AnglePolicy::Warn,
        _ => AnglePolicy::Reject,
    };

    // model
    let md = &raw.model;
    let preset = md.preset.unwrap_or(PresetName::Validation);
    let power_keys = [
        ("theta_w", md.theta_w),
        ("theta_o", md.theta_o),
        ("alpha_w", md.alpha_w),
        ("alpha_o", md.alpha_o),
        ("beta3", md.beta3),
        ("beta4", md.beta4),
        ("alpha3", md.alpha3),
        ("k_w", md.k_w),
        ("k_o", md.k_o),
        ("c", md.c),
        ("offset", md.offset),
    ];
    if preset != PresetName::PowerLaw {
        for (k, v) in power_keys {
            if v.is_some() {
                err(format!("model.{k} only applies to preset \"power_law\""));
            }
        }
    }
    if preset != PresetName::BrooksCorey && md.capillary_amplitude.is_some() {
        err("model.capillary_amplitude only applies to preset \"brooks_corey\"".into());
    }
    let model = match preset {
        PresetName::Validation => ModelSpec::Validation,
        PresetName::BrooksCorey => match md.capillary_amplitude {
            Some(a) if a > 0.0 && a.is_finite() => ModelSpec::BrooksCorey(a),
            Some(a) => {
                err(format!("model.capillary_amplitude must be positive, got {a}"));
                ModelSpec::Validation
            }
            None => {
                err("model.capillary_amplitude required for preset \"brooks_corey\"".into());
                ModelSpec::Validation
            }
        },
        PresetName::PowerLaw => {
            let mut need = |k: &str, v: Option<f64>| {
                v.unwrap_or_else(|| {
                    err(format!("model.{k} required for preset \"power_law\""));
                    f64::NAN
                })
            };
            let p = PowerLawParams {
                theta_w: need("theta_w", md.theta_w),
                theta_o: need("theta_o", md.theta_o),
                alpha_w: need("alpha_w", md.alpha_w),
                alpha_o: need("alpha_o", md.alpha_o),
                beta3: need("beta3", md.beta3),
                beta4: need("beta4", md.beta4),
                alpha3: need("alpha3", md.alpha3),
                k_w: md.k_w,
                k_o: md.k_o,
                c: md.c,
                offset: md.offset.unwrap_or(0.0),
            };
            if [p.theta_w, p.theta_o, p.alpha_w, p.alpha_o, p.beta3, p.beta4, p.alpha3].iter().all(|v| !v.is_nan()) {
                if let Err(e) = make_power_law_model(&p) {
                    err(format!("model: {e}"));
                }
            }
            ModelSpec::PowerLaw(p)
        }
    };

    // sources
    let s = &raw.sources;
    let mode = s.mode.unwrap_or(SourceMode::None);
    let manufactured = mode == SourceMode::Manufactured;
    let dirichlet = s.boundary == Some(BoundaryName::Dirichlet);
    let porosity = match md.porosity {
        Some(RawPorosity::Constant(p)) => {
            if !(p > 0.0 && p <= 1.0) {
                err(format!("model.porosity must lie in (0, 1], got {p}"));
            }
            if manufactured {
                err("manufactured sources use model.porosity = \"validation\"".into());
            }
            PorositySpec::Constant(p)
        }
        Some(RawPorosity::Named(PorosityName::Validation)) => PorositySpec::Validation,
        None if manufactured => PorositySpec::Validation,
        None => PorositySpec::Constant(1.0),
    };
    if manufactured && !dirichlet {
        err("sources.mode = \"manufactured\" requires sources.boundary = \"dirichlet\"".into());
    }
    if !manufactured && s.sampling.is_some() {
        err("sources.sampling only applies to manufactured sources".into());
    }
    let wells_keys = [
        ("injection_saturation", s.injection_saturation.is_some()),
        ("background_rate", s.background_rate.is_some()),
        ("injector", !s.injector.is_empty()),
        ("producer", !s.producer.is_empty()),
    ];
    if mode != SourceMode::Wells {
        for (k, given) in wells_keys {
            if given {
                err(format!("sources.{k} only applies to sources.mode = \"wells\""));
            }
        }
    }
    if manufactured {
        for (k, v) in
            [("initial_saturation", s.initial_saturation), ("s_boundary", s.s_boundary), ("pw_boundary", s.pw_boundary)]
        {
            if v.is_some() {
                err(format!("sources.{k} is taken from the manufactured solution and must not be set"));
            }
        }
    } else if dirichlet {
        if s.s_boundary.is_none() {
            err("sources.s_boundary required for dirichlet boundaries".into());
        }
        if s.pw_boundary.is_none() {
            err("sources.pw_boundary required for dirichlet boundaries".into());
        }
    } else {
        for (k, v) in [("s_boundary", s.s_boundary), ("pw_boundary", s.pw_boundary)] {
            if v.is_some() {
                err(format!("sources.{k} only applies to dirichlet boundaries"));
            }
        }
    }
    for (k, v) in [
        ("initial_saturation", s.initial_saturation),
        ("injection_saturation", s.injection_saturation),
        ("s_boundary", s.s_boundary),
    ] {
        if let Some(v) = v {
            if !finite_in(v, 0.0, 1.0) {
                err(format!("sources.{k} must lie in [0, 1], got {v}"));
            }
        }
    }
    if let Some(p) = s.pw_boundary {
        if !p.is_finite() {
            err("sources.pw_boundary must be finite".into());
        }
    }
    if let Some(b) = s.background_rate {
        if !finite_in(b, 0.0, f64::MAX) {
            err(format!("sources.background_rate must be nonnegative, got {b}"));
        }
    }
    for (kind, wells) in [("injector", &s.injector), ("producer", &s.producer)] {
        for (k, w) in wells.iter().enumerate() {
            if !(w.x.is_finite() && w.y.is_finite()) {
                err(format!("sources.{kind}[{k}] position must be finite"));
            }
            if !finite_in(w.rate, 0.0, f64::MAX) || w.rate == 0.0 {
                err(format!("sources.{kind}[{k}].rate must be positive, got {}", w.rate));
            }
            if !(w.width > 0.0 && w.width.is_finite()) {
                err(format!("sources.{kind}[{k}].width must be positive, got {}", w.width));
            }
        }
    }
    if mode == SourceMode::Wells && !dirichlet && s.injector.is_empty() != s.producer.is_empty() {
        err("no-flux wells need both sources.injector and sources.producer entries so the rates can balance".into());
    }
    let sources = SourceSpec {
        mode,
        dirichlet,
        sampling: match s.sampling {
            Some(SamplingName::Averaged) => Sampling::Averaged,
            _ => Sampling::Nodal,
        },
        initial_saturation: s.initial_saturation.unwrap_or(0.0),
        injection_saturation: s.injection_saturation.unwrap_or(1.0),
        background_rate: s.background_rate.unwrap_or(0.0),
        s_boundary: s.s_boundary.unwrap_or(0.0),
        pw_boundary: s.pw_boundary.unwrap_or(0.0),
        injectors: s.injector.clone(),
        producers: s.producer.clone(),
    };

    // solver
    let sv = &raw.solver;
    match (sv.tau, sv.tau_per_h) {
        (None, None) => err("solver.tau required".into()),
        (Some(_), Some(_)) => err("solver.tau and solver.tau_per_h are mutually exclusive".into()),
        _ => {}
    }
    for (k, v) in [("tau", sv.tau), ("tau_per_h", sv.tau_per_h)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                err(format!("solver.{k} must be positive, got {v}"));
            }
        }
    }
    let t_final = match sv.t_final {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => {
            err(format!("solver.t_final must be positive, got {t}"));
            t
        }
        None => {
            err("solver.t_final required".into());
            f64::NAN
        }
    };
    if let (Some(tau), true) = (sv.tau, t_final > 0.0) {
        if tau > 0.0 {
            let steps = t_final / tau;
            if tau > t_final || (steps - steps.round()).abs() > 1e-9 * steps {
                err(format!("solver.t_final = {t_final} is not a whole number of steps of size {tau}"));
            }
        }
    }
    let newton_tol = sv.newton_tol.unwrap_or(1e-10);
    if !(newton_tol > 0.0 && newton_tol.is_finite()) {
        err(format!("solver.newton_tol must be positive, got {newton_tol}"));
    }
    let newton_max_iters = sv.newton_max_iters.unwrap_or(50);
    if newton_max_iters == 0 {
        err("solver.newton_max_iters must be at least 1".into());
    }
    let iterative = sv.linear_solver == Some(LinearName::Iterative);
    if !iterative && (sv.linear_tol.is_some() || sv.linear_max_iters.is_some()) {
        err("solver.linear_tol and solver.linear_max_iters apply to linear_solver = \"iterative\" only".into());
    }
    let linear_solver = if iterative {
        let tol = sv.linear_tol.unwrap_or(1e-12);
        let max_iters = sv.linear_max_iters.unwrap_or(2000);
        if !(tol > 0.0 && tol < 1.0) {
            err(format!("solver.linear_tol must lie in (0, 1), got {tol}"));
        }
        if max_iters == 0 {
            err("solver.linear_max_iters must be at least 1".into());
        }
        LinearSolver::Iterative { tol, max_iters }
    } else {
        LinearSolver::Direct
    };
    let solver = SolverSpec {
        scheme: match sv.scheme {
            Some(SchemeName::Implicit) => Scheme::Implicit,
            _ => Scheme::SemiImplicit,
        },
        tau: sv.tau,
        tau_per_h: sv.tau_per_h,
        t_final,
        newton_tol,
        newton_max_iters,
        linear_solver,
        parallel: sv.parallel.unwrap_or(true),
    };

    // output
    let o = &raw.output;
    let mut names = Vec::new();
    for (k, v) in [("prefix", &o.prefix), ("log", &o.log), ("table", &o.table), ("table_text", &o.table_text)] {
        if let Some(v) = v {
            if v.is_empty() || v.contains(['/', '\\']) {
                err(format!("output.{k} must be a plain file name, got {v:?}"));
            }
            names.push((k, v.as_str()));
        }
    }
    let formats = o.formats.clone().unwrap_or_else(|| vec![Format::Csv]);
    if formats.is_empty() {
        err("output.formats must not be empty".into());
    }
    let output = OutputSpec {
        dir: base.join(o.dir.clone().unwrap_or_else(|| PathBuf::from("output"))),
        formats,
        snapshot_every: o.snapshot_every.unwrap_or(0),
        prefix: o.prefix.clone().unwrap_or_else(|| "state".into()),
        log: o.log.clone().unwrap_or_else(|| "run_log.csv".into()),
        table: o.table.clone().unwrap_or_else(|| "convergence.csv".into()),
        table_text: o.table_text.clone().unwrap_or_else(|| "convergence.txt".into()),
    };

    if !errs.is_empty() {
        return Err(ConfigError { errors: errs });
    }
    Ok(RunConfig {
        mesh,
        levels: m.levels.clone(),
        angle_policy,
        model,
        porosity,
        sources,
        solver,
        output,
        hash: sha256_hex(text),
    })
}

impl ModelSpec {
    pub fn build(&self) -> twophase::Result<FluidModel> {
        match self {
            ModelSpec::Validation => Ok(FluidModel::validation()),
            ModelSpec::BrooksCorey(a) => FluidModel::brooks_corey(*a),
            ModelSpec::PowerLaw(p) => make_power_law_model(p),
        }
    }
}

impl PorositySpec {
    pub fn sample(&self, geom: &MeshGeometry) -> ElementField {
        match *self {
            PorositySpec::Constant(p) => ElementField::constant(geom, p),
            PorositySpec::Validation => sample_at_centroids(geom, validation_porosity),
        }
    }

    fn function(&self) -> impl Fn(f64, f64) -> f64 + Send + Sync + 'static {
        let spec = *self;
        move |x, y| match spec {
            PorositySpec::Constant(p) => p,
            PorositySpec::Validation => validation_porosity(x, y),
        }
    }
}

impl MeshSource {
    /// Mesh file errors come back as `Parse` or `InvalidArgument`; a missing
    /// file is reported as `InvalidArgument` with its path.
    pub fn build(&self) -> twophase::Result<SimplicialMesh> {
        match self {
            MeshSource::UnitSquare { n } => SimplicialMesh::unit_square(*n),
            MeshSource::Lattice { n, jitter, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                jittered_lattice(*n, *n, 1.0 / *n as f64, *jitter, &mut rng)
            }
            MeshSource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    twophase::Error::InvalidArgument(format!("cannot read mesh {}: {e}", path.display()))
                })?;
                load_mesh(&text)
            }
        }
    }
}

impl RunConfig {
    /// Solver settings for a run with step `tau`.
    pub fn solver_config(&self, tau: f64) -> SolverConfig {
        let mut cfg = SolverConfig::new(tau, self.solver.t_final, self.solver.scheme);
        cfg.newton_tol = self.solver.newton_tol;
        cfg.newton_max_iters = self.solver.newton_max_iters;
        cfg.linear_solver = self.solver.linear_solver;
        cfg
    }

    /// Sources, boundary data and the initial state on `geom`.
    pub fn build_problem(&self, geom: &MeshGeometry, model: &FluidModel) -> twophase::Result<(SourceModel, TimeState)> {
        let s = &self.sources;
        let nn = geom.num_nodes();
        match s.mode {
            SourceMode::Manufactured => {
                let ex: Arc<dyn ExactSolution> = Arc::new(ValidationSolution);
                let (f1, f2) = manufactured_sources(model, self.porosity.function(), ex.clone(), self.solver.t_final)?;
                let (es, ep) = (ex.clone(), ex.clone());
                let src = SourceModel::manufactured(f1, f2, s.sampling)
                    .with_dirichlet(scalar_fn(move |t, x, y| es.s(t, x, y)), scalar_fn(move |t, x, y| ep.pw(t, x, y)));
                let s0 = interpolate_nodal(geom, |x, y| ex.s(0.0, x, y)).into_values();
                let p0 = interpolate_nodal(geom, |x, y| ex.pw(0.0, x, y)).into_values();
                Ok((src, TimeState::new(geom, model, 0, 0.0, s0, p0)?))
            }
            SourceMode::None | SourceMode::Wells => {
                let mut src = if s.mode == SourceMode::None {
                    SourceModel::none()
                } else {
                    let (inj, bg) = (s.injectors.clone(), s.background_rate);
                    let q_in = move |x: f64, y: f64| bg + inj.iter().map(|w| w.eval(x, y)).sum::<f64>();
                    let prod = s.producers.clone();
                    let q_out_raw = move |x: f64, y: f64| prod.iter().map(|w| w.eval(x, y)).sum::<f64>();
                    // balance the totals on this mesh so the no-flux problem is solvable
                    let scale = if s.dirichlet {
                        1.0
                    } else {
                        let (a, b) = (
                            integrate_high_order(geom, |x, y| q_in(x, y) - bg),
                            integrate_high_order(geom, &q_out_raw),
                        );
                        if b > 0.0 {
                            a / b
                        } else {
                            0.0
                        }
                    };
                    let s_in = s.injection_saturation;
                    SourceModel::wells(
                        scalar_fn(move |_, x, y| q_in(x, y)),
                        scalar_fn(move |_, x, y| bg + scale * q_out_raw(x, y)),
                        scalar_fn(move |_, _, _| s_in),
                    )
                };
                let mut p0 = 0.0;
                if s.dirichlet {
                    let (sb, pb) = (s.s_boundary, s.pw_boundary);
                    src = src.with_dirichlet(scalar_fn(move |_, _, _| sb), scalar_fn(move |_, _, _| pb));
                    p0 = pb;
                }
                let init = TimeState::new(geom, model, 0, 0.0, vec![s.initial_saturation; nn], vec![p0; nn])?;
                Ok((src, init))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MMS: &str = r#"
[sources]
mode = "manufactured"
boundary = "dirichlet"

[solver]
tau_per_h = 1.0
t_final = 1.0
"#;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        parse_config(text, Path::new("/base"))
    }

    #[test]
    fn minimal_mms_config_is_valid() {
        let c = parse(MMS).unwrap();
        assert_eq!(c.sources.mode, SourceMode::Manufactured);
        assert_eq!(c.porosity, PorositySpec::Validation);
        assert_eq!(c.solver.scheme, Scheme::SemiImplicit);
        assert_eq!(c.output.dir, Path::new("/base/output"));
        assert_eq!(c.hash.len(), 64);
    }

    #[test]
    fn missing_tau_is_reported() {
        let e = parse("[solver]\nt_final = 1.0\n").unwrap_err();
        assert_eq!(e.errors, vec!["solver.tau required".to_string()]);
    }

    #[test]
    fn negative_tau_is_a_domain_error() {
        let e = parse("[solver]\ntau = -0.1\nt_final = 1.0\n").unwrap_err();
        assert!(e.errors.iter().any(|m| m.contains("solver.tau must be positive")), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let e = parse("[solver]\ntau = 0.1\nt_final = 1.0\nfoo = 3\n").unwrap_err();
        assert_eq!(e.errors.len(), 1);
        assert!(e.errors[0].contains("line 4") && e.errors[0].contains("foo"), "{e}");
        let e = parse("[meshes]\nn = 3\n").unwrap_err();
        assert!(e.errors[0].contains("meshes"), "{e}");
    }

    #[test]
    fn semantic_errors_are_listed_exhaustively() {
        let text = r#"
[mesh]
n = 4
file = "m.txt"
[model]
preset = "brooks_corey"
theta_w = 2.0
[sources]
mode = "wells"
boundary = "dirichlet"
initial_saturation = 1.5
[[sources.injector]]
x = 0.1
y = 0.1
rate = -1.0
width = 0.1
[solver]
t_final = 1.0
"#;
        let e = parse(text).unwrap_err();
        let expect = [
            "mesh.n and mesh.file",
            "model.theta_w only applies",
            "model.capillary_amplitude required",
            "sources.s_boundary required",
            "sources.pw_boundary required",
            "sources.initial_saturation must lie",
            "sources.injector[0].rate",
            "solver.tau required",
        ];
        for x in expect {
            assert!(e.errors.iter().any(|m| m.contains(x)), "missing {x:?} in\n{e}");
        }
        assert_eq!(e.errors.len(), expect.len(), "{e}");
    }

    #[test]
    fn power_law_parameters_are_checked_by_the_model() {
        let text = r#"
[model]
preset = "power_law"
theta_w = 2.0
theta_o = 2.0
alpha_w = 1.5
alpha_o = 0.5
beta3 = 0.7
beta4 = 0.8
alpha3 = 0.5
[solver]
tau = 0.1
t_final = 1.0
"#;
        let e = parse(text).unwrap_err();
        assert_eq!(e.errors.len(), 1);
        assert!(e.errors[0].starts_with("model:"), "{e}");
        assert!(parse(&text.replace("1.5", "0.5")).is_ok());
    }

    #[test]
    fn steps_must_divide_the_final_time() {
        let e = parse("[solver]\ntau = 0.3\nt_final = 1.0\n").unwrap_err();
        assert!(e.errors[0].contains("whole number of steps"), "{e}");
    }

    #[test]
    fn manufactured_mode_requires_dirichlet_and_its_own_data() {
        let text = MMS.replace("boundary = \"dirichlet\"", "initial_saturation = 0.5");
        let e = parse(&text).unwrap_err();
        assert_eq!(e.errors.len(), 2, "{e}");
    }

    #[test]
    fn hash_tracks_the_text() {
        let a = parse(MMS).unwrap();
        let b = parse(&format!("{MMS}\n# comment\n")).unwrap();
        assert_ne!(a.hash, b.hash);
        assert_eq!(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn wells_balance_under_no_flux() {
        let text = r#"
[mesh]
n = 6
[sources]
mode = "wells"
initial_saturation = 0.2
background_rate = 0.1
[[sources.injector]]
x = 0.2
y = 0.2
rate = 1.0
width = 0.2
[[sources.producer]]
x = 0.8
y = 0.8
rate = 3.0
width = 0.1
[solver]
tau = 0.05
t_final = 0.1
"#;
        let c = parse(text).unwrap();
        let geom = MeshGeometry::new(&c.mesh.as_ref().unwrap().build().unwrap()).unwrap();
        let model = c.model.build().unwrap();
        let (src, init) = c.build_problem(&geom, &model).unwrap();
        assert!(init.s.values().iter().all(|&v| v == 0.2));
        let d = twophase::stepper::build_discrete_sources(&src, &geom, 0.05, 1).unwrap();
        let (a, b) = d.well_totals(&geom).unwrap();
        assert!((a - b).abs() < 1e-12 * a, "{a} {b}");
    }
}
