//! Manufactured solutions, error norms and the convergence study.

use std::fmt::{self, Write as _};
use std::sync::Arc;

use crate::constitutive::FluidModel;
use crate::error::{Error, Result};
use crate::fem::{interpolate_nodal, l2_norm, sample_at_centroids, NodalField};
use crate::mesh::{MeshGeometry, SimplicialMesh};
use crate::state::TimeState;
use crate::stepper::{run, scalar_fn, LinearSolver, Problem, Sampling, ScalarFn, Scheme, SolverConfig, SourceModel};

/// Smooth exact fields with the derivatives needed by the source terms.
pub trait ExactSolution: Send + Sync {
    fn pw(&self, t: f64, x: f64, y: f64) -> f64;
    fn pw_grad(&self, t: f64, x: f64, y: f64) -> [f64; 2];
    fn pw_laplacian(&self, t: f64, x: f64, y: f64) -> f64;
    fn s(&self, t: f64, x: f64, y: f64) -> f64;
    fn s_t(&self, t: f64, x: f64, y: f64) -> f64;
    fn s_grad(&self, t: f64, x: f64, y: f64) -> [f64; 2];
    fn s_laplacian(&self, t: f64, x: f64, y: f64) -> f64;
}

/// `P_w = 2 + x²y − y² + x² sin(t+y)`, `S = 0.2 (2 + 2xy + cos(t+x))`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ValidationSolution;

impl ExactSolution for ValidationSolution {
    fn pw(&self, t: f64, x: f64, y: f64) -> f64 {
        2.0 + x * x * y - y * y + x * x * (t + y).sin()
    }

    fn pw_grad(&self, t: f64, x: f64, y: f64) -> [f64; 2] {
        [2.0 * x * y + 2.0 * x * (t + y).sin(), x * x - 2.0 * y + x * x * (t + y).cos()]
    }

    fn pw_laplacian(&self, t: f64, x: f64, y: f64) -> f64 {
        2.0 * y + 2.0 * (t + y).sin() - 2.0 - x * x * (t + y).sin()
    }

    fn s(&self, t: f64, x: f64, y: f64) -> f64 {
        0.2 * (2.0 + 2.0 * x * y + (t + x).cos())
    }

    fn s_t(&self, t: f64, x: f64, _y: f64) -> f64 {
        -0.2 * (t + x).sin()
    }

    fn s_grad(&self, t: f64, x: f64, y: f64) -> [f64; 2] {
        [0.2 * (2.0 * y - (t + x).sin()), 0.4 * x]
    }

    fn s_laplacian(&self, t: f64, x: f64, _y: f64) -> f64 {
        -0.2 * (t + x).cos()
    }
}

/// Porosity of the validation problem.
pub fn validation_porosity(x: f64, y: f64) -> f64 {
    0.2 * (1.0 + x * y)
}

/// Checks `0 < S < 1` on a space-time sampling grid of `Ω × [0, T]`.
pub fn check_exact_range(exact: &dyn ExactSolution, t_final: f64) -> Result<()> {
    const N: usize = 20;
    for a in 0..=N {
        let t = t_final * a as f64 / N as f64;
        for b in 0..=N {
            for c in 0..=N {
                let (x, y) = (b as f64 / N as f64, c as f64 / N as f64);
                let s = exact.s(t, x, y);
                if !(s > 0.0 && s < 1.0) {
                    return Err(Error::Data(format!(
                        "exact saturation {s} at (t, x, y) = ({t}, {x}, {y}) leaves (0, 1)"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// `f1 = ∂_t(φS) − ∇·(η_w ∇P_w)` and `f2 = −∂_t(φS) − ∇·(η_o ∇(P_w + p_c(S)))`.
pub fn manufactured_sources(
    model: &FluidModel,
    phi: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    exact: Arc<dyn ExactSolution>,
    t_final: f64,
) -> Result<(ScalarFn, ScalarFn)> {
    check_exact_range(exact.as_ref(), t_final)?;
    let phi = Arc::new(phi);
    let (m1, e1, p1) = (model.clone(), exact.clone(), phi.clone());
    let f1 = scalar_fn(move |t, x, y| {
        let s = e1.s(t, x, y);
        let (gs, gp) = (e1.s_grad(t, x, y), e1.pw_grad(t, x, y));
        let div = m1.eta_w_prime(s) * dot(gs, gp) + m1.eta_w(s) * e1.pw_laplacian(t, x, y);
        p1(x, y) * e1.s_t(t, x, y) - div
    });
    let m2 = model.clone();
    let f2 = scalar_fn(move |t, x, y| {
        let s = exact.s(t, x, y);
        let (gs, gp) = (exact.s_grad(t, x, y), exact.pw_grad(t, x, y));
        let dpc = m2.pc_prime(s);
        let gpo = [gp[0] + dpc * gs[0], gp[1] + dpc * gs[1]];
        let lap_po = exact.pw_laplacian(t, x, y) + m2.pc_second(s) * dot(gs, gs) + dpc * exact.s_laplacian(t, x, y);
        let div = m2.eta_o_prime(s) * dot(gs, gpo) + m2.eta_o(s) * lap_po;
        -phi(x, y) * exact.s_t(t, x, y) - div
    });
    Ok((f1, f2))
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `‖U_h − I_h u‖_{L²}` with the exact P1 mass matrix.
pub fn l2_error(geom: &MeshGeometry, field: &NodalField, exact: impl Fn(f64, f64) -> f64) -> Result<f64> {
    let diff = field.zip_with(&interpolate_nodal(geom, exact), |a, b| a - b)?;
    l2_norm(geom, &diff)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub n_df: usize,
    pub err_pw: f64,
    pub rate_pw: Option<f64>,
    pub err_s: f64,
    pub rate_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTable {
    rows: Vec<ConvergenceRow>,
}

/// `log(e_prev / e) / log(h_prev / h)`.
pub fn observed_rate(e_prev: f64, e: f64, h_prev: f64, h: f64) -> f64 {
    (e_prev / e).ln() / (h_prev / h).ln()
}

impl ConvergenceTable {
    /// Builds rows from `(h, n_df, err_pw, err_s)` in refinement order.
    pub fn from_errors(levels: &[(f64, usize, f64, f64)]) -> Self {
        let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels.len());
        for &(h, n_df, err_pw, err_s) in levels {
            let (rate_pw, rate_s) = match rows.last() {
                Some(p) => (Some(observed_rate(p.err_pw, err_pw, p.h, h)), Some(observed_rate(p.err_s, err_s, p.h, h))),
                None => (None, None),
            };
            rows.push(ConvergenceRow { h, n_df, err_pw, rate_pw, err_s, rate_s });
        }
        ConvergenceTable { rows }
    }

    pub fn rows(&self) -> &[ConvergenceRow] {
        &self.rows
    }

    pub fn to_csv(&self) -> String {
        let rate = |r: Option<f64>| r.map(|v| format!("{v:e}")).unwrap_or_default();
        let mut out = String::from("h,n_df,err_pw,rate_pw,err_s,rate_s\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:e},{},{:e},{},{:e},{}",
                r.h,
                r.n_df,
                r.err_pw,
                rate(r.rate_pw),
                r.err_s,
                rate(r.rate_s)
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let rate = |r: Option<f64>| r.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
        let mut out =
            format!("{:>9} {:>8} {:>12} {:>6} {:>12} {:>6}\n", "h", "n_df", "err(P_w)", "rate", "err(S)", "rate");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>9} {:>8} {:>12} {:>6} {:>12} {:>6}",
                format!("{}", r.h),
                r.n_df,
                sci(r.err_pw),
                rate(r.rate_pw),
                sci(r.err_s),
                rate(r.rate_s)
            );
        }
        out
    }
}

/// `8.50E-3` style.
fn sci(v: f64) -> String {
    format!("{v:.2E}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    /// Cells per side, coarsest first.
    pub levels: Vec<usize>,
    pub t_final: f64,
    pub scheme: Scheme,
    /// `τ = tau_scale · h`.
    pub tau_scale: f64,
    pub linear_solver: LinearSolver,
    pub sampling: Sampling,
    /// Run the levels on separate threads.
    pub parallel: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            levels: vec![5, 10, 20, 40, 80],
            t_final: 1.0,
            scheme: Scheme::SemiImplicit,
            tau_scale: 1.0,
            linear_solver: LinearSolver::Direct,
            sampling: Sampling::Nodal,
            parallel: true,
        }
    }
}

/// A failed level; `partial` holds the levels before it.
#[derive(Debug, thiserror::Error)]
#[error("convergence study failed on the {n}x{n} mesh: {source}")]
pub struct StudyError {
    pub n: usize,
    pub partial: ConvergenceTable,
    #[source]
    pub source: Error,
}

/// Final-time `(err_pw, err_s)` of the validation run on the `n × n` mesh.
pub fn run_level(model: &FluidModel, exact: Arc<dyn ExactSolution>, n: usize, cfg: &StudyConfig) -> Result<(f64, f64)> {
    let mesh = SimplicialMesh::unit_square(n)?;
    let geom = MeshGeometry::new(&mesh)?;
    let h = 1.0 / n as f64;
    let mut solver = SolverConfig::new(cfg.tau_scale * h, cfg.t_final, cfg.scheme);
    solver.linear_solver = cfg.linear_solver;
    let (f1, f2) = manufactured_sources(model, validation_porosity, exact.clone(), cfg.t_final)?;
    let (es, ep) = (exact.clone(), exact.clone());
    let src = SourceModel::manufactured(f1, f2, cfg.sampling)
        .with_dirichlet(scalar_fn(move |t, x, y| es.s(t, x, y)), scalar_fn(move |t, x, y| ep.pw(t, x, y)));
    let problem = Problem::new(&geom, model, sample_at_centroids(&geom, validation_porosity), src)?;
    let s0 = interpolate_nodal(&geom, |x, y| exact.s(0.0, x, y)).into_values();
    let p0 = interpolate_nodal(&geom, |x, y| exact.pw(0.0, x, y)).into_values();
    let initial = TimeState::new(&geom, model, 0, 0.0, s0, p0)?;
    let out = run(&problem, initial, &solver, |_, _| Ok(()))?;
    let t = out.state.t;
    let err_pw = l2_error(&geom, &out.state.pw, |x, y| exact.pw(t, x, y))?;
    let err_s = l2_error(&geom, &out.state.s, |x, y| exact.s(t, x, y))?;
    Ok((err_pw, err_s))
}

/// Runs every level with `τ = tau_scale · h` to the final time and tabulates
/// the final-time errors.
pub fn convergence_study(
    model: &FluidModel,
    exact: Arc<dyn ExactSolution>,
    cfg: &StudyConfig,
) -> std::result::Result<ConvergenceTable, StudyError> {
    let results: Vec<Result<(f64, f64)>> = if cfg.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = cfg
                .levels
                .iter()
                .map(|&n| {
                    let exact = exact.clone();
                    scope.spawn(move || run_level(model, exact, n, cfg))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Solver("level thread panicked".into()))))
                .collect()
        })
    } else {
        cfg.levels.iter().map(|&n| run_level(model, exact.clone(), n, cfg)).collect()
    };
    let mut done = Vec::new();
    for (&n, res) in cfg.levels.iter().zip(results) {
        match res {
            Ok((ep, es)) => done.push((1.0 / n as f64, (n + 1) * (n + 1), ep, es)),
            Err(source) => {
                return Err(StudyError { n, partial: ConvergenceTable::from_errors(&done), source });
            }
        }
    }
    Ok(ConvergenceTable::from_errors(&done))
}

impl fmt::Display for ConvergenceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
