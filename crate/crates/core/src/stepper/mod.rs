//! Time integration of the coupled saturation–pressure system.

pub mod linear;
pub mod sources;
mod system;

use std::io::Write;

pub use linear::{LinearSolver, SparseSystem};
pub use sources::{
    build_discrete_sources, scalar_fn, BoundaryCondition, DiscreteSources, Sampling, ScalarFn, SourceModel, Sources,
};
pub use system::{assemble_semi_implicit, ImplicitSystem, JacobianKind};

use crate::constitutive::{Aux, FluidModel};
use crate::error::{Error, Result};
use crate::fem::{stiffness_pairing, ElementField, NodalField};
use crate::mesh::MeshGeometry;
use crate::state::TimeState;
use crate::upwind::{energy_diagnostic, total_flux};
use system::{interleave, split};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Frozen mobilities and linearized capillary pressure; one linear solve per step.
    SemiImplicit,
    /// Newton on the fully coupled nonlinear equations.
    Implicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tau: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    /// Backtracking factor of the line search.
    pub line_search_factor: f64,
    /// Smallest accepted line-search step.
    pub min_step: f64,
    pub linear_solver: LinearSolver,
    /// Use the zero-mean row in no-flux mode. Disabling it leaves the
    /// semi-implicit system singular.
    pub mean_constraint: bool,
}

impl SolverConfig {
    pub fn new(tau: f64, t_final: f64, scheme: Scheme) -> Self {
        SolverConfig {
            tau,
            t_final,
            scheme,
            newton_tol: 1e-10,
            newton_max_iters: 50,
            line_search_factor: 0.5,
            min_step: 0.5f64.powi(20),
            linear_solver: LinearSolver::Direct,
            mean_constraint: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.t_final >= self.tau) || !self.t_final.is_finite() {
            return Err(Error::invalid(format!("final time {} must be at least tau = {}", self.t_final, self.tau)));
        }
        let n = self.t_final / self.tau;
        if (n - n.round()).abs() > 1e-9 * n {
            return Err(Error::invalid(format!(
                "final time {} is not a whole number of steps of size {}",
                self.t_final, self.tau
            )));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iters == 0 {
            return Err(Error::invalid("Newton tolerance and iteration limit must be positive"));
        }
        if !(self.line_search_factor > 0.0 && self.line_search_factor < 1.0)
            || !(self.min_step > 0.0 && self.min_step <= 1.0)
        {
            return Err(Error::invalid("line search factor must lie in (0, 1) and the minimum step in (0, 1]"));
        }
        if let LinearSolver::Iterative { tol, max_iters } = self.linear_solver {
            if !(tol > 0.0) || max_iters == 0 {
                return Err(Error::invalid("iterative solver needs a positive tolerance and iteration limit"));
            }
        }
        Ok(())
    }

    /// `N = T / τ`.
    pub fn num_steps(&self) -> usize {
        (self.t_final / self.tau).round() as usize
    }
}

/// Everything a step needs besides the state: mesh, fluids, porosity and data.
pub struct Problem<'a> {
    pub geom: &'a MeshGeometry,
    pub model: &'a FluidModel,
    pub porosity: ElementField,
    pub sources: SourceModel,
    weighted_masses: Vec<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(
        geom: &'a MeshGeometry,
        model: &'a FluidModel,
        porosity: ElementField,
        sources: SourceModel,
    ) -> Result<Self> {
        if porosity.mesh_id() != geom.id() {
            return Err(Error::invalid("porosity belongs to a different mesh"));
        }
        if let Some((k, v)) = porosity.values().iter().enumerate().find(|(_, &v)| !(v > 0.0 && v <= 1.0)) {
            return Err(Error::invalid(format!("porosity must lie in (0, 1], got {v} on element {k}")));
        }
        let weighted_masses = geom.weighted_masses(porosity.values());
        Ok(Problem { geom, model, porosity, sources, weighted_masses })
    }

    /// `m̃_i = (1/3) Σ φ_K |K|`.
    pub fn weighted_masses(&self) -> &[f64] {
        &self.weighted_masses
    }
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub state: TimeState,
    /// Linear solves performed (zero or one for the semi-implicit scheme).
    pub newton_iters: usize,
    /// Whether the frozen-mobility iteration was needed.
    pub used_fallback: bool,
    /// Final `‖R‖_∞` of the implicit equations; zero for the semi-implicit scheme.
    pub residual: f64,
    /// Residual of the wetting equation replaced by the mean constraint.
    pub omitted_row: Option<f64>,
    pub sources: DiscreteSources,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, a| m.max(a.abs()))
}

fn state_from(problem: &Problem, n: usize, t: f64, x: &[f64]) -> Result<TimeState> {
    let (s, p) = split(x);
    TimeState::new(problem.geom, problem.model, n, t, s, p)
}

/// Implicit equations at `guess`, with the previous level `old`.
pub fn residual_implicit(problem: &Problem, guess: &TimeState, old: &TimeState, tau: f64) -> Result<Vec<f64>> {
    let sys = ImplicitSystem::new(problem, old, tau)?;
    Ok(sys.residual(&interleave(guess.s.values(), guess.pw.values())))
}

#[derive(Debug)]
struct NewtonResult {
    x: Vec<f64>,
    iters: usize,
    fallback: bool,
    residual: f64,
}

/// Damped Newton with a backtracking line search. When Newton stalls the
/// iteration restarts from the best iterate with the frozen-mobility Jacobian.
fn newton(
    sys: &ImplicitSystem,
    x0: Vec<f64>,
    cfg: &SolverConfig,
    phases: &[JacobianKind],
) -> std::result::Result<NewtonResult, String> {
    let mut x = x0;
    let mut r = sys.residual(&x);
    let mut norm = inf_norm(&r);
    let mut iters = 0;
    for &kind in phases {
        'iterate: for _ in 0..cfg.newton_max_iters {
            if norm <= cfg.newton_tol {
                break;
            }
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let Ok(dx) = sys.jacobian(&x, kind).solve(&rhs, cfg.linear_solver) else {
                break;
            };
            iters += 1;
            let mut lambda = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + lambda * d).collect();
                let rt = sys.residual(&trial);
                let nt = inf_norm(&rt);
                if nt <= (1.0 - 1e-4 * lambda) * norm {
                    x = trial;
                    r = rt;
                    norm = nt;
                    break;
                }
                lambda *= cfg.line_search_factor;
                if lambda < cfg.min_step {
                    break 'iterate;
                }
            }
        }
        if norm <= cfg.newton_tol {
            return Ok(NewtonResult { x, iters, fallback: kind == JacobianKind::Picard, residual: norm });
        }
    }
    Err(format!(
        "nonlinear iteration did not converge: residual {norm:.3e} > {:.1e} after {iters} linear solves including the fixed-point fallback; reduce the time step",
        cfg.newton_tol
    ))
}

/// One step of the fully implicit scheme.
pub fn step_implicit(problem: &Problem, old: &TimeState, cfg: &SolverConfig) -> Result<StepReport> {
    let n = old.n + 1;
    let step_err = |msg: String| Error::Step { step: n, msg };
    let sys = ImplicitSystem::new(problem, old, cfg.tau)?;
    let x0 = sys.initial_guess(old);
    let res = newton(&sys, x0, cfg, &[JacobianKind::Newton, JacobianKind::Picard]).map_err(step_err)?;
    let state = state_from(problem, n, n as f64 * cfg.tau, &res.x)?;
    Ok(StepReport {
        omitted_row: sys.omitted_row(&res.x),
        state,
        newton_iters: res.iters,
        used_fallback: res.fallback,
        residual: res.residual,
        sources: sys.sources().clone(),
    })
}

/// One step of the semi-implicit scheme. `P_o` of the result is
/// `P_w + I_h p_c(S^{n+1})`.
pub fn step_semi_implicit(problem: &Problem, old: &TimeState, cfg: &SolverConfig) -> Result<StepReport> {
    let n = old.n + 1;
    let no_flux = problem.sources.is_no_flux();
    if no_flux && !cfg.mean_constraint {
        return Err(Error::Solver(
            "pressure is determined only up to a constant (nullspace spanned by P_w = 1); enable the mean constraint or use Dirichlet data".into(),
        ));
    }
    let (a, rhs, sources) = assemble_semi_implicit(problem, old, cfg.tau, cfg.mean_constraint)?;
    let x = a.solve(&rhs, cfg.linear_solver).map_err(|e| Error::Step { step: n, msg: e.to_string() })?;
    let (s, mut p) = split(&x);
    if no_flux {
        let m = problem.geom.masses();
        let mean = m.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>() / m.iter().sum::<f64>();
        p.iter_mut().for_each(|v| *v -= mean);
    }
    let state = TimeState::new(problem.geom, problem.model, n, n as f64 * cfg.tau, s, p)?;
    Ok(StepReport { state, newton_iters: 1, used_fallback: false, residual: 0.0, omitted_row: None, sources })
}

pub fn step(problem: &Problem, old: &TimeState, cfg: &SolverConfig) -> Result<StepReport> {
    match cfg.scheme {
        Scheme::SemiImplicit => step_semi_implicit(problem, old, cfg),
        Scheme::Implicit => step_implicit(problem, old, cfg),
    }
}

/// `max_i |Σ_j c_ij F^{ij} − (source_w + source_o)_i|` over the nodes that
/// carry a flux equation.
pub fn flux_imbalance(problem: &Problem, state: &TimeState, sources: &DiscreteSources) -> Result<f64> {
    let geom = problem.geom;
    let div = total_flux(geom, state, problem.model)?.divergence(geom);
    let m = geom.masses();
    let dirichlet = !problem.sources.is_no_flux();
    let mut worst = 0.0f64;
    for i in 0..geom.num_nodes() {
        if dirichlet && geom.mesh().is_boundary(i) {
            continue;
        }
        let src = match sources {
            DiscreteSources::Wells { q_in, q_out, .. } => m[i] * (q_in[i] - q_out[i]),
            DiscreteSources::Manufactured { f1, f2 } => m[i] * (f1[i] + f2[i]),
        };
        worst = worst.max((div[i] - src).abs());
    }
    Ok(worst)
}

/// `Σ m_i P_w^i / Σ m_i`.
pub fn mean_pressure(geom: &MeshGeometry, state: &TimeState) -> f64 {
    let m = geom.masses();
    m.iter().zip(state.pw.values()).map(|(a, b)| a * b).sum::<f64>() / m.iter().sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub t: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub mean_pw: f64,
    /// `Σ τ · energy` over the steps so far.
    pub energy_acc: f64,
    pub flux_imbalance: f64,
    pub newton_iters: usize,
}

/// Per-step diagnostics, one row per time level starting with the initial state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    rows: Vec<LogRow>,
}

impl RunLog {
    pub const HEADER: &'static str = "step,t,min_S,max_S,mean_Pw,energy_acc,flux_imbalance,newton_iters";

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn push(&mut self, row: LogRow) {
        self.rows.push(row);
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", Self::HEADER)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                r.step, r.t, r.min_s, r.max_s, r.mean_pw, r.energy_acc, r.flux_imbalance, r.newton_iters
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: TimeState,
    pub log: RunLog,
}

/// Advances `initial` to the final time. `observer` sees every level,
/// including the initial one, right after its log row is recorded.
pub fn run(
    problem: &Problem,
    initial: TimeState,
    cfg: &SolverConfig,
    mut observer: impl FnMut(&TimeState, &LogRow) -> Result<()>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let geom = problem.geom;
    let mut log = RunLog::default();
    let first = LogRow {
        step: initial.n,
        t: initial.t,
        min_s: initial.s.min(),
        max_s: initial.s.max(),
        mean_pw: mean_pressure(geom, &initial),
        energy_acc: 0.0,
        flux_imbalance: 0.0,
        newton_iters: 0,
    };
    log.rows.push(first);
    observer(&initial, &first)?;
    let mut state = initial;
    let mut energy = 0.0;
    for _ in 0..cfg.num_steps() {
        let report = step(problem, &state, cfg)?;
        let n = report.state.n;
        let with_step = |e: Error| match e {
            Error::Step { .. } => e,
            other => Error::Step { step: n, msg: other.to_string() },
        };
        energy += cfg.tau * energy_diagnostic(geom, &report.state, problem.model).map_err(with_step)?;
        let row = LogRow {
            step: n,
            t: report.state.t,
            min_s: report.state.s.min(),
            max_s: report.state.s.max(),
            mean_pw: mean_pressure(geom, &report.state),
            energy_acc: energy,
            flux_imbalance: flux_imbalance(problem, &report.state, &report.sources).map_err(with_step)?,
            newton_iters: report.newton_iters,
        };
        log.rows.push(row);
        observer(&report.state, &row)?;
        state = report.state;
    }
    Ok(RunOutput { state, log })
}

/// Discrete auxiliary pressures `U_w = P_w + I_h p_wg(S)` and
/// `U_o = P_o − I_h p_og(S)` with their gradient `L²` norms.
#[derive(Debug, Clone)]
pub struct AuxiliaryPressures {
    pub u_w: NodalField,
    pub u_o: NodalField,
    pub grad_w: f64,
    pub grad_o: f64,
}

pub fn auxiliary_pressures(geom: &MeshGeometry, state: &TimeState, model: &FluidModel) -> Result<AuxiliaryPressures> {
    let u_w = state.pw.zip_with(&state.s, |p, s| p + model.eval_aux(Aux::Pwg, s))?;
    let u_o = state.po.zip_with(&state.s, |p, s| p - model.eval_aux(Aux::Pog, s))?;
    let grad_w = stiffness_pairing(geom, &u_w, &u_w, None)?.sqrt();
    let grad_o = stiffness_pairing(geom, &u_o, &u_o, None)?.sqrt();
    Ok(AuxiliaryPressures { u_w, u_o, grad_w, grad_o })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::sample_at_centroids;
    use crate::mesh::SimplicialMesh;
    use crate::upwind::{upwind_pick, Phase};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(n: usize) -> MeshGeometry {
        MeshGeometry::new(&SimplicialMesh::unit_square(n).unwrap()).unwrap()
    }

    fn porosity(g: &MeshGeometry) -> ElementField {
        sample_at_centroids(g, |x, y| 0.2 * (1.0 + x * y))
    }

    fn wells() -> SourceModel {
        let bump = |x: f64, y: f64| 0.05 + 4.0 * (-30.0 * ((x - 0.2).powi(2) + (y - 0.2).powi(2))).exp();
        let sink = |x: f64, y: f64| 0.05 + 4.0 * (-30.0 * ((x - 0.8).powi(2) + (y - 0.8).powi(2))).exp();
        SourceModel::wells(
            scalar_fn(move |_, x, y| bump(x, y)),
            scalar_fn(move |_, x, y| sink(x, y)),
            scalar_fn(|_, _, _| 1.0),
        )
    }

    fn random_state(g: &MeshGeometry, m: &FluidModel, rng: &mut ChaCha8Rng) -> TimeState {
        let nn = g.num_nodes();
        let s = (0..nn).map(|_| rng.gen_range(0.1..0.9)).collect();
        let p = (0..nn).map(|_| rng.gen_range(-1.0..1.0)).collect();
        TimeState::new(g, m, 0, 0.0, s, p).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(0.1, 1.0, Scheme::Implicit).validate().is_ok());
        assert_eq!(SolverConfig::new(0.2, 1.0, Scheme::Implicit).num_steps(), 5);
        assert!(SolverConfig::new(0.0, 1.0, Scheme::Implicit).validate().is_err());
        assert!(SolverConfig::new(0.1, 0.05, Scheme::Implicit).validate().is_err());
        assert!(SolverConfig::new(0.3, 1.0, Scheme::Implicit).validate().is_err());
    }

    #[test]
    fn constant_state_is_preserved() {
        let g = square(4);
        let m = FluidModel::validation();
        let prob = Problem::new(&g, &m, porosity(&g), SourceModel::none()).unwrap();
        let old = TimeState::new(&g, &m, 0, 0.0, vec![0.4; g.num_nodes()], vec![0.0; g.num_nodes()]).unwrap();
        for scheme in [Scheme::Implicit, Scheme::SemiImplicit] {
            let cfg = SolverConfig::new(0.1, 1.0, scheme);
            let rep = step(&prob, &old, &cfg).unwrap();
            assert!(rep.newton_iters <= 1);
            for (a, b) in rep.state.s.values().iter().zip(old.s.values()) {
                assert!((a - b).abs() < 1e-14);
            }
            // LU round-off only
            assert!(rep.state.pw.values().iter().all(|v| v.abs() < 1e-13), "{scheme:?} {:?}", rep.state.pw.values());
        }
    }

    fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Vec<Vec<f64>> {
        let n = x.len();
        let mut jac = vec![vec![0.0; n]; n];
        for k in 0..n {
            let h = 1e-6 * (1.0 + x[k].abs());
            let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
            xp[k] += h;
            xm[k] -= h;
            let (rp, rm) = (f(&xp), f(&xm));
            for r in 0..n {
                jac[r][k] = (rp[r] - rm[r]) / (2.0 * h);
            }
        }
        jac
    }

    fn assert_close(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) {
        let scale = a.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        for (r, (ra, rb)) in a.iter().zip(b).enumerate() {
            for (c, (x, y)) in ra.iter().zip(rb).enumerate() {
                assert!((x - y).abs() <= tol * scale, "entry ({r},{c}): {x} vs {y}");
            }
        }
    }

    #[test]
    fn newton_jacobian_matches_finite_differences() {
        let g = square(2);
        let m = FluidModel::validation();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for src in [wells(), wells().with_dirichlet(scalar_fn(|_, x, _| 0.3 + 0.2 * x), scalar_fn(|_, _, y| y))] {
            let prob = Problem::new(&g, &m, porosity(&g), src).unwrap();
            let old = random_state(&g, &m, &mut rng);
            let sys = ImplicitSystem::new(&prob, &old, 0.05).unwrap();
            let guess = random_state(&g, &m, &mut rng);
            let x = interleave(guess.s.values(), guess.pw.values());
            let analytic = sys.jacobian(&x, JacobianKind::Newton).to_dense();
            let fd = fd_jacobian(|y| sys.residual(y), &x);
            assert_close(&analytic, &fd, 1e-6);
        }
    }

    /// Semi-implicit equations evaluated directly from their definition.
    fn semi_implicit_equations(prob: &Problem, old: &TimeState, tau: f64, x: &[f64]) -> Vec<f64> {
        let (g, m) = (prob.geom, prob.model);
        let (s, p) = split(x);
        let (s0, pw0, po0) = (old.s.values(), old.pw.values(), old.po.values());
        let nn = g.num_nodes();
        let pc_star: Vec<f64> = (0..nn).map(|i| m.pc(s0[i]) + m.pc_prime(s0[i]) * (s[i] - s0[i])).collect();
        let src = build_discrete_sources(&prob.sources, g, tau, 1).unwrap();
        let DiscreteSources::Wells { q_in, q_out, s_in } = src else { unreachable!() };
        let mut r = vec![0.0; 2 * nn];
        for i in 0..nn {
            let acc = prob.weighted_masses()[i] / tau * (s[i] - s0[i]);
            let mi = g.masses()[i];
            r[2 * i] = acc - mi * (m.f_w(s_in[i]) * q_in[i] - m.f_w(s0[i]) * q_out[i]);
            r[2 * i + 1] = -acc - mi * (m.f_o(s_in[i]) * q_in[i] - m.f_o(s0[i]) * q_out[i]);
            for &(j, _) in g.neighbors(i) {
                let c = g.c(i, j);
                let ew = m.eta_w(upwind_pick(Phase::Wetting, s0[i], s0[j], pw0[i], pw0[j]).0);
                let eo = m.eta_o(upwind_pick(Phase::Nonwetting, s0[i], s0[j], po0[i], po0[j]).0);
                r[2 * i] -= c * ew * (p[j] - p[i]);
                r[2 * i + 1] -= c * eo * (p[j] + pc_star[j] - p[i] - pc_star[i]);
            }
        }
        r[2 * nn - 2] = g.masses().iter().zip(&p).map(|(a, b)| a * b).sum();
        r
    }

    #[test]
    fn semi_implicit_matrix_matches_its_equations() {
        let g = square(2);
        let m = FluidModel::validation();
        let prob = Problem::new(&g, &m, porosity(&g), wells()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let old = random_state(&g, &m, &mut rng);
        let (a, rhs, _) = assemble_semi_implicit(&prob, &old, 0.05, true).unwrap();
        let x: Vec<f64> = (0..2 * g.num_nodes()).map(|_| rng.gen_range(0.1..0.9)).collect();
        let fd = fd_jacobian(|y| semi_implicit_equations(&prob, &old, 0.05, y), &x);
        assert_close(&a.to_dense(), &fd, 1e-7);
        // affine part agrees too
        let direct = semi_implicit_equations(&prob, &old, 0.05, &x);
        for (i, (ax, b)) in a.apply(&x).iter().zip(&rhs).enumerate() {
            assert!((ax - b - direct[i]).abs() < 1e-10, "row {i}");
        }
    }

    #[test]
    fn mass_term_scales_with_inverse_tau() {
        let g = square(3);
        let m = FluidModel::validation();
        let prob = Problem::new(&g, &m, porosity(&g), SourceModel::none()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let old = random_state(&g, &m, &mut rng);
        let mut guess = old.clone();
        guess.s = guess.s.map(|v| v + 0.05);
        let mass = |tau: f64| {
            let full = residual_implicit(&prob, &guess, &old, tau).unwrap();
            // an enormous step leaves only the flux and source terms
            let flux_only = residual_implicit(&prob, &guess, &old, 1e300).unwrap();
            full.iter().zip(&flux_only).map(|(x, y)| x - y).collect::<Vec<f64>>()
        };
        let (m1, m2) = (mass(0.1), mass(0.2));
        let last = 2 * g.num_nodes() - 2;
        for (i, (a, b)) in m1.iter().zip(&m2).enumerate() {
            if i != last {
                assert!((a - 2.0 * b).abs() < 1e-12 * a.abs().max(1.0), "row {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn implicit_step_satisfies_constraint_and_balance() {
        let g = square(6);
        let m = FluidModel::validation();
        let prob = Problem::new(&g, &m, porosity(&g), wells()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut state = random_state(&g, &m, &mut rng);
        state.pw = NodalField::zeros(&g);
        state = TimeState::new(&g, &m, 0, 0.0, state.s.values().to_vec(), vec![0.0; g.num_nodes()]).unwrap();
        let cfg = SolverConfig::new(0.01, 0.03, Scheme::Implicit);
        for _ in 0..3 {
            let rep = step_implicit(&prob, &state, &cfg).unwrap();
            assert!(rep.residual <= 1e-10);
            assert!(mean_pressure(&g, &rep.state).abs() * g.measure() <= 1e-10);
            assert!(rep.omitted_row.unwrap().abs() <= 1e-10, "{:?}", rep.omitted_row);
            assert!(rep.state.capillary_defect(&m) < 1e-12);
            let DiscreteSources::Wells { q_in, q_out, s_in } = &rep.sources else { unreachable!() };
            let lhs: f64 = (0..g.num_nodes())
                .map(|i| prob.weighted_masses()[i] * (rep.state.s.values()[i] - state.s.values()[i]))
                .sum();
            let rhs: f64 = (0..g.num_nodes())
                .map(|i| g.masses()[i] * (m.f_w(s_in[i]) * q_in[i] - m.f_w(rep.state.s.values()[i]) * q_out[i]))
                .sum::<f64>()
                * cfg.tau;
            assert!((lhs - rhs).abs() <= 1e-10, "{lhs} vs {rhs}");
            assert!(rep.state.s.min() >= -1e-12 && rep.state.s.max() <= 1.0 + 1e-12);
            state = rep.state;
        }
    }

    #[test]
    fn frozen_mobility_iteration_converges() {
        let g = square(5);
        let m = FluidModel::validation();
        let prob = Problem::new(&g, &m, porosity(&g), wells()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s0 = (0..g.num_nodes()).map(|_| rng.gen_range(0.2..0.8)).collect();
        let old = TimeState::new(&g, &m, 0, 0.0, s0, vec![0.0; g.num_nodes()]).unwrap();
        let mut cfg = SolverConfig::new(0.01, 0.01, Scheme::Implicit);
        cfg.newton_max_iters = 200;
        let sys = ImplicitSystem::new(&prob, &old, cfg.tau).unwrap();
        let x0 = sys.initial_guess(&old);
        let picard = newton(&sys, x0.clone(), &cfg, &[JacobianKind::Picard]).unwrap();
        let full = newton(&sys, x0.clone(), &cfg, &[JacobianKind::Newton]).unwrap();
        assert!(picard.fallback && !full.fallback);
        assert!(picard.iters >= full.iters);
        for (a, b) in picard.x.iter().zip(&full.x) {
            assert!((a - b).abs() < 1e-8);
        }
        // an exhausted budget is reported, not hidden
        cfg.newton_max_iters = 1;
        cfg.newton_tol = 1e-300;
        let err = newton(&sys, x0, &cfg, &[JacobianKind::Newton, JacobianKind::Picard]).unwrap_err();
        assert!(err.contains("reduce the time step"), "{err}");
    }

    #[test]
    fn dirichlet_traces_are_imposed() {
        let g = square(4);
        let m = FluidModel::validation();
        let src =
            SourceModel::none().with_dirichlet(scalar_fn(|t, x, _| 0.3 + 0.1 * x + t), scalar_fn(|_, x, y| x - y));
        let prob = Problem::new(&g, &m, porosity(&g), src).unwrap();
        let old = TimeState::new(&g, &m, 0, 0.0, vec![0.35; g.num_nodes()], vec![0.0; g.num_nodes()]).unwrap();
        for scheme in [Scheme::Implicit, Scheme::SemiImplicit] {
            let rep = step(&prob, &old, &SolverConfig::new(0.1, 1.0, scheme)).unwrap();
            for i in g.mesh().boundary_nodes() {
                let [x, y] = g.mesh().nodes()[i];
                assert!((rep.state.s.values()[i] - (0.4 + 0.1 * x)).abs() < 1e-12);
                assert!((rep.state.pw.values()[i] - (x - y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn disabled_constraint_reports_nullspace() {
        let g = square(3);
        let m = FluidModel::validation();
        let prob = Problem::new(&g, &m, porosity(&g), SourceModel::none()).unwrap();
        let old = TimeState::new(&g, &m, 0, 0.0, vec![0.5; g.num_nodes()], vec![0.0; g.num_nodes()]).unwrap();
        let mut cfg = SolverConfig::new(0.1, 1.0, Scheme::SemiImplicit);
        cfg.mean_constraint = false;
        match step_semi_implicit(&prob, &old, &cfg) {
            Err(Error::Solver(msg)) => assert!(msg.contains("nullspace")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn run_logs_every_level_and_repeats_exactly() {
        let g = square(5);
        let m = FluidModel::validation();
        let prob = Problem::new(&g, &m, porosity(&g), wells()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init = random_state(&g, &m, &mut rng);
        let init = TimeState::new(&g, &m, 0, 0.0, init.s.values().to_vec(), vec![0.0; g.num_nodes()]).unwrap();
        for scheme in [Scheme::Implicit, Scheme::SemiImplicit] {
            let cfg = SolverConfig::new(0.02, 0.1, scheme);
            let mut seen = 0;
            let a = run(&prob, init.clone(), &cfg, |_, _| {
                seen += 1;
                Ok(())
            })
            .unwrap();
            let b = run(&prob, init.clone(), &cfg, |_, _| Ok(())).unwrap();
            assert_eq!(seen, 6);
            assert_eq!(a.log.rows().len(), 6);
            assert_eq!(a.log.rows()[0].step, 0);
            assert_eq!(a.state.n, 5);
            assert_eq!(a.log.to_csv(), b.log.to_csv());
            assert!(a.log.to_csv().starts_with(RunLog::HEADER));
            let e: Vec<f64> = a.log.rows().iter().map(|r| r.energy_acc).collect();
            assert!(e.windows(2).all(|w| w[1] >= w[0]));
            if scheme == Scheme::Implicit {
                assert!(a.log.rows().iter().all(|r| r.flux_imbalance < 1e-9), "{}", a.log.to_csv());
            }
        }
    }

    #[test]
    fn auxiliary_pressures_of_constant_state() {
        let g = square(3);
        let m = FluidModel::validation();
        let st = TimeState::new(&g, &m, 0, 0.0, vec![0.5; g.num_nodes()], vec![1.0; g.num_nodes()]).unwrap();
        let aux = auxiliary_pressures(&g, &st, &m).unwrap();
        assert!(aux.grad_w < 1e-12 && aux.grad_o < 1e-12);
        let expected = 1.0 + m.eval_aux(Aux::Pwg, 0.5);
        assert!((aux.u_w.values()[0] - expected).abs() < 1e-14);
    }
}
