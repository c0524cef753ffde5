//! Discrete equations of one time step. Unknowns are interleaved per node:
//! `x = [S_0, P_0, S_1, P_1, ...]`; row `2i` is the wetting equation of node
//! `i` and row `2i + 1` the nonwetting one.

use super::linear::SparseSystem;
use super::sources::{build_discrete_sources, BoundaryCondition, DiscreteSources};
use super::Problem;
use crate::error::Result;
use crate::state::TimeState;
use crate::upwind::{upwind_pick, Phase};

/// Which derivative terms the Jacobian keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianKind {
    /// Exact derivative on the active upwind branch.
    Newton,
    /// Upwind mobilities treated as frozen (no `η'` terms).
    Picard,
}

/// Nodal right-hand sides and their derivatives with respect to `S_i`.
fn source_terms(src: &DiscreteSources, problem: &Problem, i: usize, s: f64) -> ([f64; 2], [f64; 2]) {
    let m = problem.geom.masses()[i];
    let model = problem.model;
    match src {
        DiscreteSources::Wells { q_in, q_out, s_in } => {
            let (qi, qo, si) = (q_in[i], q_out[i], s_in[i]);
            (
                [m * (model.f_w(si) * qi - model.f_w(s) * qo), m * (model.f_o(si) * qi - model.f_o(s) * qo)],
                [-m * model.f_w_prime(s) * qo, -m * model.f_o_prime(s) * qo],
            )
        }
        DiscreteSources::Manufactured { f1, f2 } => ([m * f1[i], m * f2[i]], [0.0, 0.0]),
    }
}

/// Nonlinear equations of the implicit scheme for the step `n → n + 1`.
pub struct ImplicitSystem<'a> {
    problem: &'a Problem<'a>,
    s_old: Vec<f64>,
    tau: f64,
    sources: DiscreteSources,
    /// Boundary traces `(S, P_w)` at the new time in Dirichlet mode.
    traces: Option<(Vec<f64>, Vec<f64>)>,
}

impl<'a> ImplicitSystem<'a> {
    pub fn new(problem: &'a Problem<'a>, old: &TimeState, tau: f64) -> Result<Self> {
        let sources = build_discrete_sources(&problem.sources, problem.geom, tau, old.n + 1)?;
        let traces = boundary_traces(problem, (old.n + 1) as f64 * tau);
        Ok(ImplicitSystem { problem, s_old: old.s.values().to_vec(), tau, sources, traces })
    }

    pub fn dim(&self) -> usize {
        2 * self.problem.geom.num_nodes()
    }

    pub fn sources(&self) -> &DiscreteSources {
        &self.sources
    }

    /// Row replaced by `Σ m_i P_w^i = 0` in no-flux mode.
    pub fn constraint_row(&self) -> Option<usize> {
        self.traces.is_none().then(|| self.dim() - 2)
    }

    /// Old state with the new boundary traces applied.
    pub fn initial_guess(&self, old: &TimeState) -> Vec<f64> {
        let mut x = interleave(old.s.values(), old.pw.values());
        if let Some((ts, tp)) = &self.traces {
            for i in self.problem.geom.mesh().boundary_nodes() {
                x[2 * i] = ts[i];
                x[2 * i + 1] = tp[i];
            }
        }
        x
    }

    fn is_dirichlet(&self, i: usize) -> bool {
        self.traces.is_some() && self.problem.geom.mesh().is_boundary(i)
    }

    /// Unreplaced residual of every equation, before Dirichlet and
    /// constraint rows are substituted.
    fn raw_residual(&self, x: &[f64]) -> Vec<f64> {
        let geom = self.problem.geom;
        let model = self.problem.model;
        let m = geom.num_nodes();
        let (s, p) = split(x);
        let po: Vec<f64> = (0..m).map(|i| p[i] + model.pc(s[i])).collect();
        let mut r = vec![0.0; 2 * m];
        for e in geom.edges() {
            let (i, j) = (e.i, e.j);
            let (sw, _) = upwind_pick(Phase::Wetting, s[i], s[j], p[i], p[j]);
            let flow = e.c * model.eta_w(sw) * (p[j] - p[i]);
            r[2 * i] -= flow;
            r[2 * j] += flow;
            let (so, _) = upwind_pick(Phase::Nonwetting, s[i], s[j], po[i], po[j]);
            let flow = e.c * model.eta_o(so) * (po[j] - po[i]);
            r[2 * i + 1] -= flow;
            r[2 * j + 1] += flow;
        }
        let mt = &self.problem.weighted_masses;
        for i in 0..m {
            let acc = mt[i] / self.tau * (s[i] - self.s_old[i]);
            let (src, _) = source_terms(&self.sources, self.problem, i, s[i]);
            r[2 * i] += acc - src[0];
            r[2 * i + 1] += -acc - src[1];
        }
        r
    }

    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.raw_residual(x);
        let (s, p) = split(x);
        if let Some((ts, tp)) = &self.traces {
            for i in self.problem.geom.mesh().boundary_nodes() {
                r[2 * i] = s[i] - ts[i];
                r[2 * i + 1] = p[i] - tp[i];
            }
        }
        if let Some(row) = self.constraint_row() {
            r[row] = self.problem.geom.masses().iter().zip(&p).map(|(m, p)| m * p).sum();
        }
        r
    }

    /// The wetting equation of the last node, which the constraint replaces.
    pub fn omitted_row(&self, x: &[f64]) -> Option<f64> {
        self.constraint_row().map(|row| self.raw_residual(x)[row])
    }

    pub fn jacobian(&self, x: &[f64], kind: JacobianKind) -> SparseSystem {
        let geom = self.problem.geom;
        let model = self.problem.model;
        let m = geom.num_nodes();
        let (s, p) = split(x);
        let po: Vec<f64> = (0..m).map(|i| p[i] + model.pc(s[i])).collect();
        let dpc: Vec<f64> = s.iter().map(|&v| model.pc_prime(v)).collect();
        let constraint = self.constraint_row();
        let active = |row: usize| Some(row) != constraint && !self.is_dirichlet(row / 2);
        let mut jac = SparseSystem::new(2 * m);
        for e in geom.edges() {
            let (i, j, c) = (e.i, e.j, e.c);
            let (sw, wi) = upwind_pick(Phase::Wetting, s[i], s[j], p[i], p[j]);
            let (so, oi) = upwind_pick(Phase::Nonwetting, s[i], s[j], po[i], po[j]);
            let (kw, ko) = (if wi { i } else { j }, if oi { i } else { j });
            let (ew, eo) = (c * model.eta_w(sw), c * model.eta_o(so));
            // row of node a, neighbour b; the sign flips the direction
            for (a, b, dir) in [(i, j, 1.0), (j, i, -1.0)] {
                let rw = 2 * a;
                if active(rw) {
                    jac.add(rw, 2 * a + 1, ew);
                    jac.add(rw, 2 * b + 1, -ew);
                    if kind == JacobianKind::Newton {
                        jac.add(rw, 2 * kw, -dir * c * model.eta_w_prime(sw) * (p[j] - p[i]));
                    }
                }
                let ro = 2 * a + 1;
                if active(ro) {
                    jac.add(ro, 2 * a + 1, eo);
                    jac.add(ro, 2 * b + 1, -eo);
                    jac.add(ro, 2 * a, eo * dpc[a]);
                    jac.add(ro, 2 * b, -eo * dpc[b]);
                    if kind == JacobianKind::Newton {
                        jac.add(ro, 2 * ko, -dir * c * model.eta_o_prime(so) * (po[j] - po[i]));
                    }
                }
            }
        }
        let mt = &self.problem.weighted_masses;
        for i in 0..m {
            let (_, dsrc) = source_terms(&self.sources, self.problem, i, s[i]);
            if active(2 * i) {
                jac.add(2 * i, 2 * i, mt[i] / self.tau - dsrc[0]);
            }
            if active(2 * i + 1) {
                jac.add(2 * i + 1, 2 * i, -mt[i] / self.tau - dsrc[1]);
            }
            if self.is_dirichlet(i) {
                jac.add(2 * i, 2 * i, 1.0);
                jac.add(2 * i + 1, 2 * i + 1, 1.0);
            }
        }
        if let Some(row) = constraint {
            for (i, &mi) in geom.masses().iter().enumerate() {
                jac.add(row, 2 * i + 1, mi);
            }
        }
        jac
    }
}

/// Linear system of the semi-implicit scheme for the step `n → n + 1`:
/// upwind mobilities frozen at level `n` (selected by `P_w^n` and `P_o^n`)
/// and `p_c` linearized about `S^n`.
pub fn assemble_semi_implicit(
    problem: &Problem,
    old: &TimeState,
    tau: f64,
    constraint: bool,
) -> Result<(SparseSystem, Vec<f64>, DiscreteSources)> {
    let geom = problem.geom;
    let model = problem.model;
    let m = geom.num_nodes();
    let sources = build_discrete_sources(&problem.sources, geom, tau, old.n + 1)?;
    let traces = boundary_traces(problem, (old.n + 1) as f64 * tau);
    let (s0, pw0, po0) = (old.s.values(), old.pw.values(), old.po.values());
    let dpc: Vec<f64> = s0.iter().map(|&v| model.pc_prime(v)).collect();
    // p_c* = a + p_c'(S^n) S with a = p_c(S^n) - p_c'(S^n) S^n
    let offset: Vec<f64> = (0..m).map(|i| model.pc(s0[i]) - dpc[i] * s0[i]).collect();
    let constraint_row = (traces.is_none() && constraint).then(|| 2 * m - 2);
    let dirichlet = |i: usize| traces.is_some() && geom.mesh().is_boundary(i);
    let active = |row: usize| Some(row) != constraint_row && !dirichlet(row / 2);

    let mut a = SparseSystem::new(2 * m);
    let mut rhs = vec![0.0; 2 * m];
    for e in geom.edges() {
        let (i, j, c) = (e.i, e.j, e.c);
        let ew = c * model.eta_w(upwind_pick(Phase::Wetting, s0[i], s0[j], pw0[i], pw0[j]).0);
        let eo = c * model.eta_o(upwind_pick(Phase::Nonwetting, s0[i], s0[j], po0[i], po0[j]).0);
        for (a_, b) in [(i, j), (j, i)] {
            if active(2 * a_) {
                a.add(2 * a_, 2 * a_ + 1, ew);
                a.add(2 * a_, 2 * b + 1, -ew);
            }
            let ro = 2 * a_ + 1;
            if active(ro) {
                a.add(ro, 2 * a_ + 1, eo);
                a.add(ro, 2 * b + 1, -eo);
                a.add(ro, 2 * a_, eo * dpc[a_]);
                a.add(ro, 2 * b, -eo * dpc[b]);
                rhs[ro] += eo * (offset[b] - offset[a_]);
            }
        }
    }
    let mt = &problem.weighted_masses;
    for i in 0..m {
        // well terms use fractional flows frozen at S^n
        let (src, _) = source_terms(&sources, problem, i, s0[i]);
        let acc = mt[i] / tau;
        if active(2 * i) {
            a.add(2 * i, 2 * i, acc);
            rhs[2 * i] += acc * s0[i] + src[0];
        }
        if active(2 * i + 1) {
            a.add(2 * i + 1, 2 * i, -acc);
            rhs[2 * i + 1] += -acc * s0[i] + src[1];
        }
        if let (true, Some((ts, tp))) = (dirichlet(i), &traces) {
            a.add(2 * i, 2 * i, 1.0);
            a.add(2 * i + 1, 2 * i + 1, 1.0);
            rhs[2 * i] = ts[i];
            rhs[2 * i + 1] = tp[i];
        }
    }
    if let Some(row) = constraint_row {
        for (i, &mi) in geom.masses().iter().enumerate() {
            a.add(row, 2 * i + 1, mi);
        }
        rhs[row] = 0.0;
    }
    Ok((a, rhs, sources))
}

fn boundary_traces(problem: &Problem, t: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    match &problem.sources.bc {
        BoundaryCondition::NoFlux => None,
        BoundaryCondition::Dirichlet { s, pw } => {
            let nodes = problem.geom.mesh().nodes();
            Some((nodes.iter().map(|q| s(t, q[0], q[1])).collect(), nodes.iter().map(|q| pw(t, q[0], q[1])).collect()))
        }
    }
}

pub(crate) fn interleave(s: &[f64], p: &[f64]) -> Vec<f64> {
    s.iter().zip(p).flat_map(|(&a, &b)| [a, b]).collect()
}

pub(crate) fn split(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (x.iter().step_by(2).copied().collect(), x.iter().skip(1).step_by(2).copied().collect())
}
