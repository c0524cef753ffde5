use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::quadrature::GAUSS3;
use crate::fem::{integrate_high_order, project_patch_average};
use crate::mesh::MeshGeometry;

/// A scalar function of `(t, x, y)`.
pub type ScalarFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

pub fn scalar_fn(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> ScalarFn {
    Arc::new(f)
}

#[derive(Clone)]
pub enum Sources {
    /// Injection rate `q̄`, production rate `q̲` and injected saturation `s_in`.
    Wells { q_in: ScalarFn, q_out: ScalarFn, s_in: ScalarFn },
    /// Right-hand sides of the wetting and nonwetting equations.
    Manufactured { f1: ScalarFn, f2: ScalarFn, sampling: Sampling },
}

/// How manufactured right-hand sides become nodal values at level `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// Point values `f(t_n, x_i)`.
    #[default]
    Nodal,
    /// Time average over `[t_{n-1}, t_n]` of the patch averages, as for wells.
    Averaged,
}

#[derive(Clone)]
pub enum BoundaryCondition {
    NoFlux,
    /// Strongly imposed traces of `S` and `P_w`.
    Dirichlet {
        s: ScalarFn,
        pw: ScalarFn,
    },
}

#[derive(Clone)]
pub struct SourceModel {
    pub sources: Sources,
    pub bc: BoundaryCondition,
}

impl fmt::Debug for SourceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.sources {
            Sources::Wells { .. } => "wells",
            Sources::Manufactured { .. } => "manufactured",
        };
        let bc = match self.bc {
            BoundaryCondition::NoFlux => "no_flux",
            BoundaryCondition::Dirichlet { .. } => "dirichlet",
        };
        write!(f, "SourceModel({mode}, {bc})")
    }
}

impl SourceModel {
    pub fn wells(q_in: ScalarFn, q_out: ScalarFn, s_in: ScalarFn) -> Self {
        SourceModel { sources: Sources::Wells { q_in, q_out, s_in }, bc: BoundaryCondition::NoFlux }
    }

    /// No injection or production.
    pub fn none() -> Self {
        let zero = scalar_fn(|_, _, _| 0.0);
        Self::wells(zero.clone(), zero.clone(), zero)
    }

    pub fn manufactured(f1: ScalarFn, f2: ScalarFn, sampling: Sampling) -> Self {
        SourceModel { sources: Sources::Manufactured { f1, f2, sampling }, bc: BoundaryCondition::NoFlux }
    }

    pub fn with_dirichlet(mut self, s: ScalarFn, pw: ScalarFn) -> Self {
        self.bc = BoundaryCondition::Dirichlet { s, pw };
        self
    }

    pub fn is_no_flux(&self) -> bool {
        matches!(self.bc, BoundaryCondition::NoFlux)
    }
}

/// Nodal source data for one time step.
#[derive(Debug, Clone, PartialEq)]
pub enum DiscreteSources {
    Wells { q_in: Vec<f64>, q_out: Vec<f64>, s_in: Vec<f64> },
    Manufactured { f1: Vec<f64>, f2: Vec<f64> },
}

impl DiscreteSources {
    /// `((q̄_h, 1)_h, (q̲_h, 1)_h)` in wells mode.
    pub fn well_totals(&self, geom: &MeshGeometry) -> Option<(f64, f64)> {
        match self {
            DiscreteSources::Wells { q_in, q_out, .. } => {
                let m = geom.masses();
                let dot = |q: &[f64]| q.iter().zip(m).map(|(a, b)| a * b).sum::<f64>();
                Some((dot(q_in), dot(q_out)))
            }
            DiscreteSources::Manufactured { .. } => None,
        }
    }
}

/// `ρ_τ(r_h f)` over `[(n-1)τ, nτ]`, optionally with the mean-preserving
/// correction `-(1/|Ω|) ∫ (r_h f - f)` applied at every quadrature time.
fn project(geom: &MeshGeometry, f: &ScalarFn, tau: f64, n: usize, correct: bool) -> Vec<f64> {
    let (a, b) = ((n - 1) as f64 * tau, n as f64 * tau);
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let mut out = vec![0.0; geom.num_nodes()];
    for &(x, w) in &GAUSS3 {
        let t = mid + half * x;
        let r = project_patch_average(geom, |x, y| f(t, x, y));
        let shift = if correct {
            let discrete: f64 = r.values().iter().zip(geom.masses()).map(|(v, m)| v * m).sum();
            (discrete - integrate_high_order(geom, |x, y| f(t, x, y))) / geom.measure()
        } else {
            0.0
        };
        for (o, v) in out.iter_mut().zip(r.values()) {
            *o += 0.5 * w * (v - shift);
        }
    }
    out
}

/// Nodal sources for time level `n ≥ 1`, i.e. averaged over `[t_{n-1}, t_n]`.
pub fn build_discrete_sources(src: &SourceModel, geom: &MeshGeometry, tau: f64, n: usize) -> Result<DiscreteSources> {
    if n == 0 {
        return Err(Error::invalid("source level index starts at 1"));
    }
    match &src.sources {
        Sources::Wells { q_in, q_out, s_in } => {
            let q_in = project(geom, q_in, tau, n, true);
            let q_out = project(geom, q_out, tau, n, true);
            for (name, q) in [("injection", &q_in), ("production", &q_out)] {
                if let Some((i, v)) = q.iter().enumerate().find(|(_, &v)| v < -1e-12 || !v.is_finite()) {
                    return Err(Error::Data(format!(
                        "{name} rate is {v:.3e} at node {i} after the mean correction; rates must be nonnegative"
                    )));
                }
            }
            let q_in = q_in.into_iter().map(|v| v.max(0.0)).collect();
            let q_out = q_out.into_iter().map(|v| v.max(0.0)).collect();
            let s_in = project(geom, s_in, tau, n, false);
            Ok(DiscreteSources::Wells { q_in, q_out, s_in })
        }
        Sources::Manufactured { f1, f2, sampling } => {
            let sample = |f: &ScalarFn| match sampling {
                Sampling::Nodal => {
                    let t = n as f64 * tau;
                    geom.mesh().nodes().iter().map(|q| f(t, q[0], q[1])).collect()
                }
                Sampling::Averaged => project(geom, f, tau, n, false),
            };
            Ok(DiscreteSources::Manufactured { f1: sample(f1), f2: sample(f2) })
        }
    }
}
