//! Mass-lumped, phase-upwinded P1 finite elements for degenerate two-phase
//! flow in porous media.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constitutive;
pub mod error;
pub mod fem;
pub mod identities;
pub mod mesh;
pub mod mms;
pub mod state;
pub mod stepper;
pub mod upwind;

pub use constitutive::{make_power_law_model, Aux, FluidModel, PowerLawParams, Property};
pub use error::{Error, Result};
pub use fem::{ElementField, NodalField};
pub use mesh::{AnglePolicy, MeshGeometry, SimplicialMesh};
pub use mms::{ConvergenceTable, ExactSolution, StudyConfig, ValidationSolution};
pub use state::TimeState;
pub use stepper::{
    run, step, step_implicit, step_semi_implicit, LinearSolver, Problem, RunLog, RunOutput, Sampling, Scheme,
    SolverConfig, SourceModel, StepReport,
};
pub use upwind::{EdgeFlux, EdgeValues, Phase};
