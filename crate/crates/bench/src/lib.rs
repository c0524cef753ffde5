//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use twophase::fem::{interpolate_nodal, sample_at_centroids};
use twophase::mms::{manufactured_sources, validation_porosity};
use twophase::stepper::scalar_fn;
use twophase::{
    ExactSolution, FluidModel, MeshGeometry, Problem, Sampling, SimplicialMesh, SourceModel, TimeState,
    ValidationSolution,
};

pub fn square(n: usize) -> MeshGeometry {
    MeshGeometry::new(&SimplicialMesh::unit_square(n).expect("valid size")).expect("criss mesh is acute")
}

/// Manufactured-solution problem with its initial state on `geom`.
pub fn mms_problem<'a>(geom: &'a MeshGeometry, model: &'a FluidModel) -> (Problem<'a>, TimeState) {
    let ex: Arc<dyn ExactSolution> = Arc::new(ValidationSolution);
    let (f1, f2) = manufactured_sources(model, validation_porosity, ex.clone(), 1.0).expect("exact solution in range");
    let src = SourceModel::manufactured(f1, f2, Sampling::Nodal).with_dirichlet(
        scalar_fn(|t, x, y| ValidationSolution.s(t, x, y)),
        scalar_fn(|t, x, y| ValidationSolution.pw(t, x, y)),
    );
    let problem =
        Problem::new(geom, model, sample_at_centroids(geom, validation_porosity), src).expect("valid porosity");
    let s0 = interpolate_nodal(geom, |x, y| ex.s(0.0, x, y)).into_values();
    let p0 = interpolate_nodal(geom, |x, y| ex.pw(0.0, x, y)).into_values();
    (problem, TimeState::new(geom, model, 0, 0.0, s0, p0).expect("matching sizes"))
}

/// Closed-boundary problem with a balanced injector/producer pair.
pub fn wells_problem<'a>(geom: &'a MeshGeometry, model: &'a FluidModel) -> (Problem<'a>, TimeState) {
    let bump = |cx: f64, cy: f64| scalar_fn(move |_, x, y| 0.1 + (-20.0 * ((x - cx).powi(2) + (y - cy).powi(2))).exp());
    let src = SourceModel::wells(bump(0.25, 0.25), bump(0.75, 0.75), scalar_fn(|_, _, _| 1.0));
    let problem = Problem::new(geom, model, sample_at_centroids(geom, |_, _| 0.3), src).expect("valid porosity");
    let s0 = interpolate_nodal(geom, |x, y| 0.2 + 0.3 * x * y).into_values();
    let init = TimeState::new(geom, model, 0, 0.0, s0, vec![0.0; geom.num_nodes()]).expect("matching sizes");
    (problem, init)
}
