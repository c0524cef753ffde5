//! P1 nodal fields, lumped inner products, interpolation and projection
//! operators, and the stiffness pairing used as the oracle side of the
//! discrete identities.

pub mod quadrature;

use crate::error::{Error, Result};
use crate::mesh::{MeshGeometry, MeshId};
use quadrature::{gauss3_mean, TRI_DEGREE2, TRI_DEGREE5};

/// A P1 function identified with its nodal values.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    values: Vec<f64>,
    mesh: MeshId,
}

/// A piecewise-constant function, one value per element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementField {
    values: Vec<f64>,
    mesh: MeshId,
}

impl NodalField {
    pub fn new(geom: &MeshGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geom.num_nodes() {
            return Err(Error::invalid(format!(
                "nodal field has {} values, mesh has {} nodes",
                values.len(),
                geom.num_nodes()
            )));
        }
        Ok(NodalField { values, mesh: geom.id() })
    }

    pub fn constant(geom: &MeshGeometry, c: f64) -> Self {
        NodalField { values: vec![c; geom.num_nodes()], mesh: geom.id() }
    }

    pub fn zeros(geom: &MeshGeometry) -> Self {
        Self::constant(geom, 0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies `f` nodewise (the interpolant of `f ∘ U` for P1 `U`).
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        NodalField { values: self.values.iter().map(|&v| f(v)).collect(), mesh: self.mesh }
    }

    /// Combines two fields nodewise; both must live on the same mesh.
    pub fn zip_with(&self, other: &NodalField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_mesh(other.mesh)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(NodalField { values, mesh: self.mesh })
    }

    pub(crate) fn same_mesh(&self, other: MeshId) -> Result<()> {
        if self.mesh != other {
            return Err(Error::invalid("fields live on different meshes"));
        }
        Ok(())
    }
}

impl ElementField {
    pub fn new(geom: &MeshGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geom.num_elements() {
            return Err(Error::invalid(format!(
                "element field has {} values, mesh has {} elements",
                values.len(),
                geom.num_elements()
            )));
        }
        Ok(ElementField { values, mesh: geom.id() })
    }

    pub fn constant(geom: &MeshGeometry, c: f64) -> Self {
        ElementField { values: vec![c; geom.num_elements()], mesh: geom.id() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh
    }
}

fn check(geom: &MeshGeometry, id: MeshId) -> Result<()> {
    if geom.id() != id {
        return Err(Error::invalid("field does not belong to this mesh"));
    }
    Ok(())
}

fn element_vertices(geom: &MeshGeometry, k: usize) -> [[f64; 2]; 3] {
    geom.mesh().elements()[k].map(|i| geom.mesh().nodes()[i])
}

/// Lumped masses, optionally weighted by a piecewise-constant field.
pub fn lumped_masses(geom: &MeshGeometry, weight: Option<&ElementField>) -> Result<Vec<f64>> {
    match weight {
        None => Ok(geom.masses().to_vec()),
        Some(w) => {
            check(geom, w.mesh)?;
            Ok(geom.weighted_masses(&w.values))
        }
    }
}

/// `(U, V)_h = Σ m_i U^i V^i`, or `Σ m̃_i(w) U^i V^i` with a weight.
pub fn inner_h(geom: &MeshGeometry, u: &NodalField, v: &NodalField, weight: Option<&ElementField>) -> Result<f64> {
    check(geom, u.mesh)?;
    check(geom, v.mesh)?;
    let masses = lumped_masses(geom, weight)?;
    Ok(masses.iter().zip(&u.values).zip(&v.values).map(|((m, a), b)| m * a * b).sum())
}

pub fn norm_h(geom: &MeshGeometry, u: &NodalField, weight: Option<&ElementField>) -> Result<f64> {
    Ok(inner_h(geom, u, u, weight)?.sqrt())
}

/// Exact `L²` norm of the P1 function with nodal values `u`.
pub fn l2_norm(geom: &MeshGeometry, u: &NodalField) -> Result<f64> {
    check(geom, u.mesh)?;
    let mut sum = 0.0;
    for (k, el) in geom.mesh().elements().iter().enumerate() {
        let [a, b, c] = el.map(|i| u.values[i]);
        // ∫_K u² = |K|/6 (Σ u_a² + Σ_{a<b} u_a u_b)
        sum += geom.area(k) / 6.0 * (a * a + b * b + c * c + a * b + b * c + c * a);
    }
    Ok(sum.sqrt())
}

/// Lagrange interpolant `I_h f`.
pub fn interpolate_nodal(geom: &MeshGeometry, f: impl Fn(f64, f64) -> f64) -> NodalField {
    let values = geom.mesh().nodes().iter().map(|p| f(p[0], p[1])).collect();
    NodalField { values, mesh: geom.id() }
}

/// Patch averages `r_h(f)(x_i) = |Δ_i|^{-1} ∫_{Δ_i} f`, element integrals by
/// the three-point rule.
pub fn project_patch_average(geom: &MeshGeometry, f: impl Fn(f64, f64) -> f64) -> NodalField {
    let m = geom.num_nodes();
    let mut integral = vec![0.0; m];
    let mut measure = vec![0.0; m];
    for (k, el) in geom.mesh().elements().iter().enumerate() {
        let area = geom.area(k);
        let value = TRI_DEGREE2.integrate(&element_vertices(geom, k), area, &f);
        for &i in el {
            integral[i] += value;
            measure[i] += area;
        }
    }
    let values = integral.iter().zip(&measure).map(|(v, a)| v / a).collect();
    NodalField { values, mesh: geom.id() }
}

/// Element averages `ρ_h(f)|_K = |K|^{-1} ∫_K f` by the three-point rule.
pub fn project_elementwise(geom: &MeshGeometry, f: impl Fn(f64, f64) -> f64) -> ElementField {
    let values = (0..geom.num_elements()).map(|k| TRI_DEGREE2.integrate(&element_vertices(geom, k), 1.0, &f)).collect();
    ElementField { values, mesh: geom.id() }
}

/// Values of `f` at element centroids.
pub fn sample_at_centroids(geom: &MeshGeometry, f: impl Fn(f64, f64) -> f64) -> ElementField {
    let values = (0..geom.num_elements())
        .map(|k| {
            let v = element_vertices(geom, k);
            f((v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0)
        })
        .collect();
    ElementField { values, mesh: geom.id() }
}

/// `∫_Ω f` by the seven-point rule on every element.
pub fn integrate_high_order(geom: &MeshGeometry, f: impl Fn(f64, f64) -> f64) -> f64 {
    (0..geom.num_elements()).map(|k| TRI_DEGREE5.integrate(&element_vertices(geom, k), geom.area(k), &f)).sum()
}

/// Time average `ρ_τ(f)^n = τ^{-1} ∫_{t_{n-1}}^{t_n} f` with `t_n = n τ`.
pub fn project_time(f: impl Fn(f64) -> f64, tau: f64, n: usize) -> f64 {
    assert!(n >= 1, "time level index starts at 1");
    gauss3_mean((n - 1) as f64 * tau, n as f64 * tau, f)
}

/// `∫_Ω w ∇U_h·∇V_h` with `w` constant per element (one when omitted).
pub fn stiffness_pairing(
    geom: &MeshGeometry,
    u: &NodalField,
    v: &NodalField,
    weight: Option<&ElementField>,
) -> Result<f64> {
    check(geom, u.mesh)?;
    check(geom, v.mesh)?;
    if let Some(w) = weight {
        check(geom, w.mesh)?;
    }
    let mut sum = 0.0;
    for (k, el) in geom.mesh().elements().iter().enumerate() {
        let g = geom.gradients(k);
        let (mut gu, mut gv) = ([0.0; 2], [0.0; 2]);
        for (a, &i) in el.iter().enumerate() {
            for d in 0..2 {
                gu[d] += u.values[i] * g[a][d];
                gv[d] += v.values[i] * g[a][d];
            }
        }
        let w = weight.map_or(1.0, |w| w.values[k]);
        sum += w * geom.area(k) * (gu[0] * gv[0] + gu[1] * gv[1]);
    }
    Ok(sum)
}
