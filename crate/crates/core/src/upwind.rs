//! Phase-potential upwinding and the upwinded form
//! `[Z, W; V, U]_h = Σ_i U^i Σ_j c_ij W^{ij} (V^j - V^i)`.

use crate::constitutive::FluidModel;
use crate::error::{Error, Result};
use crate::fem::NodalField;
use crate::mesh::{MeshGeometry, MeshId};
use crate::state::TimeState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Wetting,
    Nonwetting,
}

/// Symmetric edge data `W^{ij} = W^{ji}`, one value per undirected edge in
/// the order of [`MeshGeometry::edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeValues {
    values: Vec<f64>,
    mesh: MeshId,
}

impl EdgeValues {
    pub fn new(geom: &MeshGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geom.edges().len() {
            return Err(Error::invalid(format!(
                "edge field has {} values, mesh has {} edges",
                values.len(),
                geom.edges().len()
            )));
        }
        Ok(EdgeValues { values, mesh: geom.id() })
    }

    pub fn constant(geom: &MeshGeometry, c: f64) -> Self {
        EdgeValues { values: vec![c; geom.edges().len()], mesh: geom.id() }
    }

    /// Builds edge data from a function of directed pairs, rejecting it if
    /// `w(i, j) != w(j, i)` on some edge.
    pub fn from_directed(geom: &MeshGeometry, w: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(geom.edges().len());
        for e in geom.edges() {
            let (a, b) = (w(e.i, e.j), w(e.j, e.i));
            if a != b {
                return Err(Error::invalid(format!("edge values not symmetric on ({}, {}): {a} vs {b}", e.i, e.j)));
            }
            values.push(a);
        }
        Ok(EdgeValues { values, mesh: geom.id() })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh
    }

    /// `W^{ij}` for neighbours `i`, `j`.
    pub fn get(&self, geom: &MeshGeometry, i: usize, j: usize) -> Option<f64> {
        geom.edge_between(i, j).map(|e| self.values[e])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        EdgeValues { values: self.values.iter().map(|&v| f(v)).collect(), mesh: self.mesh }
    }
}

/// Antisymmetric edge data `F^{ij} = -F^{ji}`; the stored value is the one
/// for the direction `i → j` with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFlux {
    values: Vec<f64>,
    mesh: MeshId,
}

impl EdgeFlux {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, geom: &MeshGeometry, i: usize, j: usize) -> Option<f64> {
        let e = geom.edge_between(i, j)?;
        let v = self.values[e];
        Some(if i < j { v } else { -v })
    }

    /// `Σ_j c_ij F^{ij}` at every node.
    pub fn divergence(&self, geom: &MeshGeometry) -> Vec<f64> {
        let mut out = vec![0.0; geom.num_nodes()];
        for (e, edge) in geom.edges().iter().enumerate() {
            let v = edge.c * self.values[e];
            out[edge.i] += v;
            out[edge.j] -= v;
        }
        out
    }
}

/// Upwind choice on one edge. Returns the selected saturation and whether it
/// came from the first node. Ties (exact equality of pressures) take the
/// larger saturation for the wetting phase and the smaller one otherwise.
#[inline]
pub fn upwind_pick(phase: Phase, si: f64, sj: f64, pi: f64, pj: f64) -> (f64, bool) {
    if pi > pj {
        (si, true)
    } else if pi < pj {
        (sj, false)
    } else {
        let first = match phase {
            Phase::Wetting => si >= sj,
            Phase::Nonwetting => si <= sj,
        };
        (if first { si } else { sj }, first)
    }
}

fn check(geom: &MeshGeometry, id: MeshId) -> Result<()> {
    if geom.id() != id {
        return Err(Error::invalid("field does not belong to this mesh"));
    }
    Ok(())
}

/// Upwind saturations `S_α^{ij}` selected by the phase pressure `P`.
pub fn upwind_saturations(geom: &MeshGeometry, s: &NodalField, p: &NodalField, phase: Phase) -> Result<EdgeValues> {
    check(geom, s.mesh_id())?;
    check(geom, p.mesh_id())?;
    let (s, p) = (s.values(), p.values());
    let values = geom.edges().iter().map(|e| upwind_pick(phase, s[e.i], s[e.j], p[e.i], p[e.j]).0).collect();
    Ok(EdgeValues { values, mesh: geom.id() })
}

/// Node `i` of the result is `Σ_j c_ij W^{ij} (V^j - V^i)`.
pub fn apply_upwind_form(geom: &MeshGeometry, w: &EdgeValues, v: &NodalField) -> Result<NodalField> {
    check(geom, w.mesh)?;
    check(geom, v.mesh_id())?;
    let vals = v.values();
    let mut out = vec![0.0; geom.num_nodes()];
    for (e, edge) in geom.edges().iter().enumerate() {
        let flow = edge.c * w.values[e] * (vals[edge.j] - vals[edge.i]);
        out[edge.i] += flow;
        out[edge.j] -= flow;
    }
    NodalField::new(geom, out)
}

/// `Σ_i U^i Σ_j c_ij W^{ij} (V^j - V^i)`.
pub fn form_value(geom: &MeshGeometry, w: &EdgeValues, v: &NodalField, u: &NodalField) -> Result<f64> {
    check(geom, u.mesh_id())?;
    let r = apply_upwind_form(geom, w, v)?;
    Ok(r.values().iter().zip(u.values()).map(|(a, b)| a * b).sum())
}

/// Mobilities on the upwind edges of both phases for a state.
pub fn upwind_mobilities(
    geom: &MeshGeometry,
    state: &TimeState,
    model: &FluidModel,
) -> Result<(EdgeValues, EdgeValues)> {
    let sw = upwind_saturations(geom, &state.s, &state.pw, Phase::Wetting)?;
    let so = upwind_saturations(geom, &state.s, &state.po, Phase::Nonwetting)?;
    Ok((sw.map(|s| model.eta_w(s)), so.map(|s| model.eta_o(s))))
}

/// `F^{ij} = -η_w(S_w^{ij})(P_w^j - P_w^i) - η_o(S_o^{ij})(P_o^j - P_o^i)`.
pub fn total_flux(geom: &MeshGeometry, state: &TimeState, model: &FluidModel) -> Result<EdgeFlux> {
    let (ew, eo) = upwind_mobilities(geom, state, model)?;
    let (pw, po) = (state.pw.values(), state.po.values());
    let values = geom
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| -ew.values[e] * (pw[edge.j] - pw[edge.i]) - eo.values[e] * (po[edge.j] - po[edge.i]))
        .collect();
    Ok(EdgeFlux { values, mesh: geom.id() })
}

/// `Σ_{i,j} c_ij [η_w(S_w^{ij})(P_w^i - P_w^j)² + η_o(S_o^{ij})(P_o^i - P_o^j)²]`
/// over ordered pairs, so each edge counts twice.
pub fn energy_diagnostic(geom: &MeshGeometry, state: &TimeState, model: &FluidModel) -> Result<f64> {
    let (ew, eo) = upwind_mobilities(geom, state, model)?;
    let (pw, po) = (state.pw.values(), state.po.values());
    let mut sum = 0.0;
    for (e, edge) in geom.edges().iter().enumerate() {
        let dw = pw[edge.i] - pw[edge.j];
        let d_o = po[edge.i] - po[edge.j];
        sum += 2.0 * edge.c * (ew.values[e] * dw * dw + eo.values[e] * d_o * d_o);
    }
    Ok(sum)
}
