use crate::constitutive::FluidModel;
use crate::error::Result;
use crate::fem::NodalField;
use crate::mesh::MeshGeometry;

/// One time level `(n, t_n, S, P_w, P_o)` of the coupled solution.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeState {
    pub n: usize,
    pub t: f64,
    pub s: NodalField,
    pub pw: NodalField,
    pub po: NodalField,
}

impl TimeState {
    /// Builds a state with `P_o = P_w + I_h p_c(S)`.
    pub fn new(geom: &MeshGeometry, model: &FluidModel, n: usize, t: f64, s: Vec<f64>, pw: Vec<f64>) -> Result<Self> {
        let s = NodalField::new(geom, s)?;
        let pw = NodalField::new(geom, pw)?;
        let po = pw.zip_with(&s, |p, s| p + model.pc(s))?;
        Ok(TimeState { n, t, s, pw, po })
    }

    /// Largest nodal violation of `P_o - P_w = p_c(S)`.
    pub fn capillary_defect(&self, model: &FluidModel) -> f64 {
        let (s, pw, po) = (self.s.values(), self.pw.values(), self.po.values());
        (0..s.len()).map(|i| (po[i] - pw[i] - model.pc(s[i])).abs()).fold(0.0, f64::max)
    }
}
