//! Randomized checks of the discrete identities on acute meshes, and the
//! consistency gap of the upwinded form against the weighted Dirichlet form.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::Result;
use crate::fem::{interpolate_nodal, stiffness_pairing, NodalField};
use crate::mesh::{criss_tensor_grid, jittered_lattice, MeshGeometry, SimplicialMesh};
use crate::upwind::{form_value, EdgeValues};

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs| / scale`.
    pub rel_error: f64,
}

impl IdentityCheck {
    fn new(name: &'static str, lhs: f64, rhs: f64, scale: f64) -> Self {
        let scale = scale.max(lhs.abs()).max(rhs.abs()).max(f64::MIN_POSITIVE);
        IdentityCheck { name, lhs, rhs, rel_error: (lhs - rhs).abs() / scale }
    }
}

#[derive(Debug, Clone)]
pub struct MeshIdentities {
    pub description: String,
    pub nodes: usize,
    pub checks: Vec<IdentityCheck>,
}

impl MeshIdentities {
    pub fn worst(&self) -> f64 {
        self.checks.iter().map(|c| c.rel_error).fold(0.0, f64::max)
    }
}

/// Criss grid with random spacing (even `k`) or a jittered lattice (odd `k`),
/// with `n ∈ [2, 10]` cells per side.
pub fn random_acute_mesh<R: Rng>(rng: &mut R, k: usize) -> Result<(String, SimplicialMesh)> {
    let n = rng.gen_range(2..=10);
    if k.is_multiple_of(2) {
        let mut axis = |n: usize| {
            let mut v = vec![0.0];
            for _ in 0..n {
                let last = *v.last().unwrap();
                v.push(last + rng.gen_range(0.5..1.5) / n as f64);
            }
            v
        };
        let (xs, ys) = (axis(n), axis(n));
        Ok((format!("criss grid {n}x{n}, random spacing"), criss_tensor_grid(&xs, &ys)?))
    } else {
        let jitter = rng.gen_range(0.0..0.12);
        Ok((format!("lattice {n}x{n}, jitter {jitter:.3}"), jittered_lattice(n, n, 1.0 / n as f64, jitter, rng)?))
    }
}

/// `Σ_i a(i) Σ_{j ∈ N(i)} b(i, j)` over ordered neighbour pairs.
fn pair_sum(geom: &MeshGeometry, f: impl Fn(usize, usize, f64) -> f64) -> f64 {
    (0..geom.num_nodes()).map(|i| geom.neighbors(i).iter().map(|&(j, e)| f(i, j, geom.edges()[e].c)).sum::<f64>()).sum()
}

/// Evaluates every identity once on `geom` with random fields from `rng`.
pub fn check_identities<R: Rng>(geom: &MeshGeometry, rng: &mut R) -> Result<Vec<IdentityCheck>> {
    let nn = geom.num_nodes();
    let mut field = |lo: f64, hi: f64| -> Result<NodalField> {
        NodalField::new(geom, (0..nn).map(|_| rng.gen_range(lo..hi)).collect())
    };
    let (u, v) = (field(-1.0, 1.0)?, field(-1.0, 1.0)?);
    let w = EdgeValues::new(geom, (0..geom.edges().len()).map(|_| rng.gen_range(0.0..2.0)).collect())?;
    let (uv, vv) = (u.values(), v.values());
    let mut out = Vec::new();

    let grad_uv = stiffness_pairing(geom, &u, &v, None)?;
    let first = -pair_sum(geom, |i, j, c| uv[i] * c * (vv[j] - vv[i]));
    let second = 0.5 * pair_sum(geom, |i, j, c| c * (uv[j] - uv[i]) * (vv[j] - vv[i]));
    let scale = 0.5 * pair_sum(geom, |i, j, c| c * ((uv[j] - uv[i]) * (vv[j] - vv[i])).abs());
    out.push(IdentityCheck::new("grad_pairing_first", grad_uv, first, scale));
    out.push(IdentityCheck::new("grad_pairing_second", grad_uv, second, scale));

    let grad_uu = stiffness_pairing(geom, &u, &u, None)?;
    out.push(IdentityCheck::new(
        "grad_norm",
        grad_uu,
        0.5 * pair_sum(geom, |i, j, c| c * (uv[j] - uv[i]).powi(2)),
        0.0,
    ));

    let wv = |i: usize, j: usize| w.get(geom, i, j).expect("neighbours share an edge");
    let vmax = vv.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let wscale = pair_sum(geom, |i, j, c| c * wv(i, j)) * vmax;
    out.push(IdentityCheck::new(
        "antisymmetric_sum",
        pair_sum(geom, |i, j, c| c * wv(i, j) * (vv[j] - vv[i])),
        0.0,
        wscale,
    ));

    let ones = NodalField::constant(geom, 1.0);
    out.push(IdentityCheck::new("form_constant_test", form_value(geom, &w, &v, &ones)?, 0.0, wscale));
    out.push(IdentityCheck::new(
        "form_diagonal",
        form_value(geom, &w, &u, &u)?,
        -0.5 * pair_sum(geom, |i, j, c| c * wv(i, j) * (uv[i] - uv[j]).powi(2)),
        0.0,
    ));

    // c_ij against the element contributions on the edge
    let mut sums = vec![0.0; geom.edges().len()];
    for k in 0..geom.num_elements() {
        for (l, &e) in geom.element_edges(k).iter().enumerate() {
            sums[e] += geom.element_coefficients(k)[l];
        }
    }
    let worst = geom
        .edges()
        .iter()
        .zip(&sums)
        .max_by(|a, b| ((a.0.c - a.1).abs() / a.0.c).total_cmp(&((b.0.c - b.1).abs() / b.0.c)));
    if let Some((e, &s)) = worst {
        out.push(IdentityCheck::new("edge_coefficient_sum", s, e.c, 0.0));
    }
    Ok(out)
}

/// `count` random acute meshes, each checked with fresh random fields.
pub fn identity_suite<R: Rng>(rng: &mut R, count: usize) -> Result<Vec<MeshIdentities>> {
    (0..count)
        .map(|k| {
            let (description, mesh) = random_acute_mesh(rng, k)?;
            let geom = MeshGeometry::new(&mesh)?;
            let checks = check_identities(&geom, rng)?;
            Ok(MeshIdentities { description, nodes: geom.num_nodes(), checks })
        })
        .collect()
}

/// `|∫ w ∇u·∇v + Σ_{ij} U^i c_ij W̃^{ij} (V^j − V^i)|` on the `n × n` unit
/// square with `u = v = sin(πx) sin(πy)`, `w = 1 + xy` and `W̃` the value of
/// `w` at edge midpoints. The exact integral is `5π²/8`.
pub fn consistency_gap(n: usize) -> Result<f64> {
    let geom = MeshGeometry::new(&SimplicialMesh::unit_square(n)?)?;
    let u = interpolate_nodal(&geom, |x, y| (PI * x).sin() * (PI * y).sin());
    let nodes = geom.mesh().nodes();
    let w = EdgeValues::new(
        &geom,
        geom.edges()
            .iter()
            .map(|e| {
                let (a, b) = (nodes[e.i], nodes[e.j]);
                1.0 + 0.25 * (a[0] + b[0]) * (a[1] + b[1])
            })
            .collect(),
    )?;
    let exact = 5.0 * PI * PI / 8.0;
    Ok((exact + form_value(&geom, &w, &u, &u)?).abs())
}
