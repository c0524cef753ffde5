use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::quality::gradients;
use super::{check_acuteness, AcutenessReport, SimplicialMesh};
use crate::error::{Error, Result};

/// Identity of a geometry instance; fields remember which one they live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeshId(u64);

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

/// What to do when the angle condition fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnglePolicy {
    #[default]
    Reject,
    Warn,
}

/// Local vertex pairs of a triangle, in the order used by per-element edge data.
pub const LOCAL_PAIRS: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

/// An undirected mesh edge `i < j` with its assembled coupling coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    /// `c_ij = Σ_K c_{ij,K}` over the elements sharing the edge.
    pub c: f64,
    pub length: f64,
}

/// Mesh-derived quantities of the lumped, upwinded P1 scheme.
///
/// Everything is computed once, sequentially in element order, so two builds
/// of the same mesh are bitwise identical.
#[derive(Debug, Clone)]
pub struct MeshGeometry {
    mesh: SimplicialMesh,
    id: MeshId,
    areas: Vec<f64>,
    grads: Vec<[[f64; 2]; 3]>,
    /// `c_{ij,K} = |K| |∇φ_i·∇φ_j|` for the local pairs in [`LOCAL_PAIRS`].
    elem_c: Vec<[f64; 3]>,
    /// Global edge index of each local pair.
    elem_edges: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    masses: Vec<f64>,
    // node -> (neighbour, edge) in CSR layout, neighbours sorted
    adj_start: Vec<usize>,
    adj: Vec<(usize, usize)>,
    // node -> elements in CSR layout
    patch_start: Vec<usize>,
    patch: Vec<usize>,
    measure: f64,
    diameter: f64,
    report: AcutenessReport,
}

impl MeshGeometry {
    /// Builds the geometry, rejecting meshes that violate the angle condition.
    pub fn new(mesh: &SimplicialMesh) -> Result<Self> {
        Self::with_policy(mesh, AnglePolicy::Reject)
    }

    pub fn with_policy(mesh: &SimplicialMesh, policy: AnglePolicy) -> Result<Self> {
        let report = check_acuteness(mesh);
        if !report.ok && policy == AnglePolicy::Reject {
            return Err(Error::Acuteness { offenders: report.offenders.len(), worst_angle: report.worst_angle });
        }

        let m = mesh.num_nodes();
        let ne = mesh.num_elements();
        let mut areas = Vec::with_capacity(ne);
        let mut grads = Vec::with_capacity(ne);
        let mut elem_c = Vec::with_capacity(ne);
        let mut elem_edges = Vec::with_capacity(ne);
        let mut edges: Vec<Edge> = Vec::new();
        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * ne / 2 + m);
        let mut masses = vec![0.0; m];
        let mut diameter = 0.0f64;

        for el in mesh.elements() {
            let p = el.map(|i| mesh.nodes()[i]);
            let area = super::signed_area(&p[0], &p[1], &p[2]);
            let g = gradients(&p);
            let mut cs = [0.0; 3];
            let mut ids = [0; 3];
            for (slot, &(a, b)) in LOCAL_PAIRS.iter().enumerate() {
                cs[slot] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]).abs();
                let (i, j) = (el[a].min(el[b]), el[a].max(el[b]));
                let length = ((p[a][0] - p[b][0]).powi(2) + (p[a][1] - p[b][1]).powi(2)).sqrt();
                diameter = diameter.max(length);
                let e = *edge_index.entry((i, j)).or_insert_with(|| {
                    edges.push(Edge { i, j, c: 0.0, length });
                    edges.len() - 1
                });
                edges[e].c += cs[slot];
                ids[slot] = e;
            }
            for &i in el {
                masses[i] += area / 3.0;
            }
            areas.push(area);
            grads.push(g);
            elem_c.push(cs);
            elem_edges.push(ids);
        }

        let mut degree = vec![0usize; m + 1];
        for e in &edges {
            degree[e.i + 1] += 1;
            degree[e.j + 1] += 1;
        }
        let adj_start = prefix_sum(degree);
        let mut fill = adj_start.clone();
        let mut adj = vec![(0, 0); adj_start[m]];
        for (k, e) in edges.iter().enumerate() {
            adj[fill[e.i]] = (e.j, k);
            fill[e.i] += 1;
            adj[fill[e.j]] = (e.i, k);
            fill[e.j] += 1;
        }
        for i in 0..m {
            adj[adj_start[i]..adj_start[i + 1]].sort_unstable();
        }

        let mut counts = vec![0usize; m + 1];
        for el in mesh.elements() {
            for &i in el {
                counts[i + 1] += 1;
            }
        }
        let patch_start = prefix_sum(counts);
        let mut fill = patch_start.clone();
        let mut patch = vec![0; patch_start[m]];
        for (k, el) in mesh.elements().iter().enumerate() {
            for &i in el {
                patch[fill[i]] = k;
                fill[i] += 1;
            }
        }

        let measure = areas.iter().sum();
        Ok(MeshGeometry {
            mesh: mesh.clone(),
            id: MeshId(NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed)),
            areas,
            grads,
            elem_c,
            elem_edges,
            edges,
            masses,
            adj_start,
            adj,
            patch_start,
            patch,
            measure,
            diameter,
            report,
        })
    }

    pub fn id(&self) -> MeshId {
        self.id
    }

    pub fn mesh(&self) -> &SimplicialMesh {
        &self.mesh
    }

    pub fn num_nodes(&self) -> usize {
        self.masses.len()
    }

    pub fn num_elements(&self) -> usize {
        self.areas.len()
    }

    pub fn acuteness(&self) -> &AcutenessReport {
        &self.report
    }

    /// `|Ω|`.
    pub fn measure(&self) -> f64 {
        self.measure
    }

    /// Largest element diameter.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn area(&self, k: usize) -> f64 {
        self.areas[k]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    /// Constant basis-function gradients on element `k`, in local vertex order.
    pub fn gradients(&self, k: usize) -> &[[f64; 2]; 3] {
        &self.grads[k]
    }

    /// Per-element `c_{ij,K}` for the local pairs of [`LOCAL_PAIRS`].
    pub fn element_coefficients(&self, k: usize) -> &[f64; 3] {
        &self.elem_c[k]
    }

    /// Global edge indices for the local pairs of [`LOCAL_PAIRS`].
    pub fn element_edges(&self, k: usize) -> &[usize; 3] {
        &self.elem_edges[k]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Lumped masses `m_i = |Δ_i| / 3`.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Weighted lumped masses `m̃_i(w) = (1/3) Σ_{K ∈ Δ_i} w_K |K|`.
    pub fn weighted_masses(&self, weight: &[f64]) -> Vec<f64> {
        assert_eq!(weight.len(), self.num_elements(), "element weight has wrong length");
        let mut out = vec![0.0; self.num_nodes()];
        for (k, el) in self.mesh.elements().iter().enumerate() {
            let share = weight[k] * self.areas[k] / 3.0;
            for &i in el {
                out[i] += share;
            }
        }
        out
    }

    /// Neighbours of node `i` with the connecting edge index, sorted by neighbour.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adj[self.adj_start[i]..self.adj_start[i + 1]]
    }

    /// Elements of the patch `Δ_i`.
    pub fn patch(&self, i: usize) -> &[usize] {
        &self.patch[self.patch_start[i]..self.patch_start[i + 1]]
    }

    /// Edge index joining `i` and `j`, if they are neighbours.
    pub fn edge_between(&self, i: usize, j: usize) -> Option<usize> {
        let nb = self.neighbors(i);
        nb.binary_search_by_key(&j, |&(n, _)| n).ok().map(|p| nb[p].1)
    }

    /// `c_ij`, zero when `i` and `j` are not neighbours.
    pub fn c(&self, i: usize, j: usize) -> f64 {
        self.edge_between(i, j).map_or(0.0, |e| self.edges[e].c)
    }

    /// Largest relative gap between the gradient-product `c_{ij,K}` and the
    /// face-normal formula `|F_i||F_j||n_i·n_j| / (d² |K|)`.
    pub fn face_normal_discrepancy(&self) -> f64 {
        let mut worst = 0.0f64;
        for (k, el) in self.mesh.elements().iter().enumerate() {
            let p = el.map(|i| self.mesh.nodes()[i]);
            // Face opposite vertex a, with its outward unit normal.
            let mut len = [0.0; 3];
            let mut normal = [[0.0; 2]; 3];
            for a in 0..3 {
                let (b, c) = (p[(a + 1) % 3], p[(a + 2) % 3]);
                let t = [c[0] - b[0], c[1] - b[1]];
                len[a] = (t[0] * t[0] + t[1] * t[1]).sqrt();
                // counter-clockwise orientation: outward normal is the tangent turned clockwise
                normal[a] = [t[1] / len[a], -t[0] / len[a]];
            }
            for (slot, &(a, b)) in LOCAL_PAIRS.iter().enumerate() {
                let dot = normal[a][0] * normal[b][0] + normal[a][1] * normal[b][1];
                let formula = len[a] * len[b] * dot.abs() / (4.0 * self.areas[k]);
                let direct = self.elem_c[k][slot];
                let scale = formula.abs().max(direct.abs()).max(f64::MIN_POSITIVE);
                let gap = (formula - direct).abs();
                // right angles give c = 0 on both sides up to rounding
                let rel = if scale < 1e-14 * len[a] * len[b] / self.areas[k] { 0.0 } else { gap / scale };
                worst = worst.max(rel);
            }
        }
        worst
    }
}

fn prefix_sum(mut v: Vec<usize>) -> Vec<usize> {
    for k in 1..v.len() {
        v[k] += v[k - 1];
    }
    v
}
