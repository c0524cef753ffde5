//! Conforming triangulations and the coefficients the scheme derives from them.
//!
//! A [`SimplicialMesh`] is validated on construction: every element has
//! strictly positive area (clockwise input is reoriented), faces are shared
//! exactly, and the boundary set matches the topological boundary.
//! [`MeshGeometry`] then holds everything the discrete forms need: the
//! coupling coefficients `c_ij`, their per-element parts, lumped masses and
//! the node/edge adjacency.

mod generate;
mod geometry;
mod io;
mod quality;

pub use generate::{criss_tensor_grid, jittered_lattice};
pub use geometry::{AnglePolicy, Edge, MeshGeometry, MeshId, LOCAL_PAIRS};
pub use io::{load_mesh, write_mesh};
pub use quality::{check_acuteness, AcutenessReport};

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Node coordinates in the plane.
pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialMesh {
    nodes: Vec<Point>,
    elements: Vec<[usize; 3]>,
    boundary: Vec<bool>,
}

/// A validation failure, optionally tied to the element that caused it.
#[derive(Debug)]
pub(crate) struct MeshDefect {
    pub element: Option<usize>,
    /// The defect concerns the boundary list rather than the elements.
    pub boundary: bool,
    pub msg: String,
}

impl MeshDefect {
    fn at(element: usize, msg: impl Into<String>) -> Self {
        MeshDefect { element: Some(element), boundary: false, msg: msg.into() }
    }

    fn global(msg: impl Into<String>) -> Self {
        MeshDefect { element: None, boundary: false, msg: msg.into() }
    }

    fn on_boundary(msg: impl Into<String>) -> Self {
        MeshDefect { element: None, boundary: true, msg: msg.into() }
    }
}

impl SimplicialMesh {
    /// Builds and validates a mesh. When `boundary` is `None` the boundary is
    /// taken to be the topological one (nodes on edges with one incident element).
    pub fn new(nodes: Vec<Point>, elements: Vec<[usize; 3]>, boundary: Option<Vec<usize>>) -> Result<Self> {
        Self::checked(nodes, elements, boundary).map_err(|d| match d.element {
            Some(k) => Error::invalid(format!("element {k}: {}", d.msg)),
            None => Error::invalid(d.msg),
        })
    }

    pub(crate) fn checked(
        nodes: Vec<Point>,
        mut elements: Vec<[usize; 3]>,
        boundary: Option<Vec<usize>>,
    ) -> std::result::Result<Self, MeshDefect> {
        let m = nodes.len();
        if m < 3 || elements.is_empty() {
            return Err(MeshDefect::global("a mesh needs at least 3 nodes and 1 element"));
        }
        if let Some(i) = nodes.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(MeshDefect::global(format!("node {i} has a non-finite coordinate")));
        }
        for (k, el) in elements.iter_mut().enumerate() {
            if let Some(&bad) = el.iter().find(|&&i| i >= m) {
                return Err(MeshDefect::at(k, format!("node index {bad} out of range (mesh has {m} nodes)")));
            }
            if el[0] == el[1] || el[1] == el[2] || el[0] == el[2] {
                return Err(MeshDefect::at(k, "repeated node index"));
            }
            let area = signed_area(&nodes[el[0]], &nodes[el[1]], &nodes[el[2]]);
            let scale = edge_len2(&nodes[el[0]], &nodes[el[1]])
                .max(edge_len2(&nodes[el[1]], &nodes[el[2]]))
                .max(edge_len2(&nodes[el[2]], &nodes[el[0]]));
            if area.abs() <= 1e-14 * scale {
                return Err(MeshDefect::at(k, "zero-area element"));
            }
            if area < 0.0 {
                el.swap(1, 2);
            }
        }

        let edge_count = check_conforming(&nodes, &elements)?;

        let mut topo = vec![false; m];
        for (&(a, b), &(count, _)) in &edge_count {
            if count == 1 {
                topo[a] = true;
                topo[b] = true;
            }
        }
        let mut used = vec![false; m];
        for el in &elements {
            for &i in el {
                used[i] = true;
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(MeshDefect::global(format!("node {i} belongs to no element")));
        }

        let boundary = match boundary {
            None => topo,
            Some(list) => {
                let mut flags = vec![false; m];
                for i in list {
                    if i >= m {
                        return Err(MeshDefect::on_boundary(format!(
                            "boundary node index {i} out of range (mesh has {m} nodes)"
                        )));
                    }
                    flags[i] = true;
                }
                if let Some(i) = (0..m).find(|&i| flags[i] != topo[i]) {
                    let what = if topo[i] { "missing from" } else { "wrongly listed in" };
                    return Err(MeshDefect::on_boundary(format!("node {i} is {what} the boundary set")));
                }
                flags
            }
        };

        Ok(SimplicialMesh { nodes, elements, boundary })
    }

    /// Spatial dimension. Only planar triangulations are supported.
    pub fn dim(&self) -> usize {
        2
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.boundary[i]).collect()
    }

    /// Criss triangulation of the unit square: `(n+1)^2` lattice nodes, each
    /// cell cut along its lower-left to upper-right diagonal. Node `(i, j)` has
    /// index `i + j (n + 1)`.
    pub fn unit_square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("unit_square needs n >= 1"));
        }
        let coords: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        criss_tensor_grid(&coords, &coords)
    }

    /// Signed area of element `k` (positive after validation).
    pub fn element_area(&self, k: usize) -> f64 {
        let [a, b, c] = self.elements[k];
        signed_area(&self.nodes[a], &self.nodes[b], &self.nodes[c])
    }
}

pub(crate) fn signed_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn edge_len2(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Checks that faces match exactly; returns, per undirected edge, the number
/// of incident elements and the first element seen.
fn check_conforming(
    nodes: &[Point],
    elements: &[[usize; 3]],
) -> std::result::Result<HashMap<(usize, usize), (usize, usize)>, MeshDefect> {
    let mut seen: HashMap<[usize; 3], usize> = HashMap::with_capacity(elements.len());
    for (k, el) in elements.iter().enumerate() {
        let mut key = *el;
        key.sort_unstable();
        if let Some(first) = seen.insert(key, k) {
            return Err(MeshDefect::at(k, format!("non-conforming: duplicates element {first}")));
        }
    }

    // Directed edges of counter-clockwise elements: a shared face must be
    // traversed once in each direction.
    let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * elements.len());
    let mut undirected: HashMap<(usize, usize), (usize, usize)> = HashMap::with_capacity(3 * elements.len());
    for (k, el) in elements.iter().enumerate() {
        for p in 0..3 {
            let (a, b) = (el[p], el[(p + 1) % 3]);
            if let Some(other) = directed.insert((a, b), k) {
                return Err(MeshDefect::at(
                    k,
                    format!("non-conforming: overlaps element {other} across edge ({a}, {b})"),
                ));
            }
            let key = (a.min(b), a.max(b));
            let entry = undirected.entry(key).or_insert((0, k));
            entry.0 += 1;
            if entry.0 > 2 {
                return Err(MeshDefect::at(
                    k,
                    format!("non-conforming: edge ({a}, {b}) shared by more than two elements"),
                ));
            }
        }
    }

    // Hanging nodes sit inside an edge that only one element sees.
    for (&(a, b), &(count, k)) in &undirected {
        if count != 1 {
            continue;
        }
        let (pa, pb) = (nodes[a], nodes[b]);
        let len2 = edge_len2(&pa, &pb);
        for (i, p) in nodes.iter().enumerate() {
            if i == a || i == b {
                continue;
            }
            let cross = (pb[0] - pa[0]) * (p[1] - pa[1]) - (pb[1] - pa[1]) * (p[0] - pa[0]);
            if cross.abs() > 1e-12 * len2 {
                continue;
            }
            let t = ((p[0] - pa[0]) * (pb[0] - pa[0]) + (p[1] - pa[1]) * (pb[1] - pa[1])) / len2;
            if t > 1e-12 && t < 1.0 - 1e-12 {
                return Err(MeshDefect::at(k, format!("non-conforming: node {i} hangs on edge ({a}, {b})")));
            }
        }
    }
    Ok(undirected)
}
