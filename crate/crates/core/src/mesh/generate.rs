use rand::Rng;

use super::{check_acuteness, SimplicialMesh};
use crate::error::{Error, Result};

/// Criss triangulation of the tensor grid `xs × ys`: every cell is split along
/// the same diagonal, so all triangles are right triangles and satisfy the
/// angle condition whatever the spacing.
pub fn criss_tensor_grid(xs: &[f64], ys: &[f64]) -> Result<SimplicialMesh> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::invalid("tensor grid needs at least two coordinates per axis"));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) || ys.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("tensor grid coordinates must be strictly increasing"));
    }
    let nx = xs.len();
    let idx = |i: usize, j: usize| i + j * nx;
    let mut nodes = Vec::with_capacity(nx * ys.len());
    for &y in ys {
        for &x in xs {
            nodes.push([x, y]);
        }
    }
    let mut elements = Vec::with_capacity(2 * (nx - 1) * (ys.len() - 1));
    for j in 0..ys.len() - 1 {
        for i in 0..nx - 1 {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            elements.push([a, b, c]);
            elements.push([a, c, d]);
        }
    }
    SimplicialMesh::new(nodes, elements, None)
}

/// Equilateral triangular lattice with `nx` cells per row and `ny` rows of
/// spacing `a`, with each node moved by up to `jitter * a` in each direction.
/// Draws are retried until the result satisfies the angle condition.
pub fn jittered_lattice<R: Rng>(nx: usize, ny: usize, a: f64, jitter: f64, rng: &mut R) -> Result<SimplicialMesh> {
    if nx == 0 || ny == 0 || a <= 0.0 {
        return Err(Error::invalid("lattice needs nx, ny >= 1 and positive spacing"));
    }
    let height = a * 3f64.sqrt() / 2.0;
    let idx = |i: usize, j: usize| i + j * (nx + 1);
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            if j % 2 == 0 {
                elements.push([idx(i, j), idx(i + 1, j), idx(i, j + 1)]);
                elements.push([idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            } else {
                elements.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
                elements.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            }
        }
    }
    for _attempt in 0..100 {
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            let shift = if j % 2 == 1 { 0.5 * a } else { 0.0 };
            for i in 0..=nx {
                let dx = jitter * a * rng.gen_range(-1.0..=1.0);
                let dy = jitter * a * rng.gen_range(-1.0..=1.0);
                nodes.push([i as f64 * a + shift + dx, j as f64 * height + dy]);
            }
        }
        let mesh = SimplicialMesh::new(nodes, elements.clone(), None)?;
        if check_acuteness(&mesh).ok {
            return Ok(mesh);
        }
    }
    Err(Error::invalid("could not draw an acute jittered lattice; reduce the jitter"))
}
