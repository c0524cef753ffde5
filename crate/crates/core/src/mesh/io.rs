//! Line-oriented mesh text format.
//!
//! ```text
//! dim 2
//! nodes <M>
//! <x> <y>
//! elements <E>
//! <i> <j> <k>
//! boundary <B>
//! <i>
//! ```
//!
//! Indices are 0-based. `#` starts a comment. The boundary section is
//! mandatory for loaded meshes.

use std::fmt::Write;

use super::{Point, SimplicialMesh};
use crate::error::{Error, Result};

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    /// Next non-empty line with comments stripped, with its 1-based number.
    fn next(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (k, raw) in self.inner.by_ref() {
            let body = raw.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = body.split_whitespace().collect();
            if !tokens.is_empty() {
                self.last = k + 1;
                return Some((k + 1, tokens));
            }
        }
        None
    }

    fn header(&mut self, keyword: &str) -> Result<(usize, usize)> {
        let (line, tokens) = self
            .next()
            .ok_or_else(|| Error::parse(self.last + 1, format!("expected `{keyword} <count>`, found end of file")))?;
        parse_header(line, &tokens, keyword)
    }
}

fn parse_header(line: usize, tokens: &[&str], keyword: &str) -> Result<(usize, usize)> {
    if tokens.len() != 2 || tokens[0] != keyword {
        return Err(Error::parse(line, format!("malformed header: expected `{keyword} <count>`")));
    }
    let count = tokens[1]
        .parse::<usize>()
        .map_err(|_| Error::parse(line, format!("malformed header: bad count `{}`", tokens[1])))?;
    Ok((line, count))
}

fn parse_fields<T: std::str::FromStr, const N: usize>(line: usize, tokens: &[&str], what: &str) -> Result<[T; N]> {
    if tokens.len() != N {
        return Err(Error::parse(line, format!("{what} line needs {N} fields, found {}", tokens.len())));
    }
    let mut out = Vec::with_capacity(N);
    for t in tokens {
        out.push(t.parse::<T>().map_err(|_| Error::parse(line, format!("bad {what} field `{t}`")))?);
    }
    out.try_into().map_err(|_| Error::parse(line, "internal field count mismatch"))
}

pub fn load_mesh(text: &str) -> Result<SimplicialMesh> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };

    let (line, dim) = lines.header("dim")?;
    match dim {
        2 => {}
        3 => return Err(Error::parse(line, "tetrahedral meshes are not supported")),
        d => return Err(Error::parse(line, format!("unsupported dimension {d}"))),
    }

    let (_, m) = lines.header("nodes")?;
    let mut nodes: Vec<Point> = Vec::with_capacity(m);
    for _ in 0..m {
        let (line, tokens) = lines.next().ok_or_else(|| Error::parse(lines.last + 1, "unexpected end of node list"))?;
        let p: [f64; 2] = parse_fields(line, &tokens, "node")?;
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::parse(line, "non-finite node coordinate"));
        }
        nodes.push(p);
    }

    let (elements_header, e) = lines.header("elements")?;
    let mut elements = Vec::with_capacity(e);
    let mut element_lines = Vec::with_capacity(e);
    for _ in 0..e {
        let (line, tokens) =
            lines.next().ok_or_else(|| Error::parse(lines.last + 1, "unexpected end of element list"))?;
        let el: [usize; 3] = parse_fields(line, &tokens, "element")?;
        if let Some(&bad) = el.iter().find(|&&i| i >= m) {
            return Err(Error::parse(line, format!("index out of range: node {bad} (mesh has {m} nodes)")));
        }
        elements.push(el);
        element_lines.push(line);
    }

    let (boundary_header, b) = match lines.next() {
        Some((line, tokens)) => parse_header(line, &tokens, "boundary")?,
        None => return Err(Error::parse(lines.last + 1, "missing boundary section")),
    };
    let mut boundary = Vec::with_capacity(b);
    for _ in 0..b {
        let (line, tokens) =
            lines.next().ok_or_else(|| Error::parse(lines.last + 1, "unexpected end of boundary list"))?;
        let [i]: [usize; 1] = parse_fields(line, &tokens, "boundary")?;
        if i >= m {
            return Err(Error::parse(line, format!("index out of range: boundary node {i} (mesh has {m} nodes)")));
        }
        boundary.push(i);
    }
    if let Some((line, _)) = lines.next() {
        return Err(Error::parse(line, "trailing content after boundary section"));
    }

    SimplicialMesh::checked(nodes, elements, Some(boundary)).map_err(|d| {
        let line = match (d.element, d.boundary) {
            (Some(k), _) => element_lines[k],
            (None, true) => boundary_header,
            (None, false) => elements_header,
        };
        Error::parse(line, d.msg)
    })
}

/// Serializes a mesh in the format read by [`load_mesh`]. Coordinates use the
/// shortest representation that round-trips.
pub fn write_mesh(mesh: &SimplicialMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dim 2");
    let _ = writeln!(out, "nodes {}", mesh.num_nodes());
    for p in mesh.nodes() {
        let _ = writeln!(out, "{:?} {:?}", p[0], p[1]);
    }
    let _ = writeln!(out, "elements {}", mesh.num_elements());
    for el in mesh.elements() {
        let _ = writeln!(out, "{} {} {}", el[0], el[1], el[2]);
    }
    let boundary = mesh.boundary_nodes();
    let _ = writeln!(out, "boundary {}", boundary.len());
    for i in boundary {
        let _ = writeln!(out, "{i}");
    }
    out
}
