//! Field and table writers. Numbers use 17 significant digits so values
//! survive a text round trip bit for bit.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use twophase::{MeshGeometry, TimeState};

use crate::config::Format;

/// Tool version and configuration hash stamped into every output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub version: String,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(config_sha256: &str) -> Self {
        Provenance { version: env!("CARGO_PKG_VERSION").into(), config_sha256: config_sha256.into() }
    }

    /// `# `-prefixed header lines for CSV outputs.
    pub fn csv_header(&self) -> String {
        format!("# twophase {}\n# config_sha256 {}\n", self.version, self.config_sha256)
    }
}

/// `v` with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fields_csv(state: &TimeState, geom: &MeshGeometry, prov: &Provenance) -> String {
    let mut out = prov.csv_header();
    let _ = writeln!(out, "# step {} t {}", state.n, fmt17(state.t));
    out.push_str("node_id,x,y,S,Pw,Po\n");
    let (s, pw, po) = (state.s.values(), state.pw.values(), state.po.values());
    for (i, p) in geom.mesh().nodes().iter().enumerate() {
        let _ = writeln!(out, "{i},{},{},{},{},{}", fmt17(p[0]), fmt17(p[1]), fmt17(s[i]), fmt17(pw[i]), fmt17(po[i]));
    }
    out
}

/// Legacy ASCII unstructured grid with point data `S`, `Pw`, `Po`.
pub fn fields_vtk(state: &TimeState, geom: &MeshGeometry, prov: &Provenance) -> String {
    let mesh = geom.mesh();
    let (nn, ne) = (mesh.num_nodes(), mesh.num_elements());
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(
        out,
        "twophase {} config_sha256={} step={} t={}",
        prov.version,
        prov.config_sha256,
        state.n,
        fmt17(state.t)
    );
    let _ = writeln!(out, "ASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {nn} double");
    for p in mesh.nodes() {
        let _ = writeln!(out, "{} {} 0", fmt17(p[0]), fmt17(p[1]));
    }
    let _ = writeln!(out, "CELLS {ne} {}", 4 * ne);
    for el in mesh.elements() {
        let _ = writeln!(out, "3 {} {} {}", el[0], el[1], el[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {ne}");
    for _ in 0..ne {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "POINT_DATA {nn}");
    for (name, field) in [("S", &state.s), ("Pw", &state.pw), ("Po", &state.po)] {
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in field.values() {
            out.push_str(&fmt17(*v));
            out.push('\n');
        }
    }
    out
}

/// Writes `state` to `path`; I/O errors carry the path.
pub fn export_fields(
    state: &TimeState,
    geom: &MeshGeometry,
    path: &Path,
    format: Format,
    prov: &Provenance,
) -> io::Result<()> {
    let text = match format {
        Format::Csv => fields_csv(state, geom, prov),
        Format::Vtk => fields_vtk(state, geom, prov),
    };
    write_file(path, &text)
}

pub fn write_file(path: &Path, text: &str) -> io::Result<()> {
    std::fs::write(path, text).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// One row of a field CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldRow {
    pub node_id: usize,
    pub x: f64,
    pub y: f64,
    pub s: f64,
    pub pw: f64,
    pub po: f64,
}

/// Reads the output of [`fields_csv`], skipping `#` lines.
pub fn read_fields_csv(text: &str) -> Result<Vec<FieldRow>, String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
    match lines.next() {
        Some((_, "node_id,x,y,S,Pw,Po")) => {}
        other => return Err(format!("bad header: {other:?}")),
    }
    lines
        .map(|(k, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(format!("line {}: expected 6 fields", k + 1));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", k + 1));
            Ok(FieldRow {
                node_id: f[0].parse().map_err(|e| format!("line {}: {e}", k + 1))?,
                x: num(f[1])?,
                y: num(f[2])?,
                s: num(f[3])?,
                pw: num(f[4])?,
                po: num(f[5])?,
            })
        })
        .collect()
}
