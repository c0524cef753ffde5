use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use twophase::mesh::write_mesh;
use twophase::SimplicialMesh;
use twophase_cli::export::read_fields_csv;

fn twophase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twophase")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines().find_map(|l| l.strip_prefix(&format!("{key}="))).unwrap_or_else(|| panic!("{key} missing in\n{text}"))
}

/// Largest interior angle by direct enumeration over the triangles of a mesh file.
fn max_angle_of_file(text: &str) -> f64 {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let mut next = || lines.next().unwrap().split_whitespace().collect::<Vec<_>>();
    next();
    let nn: usize = next()[1].parse().unwrap();
    let pts: Vec<[f64; 2]> = (0..nn)
        .map(|_| {
            let t = next();
            [t[0].parse().unwrap(), t[1].parse().unwrap()]
        })
        .collect();
    let ne: usize = next()[1].parse().unwrap();
    let mut worst = 0.0f64;
    for _ in 0..ne {
        let t = next();
        let v: Vec<[f64; 2]> = t.iter().map(|s| pts[s.parse::<usize>().unwrap()]).collect();
        for a in 0..3 {
            let (p, q, r) = (v[a], v[(a + 1) % 3], v[(a + 2) % 3]);
            let ang = ((q[1] - p[1]).atan2(q[0] - p[0]) - (r[1] - p[1]).atan2(r[0] - p[0])).abs();
            worst = worst.max(if ang > PI { 2.0 * PI - ang } else { ang });
        }
    }
    worst
}

/// Structural check of a legacy ASCII unstructured-grid file: header lines,
/// section counts, cell sizes, cell types and point-data lengths.
fn check_vtk(text: &str, nodes: usize, arrays: &[&str]) {
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# vtk DataFile Version 3.0");
    assert!(lines[1].len() <= 256 && !lines[1].is_empty());
    assert_eq!(lines[2], "ASCII");
    assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
    let mut k = 4;
    let header = |k: usize, word: &str| -> Vec<String> {
        let t: Vec<String> = lines[k].split_whitespace().map(String::from).collect();
        assert_eq!(t[0], word, "line {}: {}", k + 1, lines[k]);
        t
    };
    let p = header(k, "POINTS");
    assert_eq!(p[1].parse::<usize>().unwrap(), nodes);
    assert!(p[2] == "double" || p[2] == "float");
    for l in &lines[k + 1..k + 1 + nodes] {
        let v: Vec<f64> = l.split_whitespace().map(|s| s.parse().unwrap()).collect();
        assert_eq!(v.len(), 3);
    }
    k += 1 + nodes;
    let c = header(k, "CELLS");
    let (ne, size): (usize, usize) = (c[1].parse().unwrap(), c[2].parse().unwrap());
    let mut total = 0;
    for l in &lines[k + 1..k + 1 + ne] {
        let v: Vec<usize> = l.split_whitespace().map(|s| s.parse().unwrap()).collect();
        assert_eq!(v[0] + 1, v.len());
        assert!(v[1..].iter().all(|&i| i < nodes));
        total += v.len();
    }
    assert_eq!(total, size);
    k += 1 + ne;
    let t = header(k, "CELL_TYPES");
    assert_eq!(t[1].parse::<usize>().unwrap(), ne);
    assert!(lines[k + 1..k + 1 + ne].iter().all(|l| *l == "5"));
    k += 1 + ne;
    let pd = header(k, "POINT_DATA");
    assert_eq!(pd[1].parse::<usize>().unwrap(), nodes);
    k += 1;
    for name in arrays {
        let s = header(k, "SCALARS");
        assert_eq!(&s[1], name);
        assert_eq!(lines[k + 1], "LOOKUP_TABLE default");
        for l in &lines[k + 2..k + 2 + nodes] {
            assert!(l.parse::<f64>().unwrap().is_finite());
        }
        k += 2 + nodes;
    }
    assert_eq!(k, lines.len(), "trailing content");
}

const WELLS: &str = r#"
[mesh]
n = 6

[model]
porosity = 0.3

[sources]
mode = "wells"
initial_saturation = 0.2
background_rate = 0.1

[[sources.injector]]
x = 0.2
y = 0.2
rate = 1.0
width = 0.25

[[sources.producer]]
x = 0.8
y = 0.8
rate = 1.0
width = 0.25

[solver]
scheme = "implicit"
tau = 0.02
t_final = 0.1

[output]
dir = "out"
formats = ["csv", "vtk"]
snapshot_every = 2
"#;

const SMALL_MMS: &str = r#"
[mesh]
levels = [4, 8, 16]

[sources]
mode = "manufactured"
boundary = "dirichlet"

[solver]
tau_per_h = 1.0
t_final = 1.0

[output]
dir = "out"
"#;

#[test]
fn check_mesh_reports_right_angles_on_criss_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let text = write_mesh(&SimplicialMesh::unit_square(4).unwrap());
    let file = write(dir.path(), "criss.mesh", &text);
    let o = twophase(&["check-mesh", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let reported: f64 = value(&out, "worst_angle").parse().unwrap();
    let oracle = max_angle_of_file(&text);
    assert!((oracle - PI / 2.0).abs() < 1e-12);
    assert!((reported - oracle).abs() < 1e-12, "{reported} vs {oracle}");
    assert_eq!(value(&out, "acute"), "true");
    assert_eq!(value(&out, "nodes"), "25");
    assert_eq!(value(&out, "elements"), "32");
}

#[test]
fn check_mesh_flags_obtuse_and_rejects_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    let obtuse = "dim 2\nnodes 4\n0 0\n1 0\n0.5 0.1\n0.5 1\nelements 2\n0 1 2\n0 2 3\nboundary 4\n0\n1\n2\n3\n";
    let file = write(dir.path(), "obtuse.mesh", obtuse);
    let o = twophase(&["check-mesh", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert_eq!(value(&out, "acute"), "false");
    let reported: f64 = value(&out, "worst_angle").parse().unwrap();
    assert!((reported - max_angle_of_file(obtuse)).abs() < 1e-12);

    let bad = write(dir.path(), "bad.mesh", "dim 2\nnodes 2\n0 0\n");
    let o = twophase(&["check-mesh", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
    let o = twophase(&["check-mesh", dir.path().join("missing.mesh").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(twophase(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(twophase(&[]).status.code(), Some(2));
    assert_eq!(twophase(&["identities", "--seed", "x"]).status.code(), Some(2));
    let help = twophase(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("check-mesh"));
}

#[test]
fn config_errors_are_listed_and_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "c.toml", "[mesh]\nn = 4\n[solver]\nt_final = 1.0\n");
    let o = twophase(&["run", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("solver.tau required"), "{}", stderr(&o));

    let f = write(dir.path(), "d.toml", "[solver]\ntau = -0.1\nt_final = 1.0\nscheme = \"explicit\"\n");
    let o = twophase(&["run", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("explicit"), "{}", stderr(&o));

    let f = write(dir.path(), "e.toml", "[solver]\ntau = -0.1\nt_final = 1.0\n");
    let o = twophase(&["run", f.to_str().unwrap()]);
    assert!(stderr(&o).contains("solver.tau must be positive"), "{}", stderr(&o));

    // a study config handed to `run`
    let f = write(dir.path(), "m.toml", SMALL_MMS);
    assert_eq!(twophase(&["run", f.to_str().unwrap()]).status.code(), Some(2));
    let f = write(dir.path(), "w.toml", WELLS);
    assert_eq!(twophase(&["mms", f.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn run_writes_log_snapshots_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "wells.toml", WELLS);
    let o = twophase(&["run", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out_dir = dir.path().join("out");
    let hash = twophase_cli::config::sha256_hex(WELLS);

    let log = std::fs::read_to_string(out_dir.join("run_log.csv")).unwrap();
    let body: Vec<&str> = log.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "step,t,min_S,max_S,mean_Pw,energy_acc,flux_imbalance,newton_iters");
    assert_eq!(body.len(), 1 + 6);
    assert!(log.contains(&format!("# config_sha256 {hash}")));
    assert!(log.contains(&format!("# twophase {}", env!("CARGO_PKG_VERSION"))));

    let mut names: Vec<String> =
        std::fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    let expect: Vec<String> = [0, 2, 4, 5]
        .iter()
        .flat_map(|s| [format!("state_{s:06}.csv"), format!("state_{s:06}.vtk")])
        .chain(["run_log.csv".to_string()])
        .collect();
    let mut expect = expect;
    expect.sort();
    assert_eq!(names, expect);

    let csv = std::fs::read_to_string(out_dir.join("state_000005.csv")).unwrap();
    assert!(csv.contains(&hash));
    let rows = read_fields_csv(&csv).unwrap();
    assert_eq!(rows.len(), 49);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.s)));
    let vtk = std::fs::read_to_string(out_dir.join("state_000005.vtk")).unwrap();
    check_vtk(&vtk, 49, &["S", "Pw", "Po"]);
    assert!(vtk.lines().nth(1).unwrap().contains(&hash));

    // the final log row matches the exported final state
    let last: Vec<&str> = body.last().unwrap().split(',').collect();
    let min_s = rows.iter().map(|r| r.s).fold(f64::INFINITY, f64::min);
    assert_eq!(last[2].parse::<f64>().unwrap(), min_s);
}

#[test]
fn identical_config_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "wells.toml", WELLS);
    let read_all = |sub: &str| {
        let o = twophase(&["run", f.to_str().unwrap(), "--output-dir", dir.path().join(sub).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path().join(sub))
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    assert_eq!(read_all("a"), read_all("b"));
}

#[test]
fn newton_failure_exits_with_one_and_keeps_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    let text = WELLS.replace("tau = 0.02", "tau = 0.02\nnewton_max_iters = 1\nnewton_tol = 1e-15");
    let f = write(dir.path(), "w.toml", &text);
    let o = twophase(&["run", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("step 1"), "{}", stderr(&o));
    let log = std::fs::read_to_string(dir.path().join("out/run_log.csv")).unwrap();
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 2);
}

#[test]
fn mms_on_default_config_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/mms.toml");
    let o = twophase(&["mms", cfg.to_str().unwrap(), "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "h,n_df,err_pw,rate_pw,err_s,rate_s");
    assert_eq!(body.len(), 6);
    for row in &body[3..] {
        let f: Vec<f64> = row.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((0.85..=1.15).contains(&f[3]) && (0.85..=1.15).contains(&f[5]), "{row}");
    }
    let text = std::fs::read_to_string(dir.path().join("convergence.txt")).unwrap();
    assert!(stdout(&o).contains(&text));
}

#[test]
fn mms_is_deterministic_across_processes_and_threading() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "mms.toml", SMALL_MMS);
    let table = |sub: &str, extra: &[&str]| {
        let out = dir.path().join(sub);
        let mut args = vec!["mms", f.to_str().unwrap(), "--output-dir", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = twophase(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(out.join("convergence.csv")).unwrap()
    };
    let a = table("a", &[]);
    assert_eq!(a, table("b", &[]));
    assert_eq!(a, table("c", &["--serial"]));
}

#[test]
fn identities_command_is_machine_readable() {
    let o = twophase(&["identities", "--seed", "11", "--count", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("mesh ")).count(), 5);
    assert_eq!(out.lines().filter(|l| l.starts_with("check ")).count(), 35);
    assert!(out.lines().filter(|l| l.starts_with("check ")).all(|l| l.ends_with("status=PASS")));
    assert!(out.lines().last().unwrap().starts_with("summary seed=11 meshes=5 checks=35 failures=0 status=PASS"));
    assert_eq!(out, stdout(&twophase(&["identities", "--seed", "11", "--count", "5"])));
}
