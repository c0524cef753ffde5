//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the target
//! exits with status 1 if any criterion fails.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twophase::fem::{integrate_high_order, sample_at_centroids};
use twophase::identities::{consistency_gap, identity_suite};
use twophase::mms::{convergence_study, observed_rate, ConvergenceTable, StudyConfig, ValidationSolution};
use twophase::stepper::{scalar_fn, DiscreteSources, ImplicitSystem, JacobianKind};
use twophase::{
    step_implicit, FluidModel, MeshGeometry, Problem, Scheme, SimplicialMesh, SolverConfig, SourceModel, TimeState,
};

/// Published final-time errors for h = 0.2, 0.1, 0.05, 0.025, 0.0125. The
/// saturation entry at h = 0.05 is printed as 1.14E-4, which contradicts its
/// printed rate, and is read as 1.14E-3; the pressure entry at h = 0.025 is
/// printed without the exponent marker and is read as 1.04E-3.
const PUBLISHED_PW: [f64; 5] = [8.50e-3, 4.15e-3, 2.08e-3, 1.04e-3, 5.23e-4];
const PUBLISHED_S: [f64; 5] = [4.21e-3, 2.30e-3, 1.14e-3, 5.57e-4, 2.75e-4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, o: &Outcome) {
    println!("criterion {id} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn mms_table() -> ConvergenceTable {
    convergence_study(&FluidModel::validation(), Arc::new(ValidationSolution), &StudyConfig::default())
        .expect("convergence study")
}

fn criterion1(t: &ConvergenceTable) -> Outcome {
    let rows = t.rows();
    let mut problems = Vec::new();
    if rows.len() != 5 {
        problems.push(format!("expected 5 levels, got {}", rows.len()));
    }
    for r in rows.iter().skip(2) {
        for (name, rate) in [("P_w", r.rate_pw), ("S", r.rate_s)] {
            let rate = rate.unwrap_or(f64::NAN);
            if !(0.85..=1.15).contains(&rate) {
                problems.push(format!("{name} rate {rate:.3} at h={}", r.h));
            }
        }
    }
    for w in rows.windows(2) {
        if !(w[1].err_pw < w[0].err_pw && w[1].err_s < w[0].err_s) {
            problems.push(format!("errors do not decrease at h={}", w[1].h));
        }
    }
    for (k, r) in rows.iter().enumerate() {
        for (name, got, reference) in [("P_w", r.err_pw, PUBLISHED_PW[k]), ("S", r.err_s, PUBLISHED_S[k])] {
            let ratio = got / reference;
            if !(0.1..=10.0).contains(&ratio) {
                problems.push(format!("{name} error {got:.2e} vs published {reference:.2e} at h={}", r.h));
            }
        }
    }
    let rates: Vec<String> = rows
        .iter()
        .skip(1)
        .map(|r| format!("{:.2}/{:.2}", r.rate_pw.unwrap_or(f64::NAN), r.rate_s.unwrap_or(f64::NAN)))
        .collect();
    Outcome {
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            format!("rates P_w/S {}; h=0.2 errors {:.2e}/{:.2e}", rates.join(" "), rows[0].err_pw, rows[0].err_s)
        } else {
            problems.join("; ")
        },
    }
}

fn criterion2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let suite = identity_suite(&mut rng, 20).expect("identity suite");
    let elapsed = start.elapsed().as_secs_f64();
    let worst = suite.iter().map(|m| m.worst()).fold(0.0, f64::max);
    let bad: Vec<String> = suite
        .iter()
        .flat_map(|m| {
            m.checks.iter().filter(|c| c.rel_error > 1e-12).map(move |c| format!("{} on {}", c.name, m.description))
        })
        .collect();
    Outcome {
        pass: bad.is_empty() && suite.len() == 20 && elapsed < 10.0,
        detail: format!(
            "{} meshes, worst relative error {worst:.1e}, {elapsed:.2}s{}",
            suite.len(),
            if bad.is_empty() { String::new() } else { format!("; failing: {}", bad.join(", ")) }
        ),
    }
}

fn criterion3() -> Outcome {
    let gaps: Vec<f64> = [8, 16, 32].iter().map(|&n| consistency_gap(n).expect("gap")).collect();
    let r1 = observed_rate(gaps[0], gaps[1], 1.0 / 8.0, 1.0 / 16.0);
    let r2 = observed_rate(gaps[1], gaps[2], 1.0 / 16.0, 1.0 / 32.0);
    Outcome {
        pass: r1 >= 0.9 && r2 >= 0.9,
        detail: format!("gaps {:.3e} {:.3e} {:.3e}, rates {r1:.2} {r2:.2}", gaps[0], gaps[1], gaps[2]),
    }
}

/// Gaussian wells at random positions over a small positive floor, with the
/// production rate scaled so that both rates have the same integral.
fn random_wells(rng: &mut ChaCha8Rng, geom: &MeshGeometry) -> SourceModel {
    let c_in: [f64; 2] = [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)];
    let c_out: [f64; 2] = [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)];
    let amp = rng.gen_range(0.5..2.0);
    let s_in = rng.gen_range(0.0..=1.0);
    let bump =
        move |c: [f64; 2], x: f64, y: f64| amp * (0.05 + (-25.0 * ((x - c[0]).powi(2) + (y - c[1]).powi(2))).exp());
    let ratio =
        integrate_high_order(geom, |x, y| bump(c_in, x, y)) / integrate_high_order(geom, |x, y| bump(c_out, x, y));
    SourceModel::wells(
        scalar_fn(move |_, x, y| bump(c_in, x, y)),
        scalar_fn(move |_, x, y| ratio * bump(c_out, x, y)),
        scalar_fn(move |_, _, _| s_in),
    )
}

struct RunStats {
    min_s: f64,
    max_s: f64,
    mean: f64,
    omitted: f64,
    balance: f64,
    mass: f64,
    steps: usize,
}

/// Criteria 4 and 5 share the randomized implicit no-flux runs.
fn randomized_runs() -> Result<RunStats, String> {
    let model = FluidModel::validation();
    let geom = MeshGeometry::new(&SimplicialMesh::unit_square(8).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let cfg = SolverConfig::new(0.01, 0.5, Scheme::Implicit);
    let mut st = RunStats {
        min_s: f64::INFINITY,
        max_s: f64::NEG_INFINITY,
        mean: 0.0,
        omitted: 0.0,
        balance: 0.0,
        mass: 0.0,
        steps: 0,
    };
    let m = geom.masses();
    for run in 0..20 {
        let src = random_wells(&mut rng, &geom);
        let porosity = sample_at_centroids(&geom, |x, y| 0.2 * (1.0 + x * y));
        let problem = Problem::new(&geom, &model, porosity, src).unwrap();
        let s0 = (0..geom.num_nodes()).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let mut state = TimeState::new(&geom, &model, 0, 0.0, s0, vec![0.0; geom.num_nodes()]).unwrap();
        st.min_s = st.min_s.min(state.s.min());
        st.max_s = st.max_s.max(state.s.max());
        for _ in 0..cfg.num_steps() {
            let rep = step_implicit(&problem, &state, &cfg).map_err(|e| format!("run {run}: {e}"))?;
            let s = rep.state.s.values();
            st.min_s = st.min_s.min(rep.state.s.min());
            st.max_s = st.max_s.max(rep.state.s.max());
            let integral: f64 = m.iter().zip(rep.state.pw.values()).map(|(a, b)| a * b).sum();
            st.mean = st.mean.max(integral.abs());
            st.omitted = st.omitted.max(rep.omitted_row.expect("no-flux step").abs());
            let DiscreteSources::Wells { q_in, q_out, s_in } = &rep.sources else { unreachable!() };
            let (a, b) = rep.sources.well_totals(&geom).unwrap();
            st.balance = st.balance.max((a - b).abs());
            let lhs: f64 = (0..s.len()).map(|i| problem.weighted_masses()[i] * (s[i] - state.s.values()[i])).sum();
            let rhs: f64 = cfg.tau
                * (0..s.len()).map(|i| m[i] * (model.f_w(s_in[i]) * q_in[i] - model.f_w(s[i]) * q_out[i])).sum::<f64>();
            st.mass = st.mass.max((lhs - rhs).abs());
            st.steps += 1;
            state = rep.state;
        }
    }
    Ok(st)
}

fn criterion4(st: &Result<RunStats, String>) -> Outcome {
    match st {
        Ok(st) => Outcome {
            pass: st.min_s >= -1e-12 && st.max_s <= 1.0 + 1e-12 && st.steps == 20 * 50,
            detail: format!("{} steps, min S {:.3e}, max S - 1 = {:.3e}", st.steps, st.min_s, st.max_s - 1.0),
        },
        Err(e) => Outcome { pass: false, detail: e.clone() },
    }
}

fn criterion5(st: &Result<RunStats, String>) -> Outcome {
    match st {
        Ok(st) => Outcome {
            pass: st.mean <= 1e-10 && st.omitted <= 1e-10 && st.balance <= 1e-12 && st.mass <= 1e-10,
            detail: format!(
                "max |(P_w,1)_h| {:.1e}, omitted row {:.1e}, source balance {:.1e}, mass balance {:.1e}",
                st.mean, st.omitted, st.balance, st.mass
            ),
        },
        Err(e) => Outcome { pass: false, detail: e.clone() },
    }
}

fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut jac = vec![vec![0.0; n]; n];
    for k in 0..n {
        let h = 1e-7 * (1.0 + x[k].abs());
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[k] += h;
        xm[k] -= h;
        let (rp, rm) = (f(&xp), f(&xm));
        for r in 0..n {
            jac[r][k] = (rp[r] - rm[r]) / (2.0 * h);
        }
    }
    jac
}

fn criterion6() -> Outcome {
    let model = FluidModel::validation();
    let geom = MeshGeometry::new(&SimplicialMesh::unit_square(2).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst, mut points) = (0.0f64, 0);
    let sources = [
        random_wells(&mut rng, &geom),
        random_wells(&mut rng, &geom).with_dirichlet(scalar_fn(|_, x, y| 0.3 + 0.3 * x * y), scalar_fn(|_, x, _| x)),
    ];
    for src in sources {
        let porosity = sample_at_centroids(&geom, |x, y| 0.2 * (1.0 + x * y));
        let problem = Problem::new(&geom, &model, porosity, src).unwrap();
        let nn = geom.num_nodes();
        let mut tries = 0;
        let mut accepted = 0;
        while accepted < 10 && tries < 1000 {
            tries += 1;
            let s: Vec<f64> = (0..nn).map(|_| rng.gen_range(0.02..0.98)).collect();
            let p: Vec<f64> = (0..nn).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // oracle-declared point: every pressure difference well away from a tie
            let po: Vec<f64> = (0..nn).map(|i| p[i] + model.pc(s[i])).collect();
            if geom.edges().iter().any(|e| (p[e.i] - p[e.j]).abs() < 1e-3 || (po[e.i] - po[e.j]).abs() < 1e-3) {
                continue;
            }
            accepted += 1;
            let old = TimeState::new(&geom, &model, 0, 0.0, vec![0.5; nn], vec![0.0; nn]).unwrap();
            let sys = ImplicitSystem::new(&problem, &old, 0.05).unwrap();
            let x: Vec<f64> = s.iter().zip(&p).flat_map(|(&a, &b)| [a, b]).collect();
            let analytic = sys.jacobian(&x, JacobianKind::Newton).to_dense();
            let fd = fd_jacobian(|y| sys.residual(y), &x);
            let scale = analytic.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            for (ra, rf) in analytic.iter().zip(&fd) {
                for (a, f) in ra.iter().zip(rf) {
                    worst = worst.max((a - f).abs() / scale);
                }
            }
            points += 1;
        }
    }
    Outcome {
        pass: worst <= 1e-6 && points == 20,
        detail: format!("{points} points, worst relative difference {worst:.1e}"),
    }
}

fn main() {
    let mut all = true;
    let start = Instant::now();
    let table = mms_table();
    let elapsed = start.elapsed().as_secs_f64();
    println!("{table}");
    let mut c1 = criterion1(&table);
    c1.pass &= elapsed < 300.0;
    c1.detail = format!("{}; {elapsed:.1}s", c1.detail);
    report(1, "mms convergence", &c1);
    all &= c1.pass;

    let checks: [(usize, &str, Outcome); 2] =
        [(2, "discrete identities", criterion2()), (3, "consistency rate", criterion3())];
    for (id, name, o) in &checks {
        report(*id, name, o);
        all &= o.pass;
    }

    let stats = randomized_runs();
    for (id, name, o) in [
        (4, "maximum principle", criterion4(&stats)),
        (5, "constraint and balance", criterion5(&stats)),
        (6, "jacobian", criterion6()),
    ] {
        report(id, name, &o);
        all &= o.pass;
    }

    let again = mms_table();
    let c7 = Outcome {
        pass: again.to_csv() == table.to_csv(),
        detail: format!("{} bytes of CSV compared", table.to_csv().len()),
    };
    report(7, "determinism", &c7);
    all &= c7.pass;

    if !all {
        eprintln!("at least one acceptance criterion failed");
        std::process::exit(1);
    }
}
