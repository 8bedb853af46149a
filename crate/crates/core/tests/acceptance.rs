//! Acceptance suite: one pass/fail line per criterion, then a single assert.
//!
//! Run with `cargo test -p delam-core --test acceptance -- --nocapture` to
//! see the report.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use delam_core::assembly::{assemble_stiffness, element_strain};
use delam_core::constitutive::{dissipation_threshold, elasticity_tensor, AdhesiveLaw, IsotropicElasticity};
use delam_core::energetics::step_residuals;
use delam_core::harness::config::parse_config;
use delam_core::harness::output::RunOutcome;
use delam_core::harness::{run_convergence, run_single, SimulationConfig};
use delam_core::mesh::{build_benchmark_mesh, build_two_body_mesh, refine_uniform, GluedFrom};
use delam_core::qp::{brute_force_qp, solve_qp, QpProblem, DEFAULT_MAX_ITER, DEFAULT_TOL};
use delam_core::sparse::SymSparseMatrix;
use delam_core::stepper::FEASIBILITY_TOL;

const BENCHMARK: &str = include_str!("../../../configs/benchmark.json");
const BASELINE: &str = include_str!("baseline/benchmark_curves.csv");
const PI_2: f64 = std::f64::consts::FRAC_PI_2;

struct Report {
    lines: Vec<(String, bool, String)>,
}

impl Report {
    fn record(&mut self, name: &str, pass: bool, detail: String, started: Instant) {
        let line = format!(
            "[{}] {name}: {detail} ({:.1} s)",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        println!("{line}");
        self.lines.push((name.to_string(), pass, line));
    }
}

fn benchmark_config() -> SimulationConfig {
    parse_config(BENCHMARK).expect("benchmark config")
}

/// `1 + tan^2((1 - lambda) pi / 2)` at lambda = 0.333, evaluated to 30 digits
/// with arbitrary-precision arithmetic.
const LITERAL_RATIO: f64 = 4.007_266_178_288_703;

/// Criteria whose stated target is arithmetically inconsistent; they are
/// reported as failing but do not fail the suite while the computed value
/// matches its independent reference.
const KNOWN_DISCREPANCIES: [&str; 1] = ["1 mode-sensitivity ratio"];

fn mode_ratio(report: &mut Report) {
    let t0 = Instant::now();
    let ratio = |lambda: f64| {
        let law = AdhesiveLaw::new(150e9, 75e9, 187.5, lambda, 0.0).unwrap();
        dissipation_threshold(PI_2, &law).finite().unwrap() / dissipation_threshold(0.0, &law).finite().unwrap()
    };
    let (exact, literal) = (ratio(1.0 / 3.0), ratio(0.333));
    let pass = (exact - 4.0).abs() <= 1e-9 && (literal - 4.005).abs() <= 1e-3;
    report.record(
        "1 mode-sensitivity ratio",
        pass,
        format!("a(pi/2)/a(0) = {exact:.12} (lambda = 1/3, target 4), {literal:.6} (lambda = 0.333, target 4.005 +- 1e-3)"),
        t0,
    );
    let t0 = Instant::now();
    report.record(
        "1b literal ratio against closed form",
        (exact - 4.0).abs() <= 1e-9 && (literal - LITERAL_RATIO).abs() <= 1e-12,
        format!("{literal:.15} vs reference {LITERAL_RATIO:.15}"),
        t0,
    );
}

fn random_qp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QpProblem {
    let mm = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = mm.transpose() * &mm + DMatrix::<f64>::identity(n, n);
    let g = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let feasible: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut b = Vec::new();
    let mut c = Vec::new();
    for _ in 0..m {
        let row: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.random_range(-1.0..1.0))).collect();
        let at: f64 = row.iter().map(|&(j, v)| v * feasible[j]).sum();
        c.push(-at + rng.random_range(0.0..1.0));
        b.push(row);
    }
    QpProblem {
        h: SymSparseMatrix::from_dense(&h),
        g,
        b,
        c,
    }
}

fn qp_oracle(report: &mut Report) {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce55);
    let (mut mismatched, mut worst, mut active) = (0, 0.0_f64, 0);
    let cases = 1200;
    for _ in 0..cases {
        let n = rng.random_range(1..=12usize);
        let m = rng.random_range(0..=n.min(6));
        let p = random_qp(&mut rng, n, m);
        let (Ok(s), Ok(o)) = (solve_qp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER), brute_force_qp(&p)) else {
            mismatched += 1;
            continue;
        };
        if s.active_set != o.active_set {
            mismatched += 1;
        }
        let scale = o.x.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let err = s.x.iter().zip(&o.x).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / scale;
        worst = worst.max(err);
        active += s.active_set.len();
    }
    report.record(
        "2 QP oracle equivalence",
        mismatched == 0 && worst <= 1e-10,
        format!("{cases} instances, {mismatched} active-set mismatches, worst scaled error {worst:.2e}, {active} active constraints"),
        t0,
    );
}

fn patch_test(report: &mut Report) {
    let t0 = Instant::now();
    let c = elasticity_tensor(&IsotropicElasticity::new(70e9, 0.35).unwrap()).unwrap();
    let bench = build_benchmark_mesh(0.25, 0.025, 81, 0.9, GluedFrom::Left).unwrap();
    let meshes = [
        ("benchmark", build_benchmark_mesh(0.25, 0.025, 27, 0.9, GluedFrom::Left).unwrap()),
        ("benchmark-right", build_benchmark_mesh(0.25, 0.025, 9, 0.5, GluedFrom::Right).unwrap()),
        ("refined", refine_uniform(&bench).unwrap()),
        ("two-body", build_two_body_mesh(0.25, 0.025, 0.02, 27, 0.9, GluedFrom::Left).unwrap()),
        ("benchmark-81", bench),
    ];
    let grad = [[1.3e-4, -0.7e-4], [0.4e-4, 2.1e-4]];
    let exact = [grad[0][0], grad[1][1], grad[0][1] + grad[1][0]];
    let mut worst = 0.0_f64;
    for (_, mesh) in &meshes {
        let u: Vec<f64> = mesh
            .nodes
            .iter()
            .flat_map(|p| [1e-5 + grad[0][0] * p.x + grad[0][1] * p.y, -2e-5 + grad[1][0] * p.x + grad[1][1] * p.y])
            .collect();
        for t in 0..mesh.triangles.len() {
            let e = element_strain(mesh, t, &u).unwrap();
            for k in 0..3 {
                worst = worst.max((e[k] - exact[k]).abs() / 2.1e-4);
            }
        }
        let k = assemble_stiffness(mesh, &c).unwrap();
        let ku = k.mul_vec(&u);
        let boundary: BTreeSet<usize> = mesh.boundary_edges().into_iter().flat_map(|(a, b)| [a, b]).collect();
        let scale = k.norm_max() * 2.1e-4 * mesh.h;
        for node in (0..mesh.nodes.len()).filter(|n| !boundary.contains(n)) {
            worst = worst.max(ku[2 * node].abs().max(ku[2 * node + 1].abs()) / scale);
        }
    }
    report.record(
        "3 FEM patch test",
        worst <= 1e-10,
        format!("{} meshes, worst relative strain / interior force error {worst:.2e}", meshes.len()),
        t0,
    );
}

fn energy_inequality(report: &mut Report, run: &RunOutcome, t0: Instant) {
    let residuals = step_residuals(&run.ops, &run.trajectory);
    let failures = residuals.iter().filter(|&&(r, s)| r < -1e-8 * s).count();
    let worst = residuals.iter().map(|&(r, s)| if s > 0.0 { r / s } else { 0.0 }).fold(0.0, f64::min);
    report.record(
        "4 per-step energy inequality",
        failures == 0 && residuals.len() == run.trajectory.reports.len(),
        format!("{} steps, {failures} below -1e-8 x scale, worst residual/scale {worst:.2e}", residuals.len()),
        t0,
    );
}

fn semistability(report: &mut Report, run: &RunOutcome) {
    let t0 = Instant::now();
    let violations: usize = run
        .trajectory
        .states
        .iter()
        .map(|s| delam_core::energetics::semistability(&run.ops, s).iter().filter(|c| !c.pass).count())
        .sum();
    report.record(
        "5 semistability",
        violations == 0,
        format!(
            "{violations} violations over {} states x {} segments",
            run.trajectory.states.len(),
            run.ops.n_segments()
        ),
        t0,
    );
}

fn unidirectional_feasible(report: &mut Report, run: &RunOutcome) {
    let t0 = Instant::now();
    let states = &run.trajectory.states;
    let increases = states
        .windows(2)
        .map(|w| w[1].z.iter().zip(&w[0].z).filter(|(a, b)| a > b).count())
        .sum::<usize>();
    let min_gap = states
        .iter()
        .map(|s| run.ops.constraints.min_gap(&s.u))
        .fold(f64::INFINITY, f64::min);
    report.record(
        "6 unidirectionality and feasibility",
        increases == 0 && min_gap >= -FEASIBILITY_TOL,
        format!("{increases} bond increases, min gap {min_gap:.3e} m"),
        t0,
    );
}

fn energy_gap(report: &mut Report, run: &RunOutcome) {
    let t0 = Instant::now();
    let gap = &run.ledger.gap;
    let scales: Vec<f64> = step_residuals(&run.ops, &run.trajectory).iter().map(|&(_, s)| s).collect();
    let mut cumulative = 0.0;
    let (mut negative, mut decreasing) = (0, 0);
    for k in 1..gap.len() {
        cumulative += scales[k - 1];
        if gap[k] < -1e-8 * cumulative {
            negative += 1;
        }
        if gap[k] - gap[k - 1] < -1e-8 * scales[k - 1] {
            decreasing += 1;
        }
    }
    let last = *gap.last().unwrap();
    report.record(
        "7 energy gap sign and monotonicity",
        negative == 0 && decreasing == 0,
        format!("{negative} negative, {decreasing} decreasing steps, final gap {last:.4e} J"),
        t0,
    );
}

fn mixity(report: &mut Report, run: &RunOutcome) {
    let t0 = Instant::now();
    let rec = &run.mixity;
    let law = run.ops.law;
    let upper = dissipation_threshold(PI_2, &law).finite().unwrap() / law.a_i;
    let n = run.ops.n_segments();
    let in_range = rec.entries.iter().all(|e| e.ratio >= 1.0 - 1e-12 && e.ratio <= upper + 1e-12);
    // The loaded end sits at the largest x; segments are ordered by x.
    let loaded_end_high = run.config.geometry.glued_from == GluedFrom::Left;
    let near_count = (n / 10).max(1);
    let near: Vec<usize> = if loaded_end_high { (n - near_count..n).collect() } else { (0..near_count).collect() };
    let mid: Vec<usize> = (n / 3..2 * n / 3).collect();
    let mean = |set: &[usize]| {
        let v: Vec<f64> = rec.entries.iter().filter(|e| set.contains(&e.segment)).map(|e| e.ratio).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    let (near_mean, mid_mean) = (mean(&near), mean(&mid));
    let complete = run.full_debond_time.is_some() && rec.intact.is_empty();
    report.record(
        "8 qualitative mixity reproduction",
        complete && in_range && near_mean < mid_mean,
        format!(
            "full debond at {:?} s, ratios in [1, {upper:.4}]: {in_range}, mean ratio near loaded end {near_mean:.3} < mid-bar {mid_mean:.3}",
            run.full_debond_time
        ),
        t0,
    );
}

fn convergence(report: &mut Report, cfg: &SimulationConfig, dir: &Path) {
    let t0 = Instant::now();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(3);
    match run_convergence(cfg, &[27, 54, 81], dir, threads) {
        Ok(r) => {
            let d: Vec<String> = r.distances.iter().map(|d| format!("{:.4e}", d.energy_l2)).collect();
            let spread: Vec<String> = r.norm_spread.iter().map(|s| format!("{s:.3}")).collect();
            report.record(
                "9 convergence study",
                r.distances_decrease && r.norms_bounded,
                format!("energy L2 distances [{}], norm max/min [{}]", d.join(", "), spread.join(", ")),
                t0,
            );
        }
        Err(e) => report.record("9 convergence study", false, format!("study failed: {e}"), t0),
    }
}

fn determinism(report: &mut Report, cfg: &SimulationConfig, first: &Path, second: &Path) {
    let t0 = Instant::now();
    let outcome = run_single(cfg, second);
    let mut differing = Vec::new();
    let mut files = vec!["energies.csv".to_string(), "forces.csv".into(), "mixity.csv".into()];
    for entry in fs::read_dir(first.join("snapshots")).unwrap() {
        files.push(format!("snapshots/{}", entry.unwrap().file_name().to_string_lossy()));
    }
    for f in &files {
        if fs::read(first.join(f)).ok() != fs::read(second.join(f)).ok() {
            differing.push(f.clone());
        }
    }
    report.record(
        "10 determinism",
        outcome.is_ok() && differing.is_empty(),
        format!("{} files compared, differing: {differing:?}", files.len()),
        t0,
    );
}

/// Force and energy curves against the committed baseline, sampled every
/// tenth step.
fn baseline(report: &mut Report, run: &RunOutcome) {
    let t0 = Instant::now();
    let rows: Vec<Vec<f64>> = BASELINE
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('t'))
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let current = baseline_rows(run);
    let mut worst = 0.0_f64;
    let ok_shape = rows.len() == current.len();
    for col in 1..5 {
        let scale = rows.iter().fold(0.0_f64, |m, r| m.max(r[col].abs())).max(f64::MIN_POSITIVE);
        for (a, b) in rows.iter().zip(&current) {
            worst = worst.max((a[col] - b[col]).abs() / scale);
        }
    }
    report.record(
        "baseline force/energy regression",
        ok_shape && worst <= 1e-6,
        format!("{} samples, worst relative deviation {worst:.2e}", rows.len()),
        t0,
    );
}

fn baseline_rows(run: &RunOutcome) -> Vec<Vec<f64>> {
    (0..run.ledger.len())
        .step_by(10)
        .map(|k| {
            let f = if k == 0 { [0.0, 0.0] } else { run.trajectory.reports[k - 1].reaction.total };
            vec![run.ledger.t[k], f[0], f[1], run.ledger.total(k), run.ledger.external_work[k]]
        })
        .collect()
}

#[test]
fn acceptance_criteria() {
    let mut report = Report { lines: Vec::new() };
    println!();
    mode_ratio(&mut report);
    qp_oracle(&mut report);
    patch_test(&mut report);

    let cfg = benchmark_config();
    let root = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let run = run_single(&cfg, &root.path().join("benchmark")).expect("benchmark run completes");
    if std::env::var_os("DELAM_BLESS").is_some() {
        let mut text = String::from("t,force_x,force_y,total,external_work\n");
        for r in baseline_rows(&run) {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
            text.push_str(&(cells.join(",") + "\n"));
        }
        fs::write(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/baseline/benchmark_curves.csv"), text).unwrap();
    }
    energy_inequality(&mut report, &run, t0);
    semistability(&mut report, &run);
    unidirectional_feasible(&mut report, &run);
    energy_gap(&mut report, &run);
    mixity(&mut report, &run);
    convergence(&mut report, &cfg, &root.path().join("convergence"));
    determinism(&mut report, &cfg, &root.path().join("benchmark"), &root.path().join("benchmark_again"));
    baseline(&mut report, &run);

    let failed: Vec<&str> = report.lines.iter().filter(|l| !l.1).map(|l| l.0.as_str()).collect();
    println!("{} of {} checks passed", report.lines.len() - failed.len(), report.lines.len());
    for f in failed.iter().filter(|f| KNOWN_DISCREPANCIES.contains(f)) {
        println!("known discrepancy, not counted: {f}");
    }
    let blocking: Vec<&&str> = failed.iter().filter(|f| !KNOWN_DISCREPANCIES.contains(f)).collect();
    assert!(blocking.is_empty(), "failed: {blocking:?}");
}
