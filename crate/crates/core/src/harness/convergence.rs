//! Mesh and time-step refinement study.
//!
//! Levels share the ratio `tau / h`. Energy curves are compared on the
//! coarsest time grid through their piecewise-linear interpolants.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::SimulationConfig;
use super::output::{run_single, RunOutcome};
use super::HarnessError;
use crate::assembly::strain_operator;
use crate::energetics::EnergyLedger;
use crate::mesh::Mesh2D;
use crate::stepper::Trajectory;

/// Ledger curves entering the energy distance.
pub const COMPARED_CURVES: [&str; 6] = [
    "bulk_elastic",
    "interface_elastic",
    "viscous_dissipated",
    "interface_dissipated",
    "total",
    "external_work",
];

/// Uniform-in-time norms of one discrete trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormRow {
    pub n_interface: usize,
    pub h: f64,
    pub tau: f64,
    /// `max_k |u_k|_{H1}`.
    pub displacement_max: f64,
    /// `(tau sum_k |u_k|^2_{H1} + |(u_k - u_{k-1}) / tau|^2_{H1})^{1/2}`.
    pub displacement_rate: f64,
    /// `max_k max |z_k|`.
    pub bond_max: f64,
    /// `|z_0|_{L1} + sum_k |z_k - z_{k-1}|_{L1}`.
    pub bond_variation: f64,
    pub full_debond_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDistance {
    pub coarse: usize,
    pub fine: usize,
    pub energy_l2: f64,
    pub force_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub levels: Vec<usize>,
    pub norms: Vec<NormRow>,
    /// Consecutive level pairs, coarse to fine.
    pub distances: Vec<PairDistance>,
    pub distances_decrease: bool,
    /// Per norm, largest over smallest value across levels.
    pub norm_spread: [f64; 4],
    pub norms_bounded: bool,
}

/// Largest admissible spread of a stability norm across levels.
pub const NORM_SPREAD_LIMIT: f64 = 2.0;

/// Squared `H1` norm of a P1 field.
pub fn h1_norm_sq(mesh: &Mesh2D, u: &[f64]) -> f64 {
    let mut total = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (b, area) = strain_operator(mesh, t).expect("validated mesh");
        // b rows: d/dx on x-components, d/dy on y-components, shear.
        let mut grad = [[0.0; 2]; 2];
        for (a, &node) in tri.iter().enumerate() {
            let (ux, uy) = (u[2 * node], u[2 * node + 1]);
            let (dx, dy) = (b[0][2 * a], b[1][2 * a + 1]);
            grad[0][0] += dx * ux;
            grad[0][1] += dy * ux;
            grad[1][0] += dx * uy;
            grad[1][1] += dy * uy;
        }
        let g2: f64 = grad.iter().flatten().map(|v| v * v).sum();
        let mut l2 = 0.0;
        for c in 0..2 {
            let vals: Vec<f64> = tri.iter().map(|&n| u[2 * n + c]).collect();
            let sq: f64 = vals.iter().map(|v| v * v).sum();
            let sum: f64 = vals.iter().sum();
            l2 += area / 12.0 * (sq + sum * sum);
        }
        total += area * g2 + l2;
    }
    total
}

fn bond_l1(mesh: &Mesh2D, z: &[f64]) -> f64 {
    mesh.interface_segments
        .iter()
        .zip(z)
        .map(|(s, v)| s.length * v.abs())
        .sum()
}

pub fn norm_row(mesh: &Mesh2D, traj: &Trajectory, n_interface: usize, full_debond_time: Option<f64>) -> NormRow {
    let tau = traj.tau;
    let mut displacement_max: f64 = 0.0;
    let mut rate_sum = 0.0;
    let mut bond_max: f64 = 0.0;
    let mut bond_variation = bond_l1(mesh, &traj.states[0].z);
    for (k, s) in traj.states.iter().enumerate() {
        let u2 = h1_norm_sq(mesh, &s.u);
        displacement_max = displacement_max.max(u2.sqrt());
        bond_max = s.z.iter().fold(bond_max, |m, v| m.max(v.abs()));
        if k > 0 {
            let prev = &traj.states[k - 1];
            let rate: Vec<f64> = s.u.iter().zip(&prev.u).map(|(a, b)| (a - b) / tau).collect();
            rate_sum += tau * (u2 + h1_norm_sq(mesh, &rate));
            let dz: Vec<f64> = s.z.iter().zip(&prev.z).map(|(a, b)| a - b).collect();
            bond_variation += bond_l1(mesh, &dz);
        }
    }
    NormRow {
        n_interface,
        h: mesh.h,
        tau,
        displacement_max,
        displacement_rate: rate_sum.sqrt(),
        bond_max,
        bond_variation,
        full_debond_time,
    }
}

/// Piecewise-linear interpolant of `(t, v)` samples; constant past the ends.
fn interpolate(t: &[f64], v: &[f64], at: f64) -> f64 {
    if at <= t[0] {
        return v[0];
    }
    let last = t.len() - 1;
    if at >= t[last] {
        return v[last];
    }
    let k = t.partition_point(|&s| s <= at).min(last);
    let (t0, t1) = (t[k - 1], t[k]);
    let w = (at - t0) / (t1 - t0);
    (1.0 - w) * v[k - 1] + w * v[k]
}

fn curves(ledger: &EnergyLedger) -> [Vec<f64>; 6] {
    let total: Vec<f64> = (0..ledger.len()).map(|k| ledger.total(k)).collect();
    [
        ledger.bulk_elastic.clone(),
        ledger.interface_elastic.clone(),
        ledger.viscous_dissipated.clone(),
        ledger.interface_dissipated.clone(),
        total,
        ledger.external_work.clone(),
    ]
}

fn force_curves(traj: &Trajectory) -> (Vec<f64>, [Vec<f64>; 2]) {
    let mut t = vec![traj.states[0].t];
    let mut f = [vec![0.0], vec![0.0]];
    for r in &traj.reports {
        t.push(r.t);
        f[0].push(r.reaction.total[0]);
        f[1].push(r.reaction.total[1]);
    }
    (t, f)
}

/// Discrete `L2(0, T)` distance of several curves on the grid `grid`.
fn l2_distance(grid: &[f64], dt: f64, a: (&[f64], &[Vec<f64>]), b: (&[f64], &[Vec<f64>])) -> f64 {
    let mut sum = 0.0;
    for (ca, cb) in a.1.iter().zip(b.1) {
        for &s in grid {
            let d = interpolate(a.0, ca, s) - interpolate(b.0, cb, s);
            sum += dt * d * d;
        }
    }
    sum.sqrt()
}

pub fn pair_distance(coarse_grid: &Trajectory, a: &RunOutcome, b: &RunOutcome) -> PairDistance {
    let grid: Vec<f64> = coarse_grid.states.iter().map(|s| s.t).collect();
    let dt = coarse_grid.tau;
    let (ea, eb) = (curves(&a.ledger), curves(&b.ledger));
    let energy_l2 = l2_distance(&grid, dt, (&a.ledger.t, &ea), (&b.ledger.t, &eb));
    let (ta, fa) = force_curves(&a.trajectory);
    let (tb, fb) = force_curves(&b.trajectory);
    let force_l2 = l2_distance(&grid, dt, (&ta, &fa), (&tb, &fb));
    PairDistance {
        coarse: a.config.geometry.n_interface,
        fine: b.config.geometry.n_interface,
        energy_l2,
        force_l2,
    }
}

fn run_levels(cfg: &SimulationConfig, levels: &[usize], dir: &Path, threads: usize) -> Result<Vec<RunOutcome>, HarnessError> {
    let jobs: Vec<(SimulationConfig, PathBuf)> = levels
        .iter()
        .map(|&n| (cfg.at_level(n), dir.join(format!("level_{n}"))))
        .collect();
    let mut results: Vec<Option<Result<RunOutcome, HarnessError>>> = (0..jobs.len()).map(|_| None).collect();
    for chunk in (0..jobs.len()).collect::<Vec<_>>().chunks(threads.max(1)) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&i| {
                    let (c, d) = &jobs[i];
                    (i, scope.spawn(move || run_single(c, d)))
                })
                .collect();
            for (i, h) in handles {
                results[i] = Some(h.join().unwrap_or_else(|_| Err(HarnessError::Study(format!("level {i} panicked")))));
            }
        });
    }
    results.into_iter().map(|r| r.expect("every level ran")).collect()
}

/// Runs every level into `dir/level_<n>/` and writes `convergence.csv`,
/// `distances.csv` and `convergence.json`.
pub fn run_convergence(
    cfg: &SimulationConfig,
    levels: &[usize],
    dir: &Path,
    threads: usize,
) -> Result<ConvergenceReport, HarnessError> {
    if levels.len() < 2 || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::Study(format!(
            "need at least two strictly increasing levels, got {levels:?}"
        )));
    }
    for &n in levels {
        let c = cfg.at_level(n);
        c.run_params().n_steps().map_err(|e| HarnessError::Study(format!("level {n}: {e}")))?;
    }
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let outcomes = run_levels(cfg, levels, dir, threads)?;

    let norms: Vec<NormRow> = outcomes
        .iter()
        .map(|o| norm_row(&o.ops.mesh, &o.trajectory, o.config.geometry.n_interface, o.full_debond_time))
        .collect();
    let coarse = &outcomes[0].trajectory;
    let distances: Vec<PairDistance> = outcomes
        .windows(2)
        .map(|w| pair_distance(coarse, &w[0], &w[1]))
        .collect();
    let distances_decrease = distances.windows(2).all(|w| w[1].energy_l2 < w[0].energy_l2);
    let pick: [fn(&NormRow) -> f64; 4] = [
        |r| r.displacement_max,
        |r| r.displacement_rate,
        |r| r.bond_max,
        |r| r.bond_variation,
    ];
    let mut norm_spread = [0.0; 4];
    for (i, f) in pick.iter().enumerate() {
        let (lo, hi) = norms
            .iter()
            .map(f)
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        norm_spread[i] = if lo > 0.0 { hi / lo } else if hi == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let norms_bounded = norm_spread.iter().all(|&s| s < NORM_SPREAD_LIMIT);
    let report = ConvergenceReport {
        levels: levels.to_vec(),
        norms,
        distances,
        distances_decrease,
        norm_spread,
        norms_bounded,
    };
    write_report(&report, &outcomes[0].hash, dir)?;
    Ok(report)
}

fn write_report(report: &ConvergenceReport, hash: &str, dir: &Path) -> Result<(), HarnessError> {
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        fs::File::create(&path)
            .and_then(|mut f| f.write_all(body.as_bytes()))
            .map_err(|e| HarnessError::io(&path, e))
    };
    let mut table = format!(
        "# config_hash={hash}\nn_interface,h,tau,displacement_max,displacement_rate,bond_max,bond_variation,full_debond_time\n"
    );
    for r in &report.norms {
        table.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
            r.n_interface,
            r.h,
            r.tau,
            r.displacement_max,
            r.displacement_rate,
            r.bond_max,
            r.bond_variation,
            r.full_debond_time.map_or("nan".into(), |t| format!("{t:e}"))
        ));
    }
    write("convergence.csv", table)?;
    let mut pairs = format!("# config_hash={hash}\ncoarse,fine,energy_l2,force_l2\n");
    for d in &report.distances {
        pairs.push_str(&format!("{},{},{:e},{:e}\n", d.coarse, d.fine, d.energy_l2, d.force_l2));
    }
    write("distances.csv", pairs)?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    write("convergence.json", json + "\n")
}
