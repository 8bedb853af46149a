//! Single runs and their files.
//!
//! Every CSV starts with a `# config_hash=<hex>` line. Numeric cells use the
//! shortest round-trip formatting, so identical runs give identical bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::SimulationConfig;
use super::HarnessError;
use crate::energetics::{
    mixity_histogram, momentum_residual, random_test_fields, semistability, step_residuals, EnergyLedger, MixityRecord,
    SEMISTABILITY_RTOL,
};
use crate::stepper::{init_state, run_with, Operators, Trajectory, FEASIBILITY_TOL};

/// Default snapshot instants as fractions of the full-debond time (or of
/// the horizon when the bar never debonds); the horizon is always added.
pub const DEFAULT_SNAPSHOT_FRACTIONS: [f64; 7] = [0.0, 0.5, 0.75, 0.875, 0.95, 0.99, 1.0];

/// Post-run verification summary, recorded in `meta.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunChecks {
    pub min_gap: f64,
    pub max_kkt: f64,
    pub bond_monotone: bool,
    pub semistability_failures: usize,
    /// Most negative `residual / scale` over all steps.
    pub worst_energy_residual: f64,
    /// Most negative `worst / scale` over the sampled momentum checks.
    pub worst_momentum_residual: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: SimulationConfig,
    pub hash: String,
    pub directory: PathBuf,
    pub ops: Operators,
    pub trajectory: Trajectory,
    pub ledger: EnergyLedger,
    pub mixity: MixityRecord,
    pub checks: RunChecks,
    pub full_debond_time: Option<f64>,
    pub snapshot_steps: Vec<usize>,
}

#[derive(Serialize)]
struct Meta<'a> {
    config_hash: &'a str,
    version: &'static str,
    status: &'a str,
    error: Option<String>,
    config: &'a SimulationConfig,
    defaults_applied: &'a [String],
    steps: usize,
    end_time: f64,
    full_debond_time: Option<f64>,
    snapshot_steps: &'a [usize],
    tolerances: Tolerances,
    checks: RunChecks,
    runtime_seconds: f64,
}

#[derive(Serialize)]
struct Tolerances {
    qp_tol: f64,
    feasibility: f64,
    semistability_rtol: f64,
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

fn write_csv<F>(path: &Path, hash: &str, body: F) -> Result<(), HarnessError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    writeln!(w, "# config_hash={hash}")
        .and_then(|_| body(&mut w))
        .and_then(|_| w.flush())
        .map_err(|e| HarnessError::io(path, e))
}

/// Refuses a directory whose `meta.json` records another config hash.
pub fn check_provenance(dir: &Path, hash: &str) -> Result<(), HarnessError> {
    let meta = dir.join("meta.json");
    if !meta.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(&meta).map_err(|e| HarnessError::io(&meta, e))?;
    let found = serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .and_then(|v| v.get("config_hash").and_then(|h| h.as_str()).map(str::to_string))
        .unwrap_or_else(|| "<unreadable>".into());
    if found != hash {
        return Err(HarnessError::Provenance {
            dir: dir.to_path_buf(),
            expected: hash.to_string(),
            found,
        });
    }
    Ok(())
}

fn debonded_fraction(z: &[f64]) -> f64 {
    if z.is_empty() {
        return 1.0;
    }
    z.iter().filter(|&&v| v == 0.0).count() as f64 / z.len() as f64
}

/// Grid indices to snapshot, ascending and unique.
pub fn snapshot_steps(traj: &Trajectory, times: Option<&[f64]>) -> Vec<usize> {
    let last = traj.states.len() - 1;
    let mut steps: Vec<usize> = match times {
        Some(ts) => ts
            .iter()
            .map(|t| ((t / traj.tau).round() as usize).min(last))
            .collect(),
        None => {
            let reference = traj
                .states
                .iter()
                .position(|s| debonded_fraction(&s.z) == 1.0)
                .unwrap_or(last);
            DEFAULT_SNAPSHOT_FRACTIONS
                .iter()
                .map(|f| (f * reference as f64).round() as usize)
                .chain(std::iter::once(last))
                .collect()
        }
    };
    steps.sort_unstable();
    steps.dedup();
    steps
}

fn verify(ops: &Operators, traj: &Trajectory, cfg: &SimulationConfig) -> RunChecks {
    let min_gap = traj
        .states
        .iter()
        .map(|s| ops.constraints.min_gap(&s.u))
        .fold(f64::INFINITY, f64::min);
    let max_kkt = traj.reports.iter().map(|r| r.kkt.max()).fold(0.0, f64::max);
    let bond_monotone = traj
        .states
        .windows(2)
        .all(|w| w[1].z.iter().zip(&w[0].z).all(|(a, b)| a <= b));
    let semistability_failures = traj
        .states
        .iter()
        .map(|s| semistability(ops, s).iter().filter(|c| !c.pass).count())
        .sum();
    let worst_energy_residual = step_residuals(ops, traj)
        .iter()
        .map(|&(r, s)| if s > 0.0 { r / s } else { 0.0 })
        .fold(0.0, f64::min);

    let n = traj.reports.len();
    let stride = (n / 16).max(1);
    let mut worst_momentum_residual: f64 = 0.0;
    for k in (stride..=n).step_by(stride) {
        let state = &traj.states[k];
        let amplitude = 1e-2 * state.u.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);
        let seed = cfg.verification.seed.wrapping_add(k as u64);
        let fields = random_test_fields(ops, &state.u, cfg.verification.test_fields, amplitude, seed);
        if let Ok(m) = momentum_residual(ops, traj, state.t, &fields) {
            if m.scale > 0.0 {
                worst_momentum_residual = worst_momentum_residual.min(m.worst / m.scale);
            }
        }
    }
    RunChecks {
        min_gap,
        max_kkt,
        bond_monotone,
        semistability_failures,
        worst_energy_residual,
        worst_momentum_residual,
    }
}

fn write_snapshot(path: &Path, hash: &str, ops: &Operators, traj: &Trajectory, k: usize) -> Result<(), HarnessError> {
    let state = &traj.states[k];
    write_csv(path, hash, |w| {
        writeln!(w, "# t={:e}", state.t)?;
        writeln!(w, "node,x,y,ux,uy")?;
        for (i, p) in ops.mesh.nodes.iter().enumerate() {
            writeln!(w, "{i},{:e},{:e},{:e},{:e}", p.x, p.y, state.u[2 * i], state.u[2 * i + 1])?;
        }
        writeln!(w, "segment,x,z")?;
        for (e, z) in state.z.iter().enumerate() {
            writeln!(w, "{e},{:e},{:e}", ops.mesh.segment_midpoint(e).x, z)?;
        }
        Ok(())
    })
}

fn write_outputs(outcome: &RunOutcome, status: &str, error: Option<String>, started: Instant) -> Result<(), HarnessError> {
    let dir = &outcome.directory;
    let hash = outcome.hash.as_str();
    let traj = &outcome.trajectory;

    write_csv(&dir.join("energies.csv"), hash, |w| outcome.ledger.write_csv(w))?;
    write_csv(&dir.join("forces.csv"), hash, |w| {
        writeln!(w, "t,force_x,force_y")?;
        writeln!(w, "{:e},{:e},{:e}", traj.states[0].t, 0.0, 0.0)?;
        for r in &traj.reports {
            writeln!(w, "{:e},{:e},{:e}", r.t, r.reaction.total[0], r.reaction.total[1])?;
        }
        Ok(())
    })?;
    write_csv(&dir.join("mixity.csv"), hash, |w| outcome.mixity.write_csv(w))?;

    let snap_dir = dir.join("snapshots");
    fs::create_dir_all(&snap_dir).map_err(|e| HarnessError::io(&snap_dir, e))?;
    for &k in &outcome.snapshot_steps {
        write_snapshot(&snap_dir.join(format!("step_{k:06}.csv")), hash, &outcome.ops, traj, k)?;
    }

    let meta = Meta {
        config_hash: hash,
        version: env!("CARGO_PKG_VERSION"),
        status,
        error,
        config: &outcome.config,
        defaults_applied: &outcome.config.defaults_applied,
        steps: traj.reports.len(),
        end_time: traj.end_time(),
        full_debond_time: outcome.full_debond_time,
        snapshot_steps: &outcome.snapshot_steps,
        tolerances: Tolerances {
            qp_tol: outcome.config.solver.qp_tol,
            feasibility: FEASIBILITY_TOL,
            semistability_rtol: SEMISTABILITY_RTOL,
        },
        checks: outcome.checks,
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    let path = dir.join("meta.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &meta)
        .map_err(std::io::Error::other)
        .and_then(|_| writeln!(w))
        .and_then(|_| w.flush())
        .map_err(|e| HarnessError::io(&path, e))
}

/// Runs one configuration and writes its files into `dir`.
///
/// A solver or invariant failure still writes the accepted part of the
/// trajectory, with `status = "failed"` in `meta.json`.
pub fn run_single(cfg: &SimulationConfig, dir: &Path) -> Result<RunOutcome, HarnessError> {
    let started = Instant::now();
    let hash = cfg.hash();
    check_provenance(dir, &hash)?;
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;

    let ops = cfg.operators()?;
    let initial = init_state(&ops, None, None)?;
    let params = cfg.run_params();
    let (trajectory, failure) = match run_with(&ops, initial, &params, |s, r| {
        if let Some(r) = r {
            log::debug!("t = {:.6} qp_iter = {} active = {}", s.t, r.qp_iterations, r.active_constraints());
        }
    }) {
        Ok(t) => (t, None),
        Err(e) => (*e.partial, Some(e.error)),
    };

    let ledger = EnergyLedger::from_trajectory(&ops, &trajectory);
    let mixity = mixity_histogram(&ops, &trajectory);
    let checks = verify(&ops, &trajectory, cfg);
    let full_debond_time = trajectory
        .states
        .iter()
        .find(|s| s.z.iter().all(|&z| z == 0.0))
        .map(|s| s.t);
    let snapshot_steps = snapshot_steps(&trajectory, cfg.outputs.snapshot_times.as_deref());
    let outcome = RunOutcome {
        config: cfg.clone(),
        hash,
        directory: dir.to_path_buf(),
        ops,
        trajectory,
        ledger,
        mixity,
        checks,
        full_debond_time,
        snapshot_steps,
    };
    match failure {
        None => {
            write_outputs(&outcome, "completed", None, started)?;
            Ok(outcome)
        }
        Some(error) => {
            write_outputs(&outcome, "failed", Some(error.to_string()), started)?;
            Err(HarnessError::Run {
                error,
                accepted: outcome.trajectory.reports.len(),
            })
        }
    }
}

/// One run per viscosity in `material.chi_sweep`, under `dir/chi_sweep/`,
/// plus a summary table of final energies.
pub fn run_chi_sweep(cfg: &SimulationConfig, dir: &Path) -> Result<Vec<RunOutcome>, HarnessError> {
    let root = dir.join("chi_sweep");
    fs::create_dir_all(&root).map_err(|e| HarnessError::io(&root, e))?;
    let mut outcomes = Vec::new();
    for (i, &chi) in cfg.material.chi_sweep.iter().enumerate() {
        let mut c = cfg.clone();
        c.material.chi = chi;
        c.material.chi_sweep.clear();
        outcomes.push(run_single(&c, &root.join(format!("chi_{i:02}")))?);
    }
    write_csv(&root.join("summary.csv"), &cfg.hash(), |w| {
        writeln!(w, "chi,full_debond_time,viscous_dissipated,interface_dissipated,external_work")?;
        for o in &outcomes {
            let k = o.ledger.len() - 1;
            writeln!(
                w,
                "{:e},{},{:e},{:e},{:e}",
                o.config.material.chi,
                o.full_debond_time.map_or("nan".into(), |t| format!("{t:e}")),
                o.ledger.viscous_dissipated[k],
                o.ledger.interface_dissipated[k],
                o.ledger.external_work[k]
            )?;
        }
        Ok(())
    })?;
    Ok(outcomes)
}
