//! Energies, dissipations and the weak-solution checks along a trajectory.
//!
//! Stored energies are evaluated element by element and segment by segment,
//! independently of the assembled matrices used by the solver.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::assembly::{element_strain, segment_end_jumps, segment_mid_jump, Reaction};
use crate::constitutive::{dissipation_threshold, mode_mixity_angle};
use crate::stepper::{Operators, State, Trajectory, FEASIBILITY_TOL};

#[derive(Debug, Error, PartialEq)]
pub enum EnergeticsError {
    #[error("time {0} is not a grid point of the trajectory")]
    OffGrid(f64),
    #[error("interval [{0}, {1}] is empty or reversed")]
    BadInterval(f64, f64),
    #[error("test field {index} is inadmissible: {reason}")]
    InadmissibleTestField { index: usize, reason: String },
}

/// Stored energy split; `total` is infinite when the state is infeasible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoredEnergy {
    pub feasible: bool,
    pub bulk: f64,
    pub interface: f64,
    pub total: f64,
}

/// `int A jump . jump` over a segment, exact for the linear jump.
pub fn segment_quadratic(ops: &Operators, segment: usize, u: &[f64]) -> f64 {
    let seg = &ops.mesh.interface_segments[segment];
    let q = |j: [f64; 2]| ops.law.quadratic_form(j, seg.normal);
    let [ja, jb] = segment_end_jumps(&ops.mesh, segment, u);
    let cross = 0.5 * (q([ja[0] + jb[0], ja[1] + jb[1]]) - q(ja) - q(jb));
    seg.length / 3.0 * (q(ja) + cross + q(jb))
}

/// Activation energy `a(psi(mid jump)) * length`, infinite where forbidden.
pub fn segment_threshold(ops: &Operators, segment: usize, u: &[f64]) -> f64 {
    let seg = &ops.mesh.interface_segments[segment];
    let psi = mode_mixity_angle(segment_mid_jump(&ops.mesh, segment, u), seg.normal, &ops.law);
    dissipation_threshold(psi, &ops.law)
        .finite()
        .map_or(f64::INFINITY, |a| a * seg.length)
}

pub fn bulk_energy(ops: &Operators, u: &[f64]) -> f64 {
    (0..ops.mesh.triangles.len())
        .map(|t| {
            let e = element_strain(&ops.mesh, t, u).expect("operators were assembled from this mesh");
            0.5 * ops.mesh.signed_area(t) * ops.elasticity.energy_form(e)
        })
        .sum()
}

pub fn interface_energy(ops: &Operators, u: &[f64], z: &[f64]) -> f64 {
    z.iter()
        .enumerate()
        .filter(|&(_, &z)| z != 0.0)
        .map(|(e, &z)| 0.5 * z * segment_quadratic(ops, e, u))
        .sum()
}

pub fn stored_energy(ops: &Operators, u: &[f64], z: &[f64]) -> StoredEnergy {
    let bulk = bulk_energy(ops, u);
    let interface = interface_energy(ops, u, z);
    let feasible = ops.constraints.rows.iter().all(|r| r.gap(u) >= -FEASIBILITY_TOL)
        && z.iter().all(|v| (0.0..=1.0).contains(v));
    StoredEnergy {
        feasible,
        bulk,
        interface,
        total: if feasible { bulk + interface } else { f64::INFINITY },
    }
}

/// `v^T V v` element by element, nonnegative by construction.
pub fn viscous_form(ops: &Operators, v: &[f64]) -> f64 {
    2.0 * ops.chi * bulk_energy(ops, v)
}

/// `u_dot^T V u_dot + sum a(psi) |z_dot| length`; infeasible if any bond heals.
pub fn dissipation_rate(ops: &Operators, u: &[f64], u_dot: &[f64], z_dot: &[f64]) -> (bool, f64) {
    if z_dot.iter().any(|&v| v > 0.0) {
        return (false, f64::INFINITY);
    }
    let viscous = viscous_form(ops, u_dot);
    let interface: f64 = z_dot
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v != 0.0)
        .map(|(e, &v)| -v * segment_threshold(ops, e, u))
        .sum();
    (true, viscous + interface)
}

/// Energy budget of one step `k-1 -> k`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepEnergy {
    pub stored_before: f64,
    pub stored_after: f64,
    /// `du^T V du / tau`.
    pub viscous: f64,
    pub interface_dissipated: f64,
    /// Loads and loading device.
    pub work: f64,
    /// `|du|^T (|K| + |A| + |V| / tau) |u|`, the size of the terms whose
    /// cancellation forms the residual.
    pub magnitude: f64,
}

impl StepEnergy {
    /// Work minus energy change minus dissipation; nonnegative for an
    /// energy-consistent step.
    pub fn residual(&self) -> f64 {
        self.work - (self.stored_after - self.stored_before) - self.viscous - self.interface_dissipated
    }

    pub fn scale(&self) -> f64 {
        [
            self.stored_before,
            self.stored_after,
            self.viscous,
            self.interface_dissipated,
            self.work,
            self.magnitude,
        ]
        .iter()
        .fold(f64::MIN_POSITIVE, |m, v| m.max(v.abs()))
    }
}

pub fn step_energy(ops: &Operators, prev: &State, next: &State, reaction: &Reaction, tau: f64) -> StepEnergy {
    let du: Vec<f64> = next.u.iter().zip(&prev.u).map(|(a, b)| a - b).collect();
    let loads = ops.loads(next.t);
    let load_work: f64 = loads.iter().zip(&du).map(|(f, d)| f * d).sum();
    let device_work: f64 = ops
        .dofmap
        .prescribed_dofs()
        .iter()
        .zip(&reaction.per_dof)
        .map(|(&d, r)| r * du[d])
        .sum();
    let interface_dissipated = prev
        .z
        .iter()
        .zip(&next.z)
        .enumerate()
        .filter(|&(_, (a, b))| a != b)
        .map(|(e, (a, b))| (a - b) * segment_threshold(ops, e, &next.u))
        .sum();
    let interface = crate::assembly::assemble_interface(&ops.mesh, &ops.law, &prev.z).expect("bond field in range");
    let abs_form = |m: &crate::sparse::SymSparseMatrix| -> f64 {
        m.entries().map(|(i, j, v)| (du[i] * v * next.u[j]).abs()).sum()
    };
    let magnitude = abs_form(&ops.stiffness) + abs_form(&interface) + abs_form(&ops.viscosity) / tau;
    StepEnergy {
        stored_before: stored_energy(ops, &prev.u, &prev.z).total,
        stored_after: stored_energy(ops, &next.u, &next.z).total,
        viscous: viscous_form(ops, &du) / tau,
        interface_dissipated,
        work: load_work + device_work,
        magnitude,
    }
}

/// Cumulative energy series at the trajectory grid points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyLedger {
    pub t: Vec<f64>,
    pub bulk_elastic: Vec<f64>,
    pub interface_elastic: Vec<f64>,
    pub viscous_dissipated: Vec<f64>,
    pub interface_dissipated: Vec<f64>,
    pub external_work: Vec<f64>,
    pub gap: Vec<f64>,
}

pub const ENERGY_COLUMNS: [&str; 8] = [
    "t",
    "bulk_elastic",
    "interface_elastic",
    "viscous_dissipated",
    "interface_dissipated",
    "total",
    "external_work",
    "gap",
];

impl EnergyLedger {
    pub fn from_trajectory(ops: &Operators, traj: &Trajectory) -> Self {
        let mut ledger = Self::default();
        let (mut visc, mut diss, mut work) = (0.0, 0.0, 0.0);
        let first = &traj.states[0];
        let e0 = stored_energy(ops, &first.u, &first.z);
        for (k, s) in traj.states.iter().enumerate() {
            if k > 0 {
                let step = step_energy(ops, &traj.states[k - 1], s, &traj.reports[k - 1].reaction, traj.tau);
                visc += step.viscous;
                diss += step.interface_dissipated;
                work += step.work;
            }
            let e = stored_energy(ops, &s.u, &s.z);
            ledger.t.push(s.t);
            ledger.bulk_elastic.push(e.bulk);
            ledger.interface_elastic.push(e.interface);
            ledger.viscous_dissipated.push(visc);
            ledger.interface_dissipated.push(diss);
            ledger.external_work.push(work);
            ledger.gap.push(work - (e.total - e0.total) - visc - diss);
        }
        ledger
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Stored plus dissipated energy.
    pub fn total(&self, k: usize) -> f64 {
        self.bulk_elastic[k] + self.interface_elastic[k] + self.viscous_dissipated[k] + self.interface_dissipated[k]
    }

    /// Row `k` in `ENERGY_COLUMNS` order.
    pub fn row(&self, k: usize) -> [f64; 8] {
        [
            self.t[k],
            self.bulk_elastic[k],
            self.interface_elastic[k],
            self.viscous_dissipated[k],
            self.interface_dissipated[k],
            self.total(k),
            self.external_work[k],
            self.gap[k],
        ]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", ENERGY_COLUMNS.join(","))?;
        for k in 0..self.len() {
            let row = self.row(k);
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

fn grid_index(traj: &Trajectory, t: f64) -> Result<usize, EnergeticsError> {
    let r = t / traj.tau;
    let k = r.round();
    if (r - k).abs() > 1e-9 || k < 0.0 || k as usize >= traj.states.len() {
        return Err(EnergeticsError::OffGrid(t));
    }
    Ok(k as usize)
}

/// Right minus left side of the energy inequality between two grid times,
/// summed step by step from the states and device forces.
pub fn energy_inequality_residual(ops: &Operators, traj: &Trajectory, t1: f64, t2: f64) -> Result<f64, EnergeticsError> {
    let (k1, k2) = (grid_index(traj, t1)?, grid_index(traj, t2)?);
    if k2 < k1 {
        return Err(EnergeticsError::BadInterval(t1, t2));
    }
    Ok((k1 + 1..=k2)
        .map(|k| step_energy(ops, &traj.states[k - 1], &traj.states[k], &traj.reports[k - 1].reaction, traj.tau).residual())
        .sum())
}

/// Per-step residuals together with their energy scales.
pub fn step_residuals(ops: &Operators, traj: &Trajectory) -> Vec<(f64, f64)> {
    (1..traj.states.len())
        .map(|k| {
            let s = step_energy(ops, &traj.states[k - 1], &traj.states[k], &traj.reports[k - 1].reaction, traj.tau);
            (s.residual(), s.scale())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentStability {
    pub segment: usize,
    pub z: f64,
    /// `int A jump . jump`.
    pub q: f64,
    /// `2 a(psi_mid) length`.
    pub bound: f64,
    /// `bound - z q`; positive means strictly stable.
    pub margin: f64,
    pub pass: bool,
}

/// Relative slack on the semistability bound.
pub const SEMISTABILITY_RTOL: f64 = 1e-9;

/// Per segment: `z q <= 2 a length` or `z = 0`.
pub fn semistability(ops: &Operators, state: &State) -> Vec<SegmentStability> {
    (0..ops.n_segments())
        .map(|e| {
            let z = state.z[e];
            let q = segment_quadratic(ops, e, &state.u);
            let bound = 2.0 * segment_threshold(ops, e, &state.u);
            let margin = bound - z * q;
            let pass = z == 0.0 || margin >= -SEMISTABILITY_RTOL * bound;
            SegmentStability {
                segment: e,
                z,
                q,
                bound,
                margin,
                pass,
            }
        })
        .collect()
}

pub fn semistability_check(ops: &Operators, traj: &Trajectory, t: f64) -> Result<Vec<SegmentStability>, EnergeticsError> {
    Ok(semistability(ops, &traj.states[grid_index(traj, t)?]))
}

/// Worst value of the discrete momentum inequality over test fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumCheck {
    /// `min_v r(u) . (v - u)` (J per unit thickness).
    pub worst: f64,
    /// `max_v |v - u|^T (|K + A| |u| + |V| |u_dot| + |f|)`, the roundoff
    /// scale of `worst`.
    pub scale: f64,
}

/// Residual of the momentum inequality at grid time `t > 0`.
///
/// Test fields are full dof vectors agreeing with `u(t)` on prescribed
/// dofs and satisfying the non-penetration constraint. The bond field is the
/// one the displacement step used, i.e. the previous step's.
pub fn momentum_residual(
    ops: &Operators,
    traj: &Trajectory,
    t: f64,
    test_fields: &[Vec<f64>],
) -> Result<MomentumCheck, EnergeticsError> {
    let k = grid_index(traj, t)?;
    if k == 0 {
        return Err(EnergeticsError::OffGrid(t));
    }
    let (prev, cur) = (&traj.states[k - 1], &traj.states[k]);
    let interface = crate::assembly::assemble_interface(&ops.mesh, &ops.law, &prev.z).expect("bond field in range");
    let rate: Vec<f64> = cur.u.iter().zip(&prev.u).map(|(a, b)| (a - b) / traj.tau).collect();
    let ku = ops.stiffness.mul_vec(&cur.u);
    let au = interface.mul_vec(&cur.u);
    let vr = ops.viscosity.mul_vec(&rate);
    let loads = ops.loads(cur.t);
    let r: Vec<f64> = (0..cur.u.len()).map(|i| ku[i] + au[i] + vr[i] - loads[i]).collect();
    let mut r_abs: Vec<f64> = loads.iter().map(|f| f.abs()).collect();
    for (m, x) in [(&ops.stiffness, &cur.u), (&interface, &cur.u), (&ops.viscosity, &rate)] {
        for (i, j, v) in m.entries() {
            r_abs[i] += (v * x[j]).abs();
        }
    }

    let u_scale = cur.u.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut worst = f64::INFINITY;
    let mut scale = 0.0_f64;
    for (index, v) in test_fields.iter().enumerate() {
        if v.len() != cur.u.len() {
            return Err(EnergeticsError::InadmissibleTestField {
                index,
                reason: format!("length {} != {}", v.len(), cur.u.len()),
            });
        }
        if let Some(&d) = ops
            .dofmap
            .prescribed_dofs()
            .iter()
            .find(|&&d| (v[d] - cur.u[d]).abs() > 1e-12 * u_scale)
        {
            return Err(EnergeticsError::InadmissibleTestField {
                index,
                reason: format!("differs from the boundary value at dof {d}"),
            });
        }
        if let Some(g) = ops.constraints.rows.iter().map(|row| row.gap(v)).find(|&g| g < -FEASIBILITY_TOL) {
            return Err(EnergeticsError::InadmissibleTestField {
                index,
                reason: format!("interpenetration {g:e} m"),
            });
        }
        let value: f64 = r.iter().zip(v).zip(&cur.u).map(|((ri, vi), ui)| ri * (vi - ui)).sum();
        let mag: f64 = r_abs.iter().zip(v).zip(&cur.u).map(|((ri, vi), ui)| ri * (vi - ui).abs()).sum();
        worst = worst.min(value);
        scale = scale.max(mag);
    }
    Ok(MomentumCheck { worst, scale })
}

/// Random admissible test fields `u + w`, with `w` uniform in
/// `[-amplitude, amplitude]` on free dofs and then projected onto the
/// non-penetration constraint.
pub fn random_test_fields(ops: &Operators, u: &[f64], count: usize, amplitude: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v = u.to_vec();
            for &d in ops.dofmap.free_dofs() {
                v[d] += rng.random_range(-amplitude..=amplitude);
            }
            ops.constraints.project_feasible(&mut v, &ops.dofmap);
            v
        })
        .collect()
}

pub const DEFAULT_TEST_FIELDS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct MixityEntry {
    pub segment: usize,
    /// Midpoint abscissa of the segment (m).
    pub x: f64,
    pub debond_time: f64,
    pub psi: f64,
    /// Dissipated energy per unit area at debonding (J/m^2).
    pub density: f64,
    /// `density / a_I`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MixityRecord {
    pub entries: Vec<MixityEntry>,
    pub intact: Vec<usize>,
}

pub const MIXITY_COLUMNS: [&str; 6] = ["segment", "x", "debond_time", "psi", "density", "ratio"];

impl MixityRecord {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", MIXITY_COLUMNS.join(","))?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e}",
                e.segment, e.x, e.debond_time, e.psi, e.density, e.ratio
            )?;
        }
        Ok(())
    }
}

/// Dissipated density of every debond event relative to the Mode-I value,
/// ordered by segment.
pub fn mixity_histogram(ops: &Operators, traj: &Trajectory) -> MixityRecord {
    let mut entries = Vec::new();
    for (k, report) in traj.reports.iter().enumerate() {
        for &e in &report.debonded {
            let before = traj.states[k].z[e];
            let psi = mode_mixity_angle(
                segment_mid_jump(&ops.mesh, e, &traj.states[k + 1].u),
                ops.mesh.interface_segments[e].normal,
                &ops.law,
            );
            let a = dissipation_threshold(psi, &ops.law).finite().unwrap_or(f64::INFINITY);
            let density = a * before;
            entries.push(MixityEntry {
                segment: e,
                x: ops.mesh.segment_midpoint(e).x,
                debond_time: report.t,
                psi,
                density,
                ratio: density / ops.law.a_i,
            });
        }
    }
    entries.sort_by_key(|e| e.segment);
    let intact = (0..ops.n_segments())
        .filter(|&e| traj.final_state().z[e] > 0.0)
        .collect();
    MixityRecord { entries, intact }
}
