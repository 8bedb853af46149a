//! Semi-implicit time stepping: a displacement QP with the previous bond
//! field, then a segment-wise bond update with the new displacement.

use thiserror::Error;

use crate::assembly::{
    assemble_interface, assemble_loads, assemble_stiffness, assemble_viscosity, constraint_matrix,
    dirichlet_map, reaction_force, segment_end_jumps, segment_mid_jump, AssemblyError, ConstraintMatrix,
    DirichletRamp, DofMap, Reaction, Uniform, GAUSS2,
};
use crate::constitutive::{elasticity_tensor, AdhesiveLaw, ConstitutiveError, IsotropicElasticity, VoigtTensor};
use crate::energetics::{self, StepEnergy};
use crate::mesh::Mesh2D;
use crate::qp::{solve_qp_warm, KktResiduals, QpError, QpProblem, QpSolution};
use crate::sparse::SymSparseMatrix;

/// Everything that stays fixed along a trajectory.
#[derive(Debug, Clone)]
pub struct Operators {
    pub mesh: Mesh2D,
    pub elasticity: VoigtTensor,
    pub chi: f64,
    pub law: AdhesiveLaw,
    pub stiffness: SymSparseMatrix,
    pub viscosity: SymSparseMatrix,
    pub dofmap: DofMap,
    pub constraints: ConstraintMatrix,
    pub body_force: [f64; 2],
    pub surface_traction: [f64; 2],
}

impl Operators {
    pub fn new(
        mesh: Mesh2D,
        material: IsotropicElasticity,
        chi: f64,
        law: AdhesiveLaw,
        ramp: DirichletRamp,
    ) -> Result<Self, StepError> {
        law.check()?;
        crate::constitutive::ViscosityLaw::new(chi)?;
        let elasticity = elasticity_tensor(&material)?;
        let stiffness = assemble_stiffness(&mesh, &elasticity)?;
        let viscosity = assemble_viscosity(&stiffness, chi);
        let dofmap = dirichlet_map(&mesh, ramp);
        let constraints = constraint_matrix(&mesh, &dofmap);
        Ok(Self {
            mesh,
            elasticity,
            chi,
            law,
            stiffness,
            viscosity,
            dofmap,
            constraints,
            body_force: [0.0, 0.0],
            surface_traction: [0.0, 0.0],
        })
    }

    pub fn with_loads(mut self, body_force: [f64; 2], surface_traction: [f64; 2]) -> Self {
        self.body_force = body_force;
        self.surface_traction = surface_traction;
        self
    }

    pub fn n_segments(&self) -> usize {
        self.mesh.interface_segments.len()
    }

    /// Consistent load vector at `t` (right-endpoint evaluation).
    pub fn loads(&self, t: f64) -> Vec<f64> {
        assemble_loads(&self.mesh, &Uniform(self.body_force), &Uniform(self.surface_traction), t)
    }

    pub fn interface(&self, z: &[f64]) -> Result<SymSparseMatrix, StepError> {
        Ok(assemble_interface(&self.mesh, &self.law, z)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Vec<f64>,
    pub z: Vec<f64>,
}

/// Per-segment quantities of the bond update.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentUpdate {
    /// Driving energy `int 1/2 A jump . jump` (J per unit thickness).
    pub driving: f64,
    /// Activation energy `a(psi_mid) * length`; infinite when forbidden.
    pub threshold: f64,
    /// Mixity angle at the midpoint jump.
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub qp_iterations: usize,
    pub active_set: Vec<usize>,
    pub multipliers: Vec<f64>,
    pub kkt: KktResiduals,
    /// Segments with `z > 0` before and `z = 0` after this step.
    pub debonded: Vec<usize>,
    pub segments: Vec<SegmentUpdate>,
    /// Force of the loading device on the body.
    pub reaction: Reaction,
    pub energy: StepEnergy,
}

impl StepReport {
    pub fn active_constraints(&self) -> usize {
        self.active_set.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub tau: f64,
    pub states: Vec<State>,
    pub reports: Vec<StepReport>,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn end_time(&self) -> f64 {
        self.final_state().t
    }

    pub fn fully_debonded(&self) -> bool {
        self.final_state().z.iter().all(|&z| z == 0.0)
    }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Constitutive(#[from] ConstitutiveError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("inadmissible initial data: {0}")]
    InadmissibleInitial(String),
    #[error("invalid time parameters: {0}")]
    InvalidTime(String),
    #[error("QP failed at step {step}: {source}")]
    Qp { step: usize, source: QpError },
    #[error("invariant violated at step {step}: {message}")]
    Invariant { step: usize, message: String },
    #[error("time {t} outside [0, {end}]")]
    OutOfRange { t: f64, end: f64 },
}

/// A failed run keeps the accepted part of the trajectory.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct RunError {
    pub error: StepError,
    pub partial: Box<Trajectory>,
}

pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Initial state at `t = 0`; defaults are `u = 0`, `z = 1`.
pub fn init_state(ops: &Operators, u0: Option<Vec<f64>>, z0: Option<Vec<f64>>) -> Result<State, StepError> {
    let n = ops.mesh.n_dofs();
    let m = ops.n_segments();
    let u = u0.unwrap_or_else(|| vec![0.0; n]);
    let z = z0.unwrap_or_else(|| vec![1.0; m]);
    if u.len() != n {
        return Err(StepError::InadmissibleInitial(format!("u has {} entries, expected {n}", u.len())));
    }
    if z.len() != m {
        return Err(StepError::InadmissibleInitial(format!("z has {} entries, expected {m}", z.len())));
    }
    if let Some((i, v)) = z.iter().enumerate().find(|&(_, v)| !(0.0..=1.0).contains(v)) {
        return Err(StepError::InadmissibleInitial(format!("z[{i}] = {v} outside [0, 1]")));
    }
    if let Some(v) = u.iter().find(|v| !v.is_finite()) {
        return Err(StepError::InadmissibleInitial(format!("u contains {v}")));
    }
    let gaps = ops.constraints.gaps(&u);
    if let Some((row, g)) = gaps.iter().enumerate().find(|&(_, &g)| g < -FEASIBILITY_TOL) {
        return Err(StepError::InadmissibleInitial(format!(
            "interpenetration {g:e} m at interface node pair {row}"
        )));
    }
    Ok(State { t: 0.0, u, z })
}

/// One displacement QP with the bond field of `state`.
pub fn displacement_step(
    ops: &Operators,
    state: &State,
    tau: f64,
    t_next: f64,
    tol: f64,
    max_iter: usize,
    warm_start: &[usize],
) -> Result<(Vec<f64>, QpSolution, SymSparseMatrix), StepError> {
    if !(tau > 0.0) {
        return Err(StepError::InvalidTime(format!("tau = {tau}")));
    }
    let step = (t_next / tau).round() as usize;
    let interface = ops.interface(&state.z)?;
    let operator = ops
        .stiffness
        .add_scaled(&interface, 1.0)
        .add_scaled(&ops.viscosity, 1.0 / tau);
    let free = ops.dofmap.free_dofs();
    let prescribed = ops.dofmap.prescribed_dofs();
    let up = ops.dofmap.prescribed_values(t_next);

    // rhs = loads + V u_prev / tau
    let loads = ops.loads(t_next);
    let vu = ops.viscosity.mul_vec(&state.u);
    let g_coupling = operator.block_mul(free, prescribed, &up);
    let g: Vec<f64> = free
        .iter()
        .zip(&g_coupling)
        .map(|(&d, &hc)| hc - loads[d] - vu[d] / tau)
        .collect();

    let problem = QpProblem {
        h: operator.submatrix(free),
        g,
        b: ops.constraints.b_rows(),
        c: ops.constraints.offsets(&up),
    };
    let sol = solve_qp_warm(&problem, tol, max_iter, warm_start).map_err(|source| StepError::Qp { step, source })?;
    let u_next = ops.dofmap.scatter(&sol.x, t_next);
    Ok((u_next, sol, interface))
}

/// Driving energy, threshold and mixity of one segment for a displacement.
pub fn segment_update(ops: &Operators, segment: usize, u: &[f64]) -> SegmentUpdate {
    let seg = &ops.mesh.interface_segments[segment];
    let [ja, jb] = segment_end_jumps(&ops.mesh, segment, u);
    let driving = GAUSS2
        .iter()
        .map(|&s| {
            let j = [(1.0 - s) * ja[0] + s * jb[0], (1.0 - s) * ja[1] + s * jb[1]];
            0.25 * seg.length * ops.law.quadratic_form(j, seg.normal)
        })
        .sum();
    let mid = segment_mid_jump(&ops.mesh, segment, u);
    let psi = crate::constitutive::mode_mixity_angle(mid, seg.normal, &ops.law);
    let threshold = crate::constitutive::dissipation_threshold(psi, &ops.law)
        .finite()
        .map_or(f64::INFINITY, |a| a * seg.length);
    SegmentUpdate { driving, threshold, psi }
}

/// Bond update: the segment objective is linear in `z_e` with slope
/// `threshold - driving`, so `z_e` drops to zero exactly when the driving
/// energy strictly exceeds the threshold.
pub fn delamination_step(ops: &Operators, u_next: &[f64], z_prev: &[f64]) -> (Vec<f64>, Vec<SegmentUpdate>) {
    let updates: Vec<SegmentUpdate> = (0..ops.n_segments()).map(|e| segment_update(ops, e, u_next)).collect();
    let z = z_prev
        .iter()
        .zip(&updates)
        .map(|(&z, up)| next_bond(z, up.driving, up.threshold))
        .collect();
    (z, updates)
}

/// Minimizer of `(threshold - driving) * z` over `[0, z_prev]`; a tie keeps the bond.
pub fn next_bond(z_prev: f64, driving: f64, threshold: f64) -> f64 {
    if driving > threshold {
        0.0
    } else {
        z_prev
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunParams {
    pub tau: f64,
    pub t_end: f64,
    /// Stop this long after every segment has debonded.
    pub stop_after_full_debond: Option<f64>,
    pub qp_tol: f64,
    pub max_iter: usize,
    pub check_invariants: bool,
}

impl RunParams {
    pub fn n_steps(&self) -> Result<usize, StepError> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(StepError::InvalidTime(format!("tau = {}", self.tau)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(StepError::InvalidTime(format!("T = {}", self.t_end)));
        }
        let ratio = self.t_end / self.tau;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(StepError::InvalidTime(format!(
                "T = {} is not a multiple of tau = {}",
                self.t_end, self.tau
            )));
        }
        Ok(n as usize)
    }
}

/// One accepted step.
pub fn advance(ops: &Operators, state: &State, step: usize, params: &RunParams, warm: &[usize]) -> Result<(State, StepReport), StepError> {
    let tau = params.tau;
    let t = step as f64 * tau;
    let (u, sol, interface_old) = displacement_step(ops, state, tau, t, params.qp_tol, params.max_iter, warm)?;
    let loads = ops.loads(t);
    let mut reaction = reaction_force(
        &ops.stiffness,
        &ops.viscosity,
        &interface_old,
        &state.u,
        &u,
        tau,
        &loads,
        &ops.dofmap,
    );
    // Contact forces on prescribed dofs come from the support, not the device.
    for (row, &mu) in ops.constraints.rows.iter().zip(&sol.multipliers) {
        for &(p, c) in &row.prescribed {
            reaction.per_dof[p] -= c * mu;
            reaction.total[ops.dofmap.prescribed_dofs()[p] % 2] -= c * mu;
        }
    }
    let (z, segments) = delamination_step(ops, &u, &state.z);
    let debonded = (0..z.len()).filter(|&e| state.z[e] > 0.0 && z[e] == 0.0).collect();
    let next = State { t, u, z };
    let energy = energetics::step_energy(ops, state, &next, &reaction, tau);
    let report = StepReport {
        step,
        t,
        qp_iterations: sol.iterations,
        active_set: sol.active_set,
        multipliers: sol.multipliers,
        kkt: sol.kkt,
        debonded,
        segments,
        reaction,
        energy,
    };
    Ok((next, report))
}

/// Checks asserted after every accepted step.
pub fn check_step(ops: &Operators, prev: &State, next: &State, report: &StepReport) -> Result<(), String> {
    let min_gap = ops
        .constraints
        .rows
        .iter()
        .map(|r| r.gap(&next.u))
        .fold(f64::INFINITY, f64::min);
    if min_gap < -FEASIBILITY_TOL {
        return Err(format!("interface gap {min_gap:e} m"));
    }
    if let Some(e) = (0..next.z.len()).find(|&e| next.z[e] > prev.z[e]) {
        return Err(format!("bond of segment {e} increased"));
    }
    if let Some(s) = energetics::semistability(ops, next).into_iter().find(|s| !s.pass) {
        return Err(format!(
            "semistability fails on segment {} (z q = {:e}, bound {:e})",
            s.segment,
            s.z * s.q,
            s.bound
        ));
    }
    let scale = report.energy.scale();
    if report.energy.residual() < -1e-8 * scale {
        return Err(format!(
            "energy inequality residual {:e} J below -1e-8 x {scale:e}",
            report.energy.residual()
        ));
    }
    Ok(())
}

/// Runs the recursion; `observer` sees the initial state and every accepted step.
pub fn run_with<F>(ops: &Operators, initial: State, params: &RunParams, mut observer: F) -> Result<Trajectory, RunError>
where
    F: FnMut(&State, Option<&StepReport>),
{
    let mut traj = Trajectory {
        tau: params.tau,
        states: vec![initial],
        reports: Vec::new(),
    };
    observer(&traj.states[0], None);
    let n_steps = match params.n_steps() {
        Ok(n) => n,
        Err(error) => {
            return Err(RunError {
                error,
                partial: Box::new(traj),
            })
        }
    };
    let mut debond_time: Option<f64> = traj.final_state().z.iter().all(|&z| z == 0.0).then_some(0.0);
    for step in 1..=n_steps {
        if let (Some(margin), Some(t0)) = (params.stop_after_full_debond, debond_time) {
            if traj.end_time() >= t0 + margin - 1e-12 * params.tau {
                break;
            }
        }
        let warm = traj.reports.last().map(|r| r.active_set.clone()).unwrap_or_default();
        let prev = traj.final_state();
        let (next, report) = match advance(ops, prev, step, params, &warm) {
            Ok(v) => v,
            Err(error) => {
                return Err(RunError {
                    error,
                    partial: Box::new(traj),
                })
            }
        };
        if params.check_invariants {
            if let Err(message) = check_step(ops, prev, &next, &report) {
                return Err(RunError {
                    error: StepError::Invariant { step, message },
                    partial: Box::new(traj),
                });
            }
        }
        if debond_time.is_none() && next.z.iter().all(|&z| z == 0.0) {
            debond_time = Some(next.t);
        }
        observer(&next, Some(&report));
        traj.states.push(next);
        traj.reports.push(report);
    }
    Ok(traj)
}

pub fn run(ops: &Operators, initial: State, params: &RunParams) -> Result<Trajectory, RunError> {
    run_with(ops, initial, params, |_, _| {})
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpolantKind {
    /// Piecewise constant, `u^k` on `(t_{k-1}, t_k]`.
    Left,
    /// Piecewise constant, `u^{k-1}` on `[t_{k-1}, t_k)`.
    Right,
    /// Piecewise affine in `u`; `z` follows `Left`.
    Linear,
}

/// Evaluate one of the time interpolants of a trajectory.
pub fn interpolant_eval(traj: &Trajectory, t: f64, kind: InterpolantKind) -> Result<State, StepError> {
    let end = traj.end_time();
    let slack = 1e-12 * traj.tau;
    if !(t >= -slack && t <= end + slack) {
        return Err(StepError::OutOfRange { t, end });
    }
    let last = traj.states.len() - 1;
    let r = t / traj.tau;
    let nearest = r.round();
    if (r - nearest).abs() <= 1e-9 || last == 0 {
        let k = (nearest.max(0.0) as usize).min(last);
        return Ok(traj.states[k].clone());
    }
    let k = (r.ceil() as usize).clamp(1, last);
    let (a, b) = (&traj.states[k - 1], &traj.states[k]);
    Ok(match kind {
        InterpolantKind::Left => State { t, ..b.clone() },
        InterpolantKind::Right => State { t, ..a.clone() },
        InterpolantKind::Linear => {
            let w = (t - a.t) / (b.t - a.t);
            State {
                t,
                u: a.u.iter().zip(&b.u).map(|(x, y)| x + w * (y - x)).collect(),
                z: b.z.clone(),
            }
        }
    })
}
