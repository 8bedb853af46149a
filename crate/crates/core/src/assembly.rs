//! Finite-element operators for P1 displacements and P0 bond fractions.
//!
//! Displacement dofs are interleaved: node `i` owns dofs `2i` (x) and `2i+1`
//! (y). Prescribed dofs are eliminated, so every quadratic program is posed
//! over the free dofs only.

use thiserror::Error;

use crate::constitutive::{AdhesiveLaw, VoigtTensor};
use crate::mesh::{Foundation, Mesh2D, Point2};
pub use crate::sparse::{SymSparseMatrix, TripletBuilder};

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("triangle {triangle} is degenerate (signed area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },
    #[error("bond fraction {value} of segment {segment} outside [0, 1]")]
    BondOutOfRange { segment: usize, value: f64 },
    #[error("expected {expected} bond fractions, got {got}")]
    BondLength { expected: usize, got: usize },
}

/// Gauss points on `[0, 1]`, exact up to cubics; weights are 1/2 each.
pub(crate) const GAUSS2: [f64; 2] = [
    0.5 - 0.288_675_134_594_812_9,
    0.5 + 0.288_675_134_594_812_9,
];

/// Constant strain-displacement operator of a triangle, Voigt rows
/// `(e11, e22, 2 e12)` against local dofs `(u0x, u0y, u1x, u1y, u2x, u2y)`.
pub fn strain_operator(mesh: &Mesh2D, triangle: usize) -> Result<([[f64; 6]; 3], f64), AssemblyError> {
    let [a, b, c] = mesh.triangles[triangle];
    let p = [mesh.nodes[a], mesh.nodes[b], mesh.nodes[c]];
    let area = mesh.signed_area(triangle);
    let scale = mesh.h * mesh.h;
    if !(area > 1e-14 * scale) {
        return Err(AssemblyError::DegenerateTriangle { triangle, area });
    }
    let inv = 1.0 / (2.0 * area);
    let mut bm = [[0.0; 6]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let dx = (p[j].y - p[k].y) * inv;
        let dy = (p[k].x - p[j].x) * inv;
        bm[0][2 * i] = dx;
        bm[1][2 * i + 1] = dy;
        bm[2][2 * i] = dy;
        bm[2][2 * i + 1] = dx;
    }
    Ok((bm, area))
}

fn triangle_dofs(tri: [usize; 3]) -> [usize; 6] {
    [
        2 * tri[0],
        2 * tri[0] + 1,
        2 * tri[1],
        2 * tri[1] + 1,
        2 * tri[2],
        2 * tri[2] + 1,
    ]
}

/// Voigt strain of one triangle for a full nodal displacement vector.
pub fn element_strain(mesh: &Mesh2D, triangle: usize, u: &[f64]) -> Result<[f64; 3], AssemblyError> {
    let (bm, _) = strain_operator(mesh, triangle)?;
    let dofs = triangle_dofs(mesh.triangles[triangle]);
    let mut e = [0.0; 3];
    for (r, row) in bm.iter().enumerate() {
        e[r] = dofs.iter().zip(row).map(|(&d, &b)| b * u[d]).sum();
    }
    Ok(e)
}

/// Element stiffness `area * B^T C B`.
pub fn element_stiffness(mesh: &Mesh2D, triangle: usize, c: &VoigtTensor) -> Result<[[f64; 6]; 6], AssemblyError> {
    let (bm, area) = strain_operator(mesh, triangle)?;
    let mut cb = [[0.0; 6]; 3];
    for r in 0..3 {
        for col in 0..6 {
            cb[r][col] = (0..3).map(|s| c.0[r][s] * bm[s][col]).sum();
        }
    }
    let mut ke = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            ke[i][j] = area * (0..3).map(|r| bm[r][i] * cb[r][j]).sum::<f64>();
        }
    }
    Ok(ke)
}

pub fn assemble_stiffness(mesh: &Mesh2D, c: &VoigtTensor) -> Result<SymSparseMatrix, AssemblyError> {
    let mut b = TripletBuilder::new(mesh.n_dofs());
    for t in 0..mesh.triangles.len() {
        let ke = element_stiffness(mesh, t, c)?;
        let dofs = triangle_dofs(mesh.triangles[t]);
        for i in 0..6 {
            for j in 0..6 {
                b.add(dofs[i], dofs[j], ke[i][j]);
            }
        }
    }
    Ok(b.build())
}

/// Viscosity operator for `D = chi C`.
///
/// A general `D` would be assembled exactly like the stiffness with its own
/// Voigt tensor; only the proportional case is needed here.
pub fn assemble_viscosity(stiffness: &SymSparseMatrix, chi: f64) -> SymSparseMatrix {
    stiffness.scaled(chi)
}

/// Local dofs of a segment and the linear map from them to the jump at a
/// point `s` in `[0, 1]` along the segment.
pub(crate) struct SegmentJumpMap {
    pub dofs: Vec<usize>,
    /// For each local dof: (node slot 0/1, component 0/1, sign).
    pub slots: Vec<(usize, usize, f64)>,
}

pub(crate) fn segment_jump_map(mesh: &Mesh2D, segment: usize) -> SegmentJumpMap {
    let seg = &mesh.interface_segments[segment];
    let mut dofs = Vec::with_capacity(8);
    let mut slots = Vec::with_capacity(8);
    for k in 0..2 {
        for comp in 0..2 {
            dofs.push(2 * seg.node_plus[k] + comp);
            slots.push((k, comp, -1.0));
        }
    }
    if mesh.foundation == Foundation::TwoBody {
        for k in 0..2 {
            for comp in 0..2 {
                dofs.push(2 * seg.node_minus[k] + comp);
                slots.push((k, comp, 1.0));
            }
        }
    }
    SegmentJumpMap { dofs, slots }
}

/// Jump `u_minus - u_plus` at the two end nodes of a segment.
pub fn segment_end_jumps(mesh: &Mesh2D, segment: usize, u: &[f64]) -> [[f64; 2]; 2] {
    let map = segment_jump_map(mesh, segment);
    let mut j = [[0.0; 2]; 2];
    for (&d, &(k, comp, sign)) in map.dofs.iter().zip(&map.slots) {
        j[k][comp] += sign * u[d];
    }
    j
}

/// Jump at the segment midpoint.
pub fn segment_mid_jump(mesh: &Mesh2D, segment: usize, u: &[f64]) -> [f64; 2] {
    let [ja, jb] = segment_end_jumps(mesh, segment, u);
    [0.5 * (ja[0] + jb[0]), 0.5 * (ja[1] + jb[1])]
}

/// Element matrix of `int_segment A jump . jump dS` (no z, no 1/2).
pub(crate) fn segment_matrix(mesh: &Mesh2D, segment: usize, law: &AdhesiveLaw) -> (Vec<usize>, Vec<Vec<f64>>) {
    let seg = &mesh.interface_segments[segment];
    let a = law.stiffness_matrix(seg.normal);
    let map = segment_jump_map(mesh, segment);
    let n = map.dofs.len();
    let mut m = vec![vec![0.0; n]; n];
    for &s in &GAUSS2 {
        let w = 0.5 * seg.length;
        let shape = [1.0 - s, s];
        // jump = J u_local, J is 2 x n
        let mut jac = [vec![0.0; n], vec![0.0; n]];
        for (col, &(k, comp, sign)) in map.slots.iter().enumerate() {
            jac[comp][col] = sign * shape[k];
        }
        for p in 0..n {
            for q in 0..n {
                let mut v = 0.0;
                for r in 0..2 {
                    for t in 0..2 {
                        v += jac[r][p] * a[r][t] * jac[t][q];
                    }
                }
                m[p][q] += w * v;
            }
        }
    }
    (map.dofs, m)
}

/// `int_{Gamma_C} z A [[u]] . [[v]] dS` with piecewise-constant `z`.
///
/// The quadratic form `u^T A_z u / 2` is the adhesive stored energy.
pub fn assemble_interface(mesh: &Mesh2D, law: &AdhesiveLaw, z: &[f64]) -> Result<SymSparseMatrix, AssemblyError> {
    if z.len() != mesh.interface_segments.len() {
        return Err(AssemblyError::BondLength {
            expected: mesh.interface_segments.len(),
            got: z.len(),
        });
    }
    if let Some((segment, &value)) = z.iter().enumerate().find(|&(_, &v)| !(0.0..=1.0).contains(&v)) {
        return Err(AssemblyError::BondOutOfRange { segment, value });
    }
    let mut b = TripletBuilder::new(mesh.n_dofs());
    for (s, &zs) in z.iter().enumerate() {
        if zs == 0.0 {
            continue;
        }
        let (dofs, m) = segment_matrix(mesh, s, law);
        for (i, &di) in dofs.iter().enumerate() {
            for (j, &dj) in dofs.iter().enumerate() {
                b.add(di, dj, zs * m[i][j]);
            }
        }
    }
    Ok(b.build())
}

/// Force field evaluated at a point and time (N/m^3 in the bulk, N/m^2 on edges).
pub trait LoadField {
    fn at(&self, p: Point2, t: f64) -> [f64; 2];
}

impl<F: Fn(Point2, f64) -> [f64; 2]> LoadField for F {
    fn at(&self, p: Point2, t: f64) -> [f64; 2] {
        self(p, t)
    }
}

/// Spatially and temporally constant field.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Uniform(pub [f64; 2]);

impl LoadField for Uniform {
    fn at(&self, _p: Point2, _t: f64) -> [f64; 2] {
        self.0
    }
}

/// Consistent load vector: centroid rule in the bulk, 2-point Gauss on Neumann edges.
pub fn assemble_loads(mesh: &Mesh2D, body: &dyn LoadField, traction: &dyn LoadField, t: f64) -> Vec<f64> {
    let mut f = vec![0.0; mesh.n_dofs()];
    for (k, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.signed_area(k);
        let p = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
        let centroid = Point2::new((p[0].x + p[1].x + p[2].x) / 3.0, (p[0].y + p[1].y + p[2].y) / 3.0);
        let force = body.at(centroid, t);
        if force == [0.0, 0.0] {
            continue;
        }
        for &v in tri {
            f[2 * v] += area * force[0] / 3.0;
            f[2 * v + 1] += area * force[1] / 3.0;
        }
    }
    for &[a, b] in &mesh.neumann_edges {
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let len = pa.distance(pb);
        for &s in &GAUSS2 {
            let p = Point2::new(pa.x + s * (pb.x - pa.x), pa.y + s * (pb.y - pa.y));
            let force = traction.at(p, t);
            for (node, shape) in [(a, 1.0 - s), (b, s)] {
                f[2 * node] += 0.5 * len * shape * force[0];
                f[2 * node + 1] += 0.5 * len * shape * force[1];
            }
        }
    }
    f
}

/// Linear Dirichlet ramp `u_D(t) = t * velocity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletRamp {
    pub velocity: [f64; 2],
}

impl DirichletRamp {
    pub fn new(speed: f64, direction: [f64; 2], normalize: bool) -> Self {
        let norm = if normalize {
            direction[0].hypot(direction[1])
        } else {
            1.0
        };
        let scale = if norm > 0.0 { speed / norm } else { 0.0 };
        Self {
            velocity: [scale * direction[0], scale * direction[1]],
        }
    }

    pub fn at(&self, t: f64) -> [f64; 2] {
        [t * self.velocity[0], t * self.velocity[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    Free(usize),
    Prescribed(usize),
}

/// Partition of displacement dofs into free and prescribed ones.
#[derive(Debug, Clone)]
pub struct DofMap {
    kinds: Vec<DofKind>,
    free: Vec<usize>,
    prescribed: Vec<usize>,
    loaded: Vec<bool>,
    ramp: DirichletRamp,
}

impl DofMap {
    pub fn n_dofs(&self) -> usize {
        self.kinds.len()
    }

    pub fn kind(&self, dof: usize) -> DofKind {
        self.kinds[dof]
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn prescribed_dofs(&self) -> &[usize] {
        &self.prescribed
    }

    pub fn ramp(&self) -> DirichletRamp {
        self.ramp
    }

    /// Prescribed values at time `t`, ordered like `prescribed_dofs`.
    pub fn prescribed_values(&self, t: f64) -> Vec<f64> {
        let ud = self.ramp.at(t);
        self.prescribed
            .iter()
            .zip(&self.loaded)
            .map(|(&d, &loaded)| if loaded { ud[d % 2] } else { 0.0 })
            .collect()
    }

    /// Full dof vector from free values and the prescribed values at `t`.
    pub fn scatter(&self, free_values: &[f64], t: f64) -> Vec<f64> {
        assert_eq!(free_values.len(), self.free.len());
        let mut u = vec![0.0; self.kinds.len()];
        for (&d, &v) in self.free.iter().zip(free_values) {
            u[d] = v;
        }
        for (&d, v) in self.prescribed.iter().zip(self.prescribed_values(t)) {
            u[d] = v;
        }
        u
    }

    pub fn gather_free(&self, u: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| u[d]).collect()
    }

    pub fn gather_prescribed(&self, u: &[f64]) -> Vec<f64> {
        self.prescribed.iter().map(|&d| u[d]).collect()
    }
}

pub fn dirichlet_map(mesh: &Mesh2D, ramp: DirichletRamp) -> DofMap {
    let mut kinds = Vec::with_capacity(mesh.n_dofs());
    let (mut free, mut prescribed, mut loaded) = (Vec::new(), Vec::new(), Vec::new());
    for node in 0..mesh.n_nodes() {
        for comp in 0..2 {
            let dof = 2 * node + comp;
            if mesh.dirichlet_nodes.contains(&node) {
                kinds.push(DofKind::Prescribed(prescribed.len()));
                prescribed.push(dof);
                loaded.push(!mesh.clamped_nodes.contains(&node));
            } else {
                kinds.push(DofKind::Free(free.len()));
                free.push(dof);
            }
        }
    }
    DofMap {
        kinds,
        free,
        prescribed,
        loaded,
        ramp,
    }
}

/// Non-penetration row `gap(u) = sum coeff * u >= 0` at one interface node pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub node_plus: usize,
    pub node_minus: usize,
    pub normal: [f64; 2],
    /// Coefficients on global dofs.
    pub global: Vec<(usize, f64)>,
    /// Coefficients on free-dof indices.
    pub free: Vec<(usize, f64)>,
    /// Coefficients on prescribed-dof indices.
    pub prescribed: Vec<(usize, f64)>,
}

impl ConstraintRow {
    pub fn gap(&self, u: &[f64]) -> f64 {
        self.global.iter().map(|&(d, c)| c * u[d]).sum()
    }
}

/// Rows with at least one free coefficient enter the QP as `B x + c >= 0`;
/// rows touching only prescribed dofs are kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    pub rows: Vec<ConstraintRow>,
    pub fixed_rows: Vec<ConstraintRow>,
}

impl ConstraintMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// `B` in free-dof indices.
    pub fn b_rows(&self) -> Vec<Vec<(usize, f64)>> {
        self.rows.iter().map(|r| r.free.clone()).collect()
    }

    /// `c(t)` collecting prescribed contributions.
    pub fn offsets(&self, prescribed_values: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.prescribed.iter().map(|&(p, c)| c * prescribed_values[p]).sum())
            .collect()
    }

    /// Gaps of every row (QP rows first, then fixed rows).
    pub fn gaps(&self, u: &[f64]) -> Vec<f64> {
        self.rows.iter().chain(&self.fixed_rows).map(|r| r.gap(u)).collect()
    }

    pub fn min_gap(&self, u: &[f64]) -> f64 {
        self.gaps(u).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Project a full displacement onto `gap >= 0` row by row. Rows have
    /// disjoint supports, so the result is the exact Euclidean projection
    /// obtained by moving only free dofs.
    pub fn project_feasible(&self, u: &mut [f64], dofmap: &DofMap) {
        for row in &self.rows {
            let g = row.gap(u);
            if g >= 0.0 {
                continue;
            }
            let norm2: f64 = row.free.iter().map(|&(_, c)| c * c).sum();
            for &(fi, c) in &row.free {
                u[dofmap.free_dofs()[fi]] -= g * c / norm2;
            }
        }
    }
}

pub fn constraint_matrix(mesh: &Mesh2D, dofmap: &DofMap) -> ConstraintMatrix {
    use std::collections::BTreeMap;
    // Node pairs in first-seen order along the interface, with summed normals.
    let mut order: Vec<(usize, usize)> = Vec::new();
    let mut normals: BTreeMap<(usize, usize), [f64; 2]> = BTreeMap::new();
    for seg in &mesh.interface_segments {
        for k in 0..2 {
            let key = (seg.node_plus[k], seg.node_minus[k]);
            let entry = normals.entry(key).or_insert_with(|| {
                order.push(key);
                [0.0, 0.0]
            });
            entry[0] += seg.normal[0];
            entry[1] += seg.normal[1];
        }
    }

    let mut rows = Vec::new();
    let mut fixed_rows = Vec::new();
    for key in order {
        let sum = normals[&key];
        let norm = sum[0].hypot(sum[1]);
        let normal = [sum[0] / norm, sum[1] / norm];
        let (plus, minus) = key;
        let mut global = Vec::with_capacity(4);
        for comp in 0..2 {
            if normal[comp] != 0.0 {
                global.push((2 * plus + comp, -normal[comp]));
            }
        }
        if mesh.foundation == Foundation::TwoBody {
            for comp in 0..2 {
                if normal[comp] != 0.0 {
                    global.push((2 * minus + comp, normal[comp]));
                }
            }
        }
        let (mut free, mut prescribed) = (Vec::new(), Vec::new());
        for &(d, c) in &global {
            match dofmap.kind(d) {
                DofKind::Free(i) => free.push((i, c)),
                DofKind::Prescribed(i) => prescribed.push((i, c)),
            }
        }
        let row = ConstraintRow {
            node_plus: plus,
            node_minus: minus,
            normal,
            global,
            free,
            prescribed,
        };
        if row.free.is_empty() {
            fixed_rows.push(row);
        } else {
            rows.push(row);
        }
    }
    ConstraintMatrix { rows, fixed_rows }
}

/// Force exerted by the loading device.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    /// Summed per component (N per unit thickness).
    pub total: [f64; 2],
    /// Per prescribed dof, ordered like `DofMap::prescribed_dofs`.
    pub per_dof: Vec<f64>,
}

/// Residual of the discrete momentum balance on the prescribed dofs:
/// `(K + A_z) u_next + V (u_next - u_prev) / tau - loads`.
#[allow(clippy::too_many_arguments)]
pub fn reaction_force(
    stiffness: &SymSparseMatrix,
    viscosity: &SymSparseMatrix,
    interface: &SymSparseMatrix,
    u_prev: &[f64],
    u_next: &[f64],
    tau: f64,
    loads: &[f64],
    dofmap: &DofMap,
) -> Reaction {
    let rows = dofmap.prescribed_dofs();
    let all: Vec<usize> = (0..dofmap.n_dofs()).collect();
    let rate: Vec<f64> = u_next.iter().zip(u_prev).map(|(a, b)| (a - b) / tau).collect();
    let ku = stiffness.block_mul(rows, &all, u_next);
    let au = interface.block_mul(rows, &all, u_next);
    let vr = viscosity.block_mul(rows, &all, &rate);
    let mut total = [0.0; 2];
    let per_dof: Vec<f64> = rows
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let r = ku[k] + au[k] + vr[k] - loads[d];
            total[d % 2] += r;
            r
        })
        .collect();
    Reaction { total, per_dof }
}
