//! Structured triangulations of the bonded specimen.
//!
//! The benchmark geometry is a rectangle `[0, L] x [0, H]` resting on a rigid
//! foundation along part of its bottom edge, loaded through its right edge.
//! A two-body variant stacks a second deformable rectangle underneath and
//! duplicates the nodes along the shared edge.
//!
//! Node numbering is column-major (y runs fastest) so that the stiffness
//! matrix of a slender bar has a narrow profile.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

/// Relative tolerance used for geometric equality checks.
const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn midpoint(self, other: Point2) -> Point2 {
        Point2::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Foundation {
    /// One deformable body glued to an immovable half-space.
    Rigid,
    /// Two deformable bodies glued along a common edge.
    TwoBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GluedFrom {
    Left,
    Right,
}

/// One straight piece of the glued interface.
///
/// `node_plus` lies on the upper body, `node_minus` on the lower one. In rigid
/// mode both pairs are identical and the lower side has zero displacement.
/// The displacement jump is measured as `u_minus - u_plus`, so with the normal
/// pointing from the upper body into the lower one, `jump . normal >= 0` is
/// the non-penetration condition.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceSegment {
    pub node_plus: [usize; 2],
    pub node_minus: [usize; 2],
    pub normal: [f64; 2],
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh2D {
    pub nodes: Vec<Point2>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    /// Ordered by increasing x of the segment midpoint.
    pub interface_segments: Vec<InterfaceSegment>,
    /// All nodes with prescribed displacement.
    pub dirichlet_nodes: BTreeSet<usize>,
    /// Subset of `dirichlet_nodes` held at zero; the rest follow the loading ramp.
    pub clamped_nodes: BTreeSet<usize>,
    pub neumann_edges: Vec<[usize; 2]>,
    pub foundation: Foundation,
    pub h: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("dimension `{name}` must be positive and finite, got {value}")]
    NonPositiveDimension { name: &'static str, value: f64 },
    #[error("glued fraction must lie in (0, 1], got {0}")]
    GluedFraction(f64),
    #[error("at least one interface segment is required")]
    NoSegments,
    #[error("input mesh is invalid: {0}")]
    Invalid(String),
}

/// A broken mesh invariant, naming the offending entity.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFiniteNode { node: usize },
    NodeIndexOutOfRange { triangle: usize, node: usize },
    NonPositiveArea { triangle: usize, signed_area: f64 },
    NonConformingEdge { a: usize, b: usize },
    HangingNode { node: usize, a: usize, b: usize },
    EmptyDirichlet { body: usize },
    ClampedNotDirichlet { node: usize },
    NormalNotUnit { segment: usize, norm: f64 },
    NonPositiveLength { segment: usize, length: f64 },
    LengthMismatch { segment: usize, stored: f64, actual: f64 },
    NormalNotOrthogonal { segment: usize },
    SegmentNotOnBoundary { segment: usize },
    NodesNotCoincident { segment: usize },
    RigidPairMismatch { segment: usize },
    OverlappingSegments { first: usize, second: usize },
    SegmentsNotOrdered { segment: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NonFiniteNode { node } => write!(f, "node {node}: non-finite coordinates"),
            NodeIndexOutOfRange { triangle, node } => {
                write!(f, "triangle {triangle}: node index {node} out of range")
            }
            NonPositiveArea { triangle, signed_area } => write!(
                f,
                "triangle {triangle}: orientation violation, signed area {signed_area:e}"
            ),
            NonConformingEdge { a, b } => {
                write!(f, "edge ({a},{b}): non-conforming, shared inconsistently")
            }
            HangingNode { node, a, b } => {
                write!(f, "node {node}: hanging on boundary edge ({a},{b})")
            }
            EmptyDirichlet { body } => {
                write!(f, "body {body}: Dirichlet boundary has zero measure")
            }
            ClampedNotDirichlet { node } => {
                write!(f, "node {node}: clamped but not in the Dirichlet set")
            }
            NormalNotUnit { segment, norm } => {
                write!(f, "segment {segment}: normal has length {norm}")
            }
            NonPositiveLength { segment, length } => {
                write!(f, "segment {segment}: non-positive length {length}")
            }
            LengthMismatch { segment, stored, actual } => write!(
                f,
                "segment {segment}: stored length {stored} differs from node distance {actual}"
            ),
            NormalNotOrthogonal { segment } => {
                write!(f, "segment {segment}: normal not orthogonal to the segment")
            }
            SegmentNotOnBoundary { segment } => {
                write!(f, "segment {segment}: not a boundary edge of the triangulation")
            }
            NodesNotCoincident { segment } => {
                write!(f, "segment {segment}: plus/minus nodes are not coincident")
            }
            RigidPairMismatch { segment } => {
                write!(f, "segment {segment}: rigid mode requires identical node pairs")
            }
            OverlappingSegments { first, second } => {
                write!(f, "segments {first} and {second} overlap")
            }
            SegmentsNotOrdered { segment } => {
                write!(f, "segment {segment}: not ordered by increasing x")
            }
        }
    }
}

/// Node id of grid point `(i, j)` in a column-major grid with `ny + 1` rows.
fn grid_id(i: usize, j: usize, ny: usize) -> usize {
    i * (ny + 1) + j
}

fn check_dimension(name: &'static str, value: f64) -> Result<(), MeshError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(MeshError::NonPositiveDimension { name, value })
    }
}

/// Cell counts `(nx, ny, n_glued)` for the benchmark rectangle.
fn grid_counts(
    length: f64,
    height: f64,
    n_interface: usize,
    glued_fraction: f64,
) -> Result<(usize, usize, usize), MeshError> {
    check_dimension("L", length)?;
    check_dimension("H", height)?;
    if !(glued_fraction > 0.0 && glued_fraction <= 1.0) {
        return Err(MeshError::GluedFraction(glued_fraction));
    }
    if n_interface == 0 {
        return Err(MeshError::NoSegments);
    }
    let nx = ((n_interface as f64) / glued_fraction).round().max(1.0) as usize;
    let n_glued = n_interface.min(nx);
    let h = length / nx as f64;
    let ny = (height / h).round().max(1.0) as usize;
    Ok((nx, ny, n_glued))
}

fn push_grid(
    nodes: &mut Vec<Point2>,
    triangles: &mut Vec<[usize; 3]>,
    nx: usize,
    ny: usize,
    length: f64,
    y0: f64,
    height: f64,
) -> usize {
    let base = nodes.len();
    for i in 0..=nx {
        for j in 0..=ny {
            let x = length * i as f64 / nx as f64;
            let y = y0 + height * j as f64 / ny as f64;
            nodes.push(Point2::new(x, y));
        }
    }
    for i in 0..nx {
        for j in 0..ny {
            let n00 = base + grid_id(i, j, ny);
            let n10 = base + grid_id(i + 1, j, ny);
            let n01 = base + grid_id(i, j + 1, ny);
            let n11 = base + grid_id(i + 1, j + 1, ny);
            triangles.push([n00, n10, n11]);
            triangles.push([n00, n11, n01]);
        }
    }
    base
}

fn glued_range(nx: usize, n_glued: usize, glued_from: GluedFrom) -> std::ops::Range<usize> {
    match glued_from {
        GluedFrom::Left => 0..n_glued,
        GluedFrom::Right => nx - n_glued..nx,
    }
}

/// Structured right-triangle mesh of `[0, L] x [0, H]` on a rigid foundation.
///
/// `n_interface` counts the glued bottom segments; the bottom edge is divided
/// into `round(n_interface / glued_fraction)` cells. The right edge is the
/// loaded Dirichlet boundary, including its bottom corner.
pub fn build_benchmark_mesh(
    length: f64,
    height: f64,
    n_interface: usize,
    glued_fraction: f64,
    glued_from: GluedFrom,
) -> Result<Mesh2D, MeshError> {
    let (nx, ny, n_glued) = grid_counts(length, height, n_interface, glued_fraction)?;
    let h = length / nx as f64;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    push_grid(&mut nodes, &mut triangles, nx, ny, length, 0.0, height);

    let interface_segments = glued_range(nx, n_glued, glued_from)
        .map(|i| {
            let pair = [grid_id(i, 0, ny), grid_id(i + 1, 0, ny)];
            InterfaceSegment {
                node_plus: pair,
                node_minus: pair,
                normal: [0.0, -1.0],
                length: nodes[pair[0]].distance(nodes[pair[1]]),
            }
        })
        .collect();

    let dirichlet_nodes: BTreeSet<usize> = (0..=ny).map(|j| grid_id(nx, j, ny)).collect();
    let mut mesh = Mesh2D {
        nodes,
        triangles,
        interface_segments,
        dirichlet_nodes,
        clamped_nodes: BTreeSet::new(),
        neumann_edges: Vec::new(),
        foundation: Foundation::Rigid,
        h,
    };
    mesh.neumann_edges = mesh.derive_neumann_edges();
    Ok(mesh)
}

/// Two stacked rectangles glued along `y = 0`.
///
/// The upper body `[0, L] x [0, H_top]` is loaded through its right edge; the
/// lower body `[0, L] x [-H_bottom, 0]` is clamped along its bottom edge.
pub fn build_two_body_mesh(
    length: f64,
    height_top: f64,
    height_bottom: f64,
    n_interface: usize,
    glued_fraction: f64,
    glued_from: GluedFrom,
) -> Result<Mesh2D, MeshError> {
    check_dimension("H_bottom", height_bottom)?;
    let (nx, ny_top, n_glued) = grid_counts(length, height_top, n_interface, glued_fraction)?;
    let h = length / nx as f64;
    let ny_bot = (height_bottom / h).round().max(1.0) as usize;

    let mut nodes = Vec::new();
    let mut triangles = Vec::new();
    let top = push_grid(&mut nodes, &mut triangles, nx, ny_top, length, 0.0, height_top);
    let bot = push_grid(
        &mut nodes,
        &mut triangles,
        nx,
        ny_bot,
        length,
        -height_bottom,
        height_bottom,
    );

    let interface_segments = glued_range(nx, n_glued, glued_from)
        .map(|i| {
            let plus = [top + grid_id(i, 0, ny_top), top + grid_id(i + 1, 0, ny_top)];
            let minus = [
                bot + grid_id(i, ny_bot, ny_bot),
                bot + grid_id(i + 1, ny_bot, ny_bot),
            ];
            InterfaceSegment {
                node_plus: plus,
                node_minus: minus,
                normal: [0.0, -1.0],
                length: nodes[plus[0]].distance(nodes[plus[1]]),
            }
        })
        .collect();

    let loaded: BTreeSet<usize> = (0..=ny_top).map(|j| top + grid_id(nx, j, ny_top)).collect();
    let clamped: BTreeSet<usize> = (0..=nx).map(|i| bot + grid_id(i, 0, ny_bot)).collect();
    let mut mesh = Mesh2D {
        nodes,
        triangles,
        interface_segments,
        dirichlet_nodes: loaded.union(&clamped).copied().collect(),
        clamped_nodes: clamped,
        neumann_edges: Vec::new(),
        foundation: Foundation::TwoBody,
        h,
    };
    mesh.neumann_edges = mesh.derive_neumann_edges();
    Ok(mesh)
}

/// Split every triangle into four similar ones through its edge midpoints.
pub fn refine_uniform(mesh: &Mesh2D) -> Result<Mesh2D, MeshError> {
    let violations = mesh.validate();
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(MeshError::Invalid(text.join("; ")));
    }

    let mut nodes = mesh.nodes.clone();
    let mut midpoints: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<Point2>| -> usize {
        let key = (a.min(b), a.max(b));
        *midpoints.entry(key).or_insert_with(|| {
            nodes.push(nodes[a].midpoint(nodes[b]));
            nodes.len() - 1
        })
    };

    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for &[a, b, c] in &mesh.triangles {
        let ab = midpoint(a, b, &mut nodes);
        let bc = midpoint(b, c, &mut nodes);
        let ca = midpoint(c, a, &mut nodes);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }

    let mut interface_segments = Vec::with_capacity(2 * mesh.interface_segments.len());
    for seg in &mesh.interface_segments {
        let mp = midpoint(seg.node_plus[0], seg.node_plus[1], &mut nodes);
        let mm = if mesh.foundation == Foundation::Rigid {
            mp
        } else {
            midpoint(seg.node_minus[0], seg.node_minus[1], &mut nodes)
        };
        for (plus, minus) in [
            ([seg.node_plus[0], mp], [seg.node_minus[0], mm]),
            ([mp, seg.node_plus[1]], [mm, seg.node_minus[1]]),
        ] {
            interface_segments.push(InterfaceSegment {
                node_plus: plus,
                node_minus: minus,
                normal: seg.normal,
                length: nodes[plus[0]].distance(nodes[plus[1]]),
            });
        }
    }
    interface_segments.sort_by(|s, t| {
        let xs = nodes[s.node_plus[0]].x + nodes[s.node_plus[1]].x;
        let xt = nodes[t.node_plus[0]].x + nodes[t.node_plus[1]].x;
        xs.total_cmp(&xt)
    });

    // Tags propagate to midpoints of boundary edges whose endpoints both carry them.
    let boundary = mesh.boundary_edges();
    let mut dirichlet_nodes = mesh.dirichlet_nodes.clone();
    let mut clamped_nodes = mesh.clamped_nodes.clone();
    for &(a, b) in &boundary {
        let key = (a.min(b), a.max(b));
        let Some(&m) = midpoints.get(&key) else {
            continue;
        };
        if mesh.dirichlet_nodes.contains(&a) && mesh.dirichlet_nodes.contains(&b) {
            dirichlet_nodes.insert(m);
        }
        if mesh.clamped_nodes.contains(&a) && mesh.clamped_nodes.contains(&b) {
            clamped_nodes.insert(m);
        }
    }

    let mut refined = Mesh2D {
        nodes,
        triangles,
        interface_segments,
        dirichlet_nodes,
        clamped_nodes,
        neumann_edges: Vec::new(),
        foundation: mesh.foundation,
        h: 0.5 * mesh.h,
    };
    refined.neumann_edges = refined.derive_neumann_edges();
    Ok(refined)
}

impl Mesh2D {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn signed_area(&self, triangle: usize) -> f64 {
        let [a, b, c] = self.triangles[triangle];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb.x - pa.x) * (pc.y - pa.y) - (pc.x - pa.x) * (pb.y - pa.y))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    pub fn interface_length(&self) -> f64 {
        self.interface_segments.iter().map(|s| s.length).sum()
    }

    pub fn segment_midpoint(&self, segment: usize) -> Point2 {
        let [a, b] = self.interface_segments[segment].node_plus;
        self.nodes[a].midpoint(self.nodes[b])
    }

    /// Directed boundary edges, oriented counter-clockwise around each body.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *count.entry((a, b)).or_default() += 1;
            }
        }
        count
            .keys()
            .filter(|&&(a, b)| !count.contains_key(&(b, a)))
            .copied()
            .collect()
    }

    fn derive_neumann_edges(&self) -> Vec<[usize; 2]> {
        let glued: BTreeSet<(usize, usize)> = self
            .interface_segments
            .iter()
            .flat_map(|s| [s.node_plus, s.node_minus])
            .map(|[a, b]| (a.min(b), a.max(b)))
            .collect();
        self.boundary_edges()
            .into_iter()
            .filter(|&(a, b)| {
                !(self.dirichlet_nodes.contains(&a) && self.dirichlet_nodes.contains(&b))
                    && !glued.contains(&(a.min(b), a.max(b)))
            })
            .map(|(a, b)| [a, b])
            .collect()
    }

    /// Connected components of the triangulation, as a body id per node.
    /// Nodes not used by any triangle get `usize::MAX`.
    pub fn body_of_nodes(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let mut used = vec![false; n];
        for tri in &self.triangles {
            if tri.iter().any(|&v| v >= n) {
                continue;
            }
            for &v in tri {
                used[v] = true;
            }
            for k in 1..3 {
                let (ra, rb) = (find(&mut parent, tri[0]), find(&mut parent, tri[k]));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let mut labels: BTreeMap<usize, usize> = BTreeMap::new();
        (0..n)
            .map(|i| {
                if !used[i] {
                    return usize::MAX;
                }
                let root = find(&mut parent, i);
                let next = labels.len();
                *labels.entry(root).or_insert(next)
            })
            .collect()
    }

    /// Every broken invariant; empty iff the mesh is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.nodes.len();
        for (i, p) in self.nodes.iter().enumerate() {
            if !p.is_finite() {
                out.push(Violation::NonFiniteNode { node: i });
            }
        }

        let scale = self.h.max(f64::MIN_POSITIVE);
        let mut directed: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&v| v >= n) {
                out.push(Violation::NodeIndexOutOfRange { triangle: t, node: bad });
                continue;
            }
            let area = self.signed_area(t);
            if !(area > GEOM_TOL * scale * scale) {
                out.push(Violation::NonPositiveArea { triangle: t, signed_area: area });
            }
            for k in 0..3 {
                *directed.entry((tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        // A conforming, consistently oriented mesh uses each directed edge once.
        for (&(a, b), &count) in &directed {
            if count > 1 {
                out.push(Violation::NonConformingEdge { a, b });
            }
        }
        if out.iter().any(|v| matches!(v, Violation::NodeIndexOutOfRange { .. })) {
            return out;
        }

        let boundary = self.boundary_edges();
        let boundary_set: BTreeSet<(usize, usize)> =
            boundary.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        for &(a, b) in &boundary {
            let (pa, pb) = (self.nodes[a], self.nodes[b]);
            let len = pa.distance(pb);
            for (v, p) in self.nodes.iter().enumerate() {
                if v == a || v == b {
                    continue;
                }
                let cross = (pb.x - pa.x) * (p.y - pa.y) - (pb.y - pa.y) * (p.x - pa.x);
                let along = ((p.x - pa.x) * (pb.x - pa.x) + (p.y - pa.y) * (pb.y - pa.y)) / len;
                if cross.abs() <= GEOM_TOL * len * len
                    && along > GEOM_TOL * len
                    && along < len * (1.0 - GEOM_TOL)
                {
                    out.push(Violation::HangingNode { node: v, a, b });
                }
            }
        }

        let bodies = self.body_of_nodes();
        let n_bodies = bodies.iter().filter(|&&b| b != usize::MAX).max().map_or(0, |m| m + 1);
        for body in 0..n_bodies {
            let has = self
                .dirichlet_nodes
                .iter()
                .filter(|&&v| v < n && bodies[v] == body)
                .count();
            // Positive boundary measure needs at least two nodes on one body.
            if has < 2 {
                out.push(Violation::EmptyDirichlet { body });
            }
        }
        if n_bodies == 0 && self.dirichlet_nodes.is_empty() {
            out.push(Violation::EmptyDirichlet { body: 0 });
        }
        for &v in &self.clamped_nodes {
            if !self.dirichlet_nodes.contains(&v) {
                out.push(Violation::ClampedNotDirichlet { node: v });
            }
        }

        for (s, seg) in self.interface_segments.iter().enumerate() {
            if seg.node_plus.iter().chain(&seg.node_minus).any(|&v| v >= n) {
                out.push(Violation::SegmentNotOnBoundary { segment: s });
                continue;
            }
            let norm = seg.normal[0].hypot(seg.normal[1]);
            if (norm - 1.0).abs() > 1e-14 {
                out.push(Violation::NormalNotUnit { segment: s, norm });
            }
            if !(seg.length > 0.0) {
                out.push(Violation::NonPositiveLength { segment: s, length: seg.length });
            }
            let (pa, pb) = (self.nodes[seg.node_plus[0]], self.nodes[seg.node_plus[1]]);
            let actual = pa.distance(pb);
            if (actual - seg.length).abs() > GEOM_TOL * actual.max(seg.length) {
                out.push(Violation::LengthMismatch {
                    segment: s,
                    stored: seg.length,
                    actual,
                });
            }
            if actual > 0.0 {
                let dot = ((pb.x - pa.x) * seg.normal[0] + (pb.y - pa.y) * seg.normal[1]) / actual;
                if dot.abs() > 1e-12 {
                    out.push(Violation::NormalNotOrthogonal { segment: s });
                }
            }
            let on_boundary = |[a, b]: [usize; 2]| boundary_set.contains(&(a.min(b), a.max(b)));
            if !on_boundary(seg.node_plus) || !on_boundary(seg.node_minus) {
                out.push(Violation::SegmentNotOnBoundary { segment: s });
            }
            match self.foundation {
                Foundation::Rigid => {
                    if seg.node_plus != seg.node_minus {
                        out.push(Violation::RigidPairMismatch { segment: s });
                    }
                }
                Foundation::TwoBody => {
                    let coincident = (0..2).all(|k| {
                        self.nodes[seg.node_plus[k]].distance(self.nodes[seg.node_minus[k]])
                            <= GEOM_TOL * scale
                    });
                    if !coincident || seg.node_plus == seg.node_minus {
                        out.push(Violation::NodesNotCoincident { segment: s });
                    }
                }
            }
        }

        let mids: Vec<f64> = (0..self.interface_segments.len())
            .filter_map(|s| {
                let seg = &self.interface_segments[s];
                if seg.node_plus.iter().any(|&v| v >= n) {
                    None
                } else {
                    Some(self.segment_midpoint(s).x)
                }
            })
            .collect();
        for s in 1..mids.len() {
            if mids[s] < mids[s - 1] {
                out.push(Violation::SegmentsNotOrdered { segment: s });
            }
        }
        for i in 0..self.interface_segments.len() {
            for j in i + 1..self.interface_segments.len() {
                if self.segments_overlap(i, j) {
                    out.push(Violation::OverlappingSegments { first: i, second: j });
                }
            }
        }
        out
    }

    fn segments_overlap(&self, i: usize, j: usize) -> bool {
        let (si, sj) = (&self.interface_segments[i], &self.interface_segments[j]);
        let n = self.nodes.len();
        if si.node_plus.iter().chain(&sj.node_plus).any(|&v| v >= n) {
            return false;
        }
        let (a, b) = (self.nodes[si.node_plus[0]], self.nodes[si.node_plus[1]]);
        let len = a.distance(b);
        if len == 0.0 {
            return false;
        }
        let dir = ((b.x - a.x) / len, (b.y - a.y) / len);
        let project = |p: Point2| ((p.x - a.x) * dir.0 + (p.y - a.y) * dir.1, (p.y - a.y) * dir.0 - (p.x - a.x) * dir.1);
        let (c, d) = (self.nodes[sj.node_plus[0]], self.nodes[sj.node_plus[1]]);
        let (pc, oc) = project(c);
        let (pd, od) = project(d);
        let tol = GEOM_TOL * len;
        if oc.abs() > tol || od.abs() > tol {
            return false;
        }
        let (lo, hi) = (pc.min(pd), pc.max(pd));
        hi.min(len) - lo.max(0.0) > tol
    }

    /// Sectioned CSV dump: `nodes`, `triangles`, `interface`, `tags`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# foundation={:?} h={:e}", self.foundation, self.h)?;
        writeln!(w, "# section nodes")?;
        writeln!(w, "id,x,y")?;
        for (i, p) in self.nodes.iter().enumerate() {
            writeln!(w, "{i},{:e},{:e}", p.x, p.y)?;
        }
        writeln!(w, "# section triangles")?;
        writeln!(w, "id,n0,n1,n2")?;
        for (i, t) in self.triangles.iter().enumerate() {
            writeln!(w, "{i},{},{},{}", t[0], t[1], t[2])?;
        }
        writeln!(w, "# section interface")?;
        writeln!(w, "id,nA,nB,length")?;
        for (i, s) in self.interface_segments.iter().enumerate() {
            writeln!(w, "{i},{},{},{:e}", s.node_plus[0], s.node_plus[1], s.length)?;
        }
        writeln!(w, "# section tags")?;
        writeln!(w, "tag,a,b")?;
        for &v in &self.dirichlet_nodes {
            let tag = if self.clamped_nodes.contains(&v) { "clamped" } else { "dirichlet" };
            writeln!(w, "{tag},{v},")?;
        }
        for e in &self.neumann_edges {
            writeln!(w, "neumann,{},{}", e[0], e[1])?;
        }
        if self.foundation == Foundation::TwoBody {
            for s in &self.interface_segments {
                writeln!(w, "interface_minus,{},{}", s.node_minus[0], s.node_minus[1])?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benchmark(n: usize) -> Mesh2D {
        build_benchmark_mesh(0.25, 0.025, n, 0.9, GluedFrom::Left).unwrap()
    }

    #[test]
    fn fine_benchmark_dimensions() {
        let mesh = benchmark(81);
        assert_eq!(mesh.interface_segments.len(), 81);
        assert!((mesh.h - 2.7777e-3).abs() < 1e-6);
        assert!((mesh.interface_length() - 0.225).abs() < 1e-12);
        assert!(mesh.validate().is_empty());
        assert_eq!(mesh.foundation, Foundation::Rigid);
        for seg in &mesh.interface_segments {
            assert_eq!(seg.normal, [0.0, -1.0]);
            assert!(mesh.nodes[seg.node_plus[0]].y == 0.0);
        }
        // glued from the left: the free strip sits next to the loaded edge
        let last = mesh.segment_midpoint(80);
        assert!(last.x < 0.225);
    }

    #[test]
    fn coarse_benchmark_h_and_length() {
        let mesh = benchmark(27);
        assert!((mesh.h - 8.3333e-3).abs() < 1e-6);
        assert!((mesh.interface_length() - 0.225).abs() < 1e-12);
    }

    #[test]
    fn minimal_strip() {
        let mesh = build_benchmark_mesh(1.0, 1.0, 1, 1.0, GluedFrom::Left).unwrap();
        assert_eq!(mesh.triangles.len(), 2);
        assert_eq!(mesh.interface_segments.len(), 1);
        assert!((mesh.interface_segments[0].length - 1.0).abs() < 1e-15);
        assert!(mesh.validate().is_empty());
    }

    #[test]
    fn right_glued_variant() {
        let mesh = build_benchmark_mesh(0.25, 0.025, 27, 0.9, GluedFrom::Right).unwrap();
        assert!(mesh.validate().is_empty());
        assert!(mesh.segment_midpoint(0).x > 0.025);
    }

    #[test]
    fn bad_dimensions_rejected() {
        assert!(matches!(
            build_benchmark_mesh(0.0, 1.0, 4, 0.5, GluedFrom::Left),
            Err(MeshError::NonPositiveDimension { name: "L", .. })
        ));
        assert!(matches!(
            build_benchmark_mesh(1.0, -1.0, 4, 0.5, GluedFrom::Left),
            Err(MeshError::NonPositiveDimension { name: "H", .. })
        ));
        assert_eq!(
            build_benchmark_mesh(1.0, 1.0, 4, 1.5, GluedFrom::Left).unwrap_err(),
            MeshError::GluedFraction(1.5)
        );
        assert!(build_benchmark_mesh(1.0, 1.0, 4, 0.0, GluedFrom::Left).is_err());
    }

    #[test]
    fn refine_doubles_segments_and_halves_h() {
        let coarse = benchmark(27);
        let medium = refine_uniform(&coarse).unwrap();
        assert_eq!(medium.interface_segments.len(), 54);
        assert!((medium.h - coarse.h / 2.0).abs() < 1e-15);
        assert!(medium.validate().is_empty());
        let fine = refine_uniform(&medium).unwrap();
        assert!((fine.h - coarse.h / 4.0).abs() < 1e-15);
        let rel = (fine.total_area() - coarse.total_area()).abs() / coarse.total_area();
        assert!(rel < 1e-12);
        let rel_len = (fine.interface_length() - coarse.interface_length()).abs() / 0.225;
        assert!(rel_len < 1e-12);
        assert_eq!(fine.dirichlet_nodes.len(), 4 * (coarse.dirichlet_nodes.len() - 1) + 1);
    }

    #[test]
    fn refined_matches_generated_topology() {
        let refined = refine_uniform(&benchmark(27)).unwrap();
        let direct = benchmark(54);
        assert_eq!(refined.nodes.len(), direct.nodes.len());
        assert_eq!(refined.triangles.len(), direct.triangles.len());
        assert_eq!(refined.neumann_edges.len(), direct.neumann_edges.len());
    }

    #[test]
    fn clockwise_triangle_reported() {
        let mut mesh = benchmark(27);
        mesh.triangles[5].swap(1, 2);
        let v = mesh.validate();
        assert!(v.contains(&Violation::NonPositiveArea {
            triangle: 5,
            signed_area: mesh.signed_area(5)
        }));
    }

    #[test]
    fn empty_dirichlet_reported() {
        let mut mesh = benchmark(27);
        mesh.dirichlet_nodes.clear();
        assert_eq!(mesh.validate(), vec![Violation::EmptyDirichlet { body: 0 }]);
    }

    #[test]
    fn two_body_mesh_is_valid() {
        let mesh = build_two_body_mesh(0.25, 0.025, 0.025, 27, 0.9, GluedFrom::Left).unwrap();
        assert!(mesh.validate().is_empty(), "{:?}", mesh.validate());
        let bodies = mesh.body_of_nodes();
        assert_eq!(bodies.iter().max(), Some(&1));
        let refined = refine_uniform(&mesh).unwrap();
        assert!(refined.validate().is_empty());
        assert_eq!(refined.interface_segments.len(), 54);
    }

    #[test]
    fn two_body_without_clamp_reports_lower_body() {
        let mut mesh = build_two_body_mesh(1.0, 0.2, 0.2, 5, 1.0, GluedFrom::Left).unwrap();
        for v in mesh.clamped_nodes.clone() {
            mesh.dirichlet_nodes.remove(&v);
        }
        mesh.clamped_nodes.clear();
        assert_eq!(mesh.validate(), vec![Violation::EmptyDirichlet { body: 1 }]);
    }

    #[test]
    fn overlapping_segments_reported() {
        let mut mesh = benchmark(27);
        let dup = mesh.interface_segments[3].clone();
        mesh.interface_segments.insert(4, dup);
        assert!(mesh
            .validate()
            .iter()
            .any(|v| matches!(v, Violation::OverlappingSegments { first: 3, second: 4 })));
    }

    #[test]
    fn csv_export_has_sections() {
        let mesh = build_benchmark_mesh(1.0, 1.0, 1, 1.0, GluedFrom::Left).unwrap();
        let mut buf = Vec::new();
        mesh.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for section in ["nodes", "triangles", "interface", "tags"] {
            assert!(text.contains(&format!("# section {section}")));
        }
        assert!(text.contains("0,0,2,1e0"));
    }
}
