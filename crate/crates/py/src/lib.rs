//! Python bindings: laws, mesh generation, the contact QP and config-driven runs.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use delam_core::constitutive::{dissipation_threshold, mode_mixity_angle, Threshold};
use delam_core::harness::{self, HarnessError};
use delam_core::mesh::{build_benchmark_mesh, GluedFrom, Mesh2D};
use delam_core::qp::{self, QpProblem};
use delam_core::sparse::TripletBuilder;

fn to_py(e: HarnessError) -> PyErr {
    match e {
        HarnessError::Config(_) | HarnessError::Mesh(_) | HarnessError::Setup(_) | HarnessError::Study(_) => {
            PyValueError::new_err(e.to_string())
        }
        HarnessError::Io { .. } | HarnessError::Provenance { .. } => PyIOError::new_err(e.to_string()),
        HarnessError::Run { .. } => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "AdhesiveLaw", frozen)]
struct PyAdhesiveLaw {
    inner: delam_core::constitutive::AdhesiveLaw,
}

#[pymethods]
impl PyAdhesiveLaw {
    #[new]
    #[pyo3(signature = (kappa_n, kappa_t, a_i, lam, eps_reg = 0.0))]
    fn new(kappa_n: f64, kappa_t: f64, a_i: f64, lam: f64, eps_reg: f64) -> PyResult<Self> {
        delam_core::constitutive::AdhesiveLaw::new(kappa_n, kappa_t, a_i, lam, eps_reg)
            .map(|inner| Self { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Activation energy at mixity angle `psi`; `inf` where debonding is forbidden.
    fn threshold(&self, psi: f64) -> f64 {
        match dissipation_threshold(psi, &self.inner) {
            Threshold::Finite(a) => a,
            Threshold::Forbidden => f64::INFINITY,
        }
    }

    #[pyo3(signature = (jump, normal = (0.0, -1.0)))]
    fn mixity_angle(&self, jump: (f64, f64), normal: (f64, f64)) -> f64 {
        mode_mixity_angle([jump.0, jump.1], [normal.0, normal.1], &self.inner)
    }

    #[pyo3(signature = (jump, normal = (0.0, -1.0)))]
    fn quadratic_form(&self, jump: (f64, f64), normal: (f64, f64)) -> f64 {
        self.inner.quadratic_form([jump.0, jump.1], [normal.0, normal.1])
    }
}

#[pyclass(name = "Mesh", frozen)]
struct PyMesh {
    inner: Mesh2D,
}

#[pymethods]
impl PyMesh {
    /// Rectangle on a rigid foundation, glued over `glued_fraction` of its bottom.
    #[staticmethod]
    #[pyo3(signature = (length, height, n_interface, glued_fraction = 1.0, glued_from = "left"))]
    fn benchmark(length: f64, height: f64, n_interface: usize, glued_fraction: f64, glued_from: &str) -> PyResult<Self> {
        let side = match glued_from {
            "left" => GluedFrom::Left,
            "right" => GluedFrom::Right,
            other => return Err(PyValueError::new_err(format!("glued_from must be 'left' or 'right', got {other:?}"))),
        };
        build_benchmark_mesh(length, height, n_interface, glued_fraction, side)
            .map(|inner| Self { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.nodes.len()
    }

    #[getter]
    fn n_triangles(&self) -> usize {
        self.inner.triangles.len()
    }

    #[getter]
    fn n_segments(&self) -> usize {
        self.inner.interface_segments.len()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    #[getter]
    fn nodes(&self) -> Vec<(f64, f64)> {
        self.inner.nodes.iter().map(|p| (p.x, p.y)).collect()
    }

    #[getter]
    fn triangles(&self) -> Vec<[usize; 3]> {
        self.inner.triangles.clone()
    }

    fn segment_midpoints(&self) -> Vec<(f64, f64)> {
        (0..self.inner.interface_segments.len())
            .map(|e| {
                let p = self.inner.segment_midpoint(e);
                (p.x, p.y)
            })
            .collect()
    }

    fn area(&self) -> f64 {
        self.inner.total_area()
    }
}

/// Minimizes `x.H x / 2 + g.x` subject to `B x + c >= 0` (dense inputs).
#[pyfunction]
#[pyo3(signature = (h, g, b, c, tol = qp::DEFAULT_TOL, max_iter = qp::DEFAULT_MAX_ITER))]
fn solve_qp(
    h: Vec<Vec<f64>>,
    g: Vec<f64>,
    b: Vec<Vec<f64>>,
    c: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> PyResult<BTreeMap<String, Py<PyAny>>> {
    let n = g.len();
    if h.len() != n || h.iter().any(|r| r.len() != n) || b.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("H must be n x n and B must have n columns"));
    }
    let mut hb = TripletBuilder::new(n);
    for (i, row) in h.iter().enumerate() {
        for (j, &v) in row.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            hb.add(i, j, v);
        }
    }
    let p = QpProblem {
        h: hb.build(),
        g,
        b: b
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect())
            .collect(),
        c,
    };
    let s = qp::solve_qp(&p, tol, max_iter).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Python::attach(|py| {
        let mut out = BTreeMap::new();
        out.insert("x".to_string(), s.x.into_pyobject(py)?.into_any().unbind());
        out.insert("active_set".to_string(), s.active_set.into_pyobject(py)?.into_any().unbind());
        out.insert("multipliers".to_string(), s.multipliers.into_pyobject(py)?.into_any().unbind());
        out.insert("iterations".to_string(), s.iterations.into_pyobject(py)?.into_any().unbind());
        out.insert("objective".to_string(), s.objective.into_pyobject(py)?.into_any().unbind());
        Ok(out)
    })
}

#[pyclass(name = "Config", frozen)]
struct PyConfig {
    inner: harness::SimulationConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        harness::parse_config(text)
            .map(|inner| Self { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    #[getter]
    fn hash(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    fn defaults_applied(&self) -> Vec<String> {
        self.inner.defaults_applied.clone()
    }

    /// Resolved configuration as JSON.
    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("config serializes")
    }

    /// Same physics at another interface resolution with `tau / h` kept.
    fn at_level(&self, n_interface: usize) -> Self {
        Self {
            inner: self.inner.at_level(n_interface),
        }
    }

    fn mesh(&self) -> PyResult<PyMesh> {
        self.inner
            .mesh()
            .map(|inner| PyMesh { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

/// Summary of a finished run; the full record lives in the output directory.
#[pyclass(name = "RunResult", frozen, get_all)]
struct PyRunResult {
    config_hash: String,
    directory: PathBuf,
    steps: usize,
    end_time: f64,
    full_debond_time: Option<f64>,
    times: Vec<f64>,
    energies: BTreeMap<String, Vec<f64>>,
    forces: Vec<(f64, f64)>,
    mixity: Vec<(usize, f64, f64, f64)>,
    checks: BTreeMap<String, f64>,
}

#[pyfunction]
fn run(py: Python<'_>, config: &PyConfig, out_dir: PathBuf) -> PyResult<PyRunResult> {
    let cfg = config.inner.clone();
    let o = py.detach(move || harness::run_single(&cfg, &out_dir)).map_err(to_py)?;
    let l = &o.ledger;
    let mut energies = BTreeMap::new();
    for (name, v) in [
        ("bulk_elastic", &l.bulk_elastic),
        ("interface_elastic", &l.interface_elastic),
        ("viscous_dissipated", &l.viscous_dissipated),
        ("interface_dissipated", &l.interface_dissipated),
        ("external_work", &l.external_work),
        ("gap", &l.gap),
    ] {
        energies.insert(name.to_string(), v.clone());
    }
    let mut forces = vec![(0.0, 0.0)];
    forces.extend(o.trajectory.reports.iter().map(|r| (r.reaction.total[0], r.reaction.total[1])));
    let c = &o.checks;
    let checks = BTreeMap::from([
        ("min_gap".to_string(), c.min_gap),
        ("max_kkt".to_string(), c.max_kkt),
        ("bond_monotone".to_string(), f64::from(u8::from(c.bond_monotone))),
        ("semistability_failures".to_string(), c.semistability_failures as f64),
        ("worst_energy_residual".to_string(), c.worst_energy_residual),
        ("worst_momentum_residual".to_string(), c.worst_momentum_residual),
    ]);
    Ok(PyRunResult {
        config_hash: o.hash.clone(),
        directory: o.directory.clone(),
        steps: o.trajectory.reports.len(),
        end_time: o.trajectory.end_time(),
        full_debond_time: o.full_debond_time,
        times: l.t.clone(),
        energies,
        forces,
        mixity: o.mixity.entries.iter().map(|e| (e.segment, e.x, e.debond_time, e.ratio)).collect(),
        checks,
    })
}

/// Refinement study; returns the report as JSON text.
#[pyfunction]
#[pyo3(signature = (config, levels, out_dir, threads = 1))]
fn converge(py: Python<'_>, config: &PyConfig, levels: Vec<usize>, out_dir: PathBuf, threads: usize) -> PyResult<String> {
    let cfg = config.inner.clone();
    let report = py
        .detach(move || harness::run_convergence(&cfg, &levels, &out_dir, threads))
        .map_err(to_py)?;
    Ok(serde_json::to_string(&report).expect("report serializes"))
}

#[pymodule]
fn delam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAdhesiveLaw>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(solve_qp, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(converge, m)?)?;
    Ok(())
}
