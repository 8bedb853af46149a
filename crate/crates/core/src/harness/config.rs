//! JSON run configuration.
//!
//! Parsing is two-pass: a typed pass with unknown-key rejection and path
//! reporting for malformed values, then a resolution pass that gathers every
//! missing required key, applies defaults and checks invariants.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assembly::DirichletRamp;
use crate::constitutive::{AdhesiveLaw, IsotropicElasticity};
use super::HarnessError;
use crate::mesh::{build_benchmark_mesh, build_two_body_mesh, Foundation, GluedFrom, Mesh2D, MeshError};
use crate::qp::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::stepper::{Operators, RunParams, StepError};

#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    /// Malformed JSON, unknown key or wrong type.
    Parse(FieldError),
    Missing(Vec<String>),
    Invalid(Vec<FieldError>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse(e) => write!(f, "parse error at {e}"),
            ConfigError::Missing(keys) => write!(f, "missing required keys: {}", keys.join(", ")),
            ConfigError::Invalid(errs) => {
                let parts: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
                write!(f, "invalid values: {}", parts.join("; "))
            }
        }
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    /// Offending field paths.
    pub fn paths(&self) -> Vec<String> {
        match self {
            ConfigError::Parse(e) => vec![e.path.clone()],
            ConfigError::Missing(keys) => keys.clone(),
            ConfigError::Invalid(errs) => errs.iter().map(|e| e.path.clone()).collect(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    geometry: Option<RawGeometry>,
    material: Option<RawMaterial>,
    adhesive: Option<RawAdhesive>,
    loading: Option<RawLoading>,
    time: Option<RawTime>,
    solver: Option<RawSolver>,
    outputs: Option<RawOutputs>,
    verification: Option<RawVerification>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    #[serde(rename = "L")]
    length: Option<f64>,
    #[serde(rename = "H")]
    height: Option<f64>,
    #[serde(rename = "H_bottom")]
    height_bottom: Option<f64>,
    glued_fraction: Option<f64>,
    glued_from: Option<GluedFrom>,
    n_interface: Option<usize>,
    foundation: Option<Foundation>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    #[serde(rename = "E")]
    e: Option<f64>,
    nu: Option<f64>,
    chi: Option<f64>,
    chi_sweep: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAdhesive {
    kappa_n: Option<f64>,
    kappa_t: Option<f64>,
    #[serde(rename = "a_I")]
    a_i: Option<f64>,
    lambda: Option<f64>,
    eps_reg: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoading {
    speed: Option<f64>,
    direction: Option<[f64; 2]>,
    normalize_direction: Option<bool>,
    body_force: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    #[serde(rename = "T")]
    t_end: Option<f64>,
    tau: Option<f64>,
    stop_after_full_debond: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    qp_tol: Option<f64>,
    max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutputs {
    directory: Option<String>,
    snapshot_times: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerification {
    seed: Option<u64>,
    test_fields: Option<usize>,
    check_invariants: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "H")]
    pub height: f64,
    #[serde(rename = "H_bottom")]
    pub height_bottom: f64,
    pub glued_fraction: f64,
    pub glued_from: GluedFrom,
    pub n_interface: usize,
    pub foundation: Foundation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    #[serde(rename = "E")]
    pub e: f64,
    pub nu: f64,
    pub chi: f64,
    pub chi_sweep: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adhesive {
    pub kappa_n: f64,
    pub kappa_t: f64,
    #[serde(rename = "a_I")]
    pub a_i: f64,
    pub lambda: f64,
    pub eps_reg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loading {
    pub speed: f64,
    pub direction: [f64; 2],
    pub normalize_direction: bool,
    pub body_force: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub t_end: f64,
    pub tau: f64,
    pub stop_after_full_debond: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub qp_tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub directory: Option<String>,
    pub snapshot_times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub seed: u64,
    pub test_fields: usize,
    pub check_invariants: bool,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub geometry: Geometry,
    pub material: Material,
    pub adhesive: Adhesive,
    pub loading: Loading,
    pub time: TimeConfig,
    pub solver: SolverConfig,
    pub outputs: OutputConfig,
    pub verification: Verification,
    /// Paths of keys filled in by defaults.
    #[serde(skip)]
    pub defaults_applied: Vec<String>,
}

struct Resolver {
    missing: Vec<String>,
    invalid: Vec<FieldError>,
    defaults: Vec<String>,
}

impl Resolver {
    fn required<T>(&mut self, value: Option<T>, path: &str) -> Option<T> {
        if value.is_none() {
            self.missing.push(path.to_string());
        }
        value
    }

    fn default<T>(&mut self, value: Option<T>, path: &str, fallback: T) -> T {
        value.unwrap_or_else(|| {
            self.defaults.push(path.to_string());
            fallback
        })
    }

    fn check(&mut self, ok: bool, path: &str, message: impl Into<String>) {
        if !ok {
            self.invalid.push(FieldError {
                path: path.to_string(),
                message: message.into(),
            });
        }
    }
}

fn finite_positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

pub fn parse_config(text: &str) -> Result<SimulationConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Parse(FieldError {
            path: if path.is_empty() || path == "." { "<document>".into() } else { path },
            message: e.into_inner().to_string(),
        })
    })?;
    resolve(raw)
}

fn resolve(raw: RawConfig) -> Result<SimulationConfig, ConfigError> {
    let mut r = Resolver {
        missing: Vec::new(),
        invalid: Vec::new(),
        defaults: Vec::new(),
    };
    let g = raw.geometry.unwrap_or_default();
    let m = raw.material.unwrap_or_default();
    let a = raw.adhesive.unwrap_or_default();
    let l = raw.loading.unwrap_or_default();
    let t = raw.time.unwrap_or_default();
    let s = raw.solver.unwrap_or_default();
    let o = raw.outputs.unwrap_or_default();
    let v = raw.verification.unwrap_or_default();

    let length = r.required(g.length, "geometry.L");
    let glued_fraction = r.required(g.glued_fraction, "geometry.glued_fraction");
    let n_interface = r.required(g.n_interface, "geometry.n_interface");
    let e = r.required(m.e, "material.E");
    let nu = r.required(m.nu, "material.nu");
    let chi = r.required(m.chi, "material.chi");
    let kappa_n = r.required(a.kappa_n, "adhesive.kappa_n");
    let kappa_t = r.required(a.kappa_t, "adhesive.kappa_t");
    let a_i = r.required(a.a_i, "adhesive.a_I");
    let lambda = r.required(a.lambda, "adhesive.lambda");
    let speed = r.required(l.speed, "loading.speed");
    let direction = r.required(l.direction, "loading.direction");
    let t_end = r.required(t.t_end, "time.T");
    let tau = r.required(t.tau, "time.tau");

    let (
        Some(length),
        Some(glued_fraction),
        Some(n_interface),
        Some(e),
        Some(nu),
        Some(chi),
        Some(kappa_n),
        Some(kappa_t),
        Some(a_i),
        Some(lambda),
        Some(speed),
        Some(direction),
        Some(t_end),
        Some(tau),
    ) = (
        length,
        glued_fraction,
        n_interface,
        e,
        nu,
        chi,
        kappa_n,
        kappa_t,
        a_i,
        lambda,
        speed,
        direction,
        t_end,
        tau,
    )
    else {
        return Err(ConfigError::Missing(r.missing));
    };

    let height = r.default(g.height, "geometry.H", length / 10.0);
    let height_bottom = r.default(g.height_bottom, "geometry.H_bottom", height);
    let glued_from = r.default(g.glued_from, "geometry.glued_from", GluedFrom::Left);
    let foundation = r.default(g.foundation, "geometry.foundation", Foundation::Rigid);
    let chi_sweep = r.default(m.chi_sweep, "material.chi_sweep", Vec::new());
    let eps_reg = r.default(a.eps_reg, "adhesive.eps_reg", 0.0);
    let normalize_direction = r.default(l.normalize_direction, "loading.normalize_direction", true);
    let body_force = r.default(l.body_force, "loading.body_force", [0.0, 0.0]);
    if t.stop_after_full_debond.is_none() {
        r.defaults.push("time.stop_after_full_debond".into());
    }
    let qp_tol = r.default(s.qp_tol, "solver.qp_tol", DEFAULT_TOL);
    let max_iter = r.default(s.max_iter, "solver.max_iter", DEFAULT_MAX_ITER);
    if o.directory.is_none() {
        r.defaults.push("outputs.directory".into());
    }
    if o.snapshot_times.is_none() {
        r.defaults.push("outputs.snapshot_times".into());
    }
    let seed = r.default(v.seed, "verification.seed", 0);
    let test_fields = r.default(v.test_fields, "verification.test_fields", crate::energetics::DEFAULT_TEST_FIELDS);
    let check_invariants = r.default(v.check_invariants, "verification.check_invariants", true);

    r.check(finite_positive(length), "geometry.L", format!("{length} must be positive"));
    r.check(finite_positive(height), "geometry.H", format!("{height} must be positive"));
    r.check(finite_positive(height_bottom), "geometry.H_bottom", format!("{height_bottom} must be positive"));
    r.check(
        glued_fraction > 0.0 && glued_fraction <= 1.0,
        "geometry.glued_fraction",
        format!("{glued_fraction} outside (0, 1]"),
    );
    r.check(n_interface >= 1, "geometry.n_interface", "must be at least 1");
    r.check(finite_positive(e), "material.E", format!("{e} must be positive"));
    r.check(nu > -1.0 && nu < 0.5, "material.nu", format!("{nu} outside (-1, 0.5)"));
    r.check(chi >= 0.0 && chi.is_finite(), "material.chi", format!("{chi} must be nonnegative"));
    for (i, c) in chi_sweep.iter().enumerate() {
        r.check(*c >= 0.0 && c.is_finite(), &format!("material.chi_sweep[{i}]"), format!("{c} must be nonnegative"));
    }
    r.check(finite_positive(kappa_n), "adhesive.kappa_n", format!("{kappa_n} must be positive"));
    r.check(kappa_t >= 0.0 && kappa_t.is_finite(), "adhesive.kappa_t", format!("{kappa_t} must be nonnegative"));
    r.check(finite_positive(a_i), "adhesive.a_I", format!("{a_i} must be positive"));
    r.check((0.0..1.0).contains(&lambda), "adhesive.lambda", format!("{lambda} outside [0, 1)"));
    r.check(eps_reg >= 0.0 && eps_reg.is_finite(), "adhesive.eps_reg", format!("{eps_reg} must be nonnegative"));
    r.check(speed >= 0.0 && speed.is_finite(), "loading.speed", format!("{speed} must be nonnegative"));
    r.check(direction.iter().all(|d| d.is_finite()), "loading.direction", "entries must be finite");
    r.check(
        !normalize_direction || direction != [0.0, 0.0],
        "loading.direction",
        "cannot normalize a zero direction",
    );
    r.check(body_force.iter().all(|d| d.is_finite()), "loading.body_force", "entries must be finite");
    r.check(finite_positive(tau), "time.tau", format!("{tau} must be positive"));
    r.check(t_end >= 0.0 && t_end.is_finite(), "time.T", format!("{t_end} must be nonnegative"));
    if finite_positive(tau) && t_end >= 0.0 && t_end.is_finite() {
        let ratio = t_end / tau;
        r.check(
            (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0),
            "time.T",
            format!("{t_end} is not a multiple of tau = {tau}"),
        );
    }
    if let Some(margin) = t.stop_after_full_debond {
        r.check(
            margin >= 0.0 && margin.is_finite(),
            "time.stop_after_full_debond",
            format!("{margin} must be nonnegative"),
        );
    }
    r.check(finite_positive(qp_tol), "solver.qp_tol", format!("{qp_tol} must be positive"));
    r.check(max_iter >= 1, "solver.max_iter", "must be at least 1");
    if let Some(times) = &o.snapshot_times {
        for (i, st) in times.iter().enumerate() {
            r.check(
                *st >= 0.0 && *st <= t_end,
                &format!("outputs.snapshot_times[{i}]"),
                format!("{st} outside [0, T]"),
            );
        }
    }
    r.check(test_fields >= 1, "verification.test_fields", "must be at least 1");

    if !r.invalid.is_empty() {
        return Err(ConfigError::Invalid(r.invalid));
    }
    Ok(SimulationConfig {
        geometry: Geometry {
            length,
            height,
            height_bottom,
            glued_fraction,
            glued_from,
            n_interface,
            foundation,
        },
        material: Material { e, nu, chi, chi_sweep },
        adhesive: Adhesive {
            kappa_n,
            kappa_t,
            a_i,
            lambda,
            eps_reg,
        },
        loading: Loading {
            speed,
            direction,
            normalize_direction,
            body_force,
        },
        time: TimeConfig {
            t_end,
            tau,
            stop_after_full_debond: t.stop_after_full_debond,
        },
        solver: SolverConfig { qp_tol, max_iter },
        outputs: OutputConfig {
            directory: o.directory,
            snapshot_times: o.snapshot_times,
        },
        verification: Verification {
            seed,
            test_fields,
            check_invariants,
        },
        defaults_applied: r.defaults,
    })
}

impl SimulationConfig {
    /// SHA-256 of the resolved configuration without the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.outputs.directory = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn law(&self) -> AdhesiveLaw {
        let a = &self.adhesive;
        AdhesiveLaw {
            kappa_n: a.kappa_n,
            kappa_t: a.kappa_t,
            a_i: a.a_i,
            lambda: a.lambda,
            eps_reg: a.eps_reg,
        }
    }

    pub fn mesh(&self) -> Result<Mesh2D, MeshError> {
        let g = &self.geometry;
        match g.foundation {
            Foundation::Rigid => build_benchmark_mesh(g.length, g.height, g.n_interface, g.glued_fraction, g.glued_from),
            Foundation::TwoBody => build_two_body_mesh(
                g.length,
                g.height,
                g.height_bottom,
                g.n_interface,
                g.glued_fraction,
                g.glued_from,
            ),
        }
    }

    pub fn operators(&self) -> Result<Operators, HarnessError> {
        let ramp = DirichletRamp::new(self.loading.speed, self.loading.direction, self.loading.normalize_direction);
        let material = IsotropicElasticity::new(self.material.e, self.material.nu).map_err(StepError::from)?;
        let ops = Operators::new(self.mesh()?, material, self.material.chi, self.law(), ramp)?;
        Ok(ops.with_loads(self.loading.body_force, [0.0, 0.0]))
    }

    pub fn run_params(&self) -> RunParams {
        RunParams {
            tau: self.time.tau,
            t_end: self.time.t_end,
            stop_after_full_debond: self.time.stop_after_full_debond,
            qp_tol: self.solver.qp_tol,
            max_iter: self.solver.max_iter,
            check_invariants: self.verification.check_invariants,
        }
    }

    /// The same physics at another interface resolution, with `tau / h` kept.
    pub fn at_level(&self, n_interface: usize) -> SimulationConfig {
        let mut c = self.clone();
        c.time.tau = self.time.tau * self.geometry.n_interface as f64 / n_interface as f64;
        c.geometry.n_interface = n_interface;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const BENCHMARK: &str = include_str!("../../../../configs/benchmark.json");

    #[test]
    fn benchmark_file_parses_to_reference_values() {
        let c = parse_config(BENCHMARK).unwrap();
        assert_eq!(c.material.e, 70e9);
        assert_eq!(c.material.nu, 0.35);
        assert_eq!(c.material.chi, 1e-3);
        assert_eq!(c.adhesive.kappa_n, 150e9);
        assert_eq!(c.adhesive.kappa_t, 75e9);
        assert_eq!(c.adhesive.a_i, 187.5);
        assert_eq!(c.adhesive.lambda, 0.333);
        assert_eq!(c.loading.speed, 3e-4);
        assert_eq!(c.geometry.n_interface, 81);
        assert!((c.time.tau - 1.0 / 450.0).abs() < 1e-15);
        assert!(c.run_params().n_steps().is_ok());
    }

    #[test]
    fn empty_document_lists_missing_keys() {
        let err = parse_config("{}").unwrap_err();
        let ConfigError::Missing(keys) = err else { panic!("{err:?}") };
        assert_eq!(keys.len(), 14);
        assert!(keys.contains(&"material.E".to_string()));
        assert!(keys.contains(&"time.tau".to_string()));
    }

    #[test]
    fn incompressible_nu_rejected_with_path() {
        let text = BENCHMARK.replace("\"nu\": 0.35", "\"nu\": 0.5");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.paths(), vec!["material.nu"]);
    }

    #[test]
    fn unknown_key_rejected_with_path() {
        let text = BENCHMARK.replace("\"nu\": 0.35", "\"nu\": 0.35, \"poisson\": 0.3");
        let err = parse_config(&text).unwrap_err();
        let ConfigError::Parse(e) = &err else { panic!("{err:?}") };
        assert!(e.path.starts_with("material"), "{e}");
        assert!(e.message.contains("poisson"));
    }

    #[test]
    fn wrong_type_reported_with_path() {
        let text = BENCHMARK.replace("\"n_interface\": 81", "\"n_interface\": \"many\"");
        assert_eq!(parse_config(&text).unwrap_err().paths(), vec!["geometry.n_interface"]);
    }

    #[test]
    fn defaults_are_recorded() {
        let c = parse_config(BENCHMARK).unwrap();
        assert!(c.defaults_applied.contains(&"adhesive.eps_reg".to_string()));
        assert!(!c.defaults_applied.contains(&"geometry.H".to_string()));
    }

    #[test]
    fn misaligned_horizon_rejected() {
        let text = BENCHMARK.replace("\"T\": 1.0", "\"T\": 1.0001");
        assert_eq!(parse_config(&text).unwrap_err().paths(), vec!["time.T"]);
    }

    #[test]
    fn hash_ignores_directory_only() {
        let a = parse_config(BENCHMARK).unwrap();
        let mut b = a.clone();
        b.outputs.directory = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.material.chi = 2e-3;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn level_keeps_tau_over_h() {
        let c = parse_config(BENCHMARK).unwrap();
        let coarse = c.at_level(27);
        assert!((coarse.time.tau - 1.0 / 150.0).abs() < 1e-15);
        assert!(coarse.run_params().n_steps().is_ok());
        let ratio = |c: &SimulationConfig| c.time.tau * c.geometry.n_interface as f64;
        assert!((ratio(&coarse) - ratio(&c)).abs() < 1e-14);
    }
}
