//! Bulk and interface material laws.
//!
//! Bulk: isotropic plane-strain elasticity with Kelvin-Voigt viscosity
//! `D = chi * C`. Interface: a linear adhesive with stiffness
//! `A = diag(kappa_n, kappa_t)` in the local (normal, tangent) frame, and a
//! delamination threshold that grows with the mode-mixity angle.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConstitutiveError {
    #[error("parameter `{name}` = {value} outside its admissible range {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

fn domain(name: &'static str, value: f64, range: &'static str) -> ConstitutiveError {
    ConstitutiveError::Domain { name, value, range }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropicElasticity {
    /// Young modulus (Pa).
    pub e: f64,
    /// Poisson ratio.
    pub nu: f64,
}

impl IsotropicElasticity {
    pub fn new(e: f64, nu: f64) -> Result<Self, ConstitutiveError> {
        let mat = Self { e, nu };
        mat.check()?;
        Ok(mat)
    }

    pub fn check(&self) -> Result<(), ConstitutiveError> {
        if !(self.e > 0.0 && self.e.is_finite()) {
            return Err(domain("E", self.e, "(0, inf)"));
        }
        if !(self.nu > -1.0 && self.nu < 0.5) {
            return Err(domain("nu", self.nu, "(-1, 0.5)"));
        }
        Ok(())
    }
}

/// Kelvin-Voigt viscosity `D = chi * C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViscosityLaw {
    /// Relaxation time (s).
    pub chi: f64,
}

impl ViscosityLaw {
    pub fn new(chi: f64) -> Result<Self, ConstitutiveError> {
        if !(chi >= 0.0 && chi.is_finite()) {
            return Err(domain("chi", chi, "[0, inf)"));
        }
        if chi == 0.0 {
            log::warn!("chi = 0: the inviscid limit is outside the convergence theory");
        }
        Ok(Self { chi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdhesiveLaw {
    /// Normal stiffness (Pa/m).
    pub kappa_n: f64,
    /// Tangential stiffness (Pa/m).
    pub kappa_t: f64,
    /// Mode-I activation energy (J/m^2).
    pub a_i: f64,
    /// Mode sensitivity, in `[0, 1)`.
    pub lambda: f64,
    /// Regularization of the mixity angle (m^2); zero disables it.
    pub eps_reg: f64,
}

impl AdhesiveLaw {
    pub fn new(
        kappa_n: f64,
        kappa_t: f64,
        a_i: f64,
        lambda: f64,
        eps_reg: f64,
    ) -> Result<Self, ConstitutiveError> {
        let law = Self {
            kappa_n,
            kappa_t,
            a_i,
            lambda,
            eps_reg,
        };
        law.check()?;
        Ok(law)
    }

    pub fn check(&self) -> Result<(), ConstitutiveError> {
        if !(self.kappa_n > 0.0 && self.kappa_n.is_finite()) {
            return Err(domain("kappa_n", self.kappa_n, "(0, inf)"));
        }
        if !(self.kappa_t >= 0.0 && self.kappa_t.is_finite()) {
            return Err(domain("kappa_t", self.kappa_t, "[0, inf)"));
        }
        if !(self.a_i > 0.0 && self.a_i.is_finite()) {
            return Err(domain("a_I", self.a_i, "(0, inf)"));
        }
        if !(self.lambda >= 0.0 && self.lambda < 1.0) {
            return Err(domain("lambda", self.lambda, "[0, 1)"));
        }
        if !(self.eps_reg >= 0.0 && self.eps_reg.is_finite()) {
            return Err(domain("eps_reg", self.eps_reg, "[0, inf)"));
        }
        Ok(())
    }

    /// Adhesive stiffness as a 2x2 matrix in global coordinates.
    pub fn stiffness_matrix(&self, normal: [f64; 2]) -> [[f64; 2]; 2] {
        let [nx, ny] = normal;
        let (kn, kt) = (self.kappa_n, self.kappa_t);
        [
            [kn * nx * nx + kt * (1.0 - nx * nx), (kn - kt) * nx * ny],
            [(kn - kt) * nx * ny, kn * ny * ny + kt * (1.0 - ny * ny)],
        ]
    }

    /// `A jump . jump`.
    pub fn quadratic_form(&self, jump: [f64; 2], normal: [f64; 2]) -> f64 {
        let (jn, jt) = split_jump(jump, normal);
        self.kappa_n * jn * jn + self.kappa_t * (jt[0] * jt[0] + jt[1] * jt[1])
    }

    /// Threshold `a(psi(jump))` for a given interface jump.
    pub fn threshold_for_jump(&self, jump: [f64; 2], normal: [f64; 2]) -> Threshold {
        dissipation_threshold(mode_mixity_angle(jump, normal, self), self)
    }
}

/// Plane-strain moduli in Voigt order `(e11, e22, 2 e12)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoigtTensor(pub [[f64; 3]; 3]);

impl VoigtTensor {
    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// `e : C e`, twice the elastic energy density.
    pub fn energy_form(&self, e: [f64; 3]) -> f64 {
        let s = self.apply(e);
        s[0] * e[0] + s[1] * e[1] + s[2] * e[2]
    }
}

pub fn elasticity_tensor(mat: &IsotropicElasticity) -> Result<VoigtTensor, ConstitutiveError> {
    mat.check()?;
    let (e, nu) = (mat.e, mat.nu);
    let lame = nu * e / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let shear = e / (2.0 * (1.0 + nu));
    let c11 = lame + 2.0 * shear;
    Ok(VoigtTensor([
        [c11, lame, 0.0],
        [lame, c11, 0.0],
        [0.0, 0.0, shear],
    ]))
}

/// Kelvin-Voigt stress `chi C e_dot + C e`.
pub fn stress(c: &VoigtTensor, chi: f64, e: [f64; 3], e_dot: [f64; 3]) -> [f64; 3] {
    let elastic = c.apply(e);
    let viscous = c.apply(e_dot);
    [
        chi * viscous[0] + elastic[0],
        chi * viscous[1] + elastic[1],
        chi * viscous[2] + elastic[2],
    ]
}

/// Normal component and tangential remainder of a jump.
pub fn split_jump(jump: [f64; 2], normal: [f64; 2]) -> (f64, [f64; 2]) {
    let jn = jump[0] * normal[0] + jump[1] * normal[1];
    (jn, [jump[0] - jn * normal[0], jump[1] - jn * normal[1]])
}

/// Mode-mixity angle in `[0, pi/2]`.
///
/// Pure shear with `eps_reg = 0` gives `pi/2`; a zero jump with `eps_reg = 0`
/// gives `0`.
pub fn mode_mixity_angle(jump: [f64; 2], normal: [f64; 2], law: &AdhesiveLaw) -> f64 {
    let (jn, jt) = split_jump(jump, normal);
    let shear = law.kappa_t * (jt[0] * jt[0] + jt[1] * jt[1]);
    let opening = law.kappa_n * jn * jn + law.eps_reg;
    // atan2 realizes both singular-point conventions.
    shear.sqrt().atan2(opening.sqrt())
}

/// Activation energy per unit interface area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Finite(f64),
    /// `lambda = 0` at pure Mode II: delamination cannot be activated.
    Forbidden,
}

impl Threshold {
    pub fn finite(self) -> Option<f64> {
        match self {
            Threshold::Finite(a) => Some(a),
            Threshold::Forbidden => None,
        }
    }

    pub fn scaled(self, factor: f64) -> Threshold {
        match self {
            Threshold::Finite(a) => Threshold::Finite(a * factor),
            Threshold::Forbidden => Threshold::Forbidden,
        }
    }

    /// Whether a driving energy strictly exceeds the threshold.
    pub fn exceeded_by(self, driving: f64) -> bool {
        match self {
            Threshold::Finite(a) => driving > a,
            Threshold::Forbidden => false,
        }
    }
}

/// `a_I (1 + tan^2((1 - lambda) psi))`.
pub fn dissipation_threshold(psi: f64, law: &AdhesiveLaw) -> Threshold {
    debug_assert!((-1e-12..=FRAC_PI_2 + 1e-12).contains(&psi), "psi = {psi}");
    let arg = (1.0 - law.lambda) * psi;
    if arg >= FRAC_PI_2 {
        return Threshold::Forbidden;
    }
    let t = arg.tan();
    Threshold::Finite(law.a_i * (1.0 + t * t))
}

/// `(z/2) A jump . jump`.
pub fn adhesive_energy_density(jump: [f64; 2], z: f64, law: &AdhesiveLaw, normal: [f64; 2]) -> f64 {
    0.5 * z * law.quadratic_form(jump, normal)
}

/// Traction decomposition of a result of `T = sigma n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Traction {
    pub total: [f64; 2],
    pub normal: f64,
    pub tangential: [f64; 2],
}

pub fn traction_decompose(sigma: [f64; 3], n: [f64; 2]) -> Traction {
    let total = [sigma[0] * n[0] + sigma[2] * n[1], sigma[2] * n[0] + sigma[1] * n[1]];
    let (normal, tangential) = split_jump(total, n);
    Traction {
        total,
        normal,
        tangential,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn law(lambda: f64) -> AdhesiveLaw {
        AdhesiveLaw::new(150e9, 75e9, 187.5, lambda, 0.0).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn tensor_decoupled_for_zero_poisson() {
        let c = elasticity_tensor(&IsotropicElasticity { e: 70e9, nu: 0.0 }).unwrap();
        assert_eq!(c.0[0][0], 70e9);
        assert_eq!(c.0[0][1], 0.0);
        assert_eq!(c.0[2][2], 35e9);
    }

    #[test]
    fn tensor_for_aluminum() {
        let c = elasticity_tensor(&IsotropicElasticity { e: 70e9, nu: 0.35 }).unwrap();
        assert!(close(c.0[0][0], 1.123457e11, 1e-6));
        assert!(close(c.0[0][1], 6.049383e10, 1e-6));
        assert!(close(c.0[2][2], 2.592593e10, 1e-6));
        assert_eq!(c.0[0][2], 0.0);
    }

    #[test]
    fn tensor_rejects_incompressible_and_bad_nu() {
        for nu in [0.5, -1.0, 0.7] {
            assert!(matches!(
                elasticity_tensor(&IsotropicElasticity { e: 1.0, nu }),
                Err(ConstitutiveError::Domain { name: "nu", .. })
            ));
        }
    }

    #[test]
    fn viscous_stress_only_rate() {
        let c = elasticity_tensor(&IsotropicElasticity { e: 70e9, nu: 0.35 }).unwrap();
        let s = stress(&c, 0.001, [0.0; 3], [1.0, 0.0, 0.0]);
        assert!(close(s[0], 0.001 * c.0[0][0], 1e-15));
        assert!(close(s[1], 0.001 * c.0[0][1], 1e-15));
        assert_eq!(s[2], 0.0);
        let e = [1e-4, -2e-4, 3e-4];
        assert_eq!(stress(&c, 0.001, e, [0.0; 3]), c.apply(e));
    }

    #[test]
    fn mixity_angle_cases() {
        let n = [0.0, -1.0];
        assert_eq!(mode_mixity_angle([0.0, -1e-4], n, &law(0.3)), 0.0);
        assert_eq!(mode_mixity_angle([1e-4, 0.0], n, &law(0.3)), FRAC_PI_2);
        assert_eq!(mode_mixity_angle([0.0, 0.0], n, &law(0.3)), 0.0);
        let psi = mode_mixity_angle([1e-4, -1e-4], n, &law(0.3));
        assert!((psi - 0.5_f64.sqrt().atan()).abs() < 1e-15);
        assert!((psi - 0.615480).abs() < 1e-6);
    }

    #[test]
    fn regularized_angle_below_half_pi() {
        let mut l = law(0.3);
        l.eps_reg = 1e-12;
        let psi = mode_mixity_angle([1e-6, 0.0], [0.0, -1.0], &l);
        assert!(psi < FRAC_PI_2 && psi > 1.0);
    }

    #[test]
    fn threshold_values() {
        let l = law(1.0 / 3.0);
        assert_eq!(dissipation_threshold(0.0, &l), Threshold::Finite(187.5));
        let mode2 = dissipation_threshold(FRAC_PI_2, &l).finite().unwrap();
        assert!(close(mode2, 4.0 * 187.5, 1e-12));
        let mid = dissipation_threshold(FRAC_PI_4, &l).finite().unwrap();
        assert!(close(mid, 4.0 / 3.0 * 187.5, 1e-12));
        assert_eq!(dissipation_threshold(FRAC_PI_2, &law(0.0)), Threshold::Forbidden);
        assert!(dissipation_threshold(FRAC_PI_2 * 0.999, &law(0.0)).finite().is_some());
    }

    #[test]
    fn forbidden_threshold_never_exceeded() {
        assert!(!Threshold::Forbidden.exceeded_by(f64::MAX));
        assert!(Threshold::Finite(1.0).exceeded_by(1.0 + 1e-12));
        assert!(!Threshold::Finite(1.0).exceeded_by(1.0));
    }

    #[test]
    fn energy_density_values() {
        let l = law(0.3);
        let n = [0.0, -1.0];
        assert_eq!(adhesive_energy_density([3e-4, -1e-4], 0.0, &l, n), 0.0);
        let w = adhesive_energy_density([0.0, -1e-4], 1.0, &l, n);
        assert!(close(w, 750.0, 1e-12));
        let w2 = adhesive_energy_density([0.0, -2e-4], 1.0, &l, n);
        assert!(close(w2, 4.0 * w, 1e-12));
    }

    #[test]
    fn traction_cases() {
        let t = traction_decompose([5.0, 5.0, 0.0], [0.6, 0.8]);
        assert!(close(t.total[0], 3.0, 1e-15) && close(t.total[1], 4.0, 1e-15));
        assert!(t.tangential[0].abs() < 1e-15 && t.tangential[1].abs() < 1e-15);
        let s = traction_decompose([0.0, 0.0, 7.0], [0.0, 1.0]);
        assert_eq!(s.total, [7.0, 0.0]);
        assert_eq!(s.normal, 0.0);
    }

    #[test]
    fn adhesive_matrix_rotates_diagonal() {
        let l = law(0.3);
        let a = l.stiffness_matrix([0.0, -1.0]);
        assert_eq!(a, [[75e9, 0.0], [0.0, 150e9]]);
    }

    fn unit(theta: f64) -> [f64; 2] {
        [theta.cos(), theta.sin()]
    }

    fn rotate(v: [f64; 2], theta: f64) -> [f64; 2] {
        let (s, c) = theta.sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }

    proptest! {
        #[test]
        fn threshold_monotone_in_angle(lambda in 0.0..0.99f64, p in 0.0..FRAC_PI_2, q in 0.0..FRAC_PI_2) {
            let l = law(lambda);
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            match (dissipation_threshold(lo, &l), dissipation_threshold(hi, &l)) {
                (Threshold::Finite(a), Threshold::Finite(b)) => prop_assert!(a <= b),
                (_, Threshold::Forbidden) => {}
                (Threshold::Forbidden, Threshold::Finite(_)) => prop_assert!(false),
            }
        }

        #[test]
        fn angle_rotation_invariant(jx in -1e-3..1e-3f64, jy in -1e-3..1e-3f64, th in 0.0..(2.0 * PI), rot in 0.0..(2.0 * PI)) {
            let l = law(0.3);
            let n = unit(th);
            let a = mode_mixity_angle([jx, jy], n, &l);
            let b = mode_mixity_angle(rotate([jx, jy], rot), rotate(n, rot), &l);
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn threshold_scale_invariant_without_regularization(jx in -1e-3..1e-3f64, jy in -1e-3..1e-3f64, s in 1e-3..1e3f64) {
            let l = law(1.0 / 3.0);
            let n = [0.0, -1.0];
            let a = l.threshold_for_jump([jx, jy], n).finite().unwrap();
            let b = l.threshold_for_jump([s * jx, s * jy], n).finite().unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a);
        }

        #[test]
        fn density_linear_in_bond(jx in -1e-3..1e-3f64, jy in -1e-3..1e-3f64, z in 0.0..1.0f64) {
            let l = law(0.3);
            let n = [0.0, -1.0];
            let full = adhesive_energy_density([jx, jy], 1.0, &l, n);
            prop_assert!((adhesive_energy_density([jx, jy], z, &l, n) - z * full).abs() <= 1e-12 * full.max(1e-300));
        }

        #[test]
        fn traction_pythagoras(s0 in -1e6..1e6f64, s1 in -1e6..1e6f64, s2 in -1e6..1e6f64, th in 0.0..(2.0 * PI)) {
            let t = traction_decompose([s0, s1, s2], unit(th));
            let total = t.total[0].powi(2) + t.total[1].powi(2);
            let parts = t.normal.powi(2) + t.tangential[0].powi(2) + t.tangential[1].powi(2);
            prop_assert!((total - parts).abs() <= 1e-9 * total.max(1.0));
        }

        #[test]
        fn tensor_positive_definite(e in 1.0..1e12f64, nu in -0.99..0.499f64) {
            let c = elasticity_tensor(&IsotropicElasticity { e, nu }).unwrap();
            let m = nalgebra::Matrix3::from_fn(|i, j| c.0[i][j]);
            let eig = m.symmetric_eigenvalues();
            prop_assert!(eig.min() > 0.0);
        }
    }
}
