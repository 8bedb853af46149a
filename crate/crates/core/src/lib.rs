//! Rate-independent delamination of a viscoelastic body glued to a rigid or
//! elastic support, with mode-mixity-sensitive interface dissipation.

pub mod assembly;
pub mod constitutive;
pub mod energetics;
pub mod harness;
pub mod mesh;
pub mod qp;
pub mod sparse;
pub mod stepper;
