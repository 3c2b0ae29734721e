//! Numerical laboratory for the backward degenerate parabolic equation
//! `phi_t + div(|x|^alpha grad phi) = 0` on a disk containing the degeneracy,
//! its regularized approximations, and the weighted inequalities around it.

pub mod domain;
pub mod carleman;
pub mod error;
pub mod experiments;
pub mod solver;
pub mod spaces;
pub mod weights;

pub use error::{Error, Result};
