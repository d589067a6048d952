//! Simulation toolkit for EPR-entangled light pulses generated by a single
//! laser-driven trapped atom in an optical cavity.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod effective_dynamics;
pub mod fock_algebra;
pub mod gaussian_oracle;
pub mod homodyne_output;
pub mod lindblad_integrator;
pub mod physical_model;
pub mod regime_validator;

pub use error::{Error, Result};
