//! Geometric toolkit for the Maxwell–Vlasov system on periodic 1D1V and
//! 1D2V phase-space grids.
//!
//! The crate provides the discrete Lie–Poisson bracket and its Hamiltonian
//! vector field, a time integrator with conservation diagnostics, a
//! finite-dimensional presymplectic constraint algorithm, linearized and
//! energy-Casimir stability analysis, and Hamiltonian control channels.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bracket;
pub mod control;
pub mod dynamics;
pub mod energy_casimir;
pub mod equilibrium;
pub mod error;
pub mod gnh;
pub mod grid;
pub mod linalg;
pub mod linear_stability;
pub mod numerics;
pub mod profile;
pub mod state;

pub use error::{Error, Result};
