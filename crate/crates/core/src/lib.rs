//! Numerical core for the coupled Kirchhoff-Schrödinger system on a periodic
//! cube: discrete fields, the energy and its Nehari manifold, a projected
//! Sobolev-gradient ground-state solver, and diagnostics.

// Negated comparisons such as `!(x > 0.0)` deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod expr;
pub mod grid;
pub mod model;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{Grid, ScalarField, StatePair};
