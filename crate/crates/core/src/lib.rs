//! P1 finite elements for p-Laplacian problems with nonlinear, possibly
//! singular, Robin boundary conditions and L¹-class data.
//!
//! The crate solves the level-n regularized problems along a ladder
//! `n → ∞` and checks the a-priori estimates and the entropy formulation
//! on the computed fields.

// `!(x > 0.0)` also rejects NaN; element loops index several arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod functions;
pub mod instances;
pub mod io;
pub mod mesh;
pub mod problem;
pub mod quadrature;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
pub use exec::Exec;
pub use mesh::{generate_unit_disk, generate_unit_square, DiscreteField, Mesh2D};
pub use problem::{regularize, ProblemSpec, RegularizedProblem};
