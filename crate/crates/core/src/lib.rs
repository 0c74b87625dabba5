//! Flux-based multiple-network poroelasticity on the unit square.
//!
//! Discretization by BDM1 displacements, RT0 fluxes and piecewise-constant
//! pressures with an H(div)-conforming interior penalty form for elasticity,
//! solved either by the fixed-stress splitting iteration with a
//! sum-of-pressures stabilization or by MinRes with a norm-equivalent block
//! diagonal preconditioner.

pub mod assembly;
pub mod config;
pub mod elements;
pub mod error;
pub mod mesh;
pub mod krylov;
pub mod model;
pub mod report;
pub mod runner;
pub mod sparse;
pub mod splitsolve;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
pub use mesh::{build_unit_square_mesh, BoundaryTag, TriMesh};
