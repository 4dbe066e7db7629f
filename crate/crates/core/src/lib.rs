//! Spectral Lagrangian solver and verification harness for the vacuum
//! free-boundary full compressible Navier-Stokes equations on T^2 x (0,1).
//!
//! The gas occupies the slab and is surrounded by vacuum at the faces
//! x3 = 0, 1, where the density and temperature vanish. In Lagrangian
//! coordinates the moving domain becomes fixed and the unknowns are the
//! velocity v and temperature Theta along the flow map eta. This crate
//! provides
//!
//! - the deformation kinematics (A, J, a) with their rate identities and
//!   the Piola-identity / a-priori monitors,
//! - construction and validation of initial data with degenerate density
//!   and the physical-vacuum temperature condition,
//! - the Lagrangian differential operators and pointwise residuals of the
//!   momentum/temperature system,
//! - a Fourier x Chebyshev Galerkin discretization of the linearized
//!   solving operator and implicit time stepping,
//! - Picard fixed-point iteration to the strong solution together with the
//!   contraction-versus-horizon study,
//! - energy-functional, entropy, vacuum-boundary, and Hardy/Korn
//!   diagnostics, and
//! - run orchestration with deterministic CSV/snapshot serialization.

pub mod basis;
pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod grid;
pub mod initial_data;
pub mod kinematics;
pub mod operators;
pub mod picard;
pub mod snapshot;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use grid::{make_grid, Field, Grid, GridSpec};
