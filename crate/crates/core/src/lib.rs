//! Identification of stiffness coefficients of a hyperelastic plate from
//! dynamic displacement data.
//!
//! - [`geometry`]: metric projections onto hyperplanes, half-spaces and stripes.
//! - [`solvers`]: attenuated Landweber and sequential subspace optimization.
//! - [`forward`]: finite element model and θ-method time stepping.
//! - [`sensitivity`]: derivative, adjoint and verification oracles.
//! - [`experiments`]: damage scenarios, noise, runs and output files.

pub mod experiments;
pub mod forward;
pub mod geometry;
pub mod sensitivity;
pub mod solvers;
