//! Finite element model of a clamped Neo-Hookean plate under a pulsed load.
//!
//! The displacement is discretized with trilinear B-splines on a box mesh,
//! the stored energy is weighted by a nonnegative coefficient field, and time
//! is advanced with a θ-scheme solved by Newton's method.

pub mod assembly;
pub mod band;
pub mod excitation;
pub mod field;
pub mod integrator;
pub mod material;
pub mod mesh;

use thiserror::Error;

pub use assembly::{Assembler, CoefficientField, DamageLayer, DictionaryField};
pub use band::{BandCholesky, BandMatrix};
pub use excitation::{excitation_signal, ExcitationSpec};
pub use field::{DataLayout, DisplacementField};
pub use integrator::{
    newton_solve_timestep, ForwardProblem, NewtonReport, TangentMode, TimeIntegratorConfig,
};
pub use material::MaterialModel;
pub use mesh::{Axis, MeshSpec, PlateMesh};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ForwardError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("deformation gradient with det = {det:e} in cell {cell:?}")]
    InvalidDeformation { cell: Option<usize>, det: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("newton did not converge at step {step:?} after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged {
        step: Option<usize>,
        iterations: usize,
        residual: f64,
    },
    #[error("i/o: {0}")]
    Io(String),
}

impl ForwardError {
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            ForwardError::NewtonDiverged {
                iterations,
                residual,
                ..
            } => ForwardError::NewtonDiverged {
                step: Some(step),
                iterations,
                residual,
            },
            other => other,
        }
    }
}
