//! Spectral cut-off propagators for time-dependent Hamiltonians on
//! discrete-spectrum models, with Floquet–Magnus expansions and
//! regularized traces.

pub mod error;
pub mod fit;
pub mod floquet;
pub mod hamiltonian;
pub mod linalg;
pub mod models;
pub mod propagator;
pub mod quadrature;
pub mod spectral_model;
pub mod traces;

pub use error::{Error, Result};
pub use hamiltonian::{assemble_family, Coefficient, CoefficientShape, HamiltonianFamily};
pub use linalg::{CMatrix, CVector, C64};
pub use spectral_model::{build_model, cutoff_space, BandedOperator, CutoffSpace, ModelSpec, ScaleVector, SpectralModel};
