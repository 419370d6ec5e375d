//! Ready-made model instances used throughout the experiments.

use std::sync::Arc;

use crate::error::Result;
use crate::hamiltonian::{assemble_family, Coefficient, CoefficientShape, HamiltonianFamily};
use crate::linalg::C64;
use crate::spectral_model::{
    build_model, cutoff_space, BandedOperator, CutoffSpace, EigenvalueRule, ModelSpec, SpectralModel,
};

/// Cut-off isolating the two-level block `{1, 2}` of a `λ_j = j` model.
pub const SPIN_CUTOFF: f64 = 2.5;

fn pauli(name: &'static str, entries: [[C64; 2]; 2]) -> BandedOperator {
    BandedOperator::new(name, 1, move |j, k| {
        if j <= 2 && k <= 2 {
            entries[j - 1][k - 1]
        } else {
            C64::new(0.0, 0.0)
        }
    })
    .with_entry_bound(1.0)
}

/// Pauli matrices acting on modes 1 and 2 only.
pub fn pauli_terms() -> Vec<BandedOperator> {
    let o = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    vec![
        pauli("sigma_x", [[o, one], [one, o]]),
        pauli("sigma_y", [[o, -i], [i, o]]),
        pauli("sigma_z", [[one, o], [o, -one]]),
    ]
}

/// Explicit diagonal model `λ_j = j` with extra Hermitian terms.
pub fn index_model_with(terms: Vec<BandedOperator>) -> Result<Arc<SpectralModel>> {
    build_model(ModelSpec::ExplicitDiagonal { eigenvalues: EigenvalueRule::Index, growth: None, terms })
}

/// `λ_j = j` with the Pauli block attached.
pub fn spin_model() -> Result<Arc<SpectralModel>> {
    index_model_with(pauli_terms())
}

/// `H(τ) = (ω/2)σ_z + g·f(τ)·σ_x` with period 1.
pub fn pauli_family(omega: f64, g: f64, drive: CoefficientShape) -> Result<HamiltonianFamily> {
    let model = spin_model()?;
    assemble_family(
        &model,
        vec![
            ("sigma_z".into(), Coefficient::constant(omega / 2.0)),
            ("sigma_x".into(), Coefficient::new(drive, g)),
        ],
        Some(1.0),
        0.0,
    )
}

pub fn spin_space(family: &HamiltonianFamily) -> CutoffSpace {
    cutoff_space(family.model(), SPIN_CUTOFF)
}

/// `H(t) = −d²/dx² + a·sin(2πt)·cos x` on the circle.
pub fn driven_circle(amplitude: f64) -> Result<HamiltonianFamily> {
    let model = build_model(ModelSpec::FourierCircle)?;
    assemble_family(
        &model,
        vec![
            ("laplacian".into(), Coefficient::constant(1.0)),
            ("cos_x".into(), Coefficient::new(CoefficientShape::Sin2Pi, amplitude)),
        ],
        Some(1.0),
        1.0,
    )
}

/// `H = −d²/dx²` on the circle.
pub fn free_circle() -> Result<HamiltonianFamily> {
    let model = build_model(ModelSpec::FourierCircle)?;
    assemble_family(&model, vec![("laplacian".into(), Coefficient::constant(1.0))], Some(1.0), 1.0)
}

/// Commuting family `H(t) = (1 + t)·H₀` on an explicit diagonal model.
pub fn ramp_family(model: &Arc<SpectralModel>) -> Result<HamiltonianFamily> {
    assemble_family(
        model,
        vec![
            ("h0_diag".into(), Coefficient::constant(1.0)),
            ("h0_diag".into(), Coefficient::new(CoefficientShape::Ramp, 1.0)),
        ],
        None,
        1.0,
    )
}
