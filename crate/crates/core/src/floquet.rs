//! Periodic drives: rescaling `H^{(T)}(t) = H(t/T)`, monodromy matrices,
//! principal Floquet Hamiltonians and Floquet–Magnus coefficients.
//!
//! Coefficients follow `H_FM = (i/T)·Ω(T)` with `U^{(T)}(T,0) = e^{Ω(T)}`:
//! `H^[ℓ]` is the coefficient of `T^ℓ` in that series, so that
//! `exp(−iT Σ_{ℓ≤L} T^ℓ H^[ℓ])` matches the monodromy to `O(T^{L+2})`.
//! Because `H_N(τ) = Σ_m c_m(τ)·O_m`, every iterated integral of nested
//! commutators factorises into scalar integrals of coefficient products
//! times fixed commutators of the term compressions.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianFamily;
use crate::linalg::{
    add_scaled, commutator, hermitian_defect, hermitian_function, max_abs, spectral_norm, symmetrize, unitary_log, unitary_power,
    CMatrix, C64, I,
};
use crate::propagator::cutoff_propagator;
use crate::quadrature::ordered_integral_adaptive;
use crate::spectral_model::{cutoff_space, CutoffSpace, ScaleVector};

/// Nodes per panel of the coefficient quadratures.
pub const FM_NODES_PER_PANEL: usize = 8;
pub const FM_MAX_PANELS: usize = 64;
/// Floor on scalar quadrature tolerances, near rounding of O(1) integrals.
const SCALAR_TOL_FLOOR: f64 = 1e-15;
/// Eigenphases closer than this to ±π are flagged as branch-ambiguous.
pub const BRANCH_CUT_GUARD: f64 = 1e-10;
/// Quadrature tolerance used where callers do not supply one.
pub const DEFAULT_QUAD_TOL: f64 = 1e-13;

fn require_unit_period(family: &HamiltonianFamily) -> Result<()> {
    match family.period() {
        Some(p) if (p - 1.0).abs() <= 1e-12 => Ok(()),
        Some(p) => Err(Error::InvalidParameters(format!("expected a 1-periodic family, got period {p}"))),
        None => Err(Error::Aperiodic),
    }
}

/// `H^{(T)}(t) = H(t/T)` with period scaled by `T`.
pub fn rescaled_family(family: &HamiltonianFamily, period: f64) -> Result<HamiltonianFamily> {
    if family.period().is_none() {
        return Err(Error::Aperiodic);
    }
    if !(period > 0.0) {
        return Err(Error::InvalidParameters(format!("period {period} must be positive")));
    }
    Ok(family.with_rescaled_time(period))
}

#[derive(Debug, Clone)]
pub struct FloquetResult {
    /// `U_N^{(T)}(T, 0)`.
    pub monodromy: CMatrix,
    /// `H_F = (i/T) log U` on the principal branch; eigenvalues `−θ/T`.
    pub floquet_hamiltonian: CMatrix,
    pub eigenphases: Vec<f64>,
    pub period: f64,
    pub space: CutoffSpace,
    /// Some eigenphase lies within [`BRANCH_CUT_GUARD`] of ±π; it was taken as +π.
    pub branch_ambiguous: bool,
}

/// Monodromy of the rescaled family and its principal Floquet Hamiltonian.
pub fn monodromy(family: &HamiltonianFamily, space: &CutoffSpace, period: f64, tol: f64) -> Result<FloquetResult> {
    require_unit_period(family)?;
    let rescaled = rescaled_family(family, period)?;
    let u = cutoff_propagator(&rescaled, space, 0.0, period, tol)?.matrix;
    let log = unitary_log(&u)?;
    let d = space.dim();
    let mut scaled = log.vectors.clone();
    for (k, theta) in log.phases.iter().enumerate() {
        for i in 0..d {
            scaled[(i, k)] *= C64::new(-theta / period, 0.0);
        }
    }
    let floquet_hamiltonian = symmetrize(&(scaled * log.vectors.adjoint()));
    Ok(FloquetResult {
        monodromy: u,
        floquet_hamiltonian,
        eigenphases: log.phases,
        period,
        space: space.clone(),
        branch_ambiguous: log.cut_distance < BRANCH_CUT_GUARD,
    })
}

/// `∫₀¹ c_{a}(τ₁) ∫₀^{τ₁} c_{b}(τ₂) ⋯` over the ordered simplex.
fn coefficient_integral(family: &HamiltonianFamily, order: &[usize], tol: f64) -> Result<f64> {
    let tol = tol.max(SCALAR_TOL_FLOOR);
    let terms = family.terms();
    let fs: Vec<Box<dyn Fn(f64) -> f64 + '_>> =
        order.iter().map(|&m| Box::new(move |t: f64| terms[m].coefficient.eval(t)) as Box<dyn Fn(f64) -> f64>).collect();
    let refs: Vec<&dyn Fn(f64) -> f64> = fs.iter().map(|f| f.as_ref()).collect();
    ordered_integral_adaptive(&refs, FM_NODES_PER_PANEL, tol, FM_MAX_PANELS)
        .map(|(value, _)| value)
        .map_err(|last_change| Error::QuadratureNonConvergence { tol, last_change })
}

fn all_constant(family: &HamiltonianFamily, indices: &[usize]) -> bool {
    indices.iter().all(|&m| family.terms()[m].coefficient.is_constant())
}

/// Hermitian result from a raw sum, checking the pre-symmetrization defect.
fn hermitian_coefficient(raw: CMatrix, quad_tol: f64) -> Result<CMatrix> {
    let defect = hermitian_defect(&raw);
    let allowed = 10.0 * quad_tol;
    if defect >= allowed {
        return Err(Error::CoefficientNotHermitian { defect, allowed });
    }
    Ok(symmetrize(&raw))
}

/// Floquet–Magnus coefficient `H^[ℓ]` of the 1-periodic family on a space.
///
/// * `ℓ = 0`: `∫₀¹ H_N(τ) dτ`
/// * `ℓ = 1`: `−(i/2) ∫₀¹∫₀^{τ₁} [H_N(τ₁), H_N(τ₂)]`
/// * `ℓ = 2`: `−(1/6) ∫∫∫ ([H₁,[H₂,H₃]] + [H₃,[H₂,H₁]])` over `τ₁ > τ₂ > τ₃`
pub fn fm_coefficient(family: &HamiltonianFamily, space: &CutoffSpace, ell: usize, quad_tol: f64) -> Result<CMatrix> {
    require_unit_period(family)?;
    if !(quad_tol > 0.0) {
        return Err(Error::InvalidParameters(format!("quadrature tolerance {quad_tol} must be positive")));
    }
    let hn = family.on_space(space)?;
    let ops = hn.term_matrices();
    let count = ops.len();
    let d = space.dim();
    let mut raw = CMatrix::zeros(d, d);
    match ell {
        0 => {
            for (m, op) in ops.iter().enumerate() {
                let tol = quad_tol / (1.0 + max_abs(op) * count as f64);
                let weight = coefficient_integral(family, &[m], tol)?;
                add_scaled(&mut raw, C64::new(weight, 0.0), op);
            }
        }
        1 => {
            // pairs (a, b), (b, a) combine into (I_ab − I_ba)·[O_a, O_b]
            for a in 0..count {
                for b in (a + 1)..count {
                    if all_constant(family, &[a, b]) {
                        continue;
                    }
                    let comm = commutator(&ops[a], &ops[b]);
                    if max_abs(&comm) == 0.0 {
                        continue;
                    }
                    let tol = quad_tol / (1.0 + max_abs(&comm) * (count * count) as f64);
                    let weight = coefficient_integral(family, &[a, b], tol)? - coefficient_integral(family, &[b, a], tol)?;
                    add_scaled(&mut raw, -0.5 * I * weight, &comm);
                }
            }
        }
        2 => {
            let inner: Vec<Vec<CMatrix>> =
                (0..count).map(|b| (0..count).map(|c| commutator(&ops[b], &ops[c])).collect()).collect();
            for a in 0..count {
                for b in 0..count {
                    for c in 0..count {
                        // the all-constant block is a symmetric weight on a
                        // cyclically antisymmetric sum and cancels exactly
                        if all_constant(family, &[a, b, c]) {
                            continue;
                        }
                        let nested = commutator(&ops[a], &inner[b][c]) + commutator(&ops[c], &inner[b][a]);
                        if max_abs(&nested) == 0.0 {
                            continue;
                        }
                        let tol = quad_tol / (1.0 + max_abs(&nested) * (count * count * count) as f64);
                        let weight = coefficient_integral(family, &[a, b, c], tol)?;
                        add_scaled(&mut raw, C64::new(-weight / 6.0, 0.0), &nested);
                    }
                }
            }
        }
        other => return Err(Error::UnsupportedOrder(other)),
    }
    hermitian_coefficient(raw, quad_tol)
}

/// `H^[0], …, H^[L]` on one space.
#[derive(Debug, Clone)]
pub struct FMExpansion {
    pub coefficients: Vec<CMatrix>,
    pub space: CutoffSpace,
}

impl FMExpansion {
    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// `H_{FM,L,N}^{(T)} = Σ_ℓ T^ℓ H^[ℓ]`.
    pub fn effective(&self, period: f64) -> CMatrix {
        let d = self.space.dim();
        let mut h = CMatrix::zeros(d, d);
        for (ell, coefficient) in self.coefficients.iter().enumerate() {
            add_scaled(&mut h, C64::new(period.powi(ell as i32), 0.0), coefficient);
        }
        h
    }
}

pub fn fm_expansion(family: &HamiltonianFamily, space: &CutoffSpace, order: usize, quad_tol: f64) -> Result<FMExpansion> {
    if order > 2 {
        return Err(Error::UnsupportedOrder(order));
    }
    let coefficients = (0..=order).map(|ell| fm_coefficient(family, space, ell, quad_tol)).collect::<Result<Vec<_>>>()?;
    Ok(FMExpansion { coefficients, space: space.clone() })
}

pub fn effective_hamiltonian(
    family: &HamiltonianFamily,
    space: &CutoffSpace,
    order: usize,
    period: f64,
    quad_tol: f64,
) -> Result<CMatrix> {
    Ok(fm_expansion(family, space, order, quad_tol)?.effective(period))
}

/// `‖U_N^{(T)}(qT,0) − exp(−iqT·H_{FM,L,N}^{(T)})‖` with
/// `U_N^{(T)}(qT,0) = (U_N^{(T)}(T,0))^q`.
pub fn stroboscopic_error(
    family: &HamiltonianFamily,
    space: &CutoffSpace,
    order: usize,
    period: f64,
    q: i64,
    tol: f64,
) -> Result<f64> {
    if q == 0 {
        return Err(Error::InvalidParameters("q must be nonzero".into()));
    }
    require_unit_period(family)?;
    let rescaled = rescaled_family(family, period)?;
    let one_period = cutoff_propagator(&rescaled, space, 0.0, period, tol)?.matrix;
    let effective = effective_hamiltonian(family, space, order, period, DEFAULT_QUAD_TOL)?;
    let time = q as f64 * period;
    let approx = hermitian_function(&effective, |lambda| (-I * (time * lambda)).exp());
    Ok(spectral_norm(&(unitary_power(&one_period, q) - approx)))
}

/// `(N, ‖H_N^[ℓ] P_N u − H_{N_ref}^[ℓ] P_{N_ref} u‖₀)` for each cut-off.
pub fn fm_convergence_sweep(
    family: &HamiltonianFamily,
    ell: usize,
    u: &ScaleVector,
    cutoffs: &[f64],
    n_ref: f64,
    quad_tol: f64,
) -> Result<Vec<(f64, f64)>> {
    if cutoffs.iter().any(|&n| n > n_ref) {
        return Err(Error::InvalidParameters(format!("sweep cut-offs must not exceed N_ref = {n_ref}")));
    }
    let apply = |cutoff: f64| -> Result<ScaleVector> {
        let space = cutoff_space(family.model(), cutoff);
        let h = fm_coefficient(family, &space, ell, quad_tol)?;
        Ok(space.from_dense(&(h * space.to_dense(u)?)))
    };
    let reference = apply(n_ref)?;
    cutoffs.par_iter().map(|&n| Ok((n, apply(n)?.distance(&reference)?))).collect()
}

/// `(N, ‖e^{−itH_{eff,L,N}} P_N u − e^{−itH_{eff,L,N_ref}} P_{N_ref} u‖₀)`:
/// the finite-cut-off proxy for strong convergence of effective groups.
#[allow(clippy::too_many_arguments)]
pub fn effective_group_convergence(
    family: &HamiltonianFamily,
    order: usize,
    period: f64,
    time: f64,
    u: &ScaleVector,
    cutoffs: &[f64],
    n_ref: f64,
    quad_tol: f64,
) -> Result<Vec<(f64, f64)>> {
    if cutoffs.iter().any(|&n| n > n_ref) {
        return Err(Error::InvalidParameters(format!("sweep cut-offs must not exceed N_ref = {n_ref}")));
    }
    let evolve = |cutoff: f64| -> Result<ScaleVector> {
        let space = cutoff_space(family.model(), cutoff);
        let h = effective_hamiltonian(family, &space, order, period, quad_tol)?;
        let group = hermitian_function(&h, |lambda| (-I * (time * lambda)).exp());
        Ok(space.from_dense(&(group * space.to_dense(u)?)))
    };
    let reference = evolve(n_ref)?;
    cutoffs.par_iter().map(|&n| Ok((n, evolve(n)?.distance(&reference)?))).collect()
}
