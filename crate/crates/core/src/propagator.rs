//! Cut-off propagators.
//!
//! `U_{N,M}(t,s)` is the left-endpoint product
//! `exp(−iΔt_{M−1}H_N(t_{M−1})) ⋯ exp(−iΔt_0 H_N(t_0))`. The converged
//! propagator `U_N(t,s)` is its limit under dyadic refinement of a uniform
//! mesh; the limit is taken with a Richardson table over the refinement
//! levels and projected back onto the unitary group. The exact flow is
//! stood in for by a cut-off propagator at a much larger cut-off whose own
//! convergence is checked by doubling that cut-off.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{loglog_slope, SlopeFit};
use crate::hamiltonian::{apply_family, CutoffHamiltonian, HamiltonianFamily};
use crate::linalg::{
    hermitian_defect, hermitian_function, is_diagonal, max_abs, nearest_unitary, spectral_norm, unitarity_defect, CMatrix,
    CVector, C64, I,
};
use crate::quadrature::GaussLegendre;
use crate::spectral_model::{cutoff_space, project, CutoffSpace, ScaleVector};

/// Accepted propagators satisfy `‖U†U − I‖ ≤ UNITARITY_TOL`.
pub const UNITARITY_TOL: f64 = 1e-10;
/// Refinement stops with an error beyond this many slices.
pub const MAX_SLICES: usize = 1 << 16;
/// Deepest Richardson column used when extrapolating the dyadic sequence.
pub const RICHARDSON_DEPTH: usize = 5;
/// Convergence threshold for the panel-doubled Duhamel quadrature.
pub const DUHAMEL_QUAD_TOL: f64 = 1e-8;
pub const DUHAMEL_MAX_PANELS: usize = 64;

/// `s = t_0 < t_1 < … < t_M = t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    nodes: Vec<f64>,
}

impl Partition {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidPartition("need at least one slice".into()));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPartition("non-finite node".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPartition("nodes must be strictly increasing".into()));
        }
        Ok(Partition { nodes })
    }

    pub fn uniform(s: f64, t: f64, slices: usize) -> Result<Self> {
        if slices == 0 {
            return Err(Error::InvalidPartition("need at least one slice".into()));
        }
        let h = (t - s) / slices as f64;
        let mut nodes: Vec<f64> = (0..slices).map(|j| s + h * j as f64).collect();
        nodes.push(t);
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn slices(&self) -> usize {
        self.nodes.len() - 1
    }

    /// `|Π_M| = max Δt_j`.
    pub fn mesh(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// A single left-endpoint product with `slices` factors.
    Sliced { slices: usize },
    /// Dyadic limit; `slices` is the finest level used.
    Limit { slices: usize, extrapolated: bool },
    /// Large-cut-off stand-in for the exact flow.
    Reference { cutoff: f64 },
}

#[derive(Debug, Clone)]
pub struct PropagatorMatrix {
    pub matrix: CMatrix,
    pub space: CutoffSpace,
    pub interval: (f64, f64),
    pub method: Method,
    pub unitarity_defect: f64,
}

impl PropagatorMatrix {
    /// `U·P_N u` as a vector of the model.
    pub fn apply(&self, u: &ScaleVector) -> Result<ScaleVector> {
        let v = self.space.to_dense(u)?;
        Ok(self.space.from_dense(&(&self.matrix * v)))
    }

    fn accepted(self) -> Result<Self> {
        if self.unitarity_defect > UNITARITY_TOL {
            return Err(Error::NotUnitary(self.unitarity_defect));
        }
        Ok(self)
    }
}

/// `exp(−i·dt·H)` through the eigendecomposition of the Hermitian `H`,
/// formed as `I + V(e^{−i·dt·Λ} − 1)V†` so that eigenvector rounding enters
/// at `O(ε·dt·‖H‖)` rather than `O(ε)` per step.
pub fn expm_step(h: &CMatrix, dt: f64) -> Result<CMatrix> {
    let defect = hermitian_defect(h);
    if defect > 1e-12 * max_abs(h) {
        return Err(Error::NonHermitian(defect));
    }
    let n = h.nrows();
    if dt == 0.0 {
        return Ok(CMatrix::identity(n, n));
    }
    if is_diagonal(h) {
        return Ok(hermitian_function(h, |lambda| (-I * (dt * lambda)).exp()));
    }
    // e^{−ix} − 1 = −2i·sin(x/2)·e^{−ix/2}, free of cancellation for small x
    let mut step = hermitian_function(h, |lambda| {
        let half = 0.5 * dt * lambda;
        -2.0 * I * half.sin() * (-I * half).exp()
    });
    for i in 0..n {
        step[(i, i)] += C64::new(1.0, 0.0);
    }
    Ok(step)
}

fn sliced_product(hn: &CutoffHamiltonian, partition: &Partition) -> Result<CMatrix> {
    let d = hn.space().dim();
    let nodes = partition.nodes();
    let steps: Vec<(f64, f64)> = nodes.windows(2).map(|w| (w[0], w[1] - w[0])).collect();
    // Diagonal generators commute with each other: accumulate phases only.
    let first = hn.matrix_at(steps[0].0);
    if is_diagonal(&first) {
        let mut phases = vec![C64::new(1.0, 0.0); d];
        let mut all_diagonal = true;
        for &(tj, dt) in &steps {
            let h = hn.matrix_at(tj);
            if !is_diagonal(&h) {
                all_diagonal = false;
                break;
            }
            for (i, p) in phases.iter_mut().enumerate() {
                *p *= (-I * (dt * h[(i, i)].re)).exp();
            }
        }
        if all_diagonal {
            return Ok(CMatrix::from_diagonal(&CVector::from_vec(phases)));
        }
    }
    let mut u = CMatrix::identity(d, d);
    for &(tj, dt) in &steps {
        let e = expm_step(&hn.matrix_at(tj), dt)?;
        u = e * u;
    }
    Ok(u)
}

/// `U_{N,M}(t,s)` for an arbitrary partition.
pub fn time_sliced_propagator(
    family: &HamiltonianFamily,
    space: &CutoffSpace,
    partition: &Partition,
) -> Result<PropagatorMatrix> {
    let hn = family.on_space(space)?;
    let matrix = sliced_product(&hn, partition)?;
    let unitarity_defect = unitarity_defect(&matrix);
    PropagatorMatrix {
        matrix,
        space: space.clone(),
        interval: (partition.start(), partition.end()),
        method: Method::Sliced { slices: partition.slices() },
        unitarity_defect,
    }
    .accepted()
}

/// `U_N(t,s)` as the limit of uniform left-endpoint products under
/// `M → 2M`, stopping once successive estimates differ by less than `tol`.
pub fn cutoff_propagator(
    family: &HamiltonianFamily,
    space: &CutoffSpace,
    s: f64,
    t: f64,
    tol: f64,
) -> Result<PropagatorMatrix> {
    let hn = family.on_space(space)?;
    propagate_limit(&hn, s, t, tol)
}

fn propagate_limit(hn: &CutoffHamiltonian, s: f64, t: f64, tol: f64) -> Result<PropagatorMatrix> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameters(format!("tolerance {tol} must be positive")));
    }
    let space = hn.space().clone();
    let d = space.dim();
    if s == t {
        return Ok(PropagatorMatrix {
            matrix: CMatrix::identity(d, d),
            space,
            interval: (s, t),
            method: Method::Limit { slices: 0, extrapolated: false },
            unitarity_defect: 0.0,
        });
    }
    if !(t > s) {
        return Err(Error::InvalidPartition(format!("interval [{s}, {t}] is reversed")));
    }

    let mut slices = 1;
    let mut row = vec![sliced_product(hn, &Partition::uniform(s, t, slices)?)?];
    let mut best = row[0].clone();
    let mut level = 0;
    let mut last_change = f64::INFINITY;
    // acceptance needs two consecutive quiet levels: coarse uniform grids
    // can alias a periodic drive onto its zeros
    let mut raw_quiet = false;
    let mut extrapolated_quiet = false;
    loop {
        level += 1;
        slices *= 2;
        if slices > MAX_SLICES {
            return Err(Error::RefinementLimitExceeded { max_slices: MAX_SLICES, tol, last_change });
        }
        let raw = sliced_product(hn, &Partition::uniform(s, t, slices)?)?;
        let raw_change = spectral_norm(&(&raw - &row[0]));
        let quiet = raw_change < tol;
        if quiet && raw_quiet {
            let unitarity_defect = unitarity_defect(&raw);
            return PropagatorMatrix {
                matrix: raw,
                space,
                interval: (s, t),
                method: Method::Limit { slices, extrapolated: false },
                unitarity_defect,
            }
            .accepted();
        }
        let depth = level.min(RICHARDSON_DEPTH);
        let mut next = Vec::with_capacity(depth + 1);
        next.push(raw);
        for j in 1..=depth {
            let factor = 1.0 / ((1u64 << j) as f64 - 1.0);
            let refined = &next[j - 1] + (&next[j - 1] - &row[j - 1]) * C64::new(factor, 0.0);
            next.push(refined);
        }
        raw_quiet = quiet;
        let estimate = next[depth].clone();
        last_change = spectral_norm(&(&estimate - &best));
        best = estimate;
        row = next;
        let settled = level >= 2 && last_change < tol;
        if settled && extrapolated_quiet {
            let matrix = nearest_unitary(&best);
            let unitarity_defect = unitarity_defect(&matrix);
            return PropagatorMatrix {
                matrix,
                space,
                interval: (s, t),
                method: Method::Limit { slices, extrapolated: true },
                unitarity_defect,
            }
            .accepted();
        }
        extrapolated_quiet = settled;
    }
}

/// Galerkin stand-in for `U(t,s)u` and its own convergence diagnostic.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub state: ScaleVector,
    pub cutoff: f64,
    /// `‖U_{2N_ref}u − U_{N_ref}u‖₀`.
    pub self_check_delta: f64,
}

fn check_support(u: &ScaleVector, n_ref: f64) -> Result<()> {
    let limit = n_ref / 4.0;
    if let Some(support) = u.support_eigenvalue() {
        if support > limit {
            return Err(Error::SupportTooCloseToCutoff { support, limit });
        }
    }
    Ok(())
}

fn evolve_at_cutoff(family: &HamiltonianFamily, cutoff: f64, s: f64, t: f64, u: &ScaleVector, tol: f64) -> Result<ScaleVector> {
    let space = cutoff_space(family.model(), cutoff);
    cutoff_propagator(family, &space, s, t, tol)?.apply(u)
}

/// `U_{N_ref}(t,s) P_{N_ref} u`, validated by comparing with `2·N_ref`.
pub fn reference_solution(
    family: &HamiltonianFamily,
    n_ref: f64,
    s: f64,
    t: f64,
    u: &ScaleVector,
    tol: f64,
) -> Result<ReferenceSolution> {
    check_support(u, n_ref)?;
    let (state, doubled) = rayon::join(
        || evolve_at_cutoff(family, n_ref, s, t, u, tol),
        || evolve_at_cutoff(family, 2.0 * n_ref, s, t, u, tol),
    );
    let state = state?;
    let self_check_delta = state.distance(&doubled?)?;
    let allowed = 10.0 * tol;
    if !(self_check_delta < allowed) {
        return Err(Error::OracleSelfCheckFailed { delta: self_check_delta, allowed });
    }
    Ok(ReferenceSolution { state, cutoff: n_ref, self_check_delta })
}

/// Reference states at ascending `times ≥ s`, propagated piecewise at
/// cut-off `n_ref` (no doubling check).
pub fn reference_trajectory(
    family: &HamiltonianFamily,
    n_ref: f64,
    s: f64,
    times: &[f64],
    u: &ScaleVector,
    tol: f64,
) -> Result<Vec<ScaleVector>> {
    check_support(u, n_ref)?;
    let space = cutoff_space(family.model(), n_ref);
    let hn = family.on_space(&space)?;
    let mut current = project(&space, u)?;
    let mut clock = s;
    let mut out = Vec::with_capacity(times.len());
    for &tau in times {
        if tau < clock {
            return Err(Error::InvalidPartition("trajectory times must be ascending".into()));
        }
        current = propagate_limit(&hn, clock, tau, tol)?.apply(&current)?;
        clock = tau;
        out.push(current.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuhamelReport {
    /// `‖P_N U(t,s)u − U_N(t,s)P_N u‖₀`.
    pub error: f64,
    /// `∫_s^t ‖H(τ)(I − P_N)U(τ,s)u‖₀ dτ`.
    pub bound: f64,
    pub panels: usize,
    pub oracle_delta: f64,
}

/// Measured cut-off error against the high-energy remainder integral.
#[allow(clippy::too_many_arguments)]
pub fn duhamel_bound(
    family: &HamiltonianFamily,
    n: f64,
    n_ref: f64,
    u: &ScaleVector,
    s: f64,
    t: f64,
    quad_points: usize,
    tol: f64,
) -> Result<DuhamelReport> {
    if !(n < n_ref / 4.0) {
        return Err(Error::InvalidParameters(format!("cut-off {n} must stay below N_ref/4 = {}", n_ref / 4.0)));
    }
    let space = cutoff_space(family.model(), n);
    let reference = reference_solution(family, n_ref, s, t, u, tol)?;
    let cut = cutoff_propagator(family, &space, s, t, tol)?.apply(u)?;
    let error = project(&space, &reference.state)?.distance(&cut)?;

    let rule = GaussLegendre::new(quad_points.max(1));
    let band = family.max_width();
    let integrate = |panels: usize| -> Result<f64> {
        let points = rule.composite(s, t, panels);
        let times: Vec<f64> = points.iter().map(|&(x, _)| x).collect();
        let states = reference_trajectory(family, n_ref, s, &times, u, tol)?;
        let mut total = 0.0;
        for ((tau, w), state) in points.iter().zip(&states) {
            let high = state.sub(&project(&space, state)?)?;
            total += w * apply_family(family, *tau, &high, band)?.norm();
        }
        Ok(total)
    };
    let mut panels = 1;
    let mut bound = integrate(panels)?;
    loop {
        if panels >= DUHAMEL_MAX_PANELS {
            return Err(Error::QuadratureNonConvergence { tol: DUHAMEL_QUAD_TOL, last_change: f64::NAN });
        }
        panels *= 2;
        let refined = integrate(panels)?;
        let change = (refined - bound).abs();
        bound = refined;
        if change < DUHAMEL_QUAD_TOL {
            break;
        }
    }
    Ok(DuhamelReport { error, bound, panels, oracle_delta: reference.self_check_delta })
}

/// `W^{−r}[W^{2r}, H]W^{−r}` with `W = diag(1 + λ_j)`.
pub fn weighted_commutator(h: &CMatrix, weights: &[f64], r: f64) -> CMatrix {
    let n = h.nrows();
    CMatrix::from_fn(n, n, |i, j| {
        let (wi, wj) = (weights[i], weights[j]);
        let factor = (wi / wj).powf(r) - (wj / wi).powf(r);
        h[(i, j)] * factor
    })
}

/// Largest `‖W^{−r}[W^{2r}, H_N(τ)]W^{−r}‖` over a uniform grid on `[s, t]`
/// (endpoints included). For this anti-Hermitian matrix the spectral norm is
/// the best constant in `|⟨[W^{2r},H_N]v,v⟩| ≤ C‖v‖_r²`.
pub fn commutator_constant(
    family: &HamiltonianFamily,
    space: &CutoffSpace,
    r: f64,
    interval: (f64, f64),
    grid_points: usize,
) -> Result<f64> {
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }
    if !(r >= 0.0) {
        return Err(Error::InvalidParameters(format!("r = {r} must be ≥ 0")));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let hn = family.on_space(space)?;
    let weights = space.weight_diagonal();
    let points = grid_points.max(2);
    let (s, t) = interval;
    let worst = (0..points)
        .map(|i| s + (t - s) * i as f64 / (points - 1) as f64)
        .map(|tau| {
            let k = weighted_commutator(&hn.matrix_at(tau), &weights, r);
            // i·K is Hermitian
            crate::linalg::hermitian_norm(&crate::linalg::symmetrize(&(k * I)))
        })
        .fold(0.0, f64::max);
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityCheck {
    /// `max_j ‖U_N(t,s)e_j‖_r / ‖e_j‖_r`.
    pub max_ratio: f64,
    /// `exp(C|t − s|/2)`.
    pub bound: f64,
}

impl StabilityCheck {
    pub fn holds(&self) -> bool {
        self.max_ratio <= self.bound * (1.0 + 1e-8)
    }
}

pub fn energy_stability_check(
    family: &HamiltonianFamily,
    space: &CutoffSpace,
    r: f64,
    s: f64,
    t: f64,
    constant: f64,
    tol: f64,
) -> Result<StabilityCheck> {
    let bound = (constant * (t - s).abs() / 2.0).exp();
    let hn = family.on_space(space)?;
    if hn.term_matrices().iter().all(is_diagonal) {
        // U is a diagonal phase and commutes with the weights
        return Ok(StabilityCheck { max_ratio: 1.0, bound });
    }
    let u = propagate_limit(&hn, s, t, tol)?;
    let weights: Vec<f64> = space.weight_diagonal().into_iter().map(|w| w.powf(r)).collect();
    let d = space.dim();
    let mut max_ratio = 0.0_f64;
    for j in 0..d {
        let column_norm = (0..d).map(|i| (weights[i] * u.matrix[(i, j)].norm()).powi(2)).sum::<f64>().sqrt();
        max_ratio = max_ratio.max(column_norm / weights[j]);
    }
    Ok(StabilityCheck { max_ratio, bound })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub cutoff: f64,
    pub dim: usize,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceSweep {
    pub points: Vec<SweepPoint>,
    pub oracle_delta: f64,
}

/// `‖U_N(t,s)P_N u − U(t,s)u‖₀` for each cut-off, in the given order.
pub fn convergence_sweep_n(
    family: &HamiltonianFamily,
    u: &ScaleVector,
    s: f64,
    t: f64,
    cutoffs: &[f64],
    n_ref: f64,
    tol: f64,
) -> Result<ConvergenceSweep> {
    if cutoffs.iter().any(|&n| n > n_ref / 4.0) {
        return Err(Error::InvalidParameters(format!("sweep cut-offs must not exceed N_ref/4 = {}", n_ref / 4.0)));
    }
    let reference = reference_solution(family, n_ref, s, t, u, tol)?;
    let points = cutoffs
        .par_iter()
        .map(|&n| {
            let space = cutoff_space(family.model(), n);
            let evolved = cutoff_propagator(family, &space, s, t, tol)?.apply(u)?;
            Ok(SweepPoint { cutoff: n, dim: space.dim(), error: evolved.distance(&reference.state)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceSweep { points, oracle_delta: reference.self_check_delta })
}

/// Error floor below which a slicing sweep is reported as degenerate.
pub const DEGENERATE_ERROR: f64 = 1e-13;
/// Tolerance of the limit used as the slicing oracle.
pub const SLICING_ORACLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SlicingOrder {
    /// `(M, ‖U_{N,M} − U_N‖)`.
    pub errors: Vec<(usize, f64)>,
    /// `None` when every error is below [`DEGENERATE_ERROR`].
    pub fit: Option<SlopeFit>,
}

impl SlicingOrder {
    pub fn is_degenerate(&self) -> bool {
        self.fit.is_none()
    }
}

/// Slope of `ln ‖U_{N,M} − oracle‖` against `ln(1/M)`.
pub fn slicing_order_against(
    family: &HamiltonianFamily,
    space: &CutoffSpace,
    s: f64,
    t: f64,
    slices: &[usize],
    oracle: &CMatrix,
) -> Result<SlicingOrder> {
    if slices.len() < 4 {
        return Err(Error::InvalidParameters("need at least four slice counts".into()));
    }
    if slices.windows(2).any(|w| w[1] != 2 * w[0]) || slices[0] == 0 {
        return Err(Error::InvalidParameters("slice counts must be dyadic".into()));
    }
    let errors = slices
        .par_iter()
        .map(|&m| {
            let u = time_sliced_propagator(family, space, &Partition::uniform(s, t, m)?)?;
            Ok((m, spectral_norm(&(&u.matrix - oracle))))
        })
        .collect::<Result<Vec<_>>>()?;
    if errors.iter().all(|&(_, e)| e < DEGENERATE_ERROR) {
        return Ok(SlicingOrder { errors, fit: None });
    }
    let xs: Vec<f64> = errors.iter().map(|&(m, _)| 1.0 / m as f64).collect();
    let ys: Vec<f64> = errors.iter().map(|&(_, e)| e).collect();
    let fit = loglog_slope(&xs, &ys)?;
    Ok(SlicingOrder { errors, fit: Some(fit) })
}

/// Slicing order against the extrapolated limit `U_N(t,s)`.
pub fn slicing_order_sweep(
    family: &HamiltonianFamily,
    space: &CutoffSpace,
    s: f64,
    t: f64,
    slices: &[usize],
) -> Result<SlicingOrder> {
    let oracle = cutoff_propagator(family, space, s, t, SLICING_ORACLE_TOL)?;
    slicing_order_against(family, space, s, t, slices, &oracle.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{assemble_family, Coefficient};
    use crate::models;
    use crate::spectral_model::{fourier_index, sobolev_norm};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![0.0]).is_err());
        assert!(Partition::new(vec![0.0, 0.5, 0.5]).is_err());
        let p = Partition::new(vec![0.0, 0.1, 0.4, 1.0]).unwrap();
        assert_eq!(p.slices(), 3);
        assert!((p.mesh() - 0.6).abs() < 1e-15);
        let u = Partition::uniform(0.0, 2.0, 8).unwrap();
        assert_eq!(u.end(), 2.0);
        assert!((u.mesh() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn expm_step_examples() {
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(-2.5, 0.0)]));
        let e = expm_step(&d, 0.3).unwrap();
        assert!((e[(0, 0)] - (-I * 0.3).exp()).norm() < 1e-15);
        assert!((e[(1, 1)] - (I * 0.75).exp()).norm() < 1e-15);

        let g = 1.7;
        let sx = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(g, 0.0), c(g, 0.0), c(0.0, 0.0)]);
        let e = expm_step(&sx, std::f64::consts::PI / g).unwrap();
        assert!(spectral_norm(&(e + CMatrix::identity(2, 2))) < 1e-14);

        assert_eq!(expm_step(&sx, 0.0).unwrap(), CMatrix::identity(2, 2));

        let bad = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(expm_step(&bad, 1.0), Err(Error::NonHermitian(_))));
    }

    #[test]
    fn single_slice_is_left_endpoint_exponential() {
        let fam = models::driven_circle(1.0).unwrap();
        let space = cutoff_space(fam.model(), 10.0);
        let delta = 0.2;
        let u = time_sliced_propagator(&fam, &space, &Partition::uniform(0.0, delta, 1).unwrap()).unwrap();
        let h0 = crate::hamiltonian::cutoff_matrix(&fam, &space, 0.0).unwrap();
        let expected = expm_step(&h0, delta).unwrap();
        assert!(spectral_norm(&(u.matrix - expected)) < 1e-14);
    }

    #[test]
    fn autonomous_products_are_partition_independent() {
        let model = models::spin_model().unwrap();
        let fam = assemble_family(
            &model,
            vec![("sigma_x".into(), Coefficient::constant(0.8)), ("sigma_z".into(), Coefficient::constant(0.3))],
            Some(1.0),
            0.0,
        )
        .unwrap();
        let space = models::spin_space(&fam);
        let exact = expm_step(&crate::hamiltonian::cutoff_matrix(&fam, &space, 0.0).unwrap(), 1.3).unwrap();
        for m in [1, 3, 16] {
            let u = time_sliced_propagator(&fam, &space, &Partition::uniform(0.2, 1.5, m).unwrap()).unwrap();
            assert!(spectral_norm(&(&u.matrix - &exact)) < 1e-12);
        }
        let limit = cutoff_propagator(&fam, &space, 0.2, 1.5, 1e-10).unwrap();
        assert_eq!(limit.method, Method::Limit { slices: 4, extrapolated: false });
    }

    /// Closed form for `H(t) = (1 + t)·H₀` with `H₀ = diag(1, 2, 3)`:
    /// `exp(−i(t − s + (t² − s²)/2)·H₀)`.
    fn ramp_closed_form(s: f64, t: f64, dim: usize) -> CMatrix {
        let phase = t - s + (t * t - s * s) / 2.0;
        CMatrix::from_diagonal(&CVector::from_fn(dim, |i, _| (-I * (phase * (i + 1) as f64)).exp()))
    }

    #[test]
    fn commuting_ramp_matches_closed_form() {
        let model = models::index_model_with(vec![]).unwrap();
        let fam = models::ramp_family(&model).unwrap();
        let space = cutoff_space(&model, 3.5);
        let u = cutoff_propagator(&fam, &space, 0.0, 1.0, 1e-10).unwrap();
        let exact = ramp_closed_form(0.0, 1.0, 3);
        assert!(spectral_norm(&(&u.matrix - &exact)) < 1e-9);

        let order = slicing_order_against(&fam, &space, 0.0, 1.0, &[64, 128, 256, 512, 1024], &exact).unwrap();
        let slope = order.fit.unwrap().slope;
        assert!((slope - 1.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn coincident_times_give_identity() {
        let fam = models::driven_circle(1.0).unwrap();
        let space = cutoff_space(fam.model(), 20.0);
        let u = cutoff_propagator(&fam, &space, 0.4, 0.4, 1e-10).unwrap();
        assert_eq!(u.matrix, CMatrix::identity(space.dim(), space.dim()));
    }

    #[test]
    fn refinement_limit_is_reported() {
        let fam = models::driven_circle(1.0).unwrap();
        let space = cutoff_space(fam.model(), 10.0);
        // below the round-off floor of the products
        let err = cutoff_propagator(&fam, &space, 0.0, 1.0, 1e-30).unwrap_err();
        assert!(matches!(err, Error::RefinementLimitExceeded { .. }));
    }

    #[test]
    fn free_evolution_reference_is_phase() {
        let fam = models::free_circle().unwrap();
        let m = fam.model().clone();
        let j = fourier_index(3);
        let u = ScaleVector::basis(&m, j);
        let r = reference_solution(&fam, 80.0, 0.0, 0.7, &u, 1e-10).unwrap();
        let expected = (-I * (9.0 * 0.7)).exp();
        assert!((r.state.get(j) - expected).norm() < 1e-12);
        assert!((r.state.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn reference_rejects_support_near_cutoff() {
        let fam = models::free_circle().unwrap();
        let u = ScaleVector::basis(fam.model(), fourier_index(5));
        let err = reference_solution(&fam, 80.0, 0.0, 1.0, &u, 1e-10).unwrap_err();
        assert!(matches!(err, Error::SupportTooCloseToCutoff { .. }));
    }

    #[test]
    fn free_duhamel_is_exactly_zero() {
        let fam = models::free_circle().unwrap();
        let u = ScaleVector::basis(fam.model(), 1);
        let rep = duhamel_bound(&fam, 10.0, 80.0, &u, 0.0, 1.0, 8, 1e-10).unwrap();
        assert_eq!(rep.error, 0.0);
        assert_eq!(rep.bound, 0.0);
    }

    #[test]
    fn commutator_constant_controls() {
        let free = models::free_circle().unwrap();
        let space = cutoff_space(free.model(), 20.0);
        assert_eq!(commutator_constant(&free, &space, 1.0, (0.0, 1.0), 17).unwrap(), 0.0);
        let driven = models::driven_circle(1.0).unwrap();
        let space = cutoff_space(driven.model(), 20.0);
        assert_eq!(commutator_constant(&driven, &space, 0.0, (0.0, 1.0), 17).unwrap(), 0.0);
        let c1 = commutator_constant(&driven, &space, 1.0, (0.0, 1.0), 65).unwrap();
        assert!(c1 > 0.0 && c1.is_finite());
    }

    #[test]
    fn weighted_commutator_is_best_quadratic_form_constant() {
        // |⟨[W²,H]v,v⟩| ≤ C‖v‖₁² for random v, with equality approached
        let driven = models::driven_circle(1.0).unwrap();
        let space = cutoff_space(driven.model(), 10.0);
        let h = crate::hamiltonian::cutoff_matrix(&driven, &space, 0.25).unwrap();
        let w = space.weight_diagonal();
        let c_best = commutator_constant(&driven, &space, 1.0, (0.25, 0.25), 2).unwrap();
        let w2 = CMatrix::from_diagonal(&CVector::from_iterator(w.len(), w.iter().map(|x| c(x * x, 0.0))));
        let comm = &w2 * &h - &h * &w2;
        let mut state = 12345u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for _ in 0..50 {
            let v = CVector::from_fn(w.len(), |_, _| c(rnd(), rnd()));
            let form = (v.adjoint() * &comm * &v)[(0, 0)].norm();
            let sv = space.from_dense(&v);
            let rhs = c_best * sobolev_norm(&sv, 1.0).powi(2);
            assert!(form <= rhs * (1.0 + 1e-12));
        }
    }

    #[test]
    fn diagonal_stability_ratio_is_one() {
        let free = models::free_circle().unwrap();
        let space = cutoff_space(free.model(), 20.0);
        let check = energy_stability_check(&free, &space, 1.0, 0.0, 1.0, 0.0, 1e-10).unwrap();
        assert_eq!(check.max_ratio, 1.0);
        assert_eq!(check.bound, 1.0);
    }

    #[test]
    fn autonomous_slicing_sweep_is_degenerate() {
        let free = models::free_circle().unwrap();
        let space = cutoff_space(free.model(), 20.0);
        let order = slicing_order_sweep(&free, &space, 0.0, 1.0, &[4, 8, 16, 32]).unwrap();
        assert!(order.is_degenerate());
    }

    #[test]
    fn singleton_sweep() {
        let fam = models::free_circle().unwrap();
        let u = ScaleVector::basis(fam.model(), 1);
        let sweep = convergence_sweep_n(&fam, &u, 0.0, 1.0, &[10.0], 80.0, 1e-10).unwrap();
        assert_eq!(sweep.points.len(), 1);
        assert_eq!(sweep.points[0].error, 0.0);
    }
}
