//! Time-dependent Hamiltonians `H(t) = Σ_m c_m(t)·O_m` built from banded
//! element providers with real scalar coefficients, and their cut-off
//! matrices `H_N(t) = P_N H(t) P_N`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{add_scaled, hermitian_defect, hermitian_norm, max_abs, CMatrix, C64};
use crate::spectral_model::{project, BandedOperator, CutoffSpace, ScaleVector, SpectralModel};

/// Grid size used to validate declared periods.
pub const PERIOD_CHECK_POINTS: usize = 32;
pub const PERIOD_CHECK_TOL: f64 = 1e-12;

/// Named coefficient profiles available to experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoefficientShape {
    Const,
    Sin2Pi,
    Cos2Pi,
    /// `x ↦ x`
    Ramp,
}

impl CoefficientShape {
    pub const ALL: [CoefficientShape; 4] =
        [CoefficientShape::Const, CoefficientShape::Sin2Pi, CoefficientShape::Cos2Pi, CoefficientShape::Ramp];

    pub fn eval(self, x: f64) -> f64 {
        match self {
            CoefficientShape::Const => 1.0,
            CoefficientShape::Sin2Pi => (2.0 * PI * x).sin(),
            CoefficientShape::Cos2Pi => (2.0 * PI * x).cos(),
            CoefficientShape::Ramp => x,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CoefficientShape::Const => "const",
            CoefficientShape::Sin2Pi => "sin_2pi",
            CoefficientShape::Cos2Pi => "cos_2pi",
            CoefficientShape::Ramp => "ramp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Clone)]
enum Profile {
    Shape(CoefficientShape),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// Real coefficient `t ↦ amplitude · profile(t / time_scale)`.
#[derive(Clone)]
pub struct Coefficient {
    profile: Profile,
    amplitude: f64,
    time_scale: f64,
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let profile = match &self.profile {
            Profile::Shape(s) => s.name(),
            Profile::Custom(_) => "custom",
        };
        write!(f, "{}·{}(t/{})", self.amplitude, profile, self.time_scale)
    }
}

impl Coefficient {
    pub fn new(shape: CoefficientShape, amplitude: f64) -> Self {
        Coefficient { profile: Profile::Shape(shape), amplitude, time_scale: 1.0 }
    }

    pub fn constant(amplitude: f64) -> Self {
        Self::new(CoefficientShape::Const, amplitude)
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient { profile: Profile::Custom(Arc::new(f)), amplitude: 1.0, time_scale: 1.0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let x = t / self.time_scale;
        let p = match &self.profile {
            Profile::Shape(s) => s.eval(x),
            Profile::Custom(f) => f(x),
        };
        self.amplitude * p
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.profile, Profile::Shape(CoefficientShape::Const))
    }

    pub fn shape(&self) -> Option<CoefficientShape> {
        match self.profile {
            Profile::Shape(s) => Some(s),
            Profile::Custom(_) => None,
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    /// `t ↦ c(t / factor)`.
    pub fn rescaled(&self, factor: f64) -> Self {
        Coefficient { time_scale: self.time_scale * factor, ..self.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct FamilyTerm {
    pub operator: BandedOperator,
    pub coefficient: Coefficient,
}

/// `H(t) = Σ_m c_m(t) O_m` over the element providers of a model.
#[derive(Debug, Clone)]
pub struct HamiltonianFamily {
    model: Arc<SpectralModel>,
    terms: Vec<FamilyTerm>,
    period: Option<f64>,
    loss_order: f64,
}

pub fn assemble_family(
    model: &Arc<SpectralModel>,
    terms: Vec<(String, Coefficient)>,
    period: Option<f64>,
    loss_order: f64,
) -> Result<HamiltonianFamily> {
    if !(loss_order >= 0.0) {
        return Err(Error::InvalidParameters(format!("loss order {loss_order} must be ≥ 0")));
    }
    let mut resolved = Vec::with_capacity(terms.len());
    for (name, coefficient) in terms {
        let operator = model.term(&name).ok_or_else(|| Error::UnresolvedTerm(name.clone()))?.clone();
        resolved.push(FamilyTerm { operator, coefficient });
    }
    let family = HamiltonianFamily { model: Arc::clone(model), terms: resolved, period, loss_order };
    if let Some(p) = period {
        if !(p > 0.0) {
            return Err(Error::InvalidParameters(format!("period {p} must be positive")));
        }
        family.check_period(p)?;
    }
    Ok(family)
}

impl HamiltonianFamily {
    fn check_period(&self, period: f64) -> Result<()> {
        for term in &self.terms {
            let scale = term.coefficient.amplitude().abs().max(1.0);
            for i in 0..PERIOD_CHECK_POINTS {
                let t = period * i as f64 / PERIOD_CHECK_POINTS as f64;
                let defect = (term.coefficient.eval(t + period) - term.coefficient.eval(t)).abs();
                if defect > PERIOD_CHECK_TOL * scale {
                    return Err(Error::NotPeriodic { term: term.operator.name().to_string(), period, defect });
                }
            }
        }
        Ok(())
    }

    pub fn model(&self) -> &Arc<SpectralModel> {
        &self.model
    }

    pub fn terms(&self) -> &[FamilyTerm] {
        &self.terms
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn loss_order(&self) -> f64 {
        self.loss_order
    }

    /// Widest coupling among the terms.
    pub fn max_width(&self) -> usize {
        self.terms.iter().map(|t| t.operator.width()).max().unwrap_or(0)
    }

    pub fn is_autonomous(&self) -> bool {
        self.terms.iter().all(|t| t.coefficient.is_constant())
    }

    pub fn coefficients_at(&self, t: f64) -> Vec<f64> {
        self.terms.iter().map(|term| term.coefficient.eval(t)).collect()
    }

    /// Same operators with `t ↦ c_m(t / factor)` and the period scaled.
    pub(crate) fn with_rescaled_time(&self, factor: f64) -> HamiltonianFamily {
        HamiltonianFamily {
            model: Arc::clone(&self.model),
            terms: self
                .terms
                .iter()
                .map(|t| FamilyTerm { operator: t.operator.clone(), coefficient: t.coefficient.rescaled(factor) })
                .collect(),
            period: self.period.map(|p| p * factor),
            loss_order: self.loss_order,
        }
    }

    /// Precomputes the term compressions on a space.
    pub fn on_space(&self, space: &CutoffSpace) -> Result<CutoffHamiltonian> {
        if space.is_empty() {
            return Err(Error::EmptySpace);
        }
        if !space.same_model(&self.model) {
            return Err(Error::ModelMismatch);
        }
        let term_matrices = self.terms.iter().map(|t| t.operator.matrix_on(space)).collect();
        Ok(CutoffHamiltonian { family: self.clone(), space: space.clone(), term_matrices })
    }
}

/// `H_N(t)` with the term compressions cached.
#[derive(Debug, Clone)]
pub struct CutoffHamiltonian {
    family: HamiltonianFamily,
    space: CutoffSpace,
    term_matrices: Vec<CMatrix>,
}

impl CutoffHamiltonian {
    pub fn space(&self) -> &CutoffSpace {
        &self.space
    }

    pub fn family(&self) -> &HamiltonianFamily {
        &self.family
    }

    pub fn term_matrices(&self) -> &[CMatrix] {
        &self.term_matrices
    }

    pub fn matrix_at(&self, t: f64) -> CMatrix {
        let d = self.space.dim();
        let mut h = CMatrix::zeros(d, d);
        for (term, m) in self.family.terms.iter().zip(&self.term_matrices) {
            let c = term.coefficient.eval(t);
            if c != 0.0 {
                add_scaled(&mut h, C64::new(c, 0.0), m);
            }
        }
        h
    }
}

/// `H_N(t) = Σ_m c_m(t)·P_N O_m P_N`.
pub fn cutoff_matrix(family: &HamiltonianFamily, space: &CutoffSpace, t: f64) -> Result<CMatrix> {
    let h = family.on_space(space)?.matrix_at(t);
    let defect = hermitian_defect(&h);
    if defect > 1e-14 * max_abs(&h) {
        return Err(Error::NonHermitian(defect));
    }
    Ok(h)
}

/// Largest spectral norm of `H_N(t)` over the periodic grid
/// `t_i = i·period/grid_points`; a lower estimate of `sup_t ‖H_N(t)‖`.
pub fn operator_norm_bound(family: &HamiltonianFamily, space: &CutoffSpace, grid_points: usize) -> Result<f64> {
    let period = family.period.ok_or(Error::Aperiodic)?;
    if grid_points < 2 {
        return Err(Error::InvalidParameters("need at least two grid points".into()));
    }
    let hn = family.on_space(space)?;
    Ok((0..grid_points)
        .map(|i| hermitian_norm(&hn.matrix_at(period * i as f64 / grid_points as f64)))
        .fold(0.0, f64::max))
}

/// `H(t)u` on a finitely supported vector, exactly.
pub fn apply_family(family: &HamiltonianFamily, t: f64, u: &ScaleVector, band: usize) -> Result<ScaleVector> {
    if !Arc::ptr_eq(u.model(), &family.model) {
        return Err(Error::ModelMismatch);
    }
    for term in &family.terms {
        if term.operator.width() > band {
            return Err(Error::BandTooSmall {
                term: term.operator.name().to_string(),
                width: term.operator.width(),
                band,
            });
        }
    }
    let mut out = ScaleVector::zero(&family.model);
    for term in &family.terms {
        let c = term.coefficient.eval(t);
        if c == 0.0 {
            continue;
        }
        let w = term.operator.width();
        for (k, uk) in u.iter() {
            for j in k.saturating_sub(w).max(1)..=k + w {
                let e = term.operator.element(j, k);
                if e != C64::new(0.0, 0.0) {
                    out.add_at(j, C64::new(c, 0.0) * e * uk);
                }
            }
        }
    }
    Ok(out)
}

/// `W_m u = H(t_m)⋯H(t_1)u`, or the cut-off word
/// `P_N H(t_m) P_N ⋯ P_N H(t_1) P_N u` when a space is given.
pub fn word_apply(
    family: &HamiltonianFamily,
    times: &[f64],
    u: &ScaleVector,
    space: Option<&CutoffSpace>,
) -> Result<ScaleVector> {
    let band = family.max_width();
    let mut v = match space {
        Some(s) => project(s, u)?,
        None => u.clone(),
    };
    for &t in times {
        v = apply_family(family, t, &v, band)?;
        if let Some(s) = space {
            v = project(s, &v)?;
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm;
    use crate::models;
    use crate::spectral_model::{build_model, cutoff_space, fourier_index, ModelSpec};

    #[test]
    fn unresolved_term_is_rejected() {
        let m = build_model(ModelSpec::FourierCircle).unwrap();
        let err = assemble_family(&m, vec![("position".into(), Coefficient::constant(1.0))], None, 0.0).unwrap_err();
        assert_eq!(err, Error::UnresolvedTerm("position".into()));
    }

    #[test]
    fn aperiodic_coefficient_with_period_is_rejected() {
        let m = build_model(ModelSpec::FourierCircle).unwrap();
        let err = assemble_family(
            &m,
            vec![("laplacian".into(), Coefficient::new(CoefficientShape::Ramp, 1.0))],
            Some(1.0),
            2.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotPeriodic { .. }));
    }

    #[test]
    fn free_circle_matrix_is_diagonal_k_squared() {
        let fam = models::free_circle().unwrap();
        let space = cutoff_space(fam.model(), 10.0);
        let h = cutoff_matrix(&fam, &space, 0.3).unwrap();
        for j in space.indices() {
            let k = fam.model().label(j) as f64;
            assert_eq!(h[(j - 1, j - 1)], C64::new(k * k, 0.0));
        }
        assert!(crate::linalg::is_diagonal(&h));
    }

    #[test]
    fn driven_oscillator_two_level_block() {
        let model = build_model(ModelSpec::HermiteLine).unwrap();
        let fam = assemble_family(
            &model,
            vec![
                ("oscillator".into(), Coefficient::constant(1.0)),
                ("position".into(), Coefficient::new(CoefficientShape::Cos2Pi, 1.0)),
            ],
            Some(1.0),
            1.0,
        )
        .unwrap();
        let space = cutoff_space(&model, 5.0);
        assert_eq!(space.dim(), 2);
        let h = cutoff_matrix(&fam, &space, 0.0).unwrap();
        let r = 0.5_f64.sqrt();
        let expected = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.0), C64::new(r, 0.0), C64::new(r, 0.0), C64::new(3.0, 0.0)],
        );
        assert!(spectral_norm(&(h - expected)) < 1e-15);
    }

    #[test]
    fn equal_coefficients_give_equal_matrices() {
        let fam = models::driven_circle(1.0).unwrap();
        let space = cutoff_space(fam.model(), 20.0);
        let a = cutoff_matrix(&fam, &space, 0.1).unwrap();
        let b = cutoff_matrix(&fam, &space, 0.1).unwrap();
        assert_eq!(a, b);
        // one period later the coefficients agree to rounding
        let c = cutoff_matrix(&fam, &space, 1.1).unwrap();
        assert!(max_abs(&(a - c)) < 1e-14);
    }

    #[test]
    fn operator_norm_bound_examples() {
        let model = models::index_model_with(vec![]).unwrap();
        let auto = assemble_family(&model, vec![("h0_diag".into(), Coefficient::constant(1.0))], Some(1.0), 1.0).unwrap();
        let space = cutoff_space(&model, 3.5);
        assert_eq!(operator_norm_bound(&auto, &space, 4).unwrap(), 3.0);

        let g = 0.7;
        let spin = models::pauli_family(0.0, g, CoefficientShape::Sin2Pi).unwrap();
        let space = models::spin_space(&spin);
        let b4 = operator_norm_bound(&spin, &space, 4).unwrap();
        assert!((b4 - g).abs() < 1e-14);
        let fam = models::driven_circle(1.0).unwrap();
        let space = cutoff_space(fam.model(), 20.0);
        let mut previous = 0.0;
        for n in [3, 6, 12, 24] {
            let b = operator_norm_bound(&fam, &space, n).unwrap();
            assert!(b >= previous);
            previous = b;
        }
        assert_eq!(operator_norm_bound(&models::ramp_family(&model).unwrap(), &space_of(&model), 4).unwrap_err(), Error::Aperiodic);
    }

    fn space_of(model: &Arc<SpectralModel>) -> CutoffSpace {
        cutoff_space(model, 3.5)
    }

    #[test]
    fn apply_examples() {
        let fam = models::free_circle().unwrap();
        let m = fam.model().clone();
        let j = fourier_index(-3);
        let out = apply_family(&fam, 0.0, &ScaleVector::basis(&m, j), fam.max_width()).unwrap();
        assert_eq!(out.iter().collect::<Vec<_>>(), vec![(j, C64::new(9.0, 0.0))]);

        let h = build_model(ModelSpec::HermiteLine).unwrap();
        let pos = assemble_family(&h, vec![("position".into(), Coefficient::constant(1.0))], None, 1.0).unwrap();
        let out = apply_family(&pos, 0.0, &ScaleVector::basis(&h, 1), 1).unwrap();
        assert_eq!(out.iter().collect::<Vec<_>>(), vec![(2, C64::new(0.5_f64.sqrt(), 0.0))]);

        let driven = models::driven_circle(1.0).unwrap();
        let err = apply_family(&driven, 0.0, &ScaleVector::basis(driven.model(), 1), 1).unwrap_err();
        assert!(matches!(err, Error::BandTooSmall { .. }));
    }

    #[test]
    fn empty_word_is_projection() {
        let fam = models::driven_circle(1.0).unwrap();
        let m = fam.model().clone();
        let space = cutoff_space(&m, 5.0);
        let u = ScaleVector::from_pairs(&m, [(1, C64::new(1.0, 0.0)), (30, C64::new(2.0, 0.0))]);
        let w = word_apply(&fam, &[], &u, Some(&space)).unwrap();
        assert_eq!(w.distance(&project(&space, &u).unwrap()).unwrap(), 0.0);
    }
}
