//! Reference operators with explicitly known spectral decompositions,
//! their spectral cut-offs and the associated Hilbert-scale norms.
//!
//! Modes are indexed `j = 1, 2, …` in nondecreasing eigenvalue order, so
//! every cut-off space `{ j : λ_j ≤ N }` is the prefix `1..=d_N`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};

/// Matrix elements `(j, k) ↦ ⟨e_j, O e_k⟩` on 1-based mode indices.
pub type ElementFn = Arc<dyn Fn(usize, usize) -> C64 + Send + Sync>;

/// Index window used to sample Hermiticity of element providers.
pub const HERMITICITY_WINDOW: usize = 64;
/// Index window used to sample monotonicity of eigenvalue generators.
pub const MONOTONICITY_WINDOW: usize = 256;

/// An operator with finitely many nonzero diagonals in the mode basis.
///
/// `width` is the coupling width in index space: entries with
/// `|j − k| > width` are zero.
#[derive(Clone)]
pub struct BandedOperator {
    name: String,
    width: usize,
    entry_bound: Option<f64>,
    elements: ElementFn,
}

impl fmt::Debug for BandedOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BandedOperator")
            .field("name", &self.name)
            .field("width", &self.width)
            .field("entry_bound", &self.entry_bound)
            .finish()
    }
}

impl BandedOperator {
    pub fn new(name: impl Into<String>, width: usize, elements: impl Fn(usize, usize) -> C64 + Send + Sync + 'static) -> Self {
        BandedOperator { name: name.into(), width, entry_bound: None, elements: Arc::new(elements) }
    }

    /// Declares `sup |⟨e_j, O e_k⟩|`, needed for tail bounds of regularized traces.
    pub fn with_entry_bound(mut self, bound: f64) -> Self {
        self.entry_bound = Some(bound);
        self
    }

    pub fn diagonal(name: impl Into<String>, diag: impl Fn(usize) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(name, 0, move |j, k| if j == k { C64::new(diag(j), 0.0) } else { C64::new(0.0, 0.0) })
    }

    pub fn identity() -> Self {
        Self::diagonal("identity", |_| 1.0).with_entry_bound(1.0)
    }

    pub fn zero() -> Self {
        Self::new("zero", 0, |_, _| C64::new(0.0, 0.0)).with_entry_bound(0.0)
    }

    /// Unilateral shift `S e_j = e_{j+1}`.
    pub fn unilateral_shift() -> Self {
        Self::new("shift", 1, |j, k| if j == k + 1 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
            .with_entry_bound(1.0)
    }

    /// Adjoint shift `S† e_j = e_{j−1}`, `S† e_1 = 0`.
    pub fn shift_adjoint() -> Self {
        Self::new("shift_adjoint", 1, |j, k| if k == j + 1 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
            .with_entry_bound(1.0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn entry_bound(&self) -> Option<f64> {
        self.entry_bound
    }

    pub fn element(&self, j: usize, k: usize) -> C64 {
        if j == 0 || k == 0 || j.abs_diff(k) > self.width {
            C64::new(0.0, 0.0)
        } else {
            (self.elements)(j, k)
        }
    }

    /// `max |O(j,k) − conj(O(k,j))|` over `1 ≤ j, k ≤ window`.
    pub fn hermiticity_defect(&self, window: usize) -> f64 {
        let mut defect = 0.0_f64;
        for j in 1..=window {
            for k in j..=window.min(j + self.width) {
                defect = defect.max((self.element(j, k) - self.element(k, j).conj()).norm());
            }
        }
        defect
    }

    /// Compression `P_N O P_N` as a dense matrix on the cut-off space.
    pub fn matrix_on(&self, space: &CutoffSpace) -> CMatrix {
        let d = space.dim();
        let mut m = CMatrix::zeros(d, d);
        for k in 1..=d {
            for j in k.saturating_sub(self.width).max(1)..=(k + self.width).min(d) {
                m[(j - 1, k - 1)] = self.element(j, k);
            }
        }
        m
    }

    /// Linear combination `Σ cᵢ Oᵢ` with the common width.
    pub fn combination(name: impl Into<String>, parts: Vec<(C64, BandedOperator)>) -> Self {
        let width = parts.iter().map(|(_, op)| op.width).max().unwrap_or(0);
        let bound = parts
            .iter()
            .map(|(c, op)| op.entry_bound.map(|b| b * c.norm()))
            .try_fold(0.0, |acc, b| b.map(|b| acc + b));
        let mut op = Self::new(name, width, move |j, k| parts.iter().map(|(c, op)| c * op.element(j, k)).sum());
        op.entry_bound = bound;
        op
    }
}

/// Guaranteed eigenvalue growth: `λ_{j+step} ≥ λ_j + gap` for every `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Growth {
    pub step: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    FourierCircle,
    HermiteLine,
    ExplicitDiagonal,
}

/// Eigenvalue generator of an explicit diagonal model.
#[derive(Clone)]
pub enum EigenvalueRule {
    /// `λ_j = j`.
    Index,
    /// `λ_j = scale · j^exponent + shift`.
    Power { scale: f64, exponent: f64, shift: f64 },
    Custom(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl fmt::Debug for EigenvalueRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EigenvalueRule::Index => write!(f, "Index"),
            EigenvalueRule::Power { scale, exponent, shift } => {
                write!(f, "Power {{ scale: {scale}, exponent: {exponent}, shift: {shift} }}")
            }
            EigenvalueRule::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl EigenvalueRule {
    fn eval(&self, j: usize) -> f64 {
        match self {
            EigenvalueRule::Index => j as f64,
            EigenvalueRule::Power { scale, exponent, shift } => scale * (j as f64).powf(*exponent) + shift,
            EigenvalueRule::Custom(f) => f(j),
        }
    }

    fn growth(&self) -> Option<Growth> {
        match self {
            EigenvalueRule::Index => Some(Growth { step: 1, gap: 1.0 }),
            EigenvalueRule::Power { scale, exponent, .. } if *exponent >= 1.0 && *scale > 0.0 => {
                Some(Growth { step: 1, gap: *scale })
            }
            _ => None,
        }
    }
}

/// Model parameters accepted by [`build_model`].
#[derive(Clone, Debug)]
pub enum ModelSpec {
    FourierCircle,
    HermiteLine,
    ExplicitDiagonal {
        eigenvalues: EigenvalueRule,
        /// Declared growth; defaults to what the rule guarantees.
        growth: Option<Growth>,
        /// Additional Hermitian element providers.
        terms: Vec<BandedOperator>,
    },
}

/// A reference operator `H₀` given by its eigenvalue sequence and a set of
/// named, Hermitian, banded element providers.
pub struct SpectralModel {
    kind: ModelKind,
    rule: Option<EigenvalueRule>,
    growth: Option<Growth>,
    terms: BTreeMap<String, BandedOperator>,
}

impl fmt::Debug for SpectralModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralModel")
            .field("kind", &self.kind)
            .field("rule", &self.rule)
            .field("terms", &self.terms.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// Fourier wavenumber of mode `j`: 0, +1, −1, +2, −2, …
pub fn fourier_label(j: usize) -> i64 {
    assert!(j >= 1, "mode indices start at 1");
    if j == 1 {
        0
    } else if j % 2 == 0 {
        (j / 2) as i64
    } else {
        -(((j - 1) / 2) as i64)
    }
}

pub fn fourier_index(k: i64) -> usize {
    match k {
        0 => 1,
        k if k > 0 => 2 * k as usize,
        k => 2 * k.unsigned_abs() as usize + 1,
    }
}

pub fn build_model(spec: ModelSpec) -> Result<Arc<SpectralModel>> {
    let model = match spec {
        ModelSpec::FourierCircle => {
            let mut terms = BTreeMap::new();
            let laplacian = BandedOperator::diagonal("laplacian", |j| (fourier_label(j) as f64).powi(2));
            let cos_x = BandedOperator::new("cos_x", 2, |j, k| {
                if (fourier_label(j) - fourier_label(k)).abs() == 1 {
                    C64::new(0.5, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .with_entry_bound(0.5);
            terms.insert("laplacian".to_string(), laplacian);
            terms.insert("cos_x".to_string(), cos_x);
            SpectralModel { kind: ModelKind::FourierCircle, rule: None, growth: Some(Growth { step: 2, gap: 1.0 }), terms }
        }
        ModelSpec::HermiteLine => {
            let mut terms = BTreeMap::new();
            // level n = j − 1
            let oscillator = BandedOperator::diagonal("oscillator", |j| 2.0 * (j as f64 - 1.0) + 1.0);
            let position = BandedOperator::new("position", 1, |j, k| {
                if j.abs_diff(k) == 1 {
                    C64::new((j.min(k) as f64 / 2.0).sqrt(), 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            terms.insert("oscillator".to_string(), oscillator);
            terms.insert("position".to_string(), position);
            SpectralModel { kind: ModelKind::HermiteLine, rule: None, growth: Some(Growth { step: 1, gap: 2.0 }), terms }
        }
        ModelSpec::ExplicitDiagonal { eigenvalues, growth, terms: user_terms } => {
            let mut previous = eigenvalues.eval(1);
            if !(previous >= 0.0) {
                return Err(Error::InvalidParameters(format!("λ_1 = {previous} is negative")));
            }
            for j in 2..=MONOTONICITY_WINDOW {
                let next = eigenvalues.eval(j);
                if !(next >= previous) {
                    return Err(Error::InvalidParameters(format!(
                        "eigenvalue generator not nondecreasing at j = {j} ({previous} > {next})"
                    )));
                }
                previous = next;
            }
            if !(eigenvalues.eval(MONOTONICITY_WINDOW) > eigenvalues.eval(1)) {
                return Err(Error::InvalidParameters("eigenvalue generator does not grow".into()));
            }
            let rule = eigenvalues.clone();
            let mut terms = BTreeMap::new();
            terms.insert("h0_diag".to_string(), BandedOperator::diagonal("h0_diag", move |j| rule.eval(j)));
            for term in user_terms {
                let defect = term.hermiticity_defect(HERMITICITY_WINDOW);
                if defect > 0.0 {
                    return Err(Error::InvalidParameters(format!(
                        "term `{}` is not Hermitian on indices 1..={HERMITICITY_WINDOW} (defect {defect:.3e})",
                        term.name()
                    )));
                }
                if terms.contains_key(term.name()) {
                    return Err(Error::InvalidParameters(format!("duplicate term `{}`", term.name())));
                }
                terms.insert(term.name().to_string(), term);
            }
            let growth = growth.or_else(|| eigenvalues.growth());
            SpectralModel { kind: ModelKind::ExplicitDiagonal, rule: Some(eigenvalues), growth, terms }
        }
    };
    Ok(Arc::new(model))
}

impl SpectralModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn growth(&self) -> Option<Growth> {
        self.growth
    }

    /// True for the explicit diagonal model with `λ_j = j`.
    pub fn is_index_spectrum(&self) -> bool {
        matches!(self.rule, Some(EigenvalueRule::Index))
    }

    /// Eigenvalue `λ_j` of `H₀` (1-based).
    pub fn eigenvalue(&self, j: usize) -> f64 {
        assert!(j >= 1, "mode indices start at 1");
        match self.kind {
            ModelKind::FourierCircle => 1.0 + (fourier_label(j) as f64).powi(2),
            ModelKind::HermiteLine => 2.0 * j as f64,
            ModelKind::ExplicitDiagonal => self.rule.as_ref().expect("explicit model has a rule").eval(j),
        }
    }

    pub fn eigenvalues(&self, count: usize) -> Vec<f64> {
        (1..=count).map(|j| self.eigenvalue(j)).collect()
    }

    /// Fourier wavenumber, Hermite level, or the plain index.
    pub fn label(&self, j: usize) -> i64 {
        match self.kind {
            ModelKind::FourierCircle => fourier_label(j),
            ModelKind::HermiteLine => j as i64 - 1,
            ModelKind::ExplicitDiagonal => j as i64,
        }
    }

    pub fn term(&self, name: &str) -> Option<&BandedOperator> {
        self.terms.get(name)
    }

    pub fn term_names(&self) -> impl Iterator<Item = &str> {
        self.terms.keys().map(String::as_str)
    }
}

/// The range of `P_N = 1_{[0,N]}(H₀)`: modes `1..=dim`.
#[derive(Debug, Clone)]
pub struct CutoffSpace {
    model: Arc<SpectralModel>,
    cutoff: f64,
    dim: usize,
}

pub fn cutoff_space(model: &Arc<SpectralModel>, cutoff: f64) -> CutoffSpace {
    let mut dim = 0;
    while model.eigenvalue(dim + 1) <= cutoff {
        dim += 1;
    }
    CutoffSpace { model: Arc::clone(model), cutoff, dim }
}

impl CutoffSpace {
    pub fn model(&self) -> &Arc<SpectralModel> {
        &self.model
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.dim == 0
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.dim
    }

    pub fn contains(&self, j: usize) -> bool {
        j >= 1 && j <= self.dim
    }

    pub fn same_model(&self, model: &Arc<SpectralModel>) -> bool {
        Arc::ptr_eq(&self.model, model)
    }

    /// Coefficients of `P_N u` as a dense vector on the space.
    pub fn to_dense(&self, u: &ScaleVector) -> Result<CVector> {
        if !self.same_model(&u.model) {
            return Err(Error::ModelMismatch);
        }
        let mut v = CVector::zeros(self.dim);
        for (&j, &c) in u.coeffs.range(1..=self.dim) {
            v[j - 1] = c;
        }
        Ok(v)
    }

    pub fn from_dense(&self, v: &CVector) -> ScaleVector {
        let coeffs = v
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != C64::new(0.0, 0.0))
            .map(|(i, &c)| (i + 1, c))
            .collect();
        ScaleVector { model: Arc::clone(&self.model), coeffs }
    }

    /// `W = diag(1 + λ_j)` on the space.
    pub fn weight_diagonal(&self) -> Vec<f64> {
        self.indices().map(|j| 1.0 + self.model.eigenvalue(j)).collect()
    }
}

/// A finitely supported vector in the Hilbert scale of a model.
#[derive(Debug, Clone)]
pub struct ScaleVector {
    model: Arc<SpectralModel>,
    coeffs: BTreeMap<usize, C64>,
}

impl ScaleVector {
    pub fn zero(model: &Arc<SpectralModel>) -> Self {
        ScaleVector { model: Arc::clone(model), coeffs: BTreeMap::new() }
    }

    /// Eigenvector `e_j`.
    pub fn basis(model: &Arc<SpectralModel>, j: usize) -> Self {
        Self::from_pairs(model, [(j, C64::new(1.0, 0.0))])
    }

    pub fn from_pairs(model: &Arc<SpectralModel>, pairs: impl IntoIterator<Item = (usize, C64)>) -> Self {
        let mut v = Self::zero(model);
        for (j, c) in pairs {
            assert!(j >= 1, "mode indices start at 1");
            v.add_at(j, c);
        }
        v
    }

    pub fn model(&self) -> &Arc<SpectralModel> {
        &self.model
    }

    pub fn get(&self, j: usize) -> C64 {
        self.coeffs.get(&j).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn add_at(&mut self, j: usize, c: C64) {
        let entry = self.coeffs.entry(j).or_insert(C64::new(0.0, 0.0));
        *entry += c;
        if *entry == C64::new(0.0, 0.0) {
            self.coeffs.remove(&j);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, C64)> + '_ {
        self.coeffs.iter().map(|(&j, &c)| (j, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest index with a nonzero coefficient.
    pub fn max_index(&self) -> Option<usize> {
        self.coeffs.keys().next_back().copied()
    }

    /// Largest eigenvalue `λ_j` over the support.
    pub fn support_eigenvalue(&self) -> Option<f64> {
        self.max_index().map(|j| self.model.eigenvalue(j))
    }

    /// `‖u‖₀`.
    pub fn norm(&self) -> f64 {
        self.coeffs.values().fold(0.0, |acc, c| acc + c.norm_sqr()).sqrt()
    }

    pub fn scaled(&self, factor: C64) -> ScaleVector {
        let mut out = ScaleVector::zero(&self.model);
        for (j, c) in self.iter() {
            out.add_at(j, factor * c);
        }
        out
    }

    pub fn add(&self, other: &ScaleVector) -> Result<ScaleVector> {
        if !Arc::ptr_eq(&self.model, &other.model) {
            return Err(Error::ModelMismatch);
        }
        let mut out = self.clone();
        for (j, c) in other.iter() {
            out.add_at(j, c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &ScaleVector) -> Result<ScaleVector> {
        self.add(&other.scaled(C64::new(-1.0, 0.0)))
    }

    /// `‖self − other‖₀`.
    pub fn distance(&self, other: &ScaleVector) -> Result<f64> {
        Ok(self.sub(other)?.norm())
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        sobolev_norm(self, s)
    }
}

/// `P_N u`; idempotent.
pub fn project(space: &CutoffSpace, u: &ScaleVector) -> Result<ScaleVector> {
    if !space.same_model(&u.model) {
        return Err(Error::ModelMismatch);
    }
    let coeffs = u.coeffs.range(..=space.dim).map(|(&j, &c)| (j, c)).collect();
    Ok(ScaleVector { model: Arc::clone(&u.model), coeffs })
}

/// `‖u‖_s = (Σ (1+λ_j)^{2s} |u_j|²)^{1/2}`.
pub fn sobolev_norm(u: &ScaleVector, s: f64) -> f64 {
    u.iter()
        .map(|(j, c)| (1.0 + u.model.eigenvalue(j)).powf(2.0 * s) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `‖(I − P_N)u‖_s`: the `s`-norm over modes with `λ_j > N`.
pub fn tail_norm(u: &ScaleVector, cutoff: f64, s: f64) -> f64 {
    u.iter()
        .filter(|&(j, _)| u.model.eigenvalue(j) > cutoff)
        .map(|(j, c)| (1.0 + u.model.eigenvalue(j)).powf(2.0 * s) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `((1 + λ_j)^r)_{j ∈ space}`.
pub fn scale_weights(space: &CutoffSpace, r: f64) -> Result<Vec<f64>> {
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }
    Ok(space.weight_diagonal().into_iter().map(|w| w.powf(r)).collect())
}
