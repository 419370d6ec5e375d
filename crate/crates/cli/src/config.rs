//! Strict JSON experiment configuration and its validation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use cutofflab_core::hamiltonian::{assemble_family, Coefficient, CoefficientShape, HamiltonianFamily};
use cutofflab_core::models::pauli_terms;
use cutofflab_core::spectral_model::{build_model, EigenvalueRule, ModelSpec, SpectralModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::experiments::{Experiment, OutputNames};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Unreadable { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Malformed(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ModelConfig,
    pub family: FamilyConfig,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub criteria: Criteria,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    FourierCircle,
    HermiteLine,
    ExplicitDiagonal {
        /// `λ_j = scale·j^exponent + shift`; `λ_j = j` when absent.
        #[serde(default)]
        eigenvalues: Option<PowerLaw>,
        /// Attach `sigma_x`, `sigma_y`, `sigma_z` on modes 1 and 2.
        #[serde(default)]
        pauli_block: bool,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PowerLaw {
    pub scale: f64,
    pub exponent: f64,
    #[serde(default)]
    pub shift: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub terms: Vec<TermConfig>,
    #[serde(default)]
    pub period: Option<f64>,
    #[serde(default = "default_loss_order")]
    pub loss_order: f64,
}

fn default_loss_order() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub name: String,
    /// One of `const`, `sin_2pi`, `cos_2pi`, `ramp`.
    #[serde(default = "default_shape")]
    pub coefficient: String,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_shape() -> String {
    "const".into()
}

fn default_amplitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    /// 1-based index in the model's eigenvalue order.
    pub index: usize,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Numeric parameters. Each experiment reads the subset it needs; see
/// [`Experiment::required_params`].
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub ns: Option<Vec<f64>>,
    pub n: Option<f64>,
    pub n_ref: Option<f64>,
    pub ms: Option<Vec<usize>>,
    pub periods: Option<Vec<f64>>,
    pub period: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub word_times: Option<Vec<f64>>,
    pub eps_grid: Option<Vec<f64>>,
    pub exponents: Option<Vec<f64>>,
    pub include_log: Option<bool>,
    pub tol: Option<f64>,
    pub quad_tol: Option<f64>,
    pub tail_tol: Option<f64>,
    pub r: Option<f64>,
    pub orders: Option<Vec<usize>>,
    pub order: Option<usize>,
    pub qs: Option<Vec<i64>>,
    pub s: Option<f64>,
    pub t: Option<f64>,
    pub grid_points: Option<usize>,
    pub quad_points: Option<usize>,
    pub zeta_points: Option<Vec<f64>>,
    pub operator: Option<String>,
    pub initial: Option<Vec<Mode>>,
    /// Modes `1..=random_support` filled from the seed when `initial` is absent.
    pub random_support: Option<usize>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Bound {
    #[serde(default)]
    pub target: Option<f64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
    #[serde(default)]
    pub min: Option<f64>,
}

impl Bound {
    pub fn admits(&self, value: f64) -> bool {
        let near = match (self.target, self.tolerance) {
            (Some(target), Some(tol)) => (value - target).abs() <= tol,
            _ => true,
        };
        near && self.max.map_or(true, |m| value <= m) && self.min.map_or(true, |m| value >= m)
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.target.is_some() != self.tolerance.is_some() {
            out.push("target and tolerance must be given together".into());
        }
        if self.tolerance.is_some_and(|t| !(t >= 0.0)) {
            out.push("tolerance must be ≥ 0".into());
        }
        if self.target.is_none() && self.max.is_none() && self.min.is_none() {
            out.push("bound declares nothing".into());
        }
        out
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let (Some(t), Some(tol)) = (self.target, self.tolerance) {
            parts.push(format!("{t} ± {tol}"));
        }
        if let Some(m) = self.max {
            parts.push(format!("≤ {m}"));
        }
        if let Some(m) = self.min {
            parts.push(format!("≥ {m}"));
        }
        write!(f, "{}", parts.join(", "))
    }
}

/// Declared pass/fail criteria, keyed by the names an experiment reports.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Criteria {
    #[serde(default)]
    pub constants: BTreeMap<String, Bound>,
    #[serde(default)]
    pub slopes: BTreeMap<String, Bound>,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub max_runtime_seconds: Option<f64>,
}

impl Criteria {
    pub fn is_empty(&self) -> bool {
        self.constants.is_empty() && self.slopes.is_empty() && self.checks.is_empty() && self.max_runtime_seconds.is_none()
    }
}

/// A named invariant violated by a config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

pub fn load_config(path: &Path) -> Result<(ExperimentConfig, String), ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Unreadable { path: path.display().to_string(), source })?;
    let config = parse_config(&text)?;
    let hash = config_hash(&text)?;
    Ok((config, hash))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    Ok(serde_json::from_str(text)?)
}

/// SHA-256 of the canonical (sorted-key, compact) form of the JSON document.
pub fn config_hash(text: &str) -> Result<String, ConfigError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let canonical = serde_json::to_string(&value)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn build_spectral_model(model: &ModelConfig) -> cutofflab_core::Result<Arc<SpectralModel>> {
    match model {
        ModelConfig::FourierCircle => build_model(ModelSpec::FourierCircle),
        ModelConfig::HermiteLine => build_model(ModelSpec::HermiteLine),
        ModelConfig::ExplicitDiagonal { eigenvalues, pauli_block } => {
            let rule = match eigenvalues {
                None => EigenvalueRule::Index,
                Some(p) => EigenvalueRule::Power { scale: p.scale, exponent: p.exponent, shift: p.shift },
            };
            let terms = if *pauli_block { pauli_terms() } else { Vec::new() };
            build_model(ModelSpec::ExplicitDiagonal { eigenvalues: rule, growth: None, terms })
        }
    }
}

pub fn build_family(
    model: &Arc<SpectralModel>,
    family: &FamilyConfig,
) -> cutofflab_core::Result<HamiltonianFamily> {
    let terms = family
        .terms
        .iter()
        .map(|term| {
            let shape = CoefficientShape::from_name(&term.coefficient).ok_or_else(|| {
                cutofflab_core::Error::InvalidParameters(format!("unknown coefficient `{}`", term.coefficient))
            })?;
            Ok((term.name.clone(), Coefficient::new(shape, term.amplitude)))
        })
        .collect::<cutofflab_core::Result<Vec<_>>>()?;
    assemble_family(model, terms, family.period, family.loss_order)
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation { field: field.into(), message: message.into() });
    }

    fn positive(&mut self, field: &str, value: Option<f64>) {
        if let Some(v) = value {
            if !(v > 0.0 && v.is_finite()) {
                self.push(format!("params.{field}"), format!("must be positive and finite, got {v}"));
            }
        }
    }

    fn strictly_increasing(&mut self, field: &str, values: Option<&Vec<f64>>) {
        if let Some(values) = values {
            if values.is_empty() {
                self.push(format!("params.{field}"), "must not be empty");
            }
            if values.windows(2).any(|w| !(w[1] > w[0])) {
                self.push(format!("params.{field}"), "must be strictly increasing");
            }
        }
    }
}

/// Every violated invariant of the config, without running anything.
pub fn validate_config(config: &ExperimentConfig) -> Vec<Violation> {
    let mut c = Collector(Vec::new());
    let p = &config.params;
    let exp = config.experiment;

    for key in exp.required_params() {
        if !p.has(key) {
            c.push(format!("params.{key}"), format!("required by {}", exp.name()));
        }
    }

    match build_spectral_model(&config.model) {
        Err(e) => c.push("model", e.to_string()),
        Ok(model) => {
            let known: Vec<String> = model.term_names().map(str::to_string).collect();
            for (i, term) in config.family.terms.iter().enumerate() {
                if model.term(&term.name).is_none() {
                    c.push(
                        format!("family.terms[{i}].name"),
                        format!("unknown term `{}`; model provides {}", term.name, known.join(", ")),
                    );
                }
                if CoefficientShape::from_name(&term.coefficient).is_none() {
                    c.push(
                        format!("family.terms[{i}].coefficient"),
                        format!("unknown coefficient `{}`; expected const, sin_2pi, cos_2pi or ramp", term.coefficient),
                    );
                }
                if !term.amplitude.is_finite() {
                    c.push(format!("family.terms[{i}].amplitude"), "must be finite");
                }
            }
            if c.0.is_empty() {
                if let Err(e) = build_family(&model, &config.family) {
                    c.push("family", e.to_string());
                }
            }
            if let (Some(op), true) = (p.operator.as_deref(), exp == Experiment::Traces) {
                if op != "identity" && model.term(op).is_none() {
                    c.push("params.operator", format!("unknown operator `{op}`"));
                }
            }
        }
    }
    if config.family.terms.is_empty() {
        c.push("family.terms", "at least one term is required");
    }
    if exp.needs_period() && config.family.period != Some(1.0) {
        c.push("family.period", format!("{} needs a 1-periodic family", exp.name()));
    }

    c.strictly_increasing("ns", p.ns.as_ref());
    if let Some(ns) = &p.ns {
        if ns.iter().any(|&n| !(n > 0.0)) {
            c.push("params.ns", "cut-offs must be positive");
        }
        if let Some(n_ref) = p.n_ref {
            let limit = if exp.needs_quarter_reference() { n_ref / 4.0 } else { n_ref };
            if ns.iter().any(|&n| n > limit) {
                c.push("params.n_ref", format!("every N must be ≤ {limit} (N_ref = {n_ref})"));
            }
        }
    }
    for (field, value) in [
        ("n", p.n),
        ("n_ref", p.n_ref),
        ("tol", p.tol),
        ("quad_tol", p.quad_tol),
        ("tail_tol", p.tail_tol),
        ("period", p.period),
    ] {
        c.positive(field, value);
    }
    if p.r.is_some_and(|r| !(r >= 0.0)) {
        c.push("params.r", "must be ≥ 0");
    }
    if let (Some(s), Some(t)) = (p.s, p.t) {
        if t < s {
            c.push("params.t", "must not precede params.s");
        }
    }
    if let Some(ms) = &p.ms {
        if ms.len() < 4 {
            c.push("params.ms", "need at least four slice counts");
        }
        if ms.first() == Some(&0) || ms.windows(2).any(|w| w[1] != 2 * w[0]) {
            c.push("params.ms", "slice counts must be positive and dyadic (each double the previous)");
        }
    }
    if let Some(periods) = &p.periods {
        if periods.len() < 2 {
            c.push("params.periods", "need at least two periods for a slope");
        }
        if periods.iter().any(|&t| !(t > 0.0)) {
            c.push("params.periods", "periods must be positive");
        }
    }
    if let Some(grid) = &p.eps_grid {
        if grid.iter().any(|&e| !(e > 0.0)) || grid.windows(2).any(|w| !(w[1] < w[0])) {
            c.push("params.eps_grid", "must be positive and strictly decreasing");
        }
        let columns = p.exponents.as_ref().map_or(0, Vec::len) + usize::from(p.include_log.unwrap_or(false)) + 1;
        if grid.len() < columns + 2 {
            c.push("params.eps_grid", format!("need at least {} points for {columns} basis functions", columns + 2));
        }
    }
    if let Some(exps) = &p.exponents {
        if exps.iter().any(|&b| b == 0.0 || !b.is_finite()) {
            c.push("params.exponents", "exponents must be finite and nonzero");
        }
    }
    if let Some(orders) = &p.orders {
        if orders.iter().any(|&l| l > 2) {
            c.push("params.orders", "orders must lie in {0, 1, 2}");
        }
    }
    if p.order.is_some_and(|l| l > 2) {
        c.push("params.order", "order must lie in {0, 1, 2}");
    }
    if let Some(qs) = &p.qs {
        if qs.contains(&0) {
            c.push("params.qs", "q must be nonzero");
        }
    }
    if let Some(times) = &p.times {
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            c.push("params.times", "must be strictly increasing");
        }
    }
    if p.word_times.as_ref().is_some_and(|w| w.len() > 3) {
        c.push("params.word_times", "words of length at most 3 are supported");
    }
    if let Some(initial) = &p.initial {
        if initial.is_empty() {
            c.push("params.initial", "must list at least one mode");
        }
        if initial.iter().any(|m| m.index == 0) {
            c.push("params.initial", "mode indices start at 1");
        }
    }
    if p.random_support == Some(0) {
        c.push("params.random_support", "must be ≥ 1");
    }

    let names: OutputNames = exp.outputs();
    for (name, bound) in &config.criteria.constants {
        if !exp.constant_name_known(name, p) {
            c.push(format!("criteria.constants.{name}"), format!("{} reports no constant `{name}`", exp.name()));
        }
        for problem in bound.problems() {
            c.push(format!("criteria.constants.{name}"), problem);
        }
    }
    for (name, bound) in &config.criteria.slopes {
        if !exp.slope_name_known(name, p) {
            c.push(format!("criteria.slopes.{name}"), format!("{} reports no slope `{name}`", exp.name()));
        }
        for problem in bound.problems() {
            c.push(format!("criteria.slopes.{name}"), problem);
        }
    }
    for name in &config.criteria.checks {
        if !names.checks.contains(&name.as_str()) {
            c.push("criteria.checks", format!("{} reports no check `{name}`", exp.name()));
        }
    }
    if config.criteria.max_runtime_seconds.is_some_and(|t| !(t > 0.0)) {
        c.push("criteria.max_runtime_seconds", "must be positive");
    }
    c.0
}

impl Params {
    pub fn has(&self, key: &str) -> bool {
        match key {
            "ns" => self.ns.is_some(),
            "n" => self.n.is_some(),
            "n_ref" => self.n_ref.is_some(),
            "ms" => self.ms.is_some(),
            "periods" => self.periods.is_some(),
            "period" => self.period.is_some(),
            "times" => self.times.is_some(),
            "word_times" => self.word_times.is_some(),
            "eps_grid" => self.eps_grid.is_some(),
            "exponents" => self.exponents.is_some(),
            "orders" => self.orders.is_some(),
            "order" => self.order.is_some(),
            "t" => self.t.is_some(),
            "r" => self.r.is_some(),
            other => unreachable!("unknown parameter key `{other}`"),
        }
    }
}
