//! The experiment registry and the per-experiment sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use cutofflab_core::fit::{loglog_slope, SlopeFit};
use cutofflab_core::floquet::{effective_hamiltonian, fm_coefficient, stroboscopic_error};
use cutofflab_core::hamiltonian::{word_apply, HamiltonianFamily};
use cutofflab_core::linalg::{hermitian_function, C64};
use cutofflab_core::propagator::{
    commutator_constant, cutoff_propagator, duhamel_bound, energy_stability_check, reference_solution,
    slicing_order_sweep,
};
use cutofflab_core::spectral_model::{cutoff_space, BandedOperator, ScaleVector, SpectralModel};
use cutofflab_core::traces::{heat_trace, fit_finite_part, regularized_amplitude, trace_defect, zeta_value, ZetaOperator, DEFAULT_ZETA_ORDER};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CutoffConvergence,
    SlicingOrder,
    Duhamel,
    EnergyStability,
    WordConvergence,
    FmCoefficients,
    Stroboscopic,
    EffectiveGroup,
    Traces,
    Amplitude,
}

/// Column, constant and check names an experiment can report.
pub struct OutputNames {
    pub columns: &'static [&'static str],
    pub constants: &'static [&'static str],
    pub checks: &'static [&'static str],
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::CutoffConvergence,
        Experiment::SlicingOrder,
        Experiment::Duhamel,
        Experiment::EnergyStability,
        Experiment::WordConvergence,
        Experiment::FmCoefficients,
        Experiment::Stroboscopic,
        Experiment::EffectiveGroup,
        Experiment::Traces,
        Experiment::Amplitude,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::CutoffConvergence => "cutoff-convergence",
            Experiment::SlicingOrder => "slicing-order",
            Experiment::Duhamel => "duhamel",
            Experiment::EnergyStability => "energy-stability",
            Experiment::WordConvergence => "word-convergence",
            Experiment::FmCoefficients => "fm-coefficients",
            Experiment::Stroboscopic => "stroboscopic",
            Experiment::EffectiveGroup => "effective-group",
            Experiment::Traces => "traces",
            Experiment::Amplitude => "amplitude",
        }
    }

    /// The theorem or lemma whose quantitative content the experiment measures.
    pub fn anchor(self) -> &'static str {
        match self {
            Experiment::CutoffConvergence => "Theorem \"Strong convergence of the spectral cut-off dynamics\"",
            Experiment::SlicingOrder => "Lemma \"Finite-dimensional unitary propagator\" (time-sliced products)",
            Experiment::Duhamel => "Proposition \"Duhamel formula for the cut-off error\"",
            Experiment::EnergyStability => "Proposition \"Commutator estimate implies stability\"",
            Experiment::WordConvergence => "Lemma \"Convergence of cut-off words\"",
            Experiment::FmCoefficients => "Proposition \"Coefficient convergence\"",
            Experiment::Stroboscopic => "Proposition \"Finite-dimensional Magnus estimate\"",
            Experiment::EffectiveGroup => "Corollary \"Convergence of finite-order effective Hamiltonians\"",
            Experiment::Traces => "Heat-regularized finite part and zeta-renormalized trace",
            Experiment::Amplitude => "Regularized amplitude Z_eps",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Experiment::CutoffConvergence => "‖U_N(t,s)P_N u − U(t,s)u‖ over a cut-off sweep against a doubled Galerkin oracle",
            Experiment::SlicingOrder => "first-order error of U_{N,M} against the extrapolated limit over dyadic M",
            Experiment::Duhamel => "measured cut-off error against the high-energy remainder integral",
            Experiment::EnergyStability => "max ‖U_N v‖_r/‖v‖_r over the basis against exp(C|t−s|/2)",
            Experiment::WordConvergence => "‖W_{m,N}u − W_m u‖ for words of length m ≤ 3",
            Experiment::FmCoefficients => "‖H_N^[ℓ]P_N u − H_{N_ref}^[ℓ]P_{N_ref} u‖ over a cut-off sweep",
            Experiment::Stroboscopic => "‖U_T^q − exp(−iqT·H_eff,L)‖ over periods T, with the fitted order",
            Experiment::EffectiveGroup => "strong convergence of exp(−it·H_eff,L,N) over a cut-off sweep",
            Experiment::Traces => "heat traces over an ε grid, fitted finite part, zeta values and trace defects",
            Experiment::Amplitude => "finite part of ε ↦ Tr(e^{−εH₀}U(t,0))",
        }
    }

    pub fn required_params(self) -> &'static [&'static str] {
        match self {
            Experiment::CutoffConvergence | Experiment::Duhamel => &["ns", "n_ref"],
            Experiment::SlicingOrder => &["n", "ms"],
            Experiment::EnergyStability => &["ns", "r", "times"],
            Experiment::WordConvergence => &["ns", "word_times"],
            Experiment::FmCoefficients => &["ns", "n_ref", "orders"],
            Experiment::Stroboscopic => &["n", "periods", "orders"],
            Experiment::EffectiveGroup => &["ns", "n_ref", "order", "period", "t"],
            Experiment::Traces => &["eps_grid", "exponents"],
            Experiment::Amplitude => &["n_ref", "t", "eps_grid", "exponents"],
        }
    }

    pub fn needs_period(self) -> bool {
        matches!(self, Experiment::FmCoefficients | Experiment::Stroboscopic | Experiment::EffectiveGroup)
    }

    /// Sweeps whose oracle needs the initial support and every cut-off at most `N_ref/4`.
    pub fn needs_quarter_reference(self) -> bool {
        matches!(self, Experiment::CutoffConvergence | Experiment::Duhamel)
    }

    pub fn outputs(self) -> OutputNames {
        match self {
            Experiment::CutoffConvergence => OutputNames {
                columns: &["N", "d_N", "error", "oracle_delta"],
                constants: &["min_error", "final_error", "oracle_delta"],
                checks: &["errors_decreasing"],
            },
            Experiment::SlicingOrder => OutputNames {
                columns: &["M", "error"],
                constants: &["final_error"],
                checks: &["nondegenerate"],
            },
            Experiment::Duhamel => OutputNames {
                columns: &["N", "d_N", "error", "bound", "panels", "oracle_delta"],
                constants: &["max_excess", "oracle_delta"],
                checks: &["bound_holds"],
            },
            Experiment::EnergyStability => OutputNames {
                columns: &["N", "d_N", "t", "commutator_constant", "max_ratio", "bound"],
                constants: &["max_ratio_over_bound", "max_commutator_constant", "commutator_constant_growth"],
                checks: &["stability_holds"],
            },
            Experiment::WordConvergence => OutputNames {
                columns: &["m", "N", "d_N", "error"],
                constants: &["final_error"],
                checks: &["eventually_exact"],
            },
            Experiment::FmCoefficients => OutputNames {
                columns: &["ell", "N", "d_N", "deviation", "oracle_delta"],
                constants: &["final_deviation", "oracle_delta"],
                checks: &["deviations_nonincreasing"],
            },
            Experiment::Stroboscopic => OutputNames {
                columns: &["L", "T", "q", "error"],
                constants: &[],
                checks: &["telescoping"],
            },
            Experiment::EffectiveGroup => OutputNames {
                columns: &["L", "N", "d_N", "deviation", "oracle_delta"],
                constants: &["final_deviation", "oracle_delta"],
                checks: &["deviations_nonincreasing"],
            },
            Experiment::Traces => OutputNames {
                columns: &["eps", "trace_re", "trace_im", "tail_bound", "fit_re"],
                constants: &[
                    "finite_part",
                    "finite_part_im",
                    "log_coefficient",
                    "residual",
                    "condition_number",
                    "defect_full",
                    "defect_compressed",
                ],
                checks: &[],
            },
            Experiment::Amplitude => OutputNames {
                columns: &["eps", "amplitude_re", "amplitude_im", "fit_re", "fit_im"],
                constants: &["finite_part", "finite_part_im", "residual", "condition_number", "bias_bound"],
                checks: &[],
            },
        }
    }

    pub fn constant_name_known(self, name: &str, params: &Params) -> bool {
        if self.outputs().constants.contains(&name) {
            return true;
        }
        self == Experiment::Traces
            && params.zeta_points.as_ref().is_some_and(|zs| zs.iter().any(|&z| zeta_constant_name(z) == name))
    }

    pub fn slope_name_known(self, name: &str, params: &Params) -> bool {
        match self {
            Experiment::SlicingOrder => name == "error_vs_M",
            Experiment::Stroboscopic => params
                .orders
                .as_ref()
                .is_some_and(|orders| orders.iter().any(|&l| stroboscopic_slope_name(l) == name)),
            _ => false,
        }
    }

    fn default_tol(self) -> f64 {
        match self {
            Experiment::Stroboscopic => 1e-13,
            Experiment::EnergyStability => 1e-11,
            _ => 1e-10,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn stroboscopic_slope_name(order: usize) -> String {
    format!("error_vs_T_L{order}")
}

pub fn zeta_constant_name(s: f64) -> String {
    format!("zeta_at_{s}")
}

/// One CSV cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            // 17 significant digits round-trip every f64
            Cell::Float(v) => write!(f, "{v:.16e}"),
        }
    }
}

fn int(v: usize) -> Cell {
    Cell::Int(v as i64)
}

fn float(v: f64) -> Cell {
    Cell::Float(v)
}

/// Everything an experiment measured, before criteria are applied.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
    pub slopes: BTreeMap<String, SlopeFit>,
    pub constants: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, bool>,
    /// Largest `N_ref` doubling delta of any oracle used.
    pub oracle_delta: Option<f64>,
}

impl Outcome {
    fn new(experiment: Experiment) -> Self {
        Outcome {
            columns: experiment.outputs().columns,
            rows: Vec::new(),
            slopes: BTreeMap::new(),
            constants: BTreeMap::new(),
            checks: BTreeMap::new(),
            oracle_delta: None,
        }
    }

    fn constant(&mut self, name: &str, value: f64) {
        self.constants.insert(name.to_string(), value);
    }

    fn check(&mut self, name: &str, value: bool) {
        self.checks.insert(name.to_string(), value);
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("cannot build {what}: {source}")]
    Setup { what: &'static str, source: cutofflab_core::Error },
    #[error("sweep point {point} failed: {source}")]
    Point { point: String, source: cutofflab_core::Error },
}

fn at(point: impl Into<String>) -> impl FnOnce(cutofflab_core::Error) -> RunError {
    let point = point.into();
    move |source| RunError::Point { point, source }
}

/// Resolved numeric defaults shared by the sweeps.
struct Setup<'a> {
    family: &'a HamiltonianFamily,
    model: &'a Arc<SpectralModel>,
    p: &'a Params,
    tol: f64,
    quad_tol: f64,
    s: f64,
    t: f64,
}

pub fn run(config: &ExperimentConfig, model: &Arc<SpectralModel>, family: &HamiltonianFamily) -> Result<Outcome, RunError> {
    let exp = config.experiment;
    let p = &config.params;
    let setup = Setup {
        family,
        model,
        p,
        tol: p.tol.unwrap_or(exp.default_tol()),
        quad_tol: p.quad_tol.unwrap_or(1e-13),
        s: p.s.unwrap_or(0.0),
        t: p.t.unwrap_or(1.0),
    };
    let mut out = Outcome::new(exp);
    match exp {
        Experiment::CutoffConvergence => cutoff_convergence(&setup, initial_vector(config, model), &mut out)?,
        Experiment::SlicingOrder => slicing_order(&setup, &mut out)?,
        Experiment::Duhamel => duhamel(&setup, initial_vector(config, model), &mut out)?,
        Experiment::EnergyStability => energy_stability(&setup, &mut out)?,
        Experiment::WordConvergence => word_convergence(&setup, initial_vector(config, model), &mut out)?,
        Experiment::FmCoefficients => fm_coefficients(&setup, initial_vector(config, model), &mut out)?,
        Experiment::Stroboscopic => stroboscopic(&setup, &mut out)?,
        Experiment::EffectiveGroup => effective_group(&setup, initial_vector(config, model), &mut out)?,
        Experiment::Traces => traces(&setup, &mut out)?,
        Experiment::Amplitude => amplitude(&setup, &mut out)?,
    }
    Ok(out)
}

/// Explicit modes if given, else seeded random modes `1..=random_support`,
/// else the ground mode; normalized.
pub fn initial_vector(config: &ExperimentConfig, model: &Arc<SpectralModel>) -> ScaleVector {
    let p = &config.params;
    let raw = if let Some(modes) = &p.initial {
        ScaleVector::from_pairs(model, modes.iter().map(|m| (m.index, C64::new(m.re, m.im))))
    } else if let Some(support) = p.random_support {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        ScaleVector::from_pairs(
            model,
            (1..=support).map(|j| (j, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))),
        )
    } else {
        ScaleVector::basis(model, 1)
    };
    let norm = raw.norm();
    if norm > 0.0 {
        raw.scaled(C64::new(1.0 / norm, 0.0))
    } else {
        raw
    }
}

fn ns(p: &Params) -> &[f64] {
    p.ns.as_deref().unwrap_or(&[])
}

fn cutoff_convergence(ctx: &Setup, u: ScaleVector, out: &mut Outcome) -> Result<(), RunError> {
    let n_ref = ctx.p.n_ref.unwrap_or_default();
    let reference = reference_solution(ctx.family, n_ref, ctx.s, ctx.t, &u, ctx.tol).map_err(at(format!("N_ref = {n_ref}")))?;
    let points = ns(ctx.p)
        .par_iter()
        .map(|&n| {
            let space = cutoff_space(ctx.model, n);
            let evolved = cutoff_propagator(ctx.family, &space, ctx.s, ctx.t, ctx.tol)
                .and_then(|prop| prop.apply(&u))
                .and_then(|v| v.distance(&reference.state))
                .map_err(at(format!("N = {n}")))?;
            Ok((n, space.dim(), evolved))
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let delta = reference.self_check_delta;
    for &(n, dim, error) in &points {
        out.rows.push(vec![float(n), int(dim), float(error), float(delta)]);
    }
    let errors: Vec<f64> = points.iter().map(|p| p.2).collect();
    out.constant("min_error", errors.iter().copied().fold(f64::INFINITY, f64::min));
    out.constant("final_error", errors.last().copied().unwrap_or(f64::NAN));
    out.constant("oracle_delta", delta);
    out.check("errors_decreasing", errors.windows(2).all(|w| w[1] < w[0]));
    out.oracle_delta = Some(delta);
    Ok(())
}

fn slicing_order(ctx: &Setup, out: &mut Outcome) -> Result<(), RunError> {
    let n = ctx.p.n.unwrap_or_default();
    let ms = ctx.p.ms.clone().unwrap_or_default();
    let space = cutoff_space(ctx.model, n);
    let order = slicing_order_sweep(ctx.family, &space, ctx.s, ctx.t, &ms).map_err(at(format!("N = {n}, Ms = {ms:?}")))?;
    for &(m, error) in &order.errors {
        out.rows.push(vec![int(m), float(error)]);
    }
    out.constant("final_error", order.errors.last().map_or(f64::NAN, |e| e.1));
    out.check("nondegenerate", !order.is_degenerate());
    if let Some(fit) = order.fit {
        out.slopes.insert("error_vs_M".into(), fit);
    }
    Ok(())
}

fn duhamel(ctx: &Setup, u: ScaleVector, out: &mut Outcome) -> Result<(), RunError> {
    let n_ref = ctx.p.n_ref.unwrap_or_default();
    let quad_points = ctx.p.quad_points.unwrap_or(8);
    let reports = ns(ctx.p)
        .par_iter()
        .map(|&n| {
            let report = duhamel_bound(ctx.family, n, n_ref, &u, ctx.s, ctx.t, quad_points, ctx.tol)
                .map_err(at(format!("N = {n}")))?;
            Ok((n, cutoff_space(ctx.model, n).dim(), report))
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let mut excess = f64::NEG_INFINITY;
    let mut delta: f64 = 0.0;
    for (n, dim, r) in &reports {
        out.rows.push(vec![float(*n), int(*dim), float(r.error), float(r.bound), int(r.panels), float(r.oracle_delta)]);
        excess = excess.max(r.error - r.bound);
        delta = delta.max(r.oracle_delta);
    }
    out.constant("max_excess", excess);
    out.constant("oracle_delta", delta);
    out.check("bound_holds", reports.iter().all(|(_, _, r)| r.error <= r.bound + 1e-8));
    out.oracle_delta = Some(delta);
    Ok(())
}

fn energy_stability(ctx: &Setup, out: &mut Outcome) -> Result<(), RunError> {
    let r = ctx.p.r.unwrap_or_default();
    let times = ctx.p.times.clone().unwrap_or_default();
    let grid_points = ctx.p.grid_points.unwrap_or(129);
    let end = times.iter().copied().fold(ctx.s, f64::max);
    let per_cutoff = ns(ctx.p)
        .par_iter()
        .map(|&n| {
            let space = cutoff_space(ctx.model, n);
            let constant = commutator_constant(ctx.family, &space, r, (ctx.s, end), grid_points)
                .map_err(at(format!("N = {n}")))?;
            let checks = times
                .par_iter()
                .map(|&t| {
                    energy_stability_check(ctx.family, &space, r, ctx.s, t, constant, ctx.tol)
                        .map_err(at(format!("N = {n}, t = {t}")))
                })
                .collect::<Result<Vec<_>, RunError>>()?;
            Ok((n, space.dim(), constant, checks))
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let mut worst: f64 = 0.0;
    let mut holds = true;
    for (n, dim, constant, checks) in &per_cutoff {
        for (t, check) in times.iter().zip(checks) {
            out.rows.push(vec![float(*n), int(*dim), float(*t), float(*constant), float(check.max_ratio), float(check.bound)]);
            worst = worst.max(check.max_ratio / check.bound);
            holds &= check.holds();
        }
    }
    let constants: Vec<f64> = per_cutoff.iter().map(|c| c.2).collect();
    out.constant("max_ratio_over_bound", worst);
    out.constant("max_commutator_constant", constants.iter().copied().fold(0.0, f64::max));
    // C(N_last)/C(N_first): values well above 1 flag a cut-off dependent constant
    let growth = match (constants.first(), constants.last()) {
        (Some(&first), Some(&last)) if first > 0.0 => last / first,
        _ => 1.0,
    };
    out.constant("commutator_constant_growth", growth);
    out.check("stability_holds", holds);
    Ok(())
}

fn word_convergence(ctx: &Setup, u: ScaleVector, out: &mut Outcome) -> Result<(), RunError> {
    let times = ctx.p.word_times.clone().unwrap_or_default();
    let lengths: Vec<usize> = (0..=times.len()).collect();
    let per_length = lengths
        .par_iter()
        .map(|&m| {
            let word = &times[..m];
            let exact = word_apply(ctx.family, word, &u, None).map_err(at(format!("m = {m}, exact word")))?;
            ns(ctx.p)
                .iter()
                .map(|&n| {
                    let space = cutoff_space(ctx.model, n);
                    let error = word_apply(ctx.family, word, &u, Some(&space))
                        .and_then(|v| v.distance(&exact))
                        .map_err(at(format!("m = {m}, N = {n}")))?;
                    Ok((n, space.dim(), error))
                })
                .collect::<Result<Vec<_>, RunError>>()
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let mut final_error: f64 = 0.0;
    let mut exact = true;
    for (m, points) in per_length.iter().enumerate() {
        for &(n, dim, error) in points {
            out.rows.push(vec![int(m), float(n), int(dim), float(error)]);
        }
        let last = points.last().map_or(0.0, |p| p.2);
        final_error = final_error.max(last);
        exact &= last == 0.0;
    }
    out.constant("final_error", final_error);
    out.check("eventually_exact", exact);
    Ok(())
}

/// Shared shape of the FM sweeps: `apply(N)` is a state at cut-off `N`,
/// compared with `apply(N_ref)`, which is itself checked against `apply(2·N_ref)`.
fn reference_sweep(
    ctx: &Setup,
    label: &str,
    orders: &[usize],
    apply: impl Fn(usize, f64) -> cutofflab_core::Result<ScaleVector> + Sync,
    out: &mut Outcome,
) -> Result<(), RunError> {
    let n_ref = ctx.p.n_ref.unwrap_or_default();
    let per_order = orders
        .par_iter()
        .map(|&ell| {
            let (reference, doubled) = rayon::join(|| apply(ell, n_ref), || apply(ell, 2.0 * n_ref));
            let reference = reference.map_err(at(format!("{label} = {ell}, N_ref = {n_ref}")))?;
            let delta = doubled
                .and_then(|d| d.distance(&reference))
                .map_err(at(format!("{label} = {ell}, N = {}", 2.0 * n_ref)))?;
            let points = ns(ctx.p)
                .par_iter()
                .map(|&n| {
                    let deviation = apply(ell, n)
                        .and_then(|v| v.distance(&reference))
                        .map_err(at(format!("{label} = {ell}, N = {n}")))?;
                    Ok((n, cutoff_space(ctx.model, n).dim(), deviation))
                })
                .collect::<Result<Vec<_>, RunError>>()?;
            Ok((ell, delta, points))
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let (mut final_deviation, mut delta_max, mut monotone) = (0.0f64, 0.0f64, true);
    for (ell, delta, points) in &per_order {
        for &(n, dim, deviation) in points {
            out.rows.push(vec![int(*ell), float(n), int(dim), float(deviation), float(*delta)]);
        }
        final_deviation = final_deviation.max(points.last().map_or(0.0, |p| p.2));
        delta_max = delta_max.max(*delta);
        monotone &= points.windows(2).all(|w| w[1].2 <= w[0].2);
    }
    out.constant("final_deviation", final_deviation);
    out.constant("oracle_delta", delta_max);
    out.check("deviations_nonincreasing", monotone);
    out.oracle_delta = Some(delta_max);
    Ok(())
}

fn fm_coefficients(ctx: &Setup, u: ScaleVector, out: &mut Outcome) -> Result<(), RunError> {
    let orders = ctx.p.orders.clone().unwrap_or_default();
    let apply = |ell: usize, cutoff: f64| {
        let space = cutoff_space(ctx.model, cutoff);
        let h = fm_coefficient(ctx.family, &space, ell, ctx.quad_tol)?;
        Ok(space.from_dense(&(h * space.to_dense(&u)?)))
    };
    reference_sweep(ctx, "ell", &orders, apply, out)
}

fn effective_group(ctx: &Setup, u: ScaleVector, out: &mut Outcome) -> Result<(), RunError> {
    let order = ctx.p.order.unwrap_or_default();
    let period = ctx.p.period.unwrap_or_default();
    let time = ctx.t;
    let apply = |order: usize, cutoff: f64| {
        let space = cutoff_space(ctx.model, cutoff);
        let h = effective_hamiltonian(ctx.family, &space, order, period, ctx.quad_tol)?;
        let group = hermitian_function(&h, |lambda| (-C64::i() * (time * lambda)).exp());
        Ok(space.from_dense(&(group * space.to_dense(&u)?)))
    };
    reference_sweep(ctx, "L", &[order], apply, out)
}

fn stroboscopic(ctx: &Setup, out: &mut Outcome) -> Result<(), RunError> {
    let n = ctx.p.n.unwrap_or_default();
    let space = cutoff_space(ctx.model, n);
    let periods = ctx.p.periods.clone().unwrap_or_default();
    let orders = ctx.p.orders.clone().unwrap_or_default();
    let mut qs = vec![1i64];
    qs.extend(ctx.p.qs.iter().flatten().copied().filter(|&q| q != 1));
    let mut points: Vec<(usize, f64, i64)> = Vec::new();
    for &l in &orders {
        for &t in &periods {
            points.extend(qs.iter().map(|&q| (l, t, q)));
        }
    }
    let errors = points
        .par_iter()
        .map(|&(l, t, q)| {
            stroboscopic_error(ctx.family, &space, l, t, q, ctx.tol).map_err(at(format!("L = {l}, T = {t}, q = {q}")))
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let lookup = |l: usize, t: f64, q: i64| {
        points.iter().position(|&pt| pt == (l, t, q)).map(|i| errors[i]).unwrap_or(f64::NAN)
    };
    let mut telescoping = true;
    for (&(l, t, q), &error) in points.iter().zip(&errors) {
        out.rows.push(vec![int(l), float(t), Cell::Int(q), float(error)]);
        telescoping &= error <= q.unsigned_abs() as f64 * lookup(l, t, 1) * (1.0 + 1e-6);
    }
    for &l in &orders {
        let ys: Vec<f64> = periods.iter().map(|&t| lookup(l, t, 1)).collect();
        let fit = loglog_slope(&periods, &ys).map_err(at(format!("L = {l}, slope fit")))?;
        out.slopes.insert(stroboscopic_slope_name(l), fit);
    }
    out.check("telescoping", telescoping);
    Ok(())
}

fn trace_operator(model: &SpectralModel, name: Option<&str>) -> Option<BandedOperator> {
    match name {
        None | Some("identity") => None,
        Some(term) => model.term(term).cloned(),
    }
}

fn traces(ctx: &Setup, out: &mut Outcome) -> Result<(), RunError> {
    let p = ctx.p;
    let grid = p.eps_grid.clone().unwrap_or_default();
    let exponents = p.exponents.clone().unwrap_or_default();
    let include_log = p.include_log.unwrap_or(false);
    let tail_tol = p.tail_tol.unwrap_or(1e-15);
    let operator = trace_operator(ctx.model, p.operator.as_deref());
    let heats = grid
        .par_iter()
        .map(|&eps| heat_trace(ctx.model, operator.as_ref(), eps, tail_tol).map_err(at(format!("eps = {eps}"))))
        .collect::<Result<Vec<_>, RunError>>()?;
    let values: Vec<C64> = heats.iter().map(|h| h.value).collect();
    let fit = fit_finite_part(&grid, &values, &exponents, include_log).map_err(at("finite-part fit"))?;
    for ((&eps, heat), fitted) in grid.iter().zip(&heats).zip(fitted_values(&fit, &grid)) {
        out.rows.push(vec![float(eps), float(heat.value.re), float(heat.value.im), float(heat.tail_bound), float(fitted.re)]);
    }
    record_fit(&fit, out);
    if let Some(lc) = fit.log_coefficient {
        out.constant("log_coefficient", lc.re);
    }
    if let Some(n) = p.n {
        let (full, compressed) =
            trace_defect(&cutoff_space(ctx.model, n), &BandedOperator::unilateral_shift(), &BandedOperator::shift_adjoint());
        out.constant("defect_full", full.re);
        out.constant("defect_compressed", compressed.re);
    }
    for &s in p.zeta_points.iter().flatten() {
        let z = zeta_value(ctx.model, ZetaOperator::Identity, C64::new(s, 0.0), DEFAULT_ZETA_ORDER)
            .map_err(at(format!("zeta at s = {s}")))?;
        out.constant(&zeta_constant_name(s), z.re);
    }
    Ok(())
}

fn amplitude(ctx: &Setup, out: &mut Outcome) -> Result<(), RunError> {
    let p = ctx.p;
    let n_ref = p.n_ref.unwrap_or_default();
    let grid = p.eps_grid.clone().unwrap_or_default();
    let exponents = p.exponents.clone().unwrap_or_default();
    let report = regularized_amplitude(ctx.family, n_ref, ctx.t, &grid, &exponents, p.include_log.unwrap_or(false), ctx.tol)
        .map_err(at(format!("N_ref = {n_ref}, t = {}", ctx.t)))?;
    for ((&eps, value), fitted) in grid.iter().zip(&report.values).zip(fitted_values(&report.fit, &grid)) {
        out.rows.push(vec![float(eps), float(value.re), float(value.im), float(fitted.re), float(fitted.im)]);
    }
    record_fit(&report.fit, out);
    out.constant("bias_bound", report.bias_bound);
    Ok(())
}

fn record_fit(fit: &cutofflab_core::traces::TraceFit, out: &mut Outcome) {
    out.constant("finite_part", fit.finite_part.re);
    out.constant("finite_part_im", fit.finite_part.im);
    out.constant("residual", fit.residual);
    out.constant("condition_number", fit.condition_number);
}

/// The fitted model evaluated back on the grid.
fn fitted_values(fit: &cutofflab_core::traces::TraceFit, grid: &[f64]) -> Vec<C64> {
    grid.iter()
        .map(|&eps| {
            let powers: C64 = fit.exponents.iter().zip(&fit.power_coefficients).map(|(b, c)| c * eps.powf(-b)).sum();
            let log = fit.log_coefficient.map_or(C64::new(0.0, 0.0), |c| c * eps.ln());
            fit.finite_part + powers + log
        })
        .collect()
}
