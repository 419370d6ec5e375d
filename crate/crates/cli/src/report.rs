//! `results.csv` and `summary.json`, and evaluation of declared criteria.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::{Bound, Criteria};
use crate::experiments::{Experiment, Outcome};

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct SlopeSummary {
    pub value: f64,
    pub residual: f64,
}

/// One declared criterion and whether the run met it.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CriterionResult {
    pub name: String,
    pub requirement: String,
    /// `None` when the experiment did not produce the quantity.
    pub observed: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Summary {
    pub experiment: Experiment,
    pub config_hash: String,
    pub slopes: BTreeMap<String, SlopeSummary>,
    pub constants: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, bool>,
    pub oracle_self_check_delta: Option<f64>,
    pub criteria: Vec<CriterionResult>,
    pub pass: bool,
    pub rows: usize,
    pub wall_clock_seconds: f64,
}

fn bounded(name: String, bound: &Bound, observed: Option<f64>) -> CriterionResult {
    CriterionResult { requirement: bound.to_string(), pass: observed.is_some_and(|v| bound.admits(v)), name, observed }
}

/// Applies the declared criteria; an empty declaration passes.
pub fn evaluate(criteria: &Criteria, outcome: &Outcome, wall_clock_seconds: f64) -> Vec<CriterionResult> {
    let mut out = Vec::new();
    for (name, bound) in &criteria.constants {
        out.push(bounded(format!("constants.{name}"), bound, outcome.constants.get(name).copied()));
    }
    for (name, bound) in &criteria.slopes {
        out.push(bounded(format!("slopes.{name}"), bound, outcome.slopes.get(name).map(|f| f.slope)));
    }
    for name in &criteria.checks {
        let value = outcome.checks.get(name).copied();
        out.push(CriterionResult {
            name: format!("checks.{name}"),
            requirement: "true".into(),
            observed: value.map(|v| if v { 1.0 } else { 0.0 }),
            pass: value == Some(true),
        });
    }
    if let Some(limit) = criteria.max_runtime_seconds {
        out.push(CriterionResult {
            name: "max_runtime_seconds".into(),
            requirement: format!("≤ {limit}"),
            observed: Some(wall_clock_seconds),
            pass: wall_clock_seconds <= limit,
        });
    }
    out
}

pub fn summarize(experiment: Experiment, config_hash: String, criteria: &Criteria, outcome: &Outcome, wall_clock_seconds: f64) -> Summary {
    let results = evaluate(criteria, outcome, wall_clock_seconds);
    Summary {
        experiment,
        config_hash,
        slopes: outcome
            .slopes
            .iter()
            .map(|(k, f)| (k.clone(), SlopeSummary { value: f.slope, residual: f.residual }))
            .collect(),
        constants: outcome.constants.clone(),
        checks: outcome.checks.clone(),
        oracle_self_check_delta: outcome.oracle_delta,
        pass: results.iter().all(|c| c.pass),
        criteria: results,
        rows: outcome.rows.len(),
        wall_clock_seconds,
    }
}

/// CSV text: header line, then one line per row in sweep order.
pub fn render_csv(outcome: &Outcome) -> String {
    let mut text = outcome.columns.join(",");
    text.push('\n');
    for row in &outcome.rows {
        debug_assert_eq!(row.len(), outcome.columns.len());
        let line: Vec<String> = row.iter().map(ToString::to_string).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    text
}

pub fn write_outputs(dir: &Path, outcome: &Outcome, summary: &Summary) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), render_csv(outcome))?;
    let mut file = std::fs::File::create(dir.join("summary.json"))?;
    // non-finite constants serialize as null
    serde_json::to_writer_pretty(&mut file, summary)?;
    file.write_all(b"\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Cell;
    use cutofflab_core::fit::SlopeFit;

    fn outcome() -> Outcome {
        let mut out = Outcome {
            columns: &["M", "error"],
            rows: vec![vec![Cell::Int(64), Cell::Float(0.1)], vec![Cell::Int(128), Cell::Float(-2.5e-7)]],
            slopes: BTreeMap::new(),
            constants: BTreeMap::new(),
            checks: BTreeMap::new(),
            oracle_delta: None,
        };
        out.slopes.insert("error_vs_M".into(), SlopeFit { slope: 1.05, intercept: 0.0, residual: 0.01 });
        out.constants.insert("final_error".into(), 2.5e-7);
        out.checks.insert("nondegenerate".into(), true);
        out
    }

    fn bound(target: Option<f64>, tolerance: Option<f64>, max: Option<f64>, min: Option<f64>) -> Bound {
        Bound { target, tolerance, max, min }
    }

    #[test]
    fn csv_keeps_row_order_and_full_precision() {
        let csv = render_csv(&outcome());
        assert_eq!(csv, "M,error\n64,1.0000000000000001e-1\n128,-2.4999999999999999e-7\n");
        assert_eq!("-2.4999999999999999e-7".parse::<f64>().unwrap(), -2.5e-7);
    }

    #[test]
    fn empty_criteria_pass() {
        let summary = summarize(Experiment::SlicingOrder, "h".into(), &Criteria::default(), &outcome(), 0.5);
        assert!(summary.criteria.is_empty());
        assert!(summary.pass);
        assert_eq!(summary.slopes["error_vs_M"], SlopeSummary { value: 1.05, residual: 0.01 });
    }

    #[test]
    fn each_criterion_kind_is_applied() {
        let mut criteria = Criteria::default();
        criteria.slopes.insert("error_vs_M".into(), bound(Some(1.0), Some(0.2), None, None));
        criteria.constants.insert("final_error".into(), bound(None, None, Some(1e-6), None));
        criteria.checks.push("nondegenerate".into());
        criteria.max_runtime_seconds = Some(1.0);
        assert!(summarize(Experiment::SlicingOrder, "h".into(), &criteria, &outcome(), 0.5).pass);

        criteria.constants.insert("final_error".into(), bound(None, None, None, Some(1e-6)));
        let failed = summarize(Experiment::SlicingOrder, "h".into(), &criteria, &outcome(), 0.5);
        assert!(!failed.pass);
        assert_eq!(failed.criteria.iter().filter(|c| !c.pass).count(), 1);
        assert!(!summarize(Experiment::SlicingOrder, "h".into(), &Criteria { max_runtime_seconds: Some(0.1), ..Default::default() }, &outcome(), 0.5).pass);
    }

    #[test]
    fn missing_quantities_fail() {
        let mut criteria = Criteria::default();
        criteria.checks.push("telescoping".into());
        let summary = summarize(Experiment::SlicingOrder, "h".into(), &criteria, &outcome(), 0.0);
        assert!(!summary.pass);
        assert_eq!(summary.criteria[0].observed, None);
    }

    #[test]
    fn target_bound_is_inclusive() {
        let b = bound(Some(-1.0), Some(0.0), None, None);
        assert!(b.admits(-1.0));
        assert!(!b.admits(-1.0 + f64::EPSILON));
        assert!(!bound(None, None, Some(1.0), None).admits(f64::NAN));
    }
}
