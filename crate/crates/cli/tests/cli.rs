use std::path::{Path, PathBuf};
use std::process::Command;

use cutofflab::config::config_hash;
use cutofflab::{experiment_listing, parse_config, run_experiment, validate_config, Experiment};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn example(name: &str) -> String {
    std::fs::read_to_string(configs_dir().join(format!("{name}.json"))).unwrap()
}

fn edit(name: &str, f: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut value: serde_json::Value = serde_json::from_str(&example(name)).unwrap();
    f(&mut value);
    serde_json::to_string_pretty(&value).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cutofflab"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn listing_has_ten_anchored_entries_and_is_stable() {
    let listing = experiment_listing();
    assert_eq!(listing, experiment_listing());
    let entries: Vec<&str> = listing.lines().filter(|l| !l.starts_with(' ')).collect();
    assert_eq!(entries.len(), 10);
    for exp in Experiment::ALL {
        assert!(entries.contains(&exp.name()));
    }
    assert_eq!(listing.matches("  anchor: ").count(), 10);

    let first = bin().arg("list-experiments").output().unwrap();
    let second = bin().arg("list-experiments").output().unwrap();
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(String::from_utf8(first.stdout).unwrap(), listing);
}

#[test]
fn every_example_config_is_valid() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        let config = parse_config(&text).unwrap();
        assert_eq!(validate_config(&config), vec![], "{}", config.experiment);
        seen += 1;
    }
    assert_eq!(seen, Experiment::ALL.len());
}

#[test]
fn decreasing_cutoffs_give_one_named_violation() {
    let text = edit("cutoff-convergence", |v| v["params"]["ns"] = serde_json::json!([10, 40, 20]));
    let violations = validate_config(&parse_config(&text).unwrap());
    assert_eq!(violations.len(), 1, "{violations:?}");
    assert_eq!(violations[0].field, "params.ns");
}

#[test]
fn unknown_term_gives_one_named_violation() {
    let text = edit("cutoff-convergence", |v| v["family"]["terms"][1]["name"] = "cos_y".into());
    let violations = validate_config(&parse_config(&text).unwrap());
    assert_eq!(violations.len(), 1, "{violations:?}");
    assert_eq!(violations[0].field, "family.terms[1].name");
    assert!(violations[0].message.contains("cos_y"));
}

#[test]
fn every_violation_is_listed() {
    let text = edit("cutoff-convergence", |v| {
        v["params"]["ns"] = serde_json::json!([20, 10]);
        v["params"]["tol"] = serde_json::json!(-1.0);
        v["family"]["terms"][0]["coefficient"] = "square_wave".into();
        v["criteria"]["constants"]["no_such_constant"] = serde_json::json!({"max": 1.0});
    });
    let fields: Vec<String> = validate_config(&parse_config(&text).unwrap()).into_iter().map(|v| v.field).collect();
    for expected in ["params.ns", "params.tol", "family.terms[0].coefficient", "criteria.constants.no_such_constant"] {
        assert!(fields.iter().any(|f| f == expected), "{expected} missing from {fields:?}");
    }
}

#[test]
fn missing_params_and_period_are_named() {
    let text = edit("stroboscopic", |v| {
        v["params"].as_object_mut().unwrap().remove("periods");
        v["family"].as_object_mut().unwrap().remove("period");
    });
    let fields: Vec<String> = validate_config(&parse_config(&text).unwrap()).into_iter().map(|v| v.field).collect();
    assert!(fields.contains(&"params.periods".to_string()), "{fields:?}");
    assert!(fields.contains(&"family.period".to_string()), "{fields:?}");
}

#[test]
fn unknown_keys_are_rejected() {
    let text = edit("traces", |v| v["params"]["eps_grd"] = serde_json::json!([0.1]));
    let err = parse_config(&text).unwrap_err().to_string();
    assert!(err.contains("eps_grd"), "{err}");
}

#[test]
fn validate_command_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let good = bin().args(["validate", "--config"]).arg(configs_dir().join("traces.json")).output().unwrap();
    assert!(good.status.success());
    assert_eq!(String::from_utf8(good.stdout).unwrap().trim(), "valid");

    let path = write_config(dir.path(), &edit("traces", |v| v["family"]["terms"][0]["name"] = "nope".into()));
    let bad = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let stdout = String::from_utf8(bad.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.starts_with("family.terms[0].name: unknown term `nope`"));
}

#[test]
fn config_hash_ignores_formatting() {
    let text = example("traces");
    let compact = serde_json::to_string(&serde_json::from_str::<serde_json::Value>(&text).unwrap()).unwrap();
    assert_eq!(config_hash(&text).unwrap(), config_hash(&compact).unwrap());
    let changed = edit("traces", |v| v["seed"] = 1.into());
    assert_ne!(config_hash(&text).unwrap(), config_hash(&changed).unwrap());
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = edit("energy-stability", |v| v["params"]["ns"] = serde_json::json!([6, 12]));
    let path = write_config(dir.path(), &text);
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "3"].into_iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let status = bin()
            .args(["run", "--config"])
            .arg(&path)
            .arg("--out")
            .arg(&out)
            .env("CUTOFFLAB_WORKERS", workers)
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        outputs.push(std::fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn csv_floats_carry_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(&example("traces")).unwrap();
    let report = run_experiment(&config, "h".into(), dir.path(), Some(1)).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("eps,trace_re,trace_im,tail_bound,fit_re"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), report.outcome.rows.len());
    for row in rows {
        for field in row.split(',') {
            let mantissa = field.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{field}");
            assert!(field.parse::<f64>().is_ok());
        }
    }
}

#[test]
fn summary_has_the_published_keys() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(&example("traces")).unwrap();
    run_experiment(&config, "abc".into(), dir.path(), None).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    for key in ["experiment", "config_hash", "slopes", "constants", "pass", "wall_clock_seconds"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
    assert_eq!(summary["experiment"], "traces");
    assert_eq!(summary["config_hash"], "abc");
}

#[test]
fn traces_on_index_spectrum_recover_minus_one_half() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(&example("traces")).unwrap();
    let report = run_experiment(&config, String::new(), dir.path(), None).unwrap();
    assert!((report.summary.constants["finite_part"] + 0.5).abs() <= 1e-3);
    assert!(report.summary.pass);
}

#[test]
fn stroboscopic_first_order_slope_is_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(&example("stroboscopic")).unwrap();
    let report = run_experiment(&config, String::new(), dir.path(), None).unwrap();
    let slope = report.summary.slopes["error_vs_T_L1"];
    assert!((slope.value - 3.0).abs() <= 0.3, "{slope:?}");
    assert!(slope.residual >= 0.0);
    assert!(report.summary.pass);
}

#[test]
fn cutoff_convergence_reaches_small_errors_with_oracle_delta() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(&example("cutoff-convergence")).unwrap();
    let report = run_experiment(&config, String::new(), dir.path(), None).unwrap();
    assert!(report.summary.constants["min_error"] < 1e-6);
    let delta = report.summary.oracle_self_check_delta.unwrap();
    assert!(delta < 1e-8);
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(csv.starts_with("N,d_N,error,oracle_delta\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn exit_status_follows_declared_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let run = |text: &str| {
        let path = write_config(dir.path(), text);
        bin().args(["run", "--config"]).arg(path).arg("--out").arg(dir.path().join("out")).output().unwrap()
    };
    assert_eq!(run(&example("traces")).status.code(), Some(0));
    let strict = edit("traces", |v| v["criteria"]["constants"]["finite_part"] = serde_json::json!({"max": -1.0}));
    let failed = run(&strict);
    assert_eq!(failed.status.code(), Some(1));
    assert!(String::from_utf8(failed.stdout).unwrap().contains("FAIL constants.finite_part"));
    let undeclared = edit("traces", |v| v["criteria"] = serde_json::json!({}));
    assert_eq!(run(&undeclared).status.code(), Some(0));
}

#[test]
fn failures_name_the_sweep_point() {
    let dir = tempfile::tempdir().unwrap();
    let text = edit("amplitude", |v| v["params"]["n_ref"] = serde_json::json!(50.5));
    let path = write_config(dir.path(), &text);
    let out = bin().args(["run", "--config"]).arg(path).arg("--out").arg(dir.path().join("out")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("sweep point N_ref = 50.5"), "{stderr}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn invalid_config_is_not_run() {
    let dir = tempfile::tempdir().unwrap();
    let text = edit("word-convergence", |v| v["params"]["word_times"] = serde_json::json!([0.1, 0.2, 0.3, 0.4]));
    let config = parse_config(&text).unwrap();
    let err = run_experiment(&config, String::new(), dir.path(), None).unwrap_err();
    assert!(err.to_string().contains("params.word_times"), "{err}");
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}
