//! End-to-end tests of the `increx` binary: the bundled fixture configs are
//! golden tests with closed-form expected values, plus exit-code and
//! idempotence contracts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use increx_core::minimax::two_term_closed_form;
use increx_core::spectral::outer_factor_full;
use increx_core::{FrequencyGrid, IncrementSpec};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_increx"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_fixture(name: &str, out: &Path, extra: &[&str]) -> Output {
    let config = fixture(name);
    let mut args = vec![
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run_cli(&args)
}

fn read_json(path: &Path) -> Value {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("read {path:?}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parse {path:?}: {e}"))
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("process not killed by signal")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn two_point_extrapolate_reports_reference_mse() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_fixture("two_point_extrapolate.json", dir.path(), &[]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));

    let result = read_json(&dir.path().join("result.json"));
    let mse = result["mse"].as_f64().unwrap();
    assert!(
        (mse - 7.25).abs() <= 1e-8,
        "two-point reference mse is {mse}, expected 7.25"
    );
    assert_eq!(result["command"], "extrapolate");
    assert_eq!(result["grid_size"], 4096);

    let characteristic = fs::read_to_string(dir.path().join("characteristic.csv")).unwrap();
    assert!(characteristic.starts_with("lambda,re,im\n"));
    assert_eq!(characteristic.lines().count(), 4097);
}

#[test]
fn two_term_minimax_matches_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_fixture(
        "two_term_minimax.json",
        dir.path(),
        &["--class", "power-cap"],
    );
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));

    let result = read_json(&dir.path().join("result.json"));
    let phi0: Vec<f64> = result["phi0"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();

    let spec = IncrementSpec::new(1, 1).unwrap();
    let grid = FrequencyGrid::new(4096).unwrap();
    let outer = outer_factor_full(spec, &grid).unwrap();
    let closed =
        two_term_closed_form(1.0, 1.0, spec, 1.0, outer.coeffs()[0], outer.coeffs()[1]).unwrap();

    assert_eq!(phi0.len(), 2, "two-term solve has a length-2 factor");
    for (k, (&got, &want)) in phi0.iter().zip(closed.phi.iter()).enumerate() {
        assert!(
            (got - want).abs() <= 1e-8,
            "phi0[{k}] = {got}, closed form {want}"
        );
    }
    assert_eq!(result["class"], "power-cap");

    // The factor CSV carries the same coefficients.
    let text = fs::read_to_string(dir.path().join("phi0.csv")).unwrap();
    let first: f64 = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((first - closed.phi[0]).abs() <= 1e-8);
}

#[test]
fn constant_density_factorizes_to_a_unit_impulse() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_fixture("constant_factorize.json", dir.path(), &[]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));

    let result = read_json(&dir.path().join("result.json"));
    let head: Vec<f64> = result["head"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((head[0] - 1.0).abs() <= 1e-12, "leading coefficient {}", head[0]);
    for (k, &c) in head.iter().enumerate().skip(1) {
        assert!(c.abs() <= 1e-12, "coefficient {k} is {c}, expected 0");
    }
    assert!((result["power"].as_f64().unwrap() - 1.0).abs() <= 1e-12);

    let csv = fs::read_to_string(dir.path().join("factor.csv")).unwrap();
    assert!(csv.starts_with("k,coeff\n"));
    assert_eq!(csv.lines().count(), 17, "16 coefficients plus the header");
}

#[test]
fn simulate_validates_the_analytic_error_and_flags_the_detuned_control() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_fixture("two_point_simulate.json", dir.path(), &["--quiet"]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));
    assert!(
        output.stdout.is_empty(),
        "--quiet leaves stdout empty, got {:?}",
        String::from_utf8_lossy(&output.stdout)
    );

    let result = read_json(&dir.path().join("result.json"));
    let report = &result["report"];
    assert!((report["analytic_mse"].as_f64().unwrap() - 7.25).abs() <= 1e-9);
    assert!(report["z"].as_f64().unwrap().abs() <= 4.0);
    assert_eq!(report["trials"], 400);
    let detuned_z = result["detuned"]["z"].as_f64().unwrap();
    assert!(
        detuned_z >= 3.0,
        "detuned weights must lose decisively, z = {detuned_z}"
    );
}

#[test]
fn rerunning_a_config_overwrites_byte_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_fixture("two_point_extrapolate.json", dir.path(), &[]);
    assert_eq!(exit_code(&first), 0);
    let result_1 = fs::read(dir.path().join("result.json")).unwrap();
    let characteristic_1 = fs::read(dir.path().join("characteristic.csv")).unwrap();
    let mut manifest_1 = read_json(&dir.path().join("manifest.json"));

    let second = run_fixture("two_point_extrapolate.json", dir.path(), &[]);
    assert_eq!(exit_code(&second), 0);
    let result_2 = fs::read(dir.path().join("result.json")).unwrap();
    let characteristic_2 = fs::read(dir.path().join("characteristic.csv")).unwrap();
    let mut manifest_2 = read_json(&dir.path().join("manifest.json"));

    assert_eq!(result_1, result_2, "result.json must be byte-identical");
    assert_eq!(
        characteristic_1, characteristic_2,
        "characteristic.csv must be byte-identical"
    );
    // The manifest is compared with its timestamp removed; everything else
    // must agree exactly.
    for manifest in [&mut manifest_1, &mut manifest_2] {
        manifest
            .as_object_mut()
            .unwrap()
            .remove("timestamp_unix")
            .expect("manifest carries a timestamp");
    }
    assert_eq!(manifest_1, manifest_2);
}

#[test]
fn seed_flag_overrides_the_config_and_pins_the_outputs() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let dir_c = tempfile::tempdir().unwrap();
    for (dir, seed) in [(&dir_a, "7"), (&dir_b, "7"), (&dir_c, "8")] {
        let output = run_fixture(
            "two_point_simulate.json",
            dir.path(),
            &["--seed", seed, "--quiet"],
        );
        assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));
    }
    let result_a = fs::read(dir_a.path().join("result.json")).unwrap();
    let result_b = fs::read(dir_b.path().join("result.json")).unwrap();
    assert_eq!(result_a, result_b, "same seed, same bytes");

    let empirical_a = read_json(&dir_a.path().join("result.json"))["report"]["empirical_mse"]
        .as_f64()
        .unwrap();
    let empirical_c = read_json(&dir_c.path().join("result.json"))["report"]["empirical_mse"]
        .as_f64()
        .unwrap();
    assert_ne!(empirical_a, empirical_c, "different seeds, different draws");

    let manifest = read_json(&dir_a.path().join("manifest.json"));
    assert_eq!(manifest["seed"], 7, "manifest records the effective seed");
}

#[test]
fn command_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_fixture("two_point_extrapolate.json", dir.path(), &["factorize"]);
    assert_eq!(exit_code(&output), 1);
    let stderr = stderr_of(&output);
    assert!(stderr.contains("factorize") && stderr.contains("extrapolate"));
}

#[test]
fn class_selector_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_fixture("two_term_minimax.json", dir.path(), &["--class", "moments"]);
    assert_eq!(exit_code(&output), 1);
    assert!(stderr_of(&output).contains("power-cap"));
}

#[test]
fn out_of_range_and_unknown_parameters_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();

    let bad_order = dir.path().join("bad_order.json");
    fs::write(
        &bad_order,
        r#"{"command": "factorize", "spec": {"order": 9, "step": 1},
            "density": {"kind": "constant", "level": 1.0}}"#,
    )
    .unwrap();
    let output = run_cli(&[
        "--config",
        bad_order.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1);
    assert!(stderr_of(&output).contains("spec.order"));

    let unknown_field = dir.path().join("unknown_field.json");
    fs::write(
        &unknown_field,
        r#"{"command": "factorize", "grdi_size": 64}"#,
    )
    .unwrap();
    let output = run_cli(&[
        "--config",
        unknown_field.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1);
    assert!(stderr_of(&output).contains("grdi_size"));
}

#[test]
fn missing_config_and_missing_referenced_files_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_cli(&[
        "--config",
        dir.path().join("absent.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1);
    assert!(stderr_of(&output).contains("absent.json"));

    let config = dir.path().join("missing_csv.json");
    fs::write(
        &config,
        r#"{"command": "extrapolate", "spec": {"order": 1, "step": 1},
            "grid_size": 64,
            "functional": {"coeffs": [1.0, 1.0]},
            "density": {"kind": "csv", "path": "no_such_density.csv"}}"#,
    )
    .unwrap();
    let output = run_cli(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1);
    assert!(stderr_of(&output).contains("does not exist"));
}

#[test]
fn infeasible_moments_are_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad_moments.json");
    fs::write(
        &config,
        r#"{"command": "minimax", "spec": {"order": 1, "step": 1},
            "grid_size": 256,
            "functional": {"coeffs": [1.0, 0.5]},
            "class": {"kind": "moments", "rho": [1.0, 0.99, 0.0]}}"#,
    )
    .unwrap();
    let output = run_cli(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 2, "stderr: {}", stderr_of(&output));
    assert!(stderr_of(&output).contains("numerical failure"));
}

#[test]
fn dump_errors_writes_one_row_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("dump.json");
    fs::write(
        &config,
        r#"{"command": "simulate", "spec": {"order": 1, "step": 1},
            "grid_size": 256, "seed": 11,
            "factor": {"coeffs": [1.0, 0.5]},
            "target": {"kind": "increment", "m": 0},
            "trials": 25, "path_length": 600,
            "dump_errors": true}"#,
    )
    .unwrap();
    let output = run_cli(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));
    let csv = fs::read_to_string(dir.path().join("errors.csv")).unwrap();
    assert!(csv.starts_with("trial,error\n"));
    assert_eq!(csv.lines().count(), 26, "25 trials plus the header");

    let manifest = read_json(&dir.path().join("manifest.json"));
    assert!(manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .any(|v| v == "errors.csv"));
}

#[test]
fn grid_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_fixture(
        "two_point_extrapolate.json",
        dir.path(),
        &["--grid", "1024", "--quiet"],
    );
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));
    let result = read_json(&dir.path().join("result.json"));
    assert_eq!(result["grid_size"], 1024);
    // The reference value is grid-independent.
    assert!((result["mse"].as_f64().unwrap() - 7.25).abs() <= 1e-8);
    let characteristic = fs::read_to_string(dir.path().join("characteristic.csv")).unwrap();
    assert_eq!(characteristic.lines().count(), 1025);
}
