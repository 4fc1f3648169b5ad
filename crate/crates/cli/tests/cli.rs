//! End-to-end command behavior: exit codes, output schemas, sweep
//! monotonicity, bounds branches, verify grids.

use std::path::Path;
use std::process::{Command, Output};

fn commgt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_commgt"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    commgt().args(args).output().expect("binary runs")
}

fn stdout_of(output: &Output) -> String {
    assert!(
        output.status.success(),
        "exit {:?}, stderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout.clone()).unwrap()
}

#[test]
fn malformed_config_exits_2_with_line_info() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bad.cfg", "f = 40\nthis is not a pair\n");
    let output = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("bad.cfg:2"), "stderr: {stderr}");
}

#[test]
fn invalid_parameters_exit_2_naming_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "invalid.cfg",
        "f = 3\nm = 4\nkf = 2\nkm = 2\nrho_t = 4\ntrials = 5\n",
    );
    let output = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("F >= 2 k_f"), "stderr: {stderr}");
}

#[test]
fn simulate_csv_has_the_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "sim.cfg",
        "f = 12\nm = 4\nkf = 2\nkm = 2\nrho_t = 8\nzeta = 4\ntrials = 10\n",
    );
    let output = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    let csv = stdout_of(&output);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trial,stage1_tests,stage2_tests,total_tests,stage1_error,end_to_end_error,pool_size"
    );
    assert_eq!(lines.count(), 10);
}

#[test]
fn no_stage2_flag_drops_the_second_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "sim.cfg",
        "f = 12\nm = 4\nkf = 2\nkm = 2\nrho_t = 8\nzeta = 4\ntrials = 5\n",
    );
    let output = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--no-stage2",
    ]);
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(doc["aggregate"]["end_to_end_errors"], serde_json::Value::Null);
    assert_eq!(doc["trials"][0]["stage2_tests"], 0);
    // T = T_I + T_II holds degenerately with T_II = 0.
    assert_eq!(doc["trials"][0]["total_tests"], doc["trials"][0]["stage1_tests"]);
}

#[test]
fn simulate_reports_total_as_sum_of_stages() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "sim.cfg",
        "f = 12\nm = 4\nkf = 2\nkm = 2\nrho_t = 8\nzeta = 6\ntrials = 8\n",
    );
    let output = run(&["simulate", "--config", config.to_str().unwrap()]);
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    for trial in doc["trials"].as_array().unwrap() {
        let t1 = trial["stage1_tests"].as_u64().unwrap();
        let t2 = trial["stage2_tests"].as_u64().unwrap();
        assert_eq!(trial["total_tests"].as_u64().unwrap(), t1 + t2);
    }
    assert!(doc["metadata"]["log_base"] == "natural");
}

#[test]
fn sweep_over_budget_has_non_increasing_stage1_tests() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "sweep.cfg",
        "f = 40\nm = 8\nkf = 2\nkm = 4\nrho_t = 8\nzeta = 1\ntrials = 5\nstage2 = off\n\
         sweep_var = rho_t\nsweep_values = 1,2,4,8,16\n",
    );
    let output = run(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    let csv = stdout_of(&output);
    let t1_column: Vec<u64> = csv
        .lines()
        .skip(1)
        .map(|line| line.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(t1_column.len(), 5);
    for pair in t1_column.windows(2) {
        assert!(pair[1] <= pair[0], "T_I grew along the budget sweep: {t1_column:?}");
    }
}

#[test]
fn dilution_alpha_sweep_scales_the_formula_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "dilution-sweep.cfg",
        "mode = dilution\nn = 64\nk = 2\nalpha = 1.0\nzeta = 1\ntrials = 5\n\
         sweep_var = alpha\nsweep_values = 0.25,0.5,1.0\n",
    );
    let output = run(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    let csv = stdout_of(&output);
    let formula_column: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|line| line.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    assert_eq!(formula_column.len(), 3);
    // Formula T_I halves exactly as alpha doubles.
    assert_eq!(formula_column[0], 2.0 * formula_column[1]);
    assert_eq!(formula_column[1], 2.0 * formula_column[2]);
}

#[test]
fn sweep_without_sweep_keys_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "nosweep.cfg",
        "f = 12\nm = 4\nkf = 2\nkm = 2\nrho_t = 8\nzeta = 4\ntrials = 5\n",
    );
    let output = run(&["sweep", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn bounds_prints_the_order_one_branch_for_large_budgets() {
    let dir = tempfile::tempdir().unwrap();
    // rho_T = 100 >= n / (k_f ln F) = 2000 / (5 ln 100) = 86.9.
    let config = write_config(
        dir.path(),
        "bounds.cfg",
        "f = 100\nm = 20\nkf = 5\nkm = 10\nrho_t = 100\n",
    );
    let output = run(&["bounds", "--config", config.to_str().unwrap()]);
    let text = stdout_of(&output);
    assert!(text.contains("theta(1)"), "missing branch label: {text}");

    let csv_output = run(&[
        "bounds",
        "--config",
        config.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    let csv = stdout_of(&csv_output);
    assert!(csv.lines().next().unwrap().starts_with("rho_hat,"));
    assert!(csv.contains("theta(1)"));
}

#[test]
fn bounds_accepts_an_unbounded_budget() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "bounds-inf.cfg",
        "f = 100\nm = 20\nkf = 5\nkm = 10\nrho_t = inf\n",
    );
    let output = run(&["bounds", "--config", config.to_str().unwrap()]);
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    // With no budget the constrained baseline collapses to k_f ln n.
    let constrained = doc["report"]["baselines"]["community_constrained_stage1"]
        .as_f64()
        .unwrap();
    let expect = 5.0 * (2000.0f64).ln();
    assert!((constrained - expect).abs() < 1e-9);
    // And simulation refuses the sentinel.
    let sim = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(sim.status.code(), Some(2));
}

#[test]
fn verify_passes_on_reduced_grids_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let grids = write_config(
        dir.path(),
        "grids.cfg",
        "outcome_trials = 300\nregime_points = 100\nprop1_f_max = 16\n\
         prop2_u_max = 16\nprop2_budget_max = 32\nseed = 9\n",
    );
    let output = run(&["verify", "--config", grids.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(doc["pass"], serde_json::Value::Bool(true));
    for check in doc["report"]["checks"].as_array().unwrap() {
        assert_eq!(check["failures"], 0, "check {:?}", check["name"]);
    }
}
