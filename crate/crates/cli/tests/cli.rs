use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rcfair_core::synth::SynthConfig;
use serde_json::Value;

fn d1() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/d1.csv")
}

fn rcfair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcfair"))
        .args(args)
        .env_remove("RCFAIR_THREADS")
        .output()
        .expect("spawn rcfair")
}

fn ok(args: &[&str]) -> String {
    let out = rcfair(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    rcfair(args).status.code().unwrap()
}

fn small_synth(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join(format!("synth{seed}.csv"));
    ok(&["synth", "--n", "2000", "--seed", &seed.to_string(), "--output", path.to_str().unwrap()]);
    path
}

#[test]
fn enforce_dp_on_d1() {
    let v: Value = serde_json::from_str(&ok(&["enforce", "--input", d1().to_str().unwrap(), "--notion", "dp", "--rate", "0.5"])).unwrap();
    assert_eq!(v["counts"]["A"], 2);
    assert_eq!(v["counts"]["B"], 2);
    assert_eq!(v["gap"], 0.0);
    assert_eq!(v["selected_indices"], serde_json::json!([0, 1, 4, 5]));
}

#[test]
fn enforce_full_rate_selects_everyone() {
    let v: Value = serde_json::from_str(&ok(&["enforce", "--input", d1().to_str().unwrap(), "--notion", "eo", "--rate", "1.0"])).unwrap();
    assert_eq!(v["selected_indices"], serde_json::json!([0, 1, 2, 3, 4, 5, 6, 7]));
}

#[test]
fn enforce_csv_summary() {
    let out = ok(&["enforce", "--input", d1().to_str().unwrap(), "--budget", "4", "--format", "csv"]);
    assert_eq!(out, "group,size,count,threshold,harm\nA,4,2,0.8,0.5\nB,4,2,0.55,0.5\n");
}

#[test]
fn usage_errors_exit_two() {
    let d = d1();
    let d = d.to_str().unwrap();
    assert_eq!(code(&["enforce", "--input", d, "--rate", "0.5", "--budget", "3"]), 2);
    assert_eq!(code(&["enforce", "--input", d]), 2);
    assert_eq!(code(&["enforce", "--input", d, "--rate", "1.5"]), 2);
    assert_eq!(code(&["enforce", "--input", d, "--budget", "9"]), 2);
    assert_eq!(code(&["enforce", "--input", "/definitely/missing.csv", "--rate", "0.5"]), 2);
    assert_eq!(code(&["minimax", "--input", d, "--harm", "nonsense", "--budget", "2"]), 2);
    assert_eq!(code(&["bounds", "--metric", "recall", "--b", "0.3"]), 2);
    assert_eq!(code(&["sweep-params", "--param", "global_noise", "--levels", "0,0.1"]), 2);
}

#[test]
fn failed_command_leaves_no_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never.json");
    assert_eq!(
        code(&["enforce", "--input", d1().to_str().unwrap(), "--rate", "0", "--output", out.to_str().unwrap()]),
        2
    );
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn cost_sweep_rows_and_chart() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("cost.svg");
    let out = ok(&["cost-sweep", "--input", d1().to_str().unwrap(), "--grid", "4", "--svg", svg.to_str().unwrap()]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 1 + 4 + 1);
    assert!(lines[0].starts_with("rate,K,default_precision,default_recall,default_accuracy,dp_precision_loss"));
    assert!(lines[5].starts_with("mean,"));
    let chart = std::fs::read_to_string(svg).unwrap();
    assert!(chart.starts_with("<svg"));
    assert_eq!(chart.matches("precision loss").count(), 1);
}

#[test]
fn cost_sweep_mean_row_matches_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path(), 3);
    let out = ok(&["cost-sweep", "--input", data.to_str().unwrap(), "--grid", "20"]);
    let mut rdr = csv::Reader::from_reader(out.as_bytes());
    let header = rdr.headers().unwrap().clone();
    let col = header.iter().position(|h| h == "dp_precision_loss").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let (mean_row, data_rows) = rows.split_last().unwrap();
    assert_eq!(&mean_row[0], "mean");
    let mean: f64 = data_rows.iter().map(|r| r[col].parse::<f64>().unwrap()).sum::<f64>() / data_rows.len() as f64;
    assert!((mean - mean_row[col].parse::<f64>().unwrap()).abs() < 1e-12);
}

#[test]
fn bounds_closed_form() {
    let out = ok(&["bounds", "--metric", "recall", "--b", "0.2393", "--r", "0.3", "--g", "0.1"]);
    let c: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("c,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((c - 4.179).abs() < 5e-4);
    assert!(out.contains("\nhalf_c,") && out.contains("\ng_c,") && out.contains("\neffective,"));
}

#[test]
fn bounds_compliance_on_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path(), 4);
    let out = ok(&["bounds", "--metric", "accuracy", "--input", data.to_str().unwrap(), "--grid", "20"]);
    assert_eq!(out.lines().count(), 21);
    assert!(out.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn alloc_curve_on_d1() {
    let out = ok(&["alloc-curve", "--input", d1().to_str().unwrap(), "--k", "4", "--grid", "5"]);
    let grid_rows = out.lines().filter(|l| l.starts_with("grid,")).count();
    assert_eq!(grid_rows, 5);
    for marker in ["all_to_advantaged", "all_to_disadvantaged", "unconstrained", "dp", "eo", "optimum"] {
        assert!(out.lines().any(|l| l.starts_with(&format!("{marker},"))), "missing {marker}");
    }
}

#[test]
fn minimax_reports_equality() {
    let v: Value = serde_json::from_str(&ok(&["minimax", "--input", d1().to_str().unwrap(), "--budget", "4"])).unwrap();
    assert_eq!(v["counts"]["A"], 2);
    assert_eq!(v["equality"]["within_tolerance"], true);
    // precision harm is not monotone in the count on D1
    assert_eq!(
        code(&["minimax", "--input", d1().to_str().unwrap(), "--harm", "one_minus_precision", "--budget", "4"]),
        2
    );
}

#[test]
fn synth_config_file_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("default.cfg");
    let config = SynthConfig { n: 3000, ..SynthConfig::default() };
    std::fs::write(&cfg, config.to_text()).unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        ok(&["synth", "--config", cfg.to_str().unwrap(), "--seed", "42", "--output", out.to_str().unwrap()]);
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert!(bytes.starts_with(b"score,label,group,split\n"));
    assert_eq!(bytes.iter().filter(|&&c| c == b'\n').count(), 3001);
}

#[test]
fn perturb_writes_configs_and_subsamples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_text = ok(&["perturb", "--param", "disparity", "--level", "0.1"]);
    let cfg = SynthConfig::parse(&cfg_text).unwrap();
    let gap = cfg.base_rates["advantaged"] - cfg.base_rates["disadvantaged"];
    assert!((gap - 0.1).abs() < 1e-12);

    let data = small_synth(dir.path(), 5);
    let out = ok(&["perturb", "--param", "subgroup_size", "--level", "0.5", "--input", data.to_str().unwrap(), "--seed", "1"]);
    let count = |text: &str, g: &str| text.lines().filter(|l| l.contains(&format!(",{g},"))).count();
    let before = std::fs::read_to_string(&data).unwrap();
    assert_eq!(count(&out, "advantaged"), count(&before, "advantaged"));
    let kept = (count(&before, "disadvantaged") as f64 * 0.5).round() as usize;
    assert_eq!(count(&out, "disadvantaged"), kept);
    assert_eq!(code(&["perturb", "--param", "global_noise", "--level", "0.9"]), 2);
}

#[test]
fn transfer_from_validation_to_test() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path(), 6);
    let v: Value = serde_json::from_str(&ok(&[
        "enforce",
        "--input",
        data.to_str().unwrap(),
        "--transfer-from-split",
        "--rate",
        "0.3",
    ]))
    .unwrap();
    assert_eq!(v["applied_to"], "test");
    assert_eq!(v["budget"], 300);
    let total: u64 = v["counts"].as_object().unwrap().values().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(total, 300);
    assert_eq!(
        code(&["enforce", "--input", data.to_str().unwrap(), "--transfer-from-split", "--budget", "10"]),
        2
    );
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path(), 7);
    let args = ["cost-sweep", "--input", data.to_str().unwrap(), "--grid", "25"];
    let default = ok(&args);
    let single = Command::new(env!("CARGO_BIN_EXE_rcfair"))
        .args(args)
        .env("RCFAIR_THREADS", "1")
        .output()
        .unwrap();
    assert!(single.status.success());
    assert_eq!(default.as_bytes(), &single.stdout[..]);
}

#[test]
fn report_bundles_sections() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(dir.path(), 8);
    let v: Value = serde_json::from_str(&ok(&["report", "--input", data.to_str().unwrap(), "--grid", "10"])).unwrap();
    assert_eq!(v["cost_sweep"]["rows"].as_array().unwrap().len(), 10);
    assert_eq!(v["minimax_one_minus_recall"].as_array().unwrap().len(), 4);
    assert!(v["bound_compliance"]["eo_recall"]["violations"].is_number());
    assert_eq!(v["dataset"]["n"], 2000);
}
