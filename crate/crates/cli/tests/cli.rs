//! End-to-end runs of the `clustinf` binary.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_clustinf");

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn penguins() -> String {
    repo_file("data/penguins_female.csv").display().to_string()
}

/// Runs the binary; returns the exit code and the parsed stdout.
fn run(args: &[&str]) -> (i32, Value) {
    let out = Command::new(BIN).args(args).env_remove("CLUSTINF_SEED").output().expect("binary runs");
    let text = String::from_utf8(out.stdout).expect("utf-8 output");
    let json = serde_json::from_str(&text).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {text}"));
    (out.status.code().expect("exit code"), json)
}

fn assert_valid(schema_file: &str, instance: &Value) {
    let text = std::fs::read_to_string(repo_file(&format!("schemas/{schema_file}"))).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema_file}: {errors:?}\n{instance:#}");
}

fn penguin_args<'a>(data: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec!["--data", data, "--header", "--standardize", "--linkage", "average-sq"];
    args.extend_from_slice(extra);
    args
}

fn bounds(iv: &Value) -> (f64, f64) {
    (iv["lo"].as_f64().unwrap(), iv["hi"].as_f64().unwrap_or(f64::INFINITY))
}

#[test]
fn gao_true_without_sigma_is_a_config_error() {
    let data = penguins();
    let mut args = vec!["test"];
    args.extend(penguin_args(&data, &["--k", "2", "--method", "gao-true"]));
    let (code, out) = run(&args);
    assert_eq!(code, 2);
    assert_eq!(out["error"]["kind"], "config");
    assert_valid("error.schema.json", &out);
}

#[test]
fn repeated_cluster_in_pair_is_a_usage_error() {
    let data = penguins();
    let mut args = vec!["test"];
    args.extend(penguin_args(&data, &["--k", "3", "--pair", "1,1"]));
    let (code, out) = run(&args);
    assert_eq!(code, 2);
    assert_eq!(out["error"]["kind"], "usage");
    assert_valid("error.schema.json", &out);
}

#[test]
fn unknown_scenario_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().display().to_string();
    let (code, out) = run(&["simulate", "--scenario", "no_such_study", "--out", &out_dir]);
    assert_eq!(code, 2);
    assert_valid("error.schema.json", &out);
}

#[test]
fn degenerate_data_is_a_statistical_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.csv");
    std::fs::write(&path, "1,1\n1,1\n1,1\n1,1\n1,1\n").unwrap();
    let (code, out) = run(&["test", "--data", path.to_str().unwrap(), "--k", "2"]);
    assert_eq!(code, 3);
    assert_eq!(out["error"]["kind"], "statistical");
    assert_valid("error.schema.json", &out);
}

#[test]
fn exact_request_with_five_clusters_falls_back_to_sampling() {
    let data = penguins();
    let mut args = vec!["test"];
    args.extend(penguin_args(&data, &["--k", "5", "--pair", "3,4", "--method", "exact", "--n-draws", "4000"]));
    let (code, out) = run(&args);
    assert_eq!(code, 0, "{out:#}");
    assert_valid("test_report.schema.json", &out);
    assert_eq!(out["method"], "importance");
    let warnings = out["diagnostics"]["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("importance sampling")));
    assert!(out["p"].as_f64().unwrap() < 1e-4, "{}", out["p"]);
    assert_eq!(out["pair"], serde_json::json!([3, 4]));
    assert_eq!(out["manifest"]["seed"], 0);
}

#[test]
fn exact_two_cluster_report_validates() {
    let data = penguins();
    for method in ["exact", "gao-all", "gao-clustered"] {
        let mut args = vec!["test"];
        args.extend(penguin_args(&data, &["--k", "2", "--method", method]));
        let (code, out) = run(&args);
        assert_eq!(code, 0, "{out:#}");
        assert_valid("test_report.schema.json", &out);
        assert!(out["set_summary"].is_object());
    }
    let mut args = vec!["test"];
    args.extend(penguin_args(&data, &["--k", "2", "--method", "gao-true", "--sigma", "1.0"]));
    let (code, out) = run(&args);
    assert_eq!(code, 0);
    assert_eq!(out["method"], "gao_true");
}

#[test]
fn coarse_and_fine_scans_agree() {
    let data = penguins();
    for (k, pair) in [("2", "1,2"), ("5", "1,2"), ("5", "3,4")] {
        let scan = |grid: &str| {
            let mut args = vec!["scan"];
            args.extend(penguin_args(&data, &["--k", k, "--pair", pair, "--grid", grid]));
            let (code, out) = run(&args);
            assert_eq!(code, 0, "{out:#}");
            assert_valid("scan_report.schema.json", &out);
            out
        };
        let coarse = scan("64");
        let fine = scan("4096");
        let observed = fine["observed"].as_f64().unwrap();
        for out in [&coarse, &fine] {
            let idx = out["containing_interval"].as_u64().expect("observed value lies in the set") as usize;
            let (lo, hi) = bounds(&out["intervals"][idx]);
            assert!(lo <= observed && observed <= hi);
        }
        // Each coarse component lies inside a fine one, up to bisection tolerance.
        let fine_ivs: Vec<(f64, f64)> = fine["intervals"].as_array().unwrap().iter().map(bounds).collect();
        for iv in coarse["intervals"].as_array().unwrap() {
            let (lo, hi) = bounds(iv);
            assert!(
                fine_ivs.iter().any(|&(a, b)| a <= lo * (1.0 + 1e-6) && hi <= b * (1.0 + 1e-6)),
                "K = {k}: coarse ({lo}, {hi}) not inside {fine_ivs:?}"
            );
        }
    }
}

/// For two clusters the contrast norm is `c * sqrt(R)` for a data-dependent
/// constant `c`, so the two scans must be images of each other.
#[test]
fn ratio_and_contrast_scans_correspond() {
    let data = penguins();
    let scan = |space: &str| {
        let mut args = vec!["scan"];
        args.extend(penguin_args(&data, &["--k", "2", "--space", space]));
        let (code, out) = run(&args);
        assert_eq!(code, 0, "{out:#}");
        out
    };
    let r = scan("r");
    let phi = scan("phi");
    let c2 = phi["observed"].as_f64().unwrap().powi(2) / r["observed"].as_f64().unwrap();
    let r_ivs = r["intervals"].as_array().unwrap();
    let phi_ivs = phi["intervals"].as_array().unwrap();
    assert_eq!(r_ivs.len(), phi_ivs.len());
    for (a, b) in r_ivs.iter().zip(phi_ivs) {
        let (rlo, rhi) = bounds(a);
        let (plo, phi_hi) = bounds(b);
        assert!((plo * plo / c2 - rlo).abs() <= 1e-6 * rlo.max(1e-12), "{rlo} vs {}", plo * plo / c2);
        if rhi.is_finite() {
            assert!((phi_hi * phi_hi / c2 - rhi).abs() <= 1e-6 * rhi);
        } else {
            assert!(phi_hi.is_infinite());
        }
    }
    assert_eq!(phi["null_distribution"], Value::Null);
}

#[test]
fn simulation_tables_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let go = |dir: &Path| {
        let (code, out) = run(&[
            "simulate",
            "--scenario",
            "type1_k2",
            "--trials",
            "25",
            "--seed",
            "9",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{out:#}");
        out
    };
    let summary = go(a.path());
    go(b.path());
    for file in ["pvalues.csv", "power.csv"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{file} differs between identical runs");
    }
    assert_eq!(summary["records"], 25);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_valid("manifest.schema.json", &manifest);
    assert_eq!(manifest["seed"], 9);
    assert_eq!(summary["uniformity"].as_array().unwrap().len(), 4);
}

#[test]
fn seed_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["simulate", "--scenario", "type1_k2", "--trials", "2", "--methods", "gao_all", "--out"])
        .arg(dir.path())
        .env("CLUSTINF_SEED", "123")
        .output()
        .unwrap();
    assert!(out.status.success());
    let json: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["manifest"]["seed"], 123);
}

#[test]
fn power_table_has_one_row_per_signal_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run(&[
        "simulate",
        "--scenario",
        "power_setting3",
        "--trials",
        "2",
        "--n-draws",
        "200",
        "--methods",
        "proposed,gao_all",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{out:#}");
    let table = std::fs::read_to_string(dir.path().join("power.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "delta,method,trials,excluded,null_false,power,rejection_rate");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    for method in ["proposed", "gao_all"] {
        let deltas: Vec<&str> = rows.iter().filter(|r| r[1] == method).map(|r| r[0]).collect();
        assert_eq!(deltas.len(), 8, "{method}: {deltas:?}");
    }
}

#[test]
fn help_exits_cleanly() {
    let out = Command::new(BIN).arg("--help").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("simulate"));
}
