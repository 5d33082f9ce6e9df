//! End-to-end tests driving the `dosebandit` binary.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dosebandit::dataset::{filter_cohort, parse_csv, ColumnSchema, FeatureSet};
use dosebandit::environment::{unit_sphere, SyntheticSpec};
use dosebandit::linalg::dot;

fn dosebandit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dosebandit")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn summary_json(dir: &Path, prefix: &str) -> serde_json::Value {
    let text = fs::read_to_string(dir.join(format!("{prefix}summary.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn row<'a>(doc: &'a serde_json::Value, label: &str) -> &'a serde_json::Value {
    doc["summary"].as_array().unwrap().iter().find(|r| r["algorithm"] == label).expect("label present")
}

#[test]
fn inspect_header_only_file_reports_empty_cohort() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.csv"), format!("{}\n", common::HEADER)).unwrap();
    let cfg = write_config(dir.path(), "data_path = \"empty.csv\"\n");
    let out = dosebandit(&["inspect", "--config", &cfg]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("cohort size"), "{stdout}");
    assert!(stdout.lines().any(|l| l.contains("cohort size") && l.trim_end().ends_with(" 0")), "{stdout}");
}

#[test]
fn missing_dose_column_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "PharmGKB Subject ID,Age,Height (cm),Weight (kg),Race\nPA1,50 - 59,170,70,White\n")
        .unwrap();
    let cfg = write_config(dir.path(), "data_path = \"bad.csv\"\n");
    let out = dosebandit(&["inspect", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Therapeutic Dose of Warfarin"));
}

#[test]
fn invalid_config_exits_one_and_lists_problems() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n_runs = 0\n\n[[algorithms]]\nalgorithm = \"linucb\"\nalpha = -1.0\n");
    let out = dosebandit(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("n_runs") && stderr.contains("alpha"), "{stderr}");
}

#[test]
fn fixed_dose_run_matches_medium_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("cohort.csv");
    common::write_fixture(&data, 300, 3);
    let cohort = filter_cohort(&parse_csv(&data, &ColumnSchema::default()).unwrap(), FeatureSet::Wcda9);
    let medium = cohort.iter().filter(|p| p.true_level.index() == 1).count() as f64 / cohort.len() as f64;

    let cfg = write_config(
        dir.path(),
        "data_path = \"cohort.csv\"\nn_runs = 1\n\n[[algorithms]]\nalgorithm = \"fixed_dose\"\n",
    );
    let out_dir = dir.path().join("out");
    let out = dosebandit(&["run", "--config", &cfg, "--output", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc = summary_json(&out_dir, "");
    let acc = row(&doc, "fixed_dose")["final_accuracy_mean"].as_f64().unwrap();
    assert!((acc - medium).abs() < 1e-12, "{acc} vs {medium}");
    assert!(out_dir.join("fixed_dose_accuracy_all.csv").exists());
    assert!(out_dir.join("checkpoints.csv").exists());
}

#[test]
fn runs_and_seed_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("cohort.csv");
    common::write_fixture(&data, 120, 9);
    let cfg = write_config(
        dir.path(),
        "data_path = \"cohort.csv\"\nn_runs = 50\n\n[[algorithms]]\nalgorithm = \"linucb\"\n",
    );
    let out_dir = dir.path().join("o");
    let out = dosebandit(&["run", "--config", &cfg, "--output", out_dir.to_str().unwrap(), "--runs", "3", "--seed", "7"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc = summary_json(&out_dir, "");
    assert_eq!(doc["n_runs"], 3);
    assert_eq!(doc["base_seed"], 7);
}

#[test]
fn single_arm_synthetic_has_zero_regret() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "n_runs = 4\n\n[synthetic]\nd = 3\nk = 1\nnoise_sigma = 0.3\nhorizon = 200\n\n\
         [[algorithms]]\nalgorithm = \"linucb\"\n",
    );
    let out_dir = dir.path().join("out");
    let out = dosebandit(&["synth", "--config", &cfg, "--output", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc = summary_json(&dir.path().join("out"), "synthetic_");
    let r = row(&doc, "linucb");
    assert_eq!(r["cumulative_regret_t"].as_f64().unwrap(), 0.0);
    assert_eq!(r["final_accuracy_mean"].as_f64().unwrap(), 1.0);
}

#[test]
fn random_policy_regret_slope_matches_expected_gap() {
    let spec = SyntheticSpec { d: 4, k: 3, noise_sigma: 0.1, horizon: 4000, beta_seed: 5, betas: None };
    // Monte Carlo estimate of E[max_a βₐᵀx − mean_a βₐᵀx] over unit-sphere contexts.
    let betas = spec.resolve_betas();
    let mut rng = ChaCha8Rng::seed_from_u64(12345);
    let samples = 200_000;
    let mut gap = 0.0;
    for _ in 0..samples {
        let x = unit_sphere(&mut rng, spec.d);
        let means: Vec<f64> = betas.iter().map(|b| dot(b, &x)).collect();
        let best = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        gap += best - means.iter().sum::<f64>() / means.len() as f64;
    }
    gap /= samples as f64;

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "n_runs = 20\n\n[synthetic]\nd = 4\nk = 3\nnoise_sigma = 0.1\nhorizon = 4000\nbeta_seed = 5\n\n\
         [[algorithms]]\nalgorithm = \"random\"\n",
    );
    let out_dir = dir.path().join("out");
    let out = dosebandit(&["synth", "--config", &cfg, "--output", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc = summary_json(&dir.path().join("out"), "synthetic_");
    let slope = row(&doc, "random")["cumulative_regret_t"].as_f64().unwrap() / spec.horizon as f64;
    assert!((slope - gap).abs() <= 0.1 * gap, "slope {slope}, expected gap {gap}");
}

#[test]
fn linucb_beats_random_on_synthetic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "n_runs = 5\n\n[synthetic]\nd = 5\nk = 3\nnoise_sigma = 0.1\nhorizon = 3000\nbeta_seed = 1\n\n\
         [[algorithms]]\nalgorithm = \"linucb\"\n\n[[algorithms]]\nalgorithm = \"random\"\n",
    );
    let out_dir = dir.path().join("out");
    let out = dosebandit(&["synth", "--config", &cfg, "--output", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc = summary_json(&dir.path().join("out"), "synthetic_");
    let lin = row(&doc, "linucb")["cumulative_regret_t"].as_f64().unwrap();
    let rnd = row(&doc, "random")["cumulative_regret_t"].as_f64().unwrap();
    assert!(lin < 0.2 * rnd, "linucb {lin} vs random {rnd}");
    assert!(dir.path().join("out/synthetic_linucb_cumulative_regret.csv").exists());
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let warfarin = dosebandit::cli::RunConfig::load(root.join("warfarin.toml")).unwrap();
    assert_eq!(warfarin.algorithms.len(), 7);
    assert!(warfarin.data_path.unwrap().ends_with("data/warfarin.csv"));
    let synth = dosebandit::cli::RunConfig::load(root.join("synthetic.toml")).unwrap();
    assert_eq!(synth.synthetic.unwrap().horizon, 5000);
}
