//! Full-pipeline integration: gen-data -> pretrain -> episodes -> eval
//! -> hardness -> sweep, exercised in-process, plus binary-level checks
//! for exit codes.

use fewshot_cli::commands;
use fewshot_cli::config::RunConfig;
use std::path::Path;
use std::process::Command;

fn small_config() -> RunConfig {
    let mut config = RunConfig::default();
    config.master_seed = 11;
    config.dataset.n_classes = 24;
    config.dataset.dim = 8;
    config.dataset.samples_per_class = 24;
    config.dataset.noise_sigma = 1.5;
    config.split.train = 0.5;
    config.split.val = 0.125;
    config.split.test = 0.375;
    config.pretrain.hidden = vec![16, 16];
    config.pretrain.cycles = vec![2, 4];
    config.adapt.epochs = 3;
    config.eval.ways = vec![5];
    config.eval.support_shots = vec![1];
    config.eval.query_shots = vec![4];
    config.eval.episodes_per_protocol = 6;
    config.sweep.values = vec![1, 3];
    config.sweep.episodes = 4;
    config
}

fn run_pipeline(config: &RunConfig, out: &Path) {
    commands::cmd_gen_data(config, out).unwrap();
    commands::cmd_pretrain(config, out).unwrap();
    commands::cmd_episodes(config, out).unwrap();
    commands::cmd_eval(config, out).unwrap();
    commands::cmd_hardness(config, out).unwrap();
    commands::cmd_sweep(config, out).unwrap();
}

#[test]
fn pipeline_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let config = small_config();
    run_pipeline(&config, out);

    for file in [
        "dataset.fsds",
        "backbone.fsbb",
        "backbone.fsbb.txt",
        "pretrain_loss.csv",
        "episodes_w5_s1_q4.fsep",
        "eval.csv",
        "eval_summary.json",
        "hardness.csv",
        "hardness.json",
        "sweep.csv",
        "manifest_gen-data.json",
        "manifest_pretrain.json",
        "manifest_episodes.json",
        "manifest_eval.json",
        "manifest_hardness.json",
        "manifest_sweep.json",
    ] {
        assert!(out.join(file).exists(), "{file} missing");
    }

    // Row count = episodes x methods x protocols (+ header).
    let eval_csv = std::fs::read_to_string(out.join("eval.csv")).unwrap();
    assert_eq!(eval_csv.lines().count(), 1 + 6 * 3);

    // Loss trace has one row per epoch.
    let loss_csv = std::fs::read_to_string(out.join("pretrain_loss.csv")).unwrap();
    assert_eq!(loss_csv.lines().count(), 1 + 2 + 4);

    // Summary has one block per (protocol, method) with the headline
    // statistics.
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("eval_summary.json")).unwrap())
            .unwrap();
    let rows = summary.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for row in rows {
        for key in ["mean", "std", "ci95_half_width", "median", "q25", "q75"] {
            assert!(row["stats"][key].is_number(), "missing stat {key}");
        }
    }

    // Hardness fits: one per method, each with a pearson r.
    let fits: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("hardness.json")).unwrap())
            .unwrap();
    assert_eq!(fits.as_array().unwrap().len(), 3);

    // Sweep: one row per (value, method).
    let sweep_csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep_csv.lines().count(), 1 + 2 * 3);

    // Manifests are finalized.
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest_eval.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["status"], "complete");
    assert!(manifest["outputs"].as_array().unwrap().len() >= 2);
}

#[test]
fn reruns_are_byte_identical_and_workers_do_not_matter() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let config = small_config();
    run_pipeline(&config, dir_a.path());

    let mut parallel = config.clone();
    parallel.eval.workers = 4;
    run_pipeline(&parallel, dir_b.path());

    for file in ["dataset.fsds", "backbone.fsbb", "eval.csv", "hardness.csv", "sweep.csv"] {
        let a = std::fs::read(dir_a.path().join(file)).unwrap();
        let b = std::fs::read(dir_b.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between serial and 4-worker runs");
    }
}

#[test]
fn different_seed_changes_outputs() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let config = small_config();
    let mut other = config.clone();
    other.master_seed = 12;
    commands::cmd_gen_data(&config, dir_a.path()).unwrap();
    commands::cmd_gen_data(&other, dir_b.path()).unwrap();
    let a = std::fs::read(dir_a.path().join("dataset.fsds")).unwrap();
    let b = std::fs::read(dir_b.path().join("dataset.fsds")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn train_only_and_train_plus_val_differ_in_class_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let config = small_config();
    commands::cmd_gen_data(&config, out).unwrap();
    commands::cmd_pretrain(&config, out).unwrap();
    let train_only =
        fewshot_core::backbone::load_backbone(&out.join("backbone.fsbb")).unwrap();

    let mut with_val = config.clone();
    with_val.pretrain.include_val_classes = true;
    commands::cmd_pretrain(&with_val, out).unwrap();
    let with_val_bb =
        fewshot_core::backbone::load_backbone(&out.join("backbone.fsbb")).unwrap();

    // 24 classes split 0.5/0.125/0.375 -> 12 train, 3 val.
    assert_eq!(train_only.n_classes(), 12);
    assert_eq!(with_val_bb.n_classes(), 15);
}

#[test]
fn infeasible_grid_entry_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let mut config = small_config();
    commands::cmd_gen_data(&config, out).unwrap();
    config.eval.ways = vec![50];
    let err = commands::cmd_episodes(&config, out).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("way=50"), "unexpected message: {msg}");
}

// Binary-level checks.

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fewshot"))
}

#[test]
fn binary_rejects_bad_config_with_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("bad.toml");
    std::fs::write(&config_path, "master_seed = 1\nnot_a_key = true\n").unwrap();
    let status = binary()
        .args(["gen-data", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn binary_reports_io_failures_with_exit_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(&config_path, "master_seed = 1\n").unwrap();
    // eval without a checkpoint
    let status = binary()
        .args(["eval", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn binary_gen_data_succeeds_and_prints_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        "master_seed = 5\n[dataset]\nn_classes = 6\ndim = 4\nsamples_per_class = 8\n",
    )
    .unwrap();
    let output = binary()
        .args(["gen-data", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("dataset.fsds"));
    assert!(dir.path().join("dataset.fsds").exists());
}

#[test]
fn invalid_split_fractions_fail_validation() {
    let mut config = small_config();
    config.split.train = 0.9;
    assert!(config.validate().is_err());
}
