//! Command-line pipeline tests: full run, artifact inventory, stamp-based
//! idempotence, explain output and seed invalidation.

mod common;

use std::path::Path;
use std::process::{Command, Output};

fn run_pipeline(config: &Path, dir: &Path, data: &Path, seed: &str) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_ekar"))
        .arg("--config")
        .arg(config)
        .arg("--dir")
        .arg(dir)
        .args(["--seed", seed, "pipeline", "--interactions"])
        .arg(data.join("interactions.tsv"))
        .arg("--triplets")
        .arg(data.join("triplets.tsv"))
        .output()
        .expect("spawn ekar");
    assert!(
        out.status.success(),
        "pipeline failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    common::write_demo_dataset(&data);
    let config = tmp.path().join("run.conf");
    std::fs::write(&config, common::DEMO_CONFIG).unwrap();
    let out_dir = tmp.path().join("out");

    // Fresh run produces every stage artifact.
    run_pipeline(&config, &out_dir, &data, "7");
    for artifact in [
        "train.tsv",
        "valid.tsv",
        "test.tsv",
        "graph.tsv",
        "stats.tsv",
        "kge.ckpt",
        "kge_curve.tsv",
        "policy.ckpt",
        "embeddings.ckpt",
        "reward_curve.tsv",
        "recommendations.jsonl",
        "metrics_ekar.tsv",
    ] {
        assert!(out_dir.join(artifact).is_file(), "missing artifact {artifact}");
    }
    let jsonl = std::fs::read_to_string(out_dir.join("recommendations.jsonl")).unwrap();
    assert!(!jsonl.trim().is_empty());
    assert!(jsonl.lines().all(|l| l.contains("\"user\"")));

    // Re-running with the same config and seed skips every stage.
    let rerun = run_pipeline(&config, &out_dir, &data, "7");
    let stdout = String::from_utf8_lossy(&rerun.stdout);
    for stage in ["ingest", "train-kge", "train-policy", "recommend", "evaluate"] {
        assert!(
            stdout.contains(&format!("pipeline: {stage} up to date, skipping")),
            "stage {stage} should be skipped on rerun; stdout: {stdout}"
        );
    }
    let policy_before = std::fs::read(out_dir.join("policy.ckpt")).unwrap();

    // Explain prints ranked paths for a known user.
    let explain = Command::new(env!("CARGO_BIN_EXE_ekar"))
        .arg("--config")
        .arg(&config)
        .arg("--dir")
        .arg(&out_dir)
        .args(["--seed", "7", "explain", "--user", "user0"])
        .output()
        .expect("spawn ekar explain");
    assert!(explain.status.success());
    assert!(!explain.stdout.is_empty());

    // A changed seed invalidates the stamps and retrains.
    let reseeded = run_pipeline(&config, &out_dir, &data, "8");
    let stdout = String::from_utf8_lossy(&reseeded.stdout);
    assert!(
        !stdout.contains("train-policy up to date"),
        "changed seed must invalidate the policy stage"
    );
    let policy_after = std::fs::read(out_dir.join("policy.ckpt")).unwrap();
    assert_ne!(policy_before, policy_after, "policy checkpoint must change with the seed");
}
