//! End-to-end behaviour of the `bias-bench` binary.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bias_bench::cli::OUT_ENV;
use common::pipeline_fixture;
use serde_json::Value;

fn bias_bench(config: &Path, args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bias-bench"));
    cmd.arg("--config").arg(config).args(args).env_remove(OUT_ENV);
    cmd
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    bias_bench(config, args).arg("--out").arg(out).output().unwrap()
}

fn ok(output: &Output) {
    assert!(
        output.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn full_pipeline_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = pipeline_fixture(dir.path());
    let out = dir.path().join("out");
    ok(&run(&config, &out, &["sample"]));
    ok(&run(&config, &out, &["tsne", "--model", "raw_roberta"]));
    let eval = run(&config, &out, &["eval", "--runs", "2"]);
    ok(&eval);

    let sample: Value = serde_json::from_slice(&fs::read(out.join("sample_manifest.json")).unwrap()).unwrap();
    assert_eq!(sample["skipped_empty"], 1);
    assert_eq!(sample["counts_after"]["gender"], 25);
    assert_eq!(sample["counts_before"]["race"], 30);

    let svg = fs::read_to_string(out.join("tsne/raw_roberta.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 100);
    let coords = fs::read_to_string(out.join("tsne/raw_roberta.csv")).unwrap();
    assert!(coords.starts_with("doc_id,label,x,y\n"));
    assert_eq!(coords.lines().count(), 101);
    let kl = fs::read_to_string(out.join("tsne/raw_roberta_kl.csv")).unwrap();
    assert_eq!(kl.lines().count(), 301);

    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(results.starts_with("model,k,run,accuracy\n"));
    assert_eq!(results.lines().count(), 1 + 2 * 2 * 2);

    let report: Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let warnings = report["comparison"]["warnings"].to_string();
    assert!(warnings.contains("below-power"), "{warnings}");
    assert_eq!(report["master_seed"], 11);

    let table = fs::read_to_string(out.join("table.txt")).unwrap();
    assert_eq!(String::from_utf8_lossy(&eval.stdout).lines().next(), table.lines().next());
    let report_cmd = run(&config, &out, &["report"]);
    ok(&report_cmd);
    assert_eq!(String::from_utf8_lossy(&report_cmd.stdout), table);

    let manifest: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["prng"], bias_bench::seed::PRNG_ID);
    for entry in ["sample", "tsne:raw_roberta", "eval"] {
        assert!(manifest["commands"][entry].is_object(), "missing {entry}");
    }
    assert_eq!(manifest["commands"]["sample"]["corpus_seed"], 7);
}

#[test]
fn unknown_model_lists_configured_names() {
    let dir = tempfile::tempdir().unwrap();
    let config = pipeline_fixture(dir.path());
    let out = dir.path().join("out");
    ok(&run(&config, &out, &["sample"]));
    let output = run(&config, &out, &["tsne", "--model", "gpt"]);
    assert!(!output.status.success());
    let err = stderr(&output);
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(err.starts_with("bias-bench: error: config: unknown model `gpt`"), "{err}");
    assert!(err.contains("mini_bert, raw_roberta"));
    assert!(!out.join("tsne").exists());
}

#[test]
fn env_var_overrides_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let config = pipeline_fixture(dir.path());
    let flag = dir.path().join("flag");
    let env = dir.path().join("env");
    let output = bias_bench(&config, &["sample", "--out"])
        .arg(&flag)
        .env(OUT_ENV, &env)
        .output()
        .unwrap();
    ok(&output);
    assert!(env.join("corpus.jsonl").exists());
    assert!(!flag.exists());
}

#[test]
fn failures_leave_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = pipeline_fixture(dir.path());
    let out = dir.path().join("out");

    // eval before sample
    let output = run(&config, &out, &["eval"]);
    assert!(!output.status.success());
    assert!(stderr(&output).contains("run `bias-bench sample` first"));
    assert!(!out.join("results.csv").exists());

    ok(&run(&config, &out, &["sample"]));
    fs::remove_file(dir.path().join("raw_roberta.jsonl")).unwrap();
    let output = run(&config, &out, &["eval"]);
    assert!(!output.status.success());
    assert!(stderr(&output).starts_with("bias-bench: error: eval:"));
    for f in ["results.csv", "report.json", "table.txt"] {
        assert!(!out.join(f).exists(), "{f} written on failure");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = pipeline_fixture(dir.path());
    let mut results = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(format!("jobs{jobs}"));
        ok(&run(&config, &out, &["--jobs", jobs, "sample"]));
        ok(&run(&config, &out, &["--jobs", jobs, "eval"]));
        ok(&run(&config, &out, &["--jobs", jobs, "tsne", "--model", "mini_bert", "--n-iter", "100"]));
        results.push((
            fs::read(out.join("results.csv")).unwrap(),
            fs::read(out.join("tsne/mini_bert.csv")).unwrap(),
        ));
    }
    assert_eq!(results[0], results[1]);
}

#[test]
fn seed_flag_changes_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let config = pipeline_fixture(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&run(&config, &a, &["sample"]));
    ok(&run(&config, &b, &["--seed", "8", "sample"]));
    assert_ne!(
        fs::read(a.join("corpus.jsonl")).unwrap(),
        fs::read(b.join("corpus.jsonl")).unwrap()
    );
}

#[test]
fn bad_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, "{\"runs\": \"many\"}").unwrap();
    let output = run(&config, dir.path(), &["eval"]);
    assert!(!output.status.success());
    assert!(stderr(&output).starts_with("bias-bench: error: config:"));
}
