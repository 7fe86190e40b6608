//! End-to-end tests of the `drifteval` binary: verb behavior, artifact
//! layout, and the exit-code contract (0 ok, 2 config, 3 biased in strict
//! mode, 4 runtime).

use std::path::Path;
use std::process::Command;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn drifteval(dir: &Path, args: &[&str]) -> Outcome {
    let output = Command::new(env!("CARGO_BIN_EXE_drifteval"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    Outcome {
        code: output.status.code().expect("not killed by a signal"),
        stdout: String::from_utf8_lossy(&output.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
    }
}

fn synth_fixture(dir: &Path, name: &str) {
    let outcome = drifteval(dir, &["synth", name, "--samples", "600", "--slots", "6"]);
    assert_eq!(outcome.code, 0, "synth failed: {}", outcome.stderr);
}

/// A minimal two-run experiment over a six-slot fixture: 60 days of
/// training, four 30-day test slots.
fn write_config(dir: &Path, name: &str, out_dir: &str, extra_json: &str) {
    let json = format!(
        r#"{{
  "corpus": {{"path": "fixture.jsonl"}},
  "split": {{
    "train_start": "2014-01-01",
    "train": {{"days": 60}},
    "test": {{"days": 120}},
    "slot": {{"days": 30}}
  }},
  "balance": {{"sigma_hat": 0.1{extra_json}}},
  "learner": {{"kind": "linear_svm", "seed": 7}},
  "runs": [{{"strategy": "no_update"}}, {{"strategy": "incremental_retrain"}}],
  "seed": 7,
  "out_dir": "{out_dir}"
}}"#
    );
    std::fs::write(dir.join(name), json).expect("config written");
}

#[test]
fn synth_evaluate_report_compare_round_trip() {
    let dir = tempfile::tempdir().expect("tempdir");
    let dir = dir.path();
    synth_fixture(dir, "fixture.jsonl");
    write_config(dir, "config.json", "out", "");

    let outcome = drifteval(dir, &["evaluate", "--config", "config.json"]);
    assert_eq!(outcome.code, 0, "{}", outcome.stderr);
    assert!(outcome.stdout.contains("constraints: ok"), "{}", outcome.stdout);
    assert!(outcome.stdout.contains("AUT(F1)"), "{}", outcome.stdout);
    for artifact in [
        "out/report.json",
        "out/curve_00_no_update_point.csv",
        "out/curve_00_no_update_cumulative.csv",
        "out/strategy_00_no_update.csv",
        "out/curve_01_incremental_retrain_point.csv",
    ] {
        assert!(dir.join(artifact).exists(), "missing {artifact}");
    }

    let outcome = drifteval(dir, &["report", "out/report.json"]);
    assert_eq!(outcome.code, 0, "{}", outcome.stderr);
    assert!(outcome.stdout.contains("incremental_retrain"), "{}", outcome.stdout);

    // A second run over the same corpus and split supports a comparison.
    write_config(dir, "config2.json", "out2", "");
    let outcome = drifteval(dir, &["evaluate", "--config", "config2.json"]);
    assert_eq!(outcome.code, 0, "{}", outcome.stderr);

    let outcome = drifteval(
        dir,
        &["compare", "out/report.json", "out2/report.json", "--out", "cmp"],
    );
    assert_eq!(outcome.code, 0, "{}", outcome.stderr);
    let csv = std::fs::read_to_string(dir.join("cmp/compare.csv")).expect("compare.csv");
    assert!(csv.starts_with("strategy,aut_full,aut_half,lc,qc\n"), "{csv}");
    // Two runs per report, two reports.
    assert_eq!(csv.lines().count(), 5, "{csv}");
}

#[test]
fn strict_biased_run_exits_three_and_warn_mode_proceeds() {
    let dir = tempfile::tempdir().expect("tempdir");
    let dir = dir.path();
    synth_fixture(dir, "fixture.jsonl");
    // Forcing a 0.9 testing ratio against sigma_hat 0.1 violates C3.
    write_config(dir, "biased.json", "out", ", \"test_ratio\": 0.9");

    let outcome = drifteval(dir, &["evaluate", "--config", "biased.json"]);
    assert_eq!(outcome.code, 3, "{}", outcome.stderr);
    assert!(outcome.stdout.contains("performance withheld"), "{}", outcome.stdout);
    let report = std::fs::read_to_string(dir.join("out/report.json")).expect("report.json");
    assert!(report.contains("\"biased\": \"C3\""), "{report}");
    assert!(!dir.join("out/curve_00_no_update_point.csv").exists());

    let outcome = drifteval(dir, &["evaluate", "--config", "biased.json", "--warn"]);
    assert_eq!(outcome.code, 0, "{}", outcome.stderr);
    assert!(dir.join("out/curve_00_no_update_point.csv").exists());

    // The --strict flag wins over a lenient config.
    let lenient = std::fs::read_to_string(dir.join("biased.json"))
        .expect("config")
        .replace("\"out_dir\"", "\"strict\": false, \"out_dir\"");
    std::fs::write(dir.join("lenient.json"), lenient).expect("config written");
    let outcome = drifteval(dir, &["evaluate", "--config", "lenient.json", "--strict"]);
    assert_eq!(outcome.code, 3, "{}", outcome.stderr);
}

#[test]
fn config_and_usage_errors_exit_two() {
    let dir = tempfile::tempdir().expect("tempdir");
    let dir = dir.path();

    let outcome = drifteval(dir, &["evaluate", "--config", "missing.json"]);
    assert_eq!(outcome.code, 2, "{}", outcome.stderr);

    synth_fixture(dir, "fixture.jsonl");
    write_config(dir, "config.json", "out", "");
    let broken = std::fs::read_to_string(dir.join("config.json"))
        .expect("config")
        .replace("fixture.jsonl", "nowhere.jsonl");
    std::fs::write(dir.join("broken.json"), broken).expect("config written");
    let outcome = drifteval(dir, &["evaluate", "--config", "broken.json"]);
    assert_eq!(outcome.code, 2, "{}", outcome.stderr);
    assert!(outcome.stderr.contains("does not exist"), "{}", outcome.stderr);

    let outcome = drifteval(dir, &["evaluate", "--config", "config.json", "--bogus"]);
    assert_eq!(outcome.code, 2, "clap usage errors exit 2");

    let outcome = drifteval(dir, &["strategy", "--config", "config.json", "--index", "5"]);
    assert_eq!(outcome.code, 2, "{}", outcome.stderr);
    assert!(outcome.stderr.contains("out of range"), "{}", outcome.stderr);

    let outcome = drifteval(dir, &["compare", "out/report.json"]);
    assert_eq!(outcome.code, 2, "compare needs two reports");
}

#[test]
fn strategy_runs_a_single_entry() {
    let dir = tempfile::tempdir().expect("tempdir");
    let dir = dir.path();
    synth_fixture(dir, "fixture.jsonl");
    write_config(dir, "config.json", "out", "");

    let outcome = drifteval(dir, &["strategy", "--config", "config.json", "--index", "1"]);
    assert_eq!(outcome.code, 0, "{}", outcome.stderr);
    assert!(outcome.stdout.contains("incremental_retrain"), "{}", outcome.stdout);
    // The single run is re-indexed as run 00 of its own report.
    assert!(dir.join("out/curve_00_incremental_retrain_point.csv").exists());
    assert!(!dir.join("out/curve_01_incremental_retrain_point.csv").exists());
}

#[test]
fn bias_demo_writes_the_grid() {
    let dir = tempfile::tempdir().expect("tempdir");
    let dir = dir.path();
    synth_fixture(dir, "fixture.jsonl");
    write_config(dir, "config.json", "out", "");

    let outcome = drifteval(dir, &["bias-demo", "--config", "config.json"]);
    assert_eq!(outcome.code, 0, "{}", outcome.stderr);
    assert!(outcome.stdout.contains("tenfold_cv"), "{}", outcome.stdout);
    let csv = std::fs::read_to_string(dir.join("out/bias.csv")).expect("bias.csv");
    assert!(csv.starts_with("setting,test_ratio,f1\n"), "{csv}");
    assert_eq!(csv.lines().count(), 9, "four settings, two ratios: {csv}");
}

#[test]
fn tune_writes_a_trace() {
    let dir = tempfile::tempdir().expect("tempdir");
    let dir = dir.path();
    // Overlapping clusters and a longer training window give the ratio
    // search something to chew on.
    let outcome = drifteval(
        dir,
        &[
            "synth", "fixture.jsonl", "--samples", "800", "--slots", "8", "--separation", "1.0",
            "--spread", "0.8", "--drift", "none",
        ],
    );
    assert_eq!(outcome.code, 0, "synth failed: {}", outcome.stderr);
    let json = r#"{
  "corpus": {"path": "fixture.jsonl"},
  "split": {
    "train_start": "2014-01-01",
    "train": {"days": 120},
    "test": {"days": 120},
    "slot": {"days": 30}
  },
  "balance": {"sigma_hat": 0.1},
  "learner": {"kind": "linear_svm", "seed": 7},
  "tuning": {"mu": 0.25, "target": "f1", "e_max": 0.5, "val_slots": 2, "seed": 7},
  "runs": [],
  "out_dir": "out"
}"#;
    std::fs::write(dir.join("tuned.json"), json).expect("config written");

    let outcome = drifteval(dir, &["tune", "--config", "tuned.json"]);
    assert_eq!(outcome.code, 0, "{}", outcome.stderr);
    assert!(outcome.stdout.contains("phi*"), "{}", outcome.stdout);
    let trace = std::fs::read_to_string(dir.join("out/tuning_trace.csv")).expect("trace");
    assert!(trace.starts_with("phi,aut,error,accepted\n"), "{trace}");
    assert!(trace.lines().count() > 1, "at least one grid point: {trace}");
}

#[test]
fn ingest_summarizes_and_reemits() {
    let dir = tempfile::tempdir().expect("tempdir");
    let dir = dir.path();
    synth_fixture(dir, "fixture.jsonl");

    let outcome = drifteval(dir, &["ingest", "fixture.jsonl", "--out", "normalized.jsonl"]);
    assert_eq!(outcome.code, 0, "{}", outcome.stderr);
    assert!(outcome.stdout.contains("loaded 600 samples"), "{}", outcome.stdout);
    assert!(outcome.stdout.contains("540 goodware / 60 malware"), "{}", outcome.stdout);

    let outcome = drifteval(dir, &["ingest", "normalized.jsonl"]);
    assert_eq!(outcome.code, 0, "re-ingesting our own output: {}", outcome.stderr);
    assert!(outcome.stdout.contains("loaded 600 samples"), "{}", outcome.stdout);

    let outcome = drifteval(dir, &["ingest", "missing.jsonl"]);
    assert_eq!(outcome.code, 2, "{}", outcome.stderr);
}

#[test]
fn environment_overrides_yield_to_flags() {
    let dir = tempfile::tempdir().expect("tempdir");
    let dir = dir.path();
    synth_fixture(dir, "fixture.jsonl");
    write_config(dir, "config.json", "out", "");

    // Env override alone redirects the artifacts.
    let output = Command::new(env!("CARGO_BIN_EXE_drifteval"))
        .args(["evaluate", "--config", "config.json"])
        .env("DRIFTEVAL_OUT", "env-out")
        .current_dir(dir)
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(0));
    assert!(dir.join("env-out/report.json").exists());
    assert!(!dir.join("out/report.json").exists());

    // An explicit --out beats the environment.
    let output = Command::new(env!("CARGO_BIN_EXE_drifteval"))
        .args(["evaluate", "--config", "config.json", "--out", "flag-out"])
        .env("DRIFTEVAL_OUT", "env-out-2")
        .current_dir(dir)
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(0));
    assert!(dir.join("flag-out/report.json").exists());
    assert!(!dir.join("env-out-2").exists());
}
