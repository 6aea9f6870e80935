use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_replyscore");

fn demo_corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo_corpus.jsonl")
}

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env_remove("REPLYSCORE_BACKEND_URL")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn split_of_missing_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["split", "--corpus", "missing.jsonl"], dir.path());
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn split_is_byte_identical_for_one_seed() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = demo_corpus();
    let corpus = corpus.to_str().unwrap();
    for out_dir in ["a", "b"] {
        let out = run(
            &["split", "--corpus", corpus, "--seed", "9", "--out", out_dir],
            dir.path(),
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in [
        "train.jsonl",
        "test.jsonl",
        "corpus.jsonl",
        "distribution.json",
        "run_metadata.json",
    ] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
    let dist = read_json(dir.path().join("a/distribution.json"));
    for class in ["pos", "neg", "neut", "mix"] {
        let train = dist["train"]["counts"][class].as_i64().unwrap();
        let test = dist["test"]["counts"][class].as_i64().unwrap();
        assert!((train - test).abs() <= 1, "{class}: {train} vs {test}");
    }
}

#[test]
fn gen_prompts_lists_the_whole_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen-prompts", "--out", "o"], dir.path());
    assert_eq!(code(&out), 0);
    let manifest = read_json(dir.path().join("o/prompts.json"));
    let entries = manifest.as_object().unwrap();
    assert_eq!(entries.len(), 48);
    assert!(entries.contains_key("7-2-2"));
    assert!(!entries.contains_key("6-1-2-2"));
}

#[test]
fn zeroshot_with_oracle_backend_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = demo_corpus();
    let out = run(
        &[
            "zeroshot",
            "--corpus",
            corpus.to_str().unwrap(),
            "--prompts",
            "7-2-2,2-1-0",
            "--mode",
            "both",
            "--backend",
            "mock:oracle",
            "--jobs",
            "2",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for mode in ["four_class", "binary"] {
        let report = read_json(dir.path().join(format!("o/zeroshot_{mode}.json")));
        let cells = report["cells"].as_array().unwrap();
        assert_eq!(cells.len(), 6);
        for cell in cells {
            assert_eq!(cell["macro_f1"].as_f64().unwrap(), 100.0, "{mode}: {cell}");
        }
        assert!(dir.path().join(format!("o/predictions_{mode}.jsonl")).exists());
    }
    let meta = read_json(dir.path().join("o/run_metadata.json"));
    assert_eq!(meta["command"], "zeroshot");
    assert!(meta["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn iaa_with_unknown_prediction_ids_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("preds.jsonl");
    fs::write(
        &preds,
        r#"{"sentence_id":"nope","prompt_code":"7-2-2","method":"l1","chosen_reply":"Positiv","label":"pos","scores":[]}"#
            .to_string()
            + "\n",
    )
    .unwrap();
    let corpus = demo_corpus();
    let out = run(
        &[
            "iaa",
            "--corpus",
            corpus.to_str().unwrap(),
            "--predictions",
            "preds.jsonl",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn iaa_reports_annotator_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = demo_corpus();
    let out = run(&["iaa", "--corpus", corpus.to_str().unwrap(), "--out", "o"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(dir.path().join("o/iaa.json"));
    let raters = report["annotators"]["raters"].as_array().unwrap();
    assert_eq!(raters.len(), 7);
}

#[test]
fn baseline_without_training_data_fails() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = demo_corpus();
    let test = dir.path().join("test.jsonl");
    let text = fs::read_to_string(&corpus).unwrap();
    let lines: Vec<&str> = text.lines().take(20).collect();
    fs::write(&test, lines.join("\n")).unwrap();
    fs::write(dir.path().join("train.jsonl"), "").unwrap();
    let out = run(
        &[
            "baseline",
            "--train",
            "train.jsonl",
            "--test",
            "test.jsonl",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_ne!(code(&out), 0);
    assert!(!dir.path().join("o/baseline.json").exists());
}

#[test]
fn unreachable_backend_is_a_backend_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = demo_corpus();
    let out = run(
        &[
            "zeroshot",
            "--corpus",
            corpus.to_str().unwrap(),
            "--prompts",
            "7-2-2",
            "--backend",
            "http://127.0.0.1:1",
            "--retries",
            "0",
            "--timeout",
            "2",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_prompt_code_and_bad_mode_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = demo_corpus();
    let corpus = corpus.to_str().unwrap();
    let out = run(&["zeroshot", "--corpus", corpus, "--prompts", "5-1-0"], dir.path());
    assert_eq!(code(&out), 2);
    let out = run(&["zeroshot", "--corpus", corpus, "--mode", "three_class"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn config_file_with_unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "jobz = 3\n").unwrap();
    let out = run(&["zeroshot", "--config", "run.toml"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn report_collects_tables() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = demo_corpus();
    let corpus = corpus.to_str().unwrap();
    assert_eq!(code(&run(&["split", "--corpus", corpus, "--out", "o"], dir.path())), 0);
    assert_eq!(
        code(&run(
            &["baseline", "--corpus", "o/corpus.jsonl", "--out", "o"],
            dir.path()
        )),
        0
    );
    let out = run(&["report", "--dir", "o"], dir.path());
    assert_eq!(code(&out), 0);
    let summary = fs::read_to_string(dir.path().join("o/summary.txt")).unwrap();
    assert!(summary.contains("naive Bayes"), "{summary}");
    assert!(summary.contains("Train"), "{summary}");
}
