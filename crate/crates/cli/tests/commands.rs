mod common;

use std::fs;
use std::process::Command;

use common::{fixture, p, run, snapshot, tag_pool, try_run};
use concept_lens::eval::sweep::read_csv;
use concept_lens::projection::ProjectionMatrix;
use concept_lens::store::{read_jsonl, write_embedding_set, EmbeddingSet, SparseCodeRecord};
use concept_lens::vocab::{ConceptVocabulary, Construction};
use concept_lens_cli::ErrorKind;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_concept-lens");

const COMMANDS: [&str; 9] = [
    "synth",
    "build-vocab",
    "propose-groups",
    "decompose",
    "classify",
    "retrieve",
    "sweep",
    "finetune",
    "report",
];

#[test]
fn help_exits_zero_for_every_command() {
    for cmd in COMMANDS {
        let out = Command::new(BIN).args([cmd, "--help"]).output().unwrap();
        assert!(out.status.success(), "{cmd} --help");
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("--out"), "{cmd} help lacks --out");
        assert!(text.contains("--threads"), "{cmd} help lacks --threads");
    }
    let out = Command::new(BIN).arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in COMMANDS {
        assert!(text.contains(cmd), "top-level help lacks {cmd}");
    }
}

#[test]
fn help_documents_the_shared_flags() {
    let help = |cmd: &str| {
        String::from_utf8(
            Command::new(BIN)
                .args([cmd, "--help"])
                .output()
                .unwrap()
                .stdout,
        )
        .unwrap()
    };
    let classify = help("classify");
    for flag in [
        "--vocab",
        "--embeddings",
        "--manifest",
        "--lambda",
        "--template",
        "--metric",
        "--seed",
    ] {
        assert!(classify.contains(flag), "classify help lacks {flag}");
    }
    assert!(help("retrieve").contains("--direction"));
    assert!(help("sweep").contains("--lambda-grid"));
    assert!(help("build-vocab").contains("--vocab-size"));
}

#[test]
fn unknown_flag_is_a_validation_error() {
    let out = Command::new(BIN)
        .args(["synth", "--bogus"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "validation");
    assert_eq!(err["level"], "error");
}

#[test]
fn baseline_fixture_gives_ten_concepts() {
    let dir = tempfile::tempdir().unwrap();
    let pool = tag_pool(&fixture("tags.csv"), dir.path(), 8, 1);
    let out = dir.path().join("vocab");
    let summary = run(&[
        "build-vocab",
        "--construction",
        "baseline",
        "--tags",
        p(&fixture("tags.csv")),
        "--blocklist",
        p(&fixture("blocklist.txt")),
        "--pool",
        p(&pool),
        "--vocab-size",
        "10",
        "--out",
        p(&out),
    ]);
    assert_eq!(summary["size"], 10);
    let vocab = ConceptVocabulary::read(&out).unwrap();
    assert_eq!(vocab.construction(), Construction::Baseline);
    assert_eq!(vocab.id(), "baseline-10");
    assert_eq!(
        vocab.concepts(),
        ["dog", "rain", "engine", "bird", "water", "wind", "door", "bell", "car", "glass"]
    );
}

#[test]
fn baseline_asking_for_too_many_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let pool = tag_pool(&fixture("tags.csv"), dir.path(), 8, 1);
    let err = try_run(&[
        "build-vocab",
        "--construction",
        "baseline",
        "--tags",
        p(&fixture("tags.csv")),
        "--blocklist",
        p(&fixture("blocklist.txt")),
        "--pool",
        p(&pool),
        "--vocab-size",
        "13",
        "--out",
        p(&dir.path().join("v")),
    ])
    .unwrap_err();
    assert_eq!(err.kind, ErrorKind::Validation);
    assert!(err.message.contains("insufficient"), "{}", err.message);
}

#[test]
fn clustered_with_k_above_pool_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let pool = tag_pool(&fixture("tags.csv"), dir.path(), 8, 1);
    let out = Command::new(BIN)
        .args([
            "build-vocab",
            "--construction",
            "clustered",
            "--pool",
            p(&pool),
        ])
        .args(["--vocab-size", "20", "--out", p(&dir.path().join("v"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "validation");
    assert!(err["message"]
        .as_str()
        .unwrap()
        .contains("cannot form 20 clusters"));
}

#[test]
fn clustered_returns_distinct_pool_members() {
    let dir = tempfile::tempdir().unwrap();
    let pool = tag_pool(&fixture("tags.csv"), dir.path(), 8, 1);
    let out = dir.path().join("v");
    run(&[
        "build-vocab",
        "--construction",
        "clustered",
        "--tags",
        p(&fixture("tags.csv")),
        "--pool",
        p(&pool),
        "--pool-size",
        "12",
        "--vocab-size",
        "5",
        "--out",
        p(&out),
    ]);
    let vocab = ConceptVocabulary::read(&out).unwrap();
    let mut names = vocab.concepts().to_vec();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), 5);
}

#[test]
fn pruned_cough_fixture_keeps_cough_with_merged_count() {
    let dir = tempfile::tempdir().unwrap();
    let pool = tag_pool(&fixture("cough_tags.csv"), dir.path(), 8, 2);
    let out = dir.path().join("v");
    run(&[
        "build-vocab",
        "--construction",
        "pruned",
        "--tags",
        p(&fixture("cough_tags.csv")),
        "--groups",
        p(&fixture("cough_groups.txt")),
        "--pool",
        p(&pool),
        "--vocab-size",
        "3",
        "--out",
        p(&out),
    ]);
    let vocab = ConceptVocabulary::read(&out).unwrap();
    assert_eq!(vocab.concepts(), ["cough", "rain", "laugh"]);
    let counts = fs::read_to_string(out.join("concept_counts.csv")).unwrap();
    assert!(
        counts.contains("cough,100,cough;coughing;coughs"),
        "{counts}"
    );
}

#[test]
fn propose_groups_finds_the_cough_inflections() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("groups.txt");
    let summary = run(&[
        "propose-groups",
        "--tags",
        p(&fixture("cough_tags.csv")),
        "--out",
        p(&out),
    ]);
    assert_eq!(summary["groups"], 1);
    assert_eq!(
        fs::read_to_string(out).unwrap().trim(),
        "cough,coughing,coughs"
    );
}

/// Standard basis vocabulary plus embeddings in the positive orthant.
fn orthonormal_fixture(dir: &std::path::Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let d = 6;
    let basis: Vec<Vec<f32>> = (0..d)
        .map(|i| (0..d).map(|k| if i == k { 1.0 } else { 0.0 }).collect())
        .collect();
    let vocab = ConceptVocabulary::new(
        "basis",
        Construction::Baseline,
        EmbeddingSet::from_rows((0..d).map(|i| format!("e{i}")).collect(), &basis, true).unwrap(),
    )
    .unwrap();
    let vocab_dir = dir.join("vocab");
    vocab.write(&vocab_dir).unwrap();
    let rows: Vec<Vec<f32>> = (0..10)
        .map(|i| {
            (0..d)
                .map(|k| ((i * 7 + k * 3) % 5) as f32 + 0.25)
                .collect()
        })
        .collect();
    let ids = (0..10).map(|i| format!("x{i}")).collect();
    let set = EmbeddingSet::from_rows(ids, &rows, false)
        .unwrap()
        .l2_normalize()
        .unwrap();
    let emb_dir = dir.join("emb");
    write_embedding_set(&set, &emb_dir).unwrap();
    (vocab_dir, emb_dir)
}

#[test]
fn decompose_with_zero_lambda_reconstructs_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (vocab, emb) = orthonormal_fixture(dir.path());
    let out = dir.path().join("dec");
    let summary = run(&[
        "decompose",
        "--vocab",
        p(&vocab),
        "--embeddings",
        p(&emb),
        "--lambda",
        "0",
        "--out",
        p(&out),
    ]);
    let cos = summary["mean_reconstruction_cosine"].as_f64().unwrap();
    assert!((cos - 1.0).abs() < 1e-6, "{cos}");
    assert_eq!(summary["mean_l0"], 6.0);
    let codes: Vec<SparseCodeRecord> = read_jsonl(&out.join("codes.jsonl")).unwrap();
    assert_eq!(codes.len(), 10);
    let reports = fs::read_to_string(out.join("reports.jsonl")).unwrap();
    assert_eq!(reports.lines().count(), 10);
}

#[test]
fn decompose_warns_when_codes_are_empty() {
    let dir = tempfile::tempdir().unwrap();
    let (vocab, emb) = orthonormal_fixture(dir.path());
    let out = Command::new(BIN)
        .args(["decompose", "--vocab", p(&vocab), "--embeddings", p(&emb)])
        .args(["--lambda", "5", "--out", p(&dir.path().join("dec"))])
        .output()
        .unwrap();
    assert!(out.status.success());
    let warning: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(warning["level"], "warning");
    assert_eq!(warning["detail"]["empty_codes"], 10);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["empty_codes"], 10);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1);
}

fn synth_classes(dir: &std::path::Path) -> std::path::PathBuf {
    let out = dir.join("synth");
    run(&["synth", "--classes", "8", "--out", p(&out)]);
    out
}

#[test]
fn classify_separable_fixture_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_classes(dir.path());
    let spec = data.join("task_classification.json");
    let concepts = run(&[
        "classify",
        "--task-spec",
        p(&spec),
        "--vocab",
        p(&data.join("vocab")),
        "--lambda",
        "0.01",
        "--n-bootstrap",
        "100",
        "--out",
        p(&dir.path().join("c")),
    ]);
    assert_eq!(concepts["value"], 1.0);
    assert_eq!(concepts["representation"], "concepts");
    let dense = run(&[
        "classify",
        "--manifest",
        p(&data.join("manifest.jsonl")),
        "--embeddings",
        p(&data.join("audio")),
        "--prompts",
        p(&data.join("prompts")),
        "--n-bootstrap",
        "100",
        "--out",
        p(&dir.path().join("d")),
    ]);
    assert_eq!(dense["value"], 1.0);
    let predictions = fs::read_to_string(dir.path().join("c/predictions.jsonl")).unwrap();
    assert_eq!(predictions.lines().count(), 200);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("c/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["metric_name"], "accuracy");
    assert_eq!(report["vocabulary_id"], "synth");
}

#[test]
fn retrieval_metric_on_classification_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_classes(dir.path());
    let err = try_run(&[
        "classify",
        "--task-spec",
        p(&data.join("task_classification.json")),
        "--metric",
        "recall_at_1",
        "--out",
        p(&dir.path().join("c")),
    ])
    .unwrap_err();
    assert_eq!(err.kind, ErrorKind::Validation);
}

#[test]
fn missing_input_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = try_run(&[
        "decompose",
        "--vocab",
        p(&dir.path().join("nope")),
        "--embeddings",
        p(&dir.path().join("nope")),
        "--out",
        p(&dir.path().join("o")),
    ])
    .unwrap_err();
    assert_eq!(err.kind, ErrorKind::Validation);
    assert!(err.message.contains("does not exist"));
}

#[test]
fn retrieve_on_synthetic_captions() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_classes(dir.path());
    let summary = run(&[
        "retrieve",
        "--task-spec",
        p(&data.join("task_retrieval.json")),
        "--vocab",
        p(&data.join("vocab")),
        "--lambda",
        "0.01",
        "--metric",
        "map_at_10",
        "--n-bootstrap",
        "50",
        "--out",
        p(&dir.path().join("r")),
    ]);
    assert_eq!(summary["task"], "text_audio_retrieval");
    assert_eq!(summary["metric"], "map_at_10");
    assert!(summary["value"].as_f64().unwrap() > 0.9);
}

#[test]
fn sweep_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_classes(dir.path());
    let sweep_dir = dir.path().join("sweep");
    let summary = run(&[
        "sweep",
        "--task-spec",
        p(&data.join("task_classification.json")),
        "--vocab",
        p(&data.join("vocab")),
        "--out",
        p(&sweep_dir),
    ]);
    assert_eq!(summary["rows"], 8);
    let rows = read_csv(&sweep_dir.join("sweep.csv")).unwrap();
    assert_eq!(rows.len(), 8);
    for w in rows.windows(2) {
        assert!(w[0].lambda < w[1].lambda);
        assert!(w[0].mean_reconstruction_cosine >= w[1].mean_reconstruction_cosine);
        assert!(w[0].mean_l0 >= w[1].mean_l0);
    }

    let charts = dir.path().join("charts");
    let summary = run(&[
        "report",
        "--input",
        p(&sweep_dir.join("sweep.csv")),
        "--out",
        p(&charts),
    ]);
    assert_eq!(summary["files"].as_array().unwrap().len(), 3);
    let svg = fs::read_to_string(charts.join("metric_vs_lambda.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<circle").count(), 8);
}

#[test]
fn report_rejects_a_malformed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "lambda,metric\n0.1,0.5\n").unwrap();
    let err = try_run(&[
        "report",
        "--input",
        p(&csv),
        "--out",
        p(&dir.path().join("o")),
    ])
    .unwrap_err();
    assert_eq!(err.kind, ErrorKind::Validation);
}

#[test]
fn finetune_writes_a_readable_projection() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_classes(dir.path());
    let out = dir.path().join("ft");
    let summary = run(&[
        "finetune",
        "--task-spec",
        p(&data.join("task_classification.json")),
        "--vocab",
        p(&data.join("vocab")),
        "--lambda",
        "0.01",
        "--epochs",
        "20",
        "--n-bootstrap",
        "50",
        "--out",
        p(&out),
    ]);
    assert_eq!(summary["n"], 40);
    let h = ProjectionMatrix::read(&out.join("projection")).unwrap();
    assert_eq!(h.dim(), 64);
    assert_eq!(h.trained_on, "synth:dev");
    let history = fs::read_to_string(out.join("loss_history.csv")).unwrap();
    let epochs = summary["epochs_run"].as_u64().unwrap() as usize;
    assert_eq!(history.lines().count(), epochs + 2);
}

#[test]
fn same_split_for_training_and_evaluation_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_classes(dir.path());
    let err = try_run(&[
        "finetune",
        "--task-spec",
        p(&data.join("task_classification.json")),
        "--vocab",
        p(&data.join("vocab")),
        "--eval-split",
        "dev",
        "--out",
        p(&dir.path().join("ft")),
    ])
    .unwrap_err();
    assert_eq!(err.kind, ErrorKind::Validation);
}

#[test]
fn thread_count_does_not_change_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_classes(dir.path());
    let sweep = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        run(&[
            "--threads",
            threads,
            "sweep",
            "--task-spec",
            p(&data.join("task_classification.json")),
            "--vocab",
            p(&data.join("vocab")),
            "--lambda-grid",
            "0.05,0.2",
            "--out",
            p(&out),
        ]);
        snapshot(&out)
    };
    assert_eq!(sweep("1", "one"), sweep("4", "four"));
}
