use std::collections::HashSet;

use concept_lens::decompose::{class_profile, widen, Decomposer};
use concept_lens::eval::bootstrap::{bootstrap_ci, mean};
use concept_lens::eval::spec::{TaskKind, TaskSpec};
use concept_lens::eval::sweep::{evaluate_concepts, sweep, DEFAULT_LAMBDA_GRID};
use concept_lens::eval::zeroshot::{classify, retrieve, PromptBank, DEFAULT_TEMPLATE};
use concept_lens::eval::{ClassificationTask, MetricName};
use concept_lens::solver::{lambda_max, ResidualScale, SolverConfig};
use concept_lens::store::{SparseCodeRecord, Split};
use concept_lens::synth::{self, generate, SynthConfig, SynthDataset};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn classes_fixture() -> SynthDataset {
    generate(&SynthConfig {
        classes: Some(8),
        ..SynthConfig::default()
    })
    .unwrap()
}

fn classification(ds: &SynthDataset) -> ClassificationTask {
    let prompts = PromptBank::from_store(DEFAULT_TEMPLATE, ds.labels.clone(), &ds.prompts).unwrap();
    let gold: Vec<Vec<String>> = ds
        .manifest
        .entries()
        .iter()
        .map(|e| e.labels.clone())
        .collect();
    ClassificationTask::new(prompts, &gold, MetricName::Accuracy).unwrap()
}

#[test]
fn planted_supports_recovered_on_default_fixture() {
    let ds = generate(&SynthConfig::default()).unwrap();
    let dec = Decomposer::new(&ds.vocab).unwrap();
    let codes = dec
        .decompose_all(&ds.audio, &SolverConfig::with_lambda(0.01))
        .unwrap();
    let exact = codes
        .iter()
        .zip(&ds.truth)
        .filter(|(c, t)| c.indices == t.indices)
        .count();
    assert!(exact as f64 / codes.len() as f64 >= 0.95, "{exact}/200");
}

#[test]
fn batch_equals_individual_decompositions() {
    let ds = classes_fixture();
    let dec = Decomposer::new(&ds.vocab).unwrap();
    let cfg = SolverConfig::with_lambda(0.1);
    let batch = dec.decompose_all(&ds.audio, &cfg).unwrap();
    for (code, id) in batch.iter().zip(ds.audio.ids()) {
        assert_eq!(code, &dec.decompose(&ds.audio, id, &cfg).unwrap());
    }
}

#[test]
fn class_profile_ignores_code_order() {
    let ds = classes_fixture();
    let dec = Decomposer::new(&ds.vocab).unwrap();
    let codes = dec
        .decompose_all(&ds.audio, &SolverConfig::with_lambda(0.05))
        .unwrap();
    let mut refs: Vec<&SparseCodeRecord> = codes.iter().step_by(8).collect();
    let a = class_profile(&refs, "class0", ds.vocab.len()).unwrap();
    refs.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let b = class_profile(&refs, "class0", ds.vocab.len()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn orthonormal_column_target_keeps_one_concept() {
    use concept_lens::store::EmbeddingSet;
    use concept_lens::vocab::{ConceptVocabulary, Construction};
    let d = 8;
    let rows: Vec<Vec<f32>> = (0..d)
        .map(|i| (0..d).map(|k| if i == k { 1.0 } else { 0.0 }).collect())
        .collect();
    let vocab = ConceptVocabulary::new(
        "basis",
        Construction::Baseline,
        EmbeddingSet::from_rows((0..d).map(|i| format!("c{i}")).collect(), &rows, true).unwrap(),
    )
    .unwrap();
    let dec = Decomposer::new(&vocab).unwrap();
    let cfg = SolverConfig {
        lambda: 0.01,
        scale: ResidualScale::Dimension,
        ..SolverConfig::default()
    };
    let code = dec.decompose_vector("x", &widen(&rows[3]), &cfg).unwrap();
    assert_eq!(code.indices, vec![3]);
    assert!((code.weights[0] - (1.0 - d as f64 * 0.01)).abs() < 1e-9);
}

#[test]
fn sweep_above_lambda_max_is_all_empty() {
    let ds = classes_fixture();
    let dec = Decomposer::new(&ds.vocab).unwrap();
    let top = ds
        .audio
        .rows()
        .map(|r| lambda_max(dec.dictionary(), &widen(r), ResidualScale::Unit).unwrap())
        .fold(0.0, f64::max);
    let task = classification(&ds);
    let rows = sweep(
        &ds.audio,
        &[ds.vocab.clone()],
        &[2.0 * top],
        &SolverConfig::default(),
        &task,
    )
    .unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].mean_l0, 0.0);
}

#[test]
fn single_lambda_sweep_equals_direct_evaluation() {
    let ds = classes_fixture();
    let task = classification(&ds);
    let base = SolverConfig::default();
    let rows = sweep(&ds.audio, &[ds.vocab.clone()], &[0.15], &base, &task).unwrap();
    let dec = Decomposer::new(&ds.vocab).unwrap();
    let direct =
        evaluate_concepts(&dec, &ds.audio, &SolverConfig::with_lambda(0.15), &task).unwrap();
    assert_eq!(rows[0].metric, direct.evaluated.value);
    assert_eq!(rows[0].mean_l0, direct.mean_l0);
    assert_eq!(
        rows[0].mean_reconstruction_cosine,
        direct.mean_reconstruction_cosine
    );
}

#[test]
fn default_grid_trends() {
    let ds = classes_fixture();
    let task = classification(&ds);
    let rows = sweep(
        &ds.audio,
        &[ds.vocab.clone()],
        &DEFAULT_LAMBDA_GRID,
        &SolverConfig::default(),
        &task,
    )
    .unwrap();
    assert_eq!(rows.len(), 8);
    for w in rows.windows(2) {
        assert!(w[0].lambda < w[1].lambda);
        assert!(w[1].mean_l0 <= w[0].mean_l0);
        assert!(w[0].mean_reconstruction_cosine > w[1].mean_reconstruction_cosine);
    }
}

#[test]
fn prediction_survives_positive_rescaling_and_probabilities_sum_to_one() {
    let ds = classes_fixture();
    let prompts = PromptBank::from_store(DEFAULT_TEMPLATE, ds.labels.clone(), &ds.prompts).unwrap();
    let reps: Vec<Vec<f64>> = ds.audio.rows().map(widen).collect();
    let scaled: Vec<Vec<f64>> = reps
        .iter()
        .map(|r| r.iter().map(|v| v * 3.7).collect())
        .collect();
    let a = classify(&reps, &prompts).unwrap();
    let b = classify(&scaled, &prompts).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert_eq!(p.label_index, q.label_index);
        assert!(p.probabilities.iter().all(|&v| v > 0.0));
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn retrieval_ignores_gallery_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = 6;
    let gallery: Vec<Vec<f64>> = (0..30)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let ids: Vec<String> = (0..30).map(|i| format!("a{i:02}")).collect();
    let queries: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let relevance: Vec<HashSet<usize>> = (0..10)
        .map(|q| HashSet::from([q, (q * 7 + 3) % 30]))
        .collect();
    let base = retrieve(&queries, &gallery, &ids, &relevance).unwrap();
    let mut perm: Vec<usize> = (0..30).collect();
    perm.shuffle(&mut rng);
    let g2: Vec<Vec<f64>> = perm.iter().map(|&i| gallery[i].clone()).collect();
    let ids2: Vec<String> = perm.iter().map(|&i| ids[i].clone()).collect();
    let pos: Vec<usize> = (0..30)
        .map(|i| perm.iter().position(|&p| p == i).unwrap())
        .collect();
    let rel2: Vec<HashSet<usize>> = relevance
        .iter()
        .map(|r| r.iter().map(|&i| pos[i]).collect())
        .collect();
    let moved = retrieve(&queries, &g2, &ids2, &rel2).unwrap();
    assert_eq!(base.recall_at_1, moved.recall_at_1);
    assert!((base.map_at_10 - moved.map_at_10).abs() < 1e-12);
}

#[test]
fn bernoulli_bootstrap_half_width() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let outcomes: Vec<f64> = (0..1000)
        .map(|_| f64::from(u8::from(rng.gen_bool(0.5))))
        .collect();
    let (lo, hi) = bootstrap_ci(&outcomes, mean, 1000, 0, 0.05).unwrap();
    let half = (hi - lo) / 2.0;
    assert!((0.02..=0.05).contains(&half), "half-width {half}");
    let m = mean(&outcomes).unwrap();
    assert!(lo <= m && m <= hi);
}

#[test]
fn report_interval_contains_value() {
    let ds = classes_fixture();
    let task = classification(&ds);
    let dec = Decomposer::new(&ds.vocab).unwrap();
    for lambda in [0.01, 0.35, 0.5] {
        let ev =
            evaluate_concepts(&dec, &ds.audio, &SolverConfig::with_lambda(lambda), &task).unwrap();
        let r = ev
            .evaluated
            .report(200, 9, 0.05, Some(lambda), Some("synth".into()))
            .unwrap();
        assert!(r.ci_low <= r.value && r.value <= r.ci_high);
    }
}

#[test]
fn task_spec_runs_on_written_fixture() {
    let ds = classes_fixture();
    let dir = tempfile::tempdir().unwrap();
    ds.write(dir.path()).unwrap();
    let spec_path = dir.path().join("task.json");
    std::fs::write(
        &spec_path,
        r#"{"task": "classification", "manifest": "manifest.jsonl", "embeddings": "audio",
            "text_embeddings": "prompts", "split": "eval"}"#,
    )
    .unwrap();
    let spec = TaskSpec::load(&spec_path).unwrap();
    assert_eq!(spec.task, TaskKind::Classification);
    let prepared = spec.prepare().unwrap();
    assert_eq!(
        prepared.embeddings.len(),
        ds.manifest.in_split(Split::Eval).count()
    );
    let vocab =
        concept_lens::vocab::ConceptVocabulary::read(&dir.path().join(synth::VOCAB_DIR)).unwrap();
    let dec = Decomposer::new(&vocab).unwrap();
    let ev = evaluate_concepts(
        &dec,
        &prepared.embeddings,
        &SolverConfig::with_lambda(0.01),
        &*prepared.task,
    )
    .unwrap();
    assert!(ev.evaluated.value >= 0.99);
    assert_eq!(prepared.task.len(), prepared.embeddings.len());
}
