use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use concept_lens::decompose::{class_profile, widen, ConceptReport, Decomposer};
use concept_lens::eval::spec::{PreparedTask, TaskKind, TaskSpec};
use concept_lens::eval::sweep::{self, evaluate_concepts, evaluate_dense};
use concept_lens::eval::zeroshot::DEFAULT_TEMPLATE;
use concept_lens::eval::{EvalReport, Evaluated, Outcomes};
use concept_lens::projection::{
    project_then_decompose, train, train_from, training_pairs, ProjectionMatrix, TrainConfig,
};
use concept_lens::report::{render_chart, Quantity};
use concept_lens::solver::SolverConfig;
use concept_lens::store::{
    read_embedding_set, write_jsonl, DatasetManifest, EmbeddingSet, SparseCodeRecord,
};
use concept_lens::synth::{self, SynthConfig};
use concept_lens::vocab::{
    build_baseline, build_clustered, build_pruned, merge_synonyms, propose_synonym_groups,
    read_groups, read_lines, write_groups, ConceptVocabulary, Construction, TagFilter,
    TagFrequencyTable,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::errors::invalid;
use crate::warn;

pub(crate) fn dispatch(command: Command) -> Result<Value> {
    match command {
        Command::Synth(a) => synth(&a),
        Command::BuildVocab(a) => build_vocab(&a),
        Command::ProposeGroups(a) => propose_groups(&a),
        Command::Decompose(a) => decompose(&a),
        Command::Classify(a) => evaluate(&a, TaskKind::Classification, "classify"),
        Command::Retrieve(a) => evaluate(&a, TaskKind::Retrieval, "retrieve"),
        Command::Sweep(a) => run_sweep(&a),
        Command::Finetune(a) => finetune(&a),
        Command::Report(a) => report(&a),
    }
}

fn require(path: &Path, flag: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(invalid(format!(
            "{flag}: {} does not exist",
            path.display()
        )))
    }
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn solver_config(args: &SolverArgs) -> Result<SolverConfig> {
    let cfg = args.config();
    cfg.validate()?;
    Ok(cfg)
}

fn read_vocab(path: &Path, dim: usize) -> Result<ConceptVocabulary> {
    require(path, "--vocab")?;
    let vocab = ConceptVocabulary::read(path)?;
    if vocab.dim() != dim {
        return Err(invalid(format!(
            "vocabulary {} is {}-dimensional, embeddings are {dim}-dimensional",
            vocab.id(),
            vocab.dim()
        )));
    }
    Ok(vocab)
}

fn synth(a: &SynthArgs) -> Result<Value> {
    let cfg = SynthConfig {
        seed: a.seed,
        dim: a.dim,
        concepts: a.concepts,
        samples: a.samples,
        sparsity: a.sparsity,
        noise: a.noise,
        classes: a.classes,
        template: a.template.clone(),
    };
    let ds = synth::generate(&cfg)?;
    ds.write(&a.out)?;
    for (file, task, direction) in [
        ("task_classification.json", "classification", None),
        ("task_retrieval.json", "retrieval", Some("text_audio")),
    ] {
        let mut spec = json!({
            "task": task,
            "manifest": synth::MANIFEST_FILE,
            "embeddings": synth::AUDIO_DIR,
            "text_embeddings": synth::PROMPTS_DIR,
            "template": cfg.template,
        });
        if let Some(d) = direction {
            spec["direction"] = d.into();
        }
        write_json(&a.out.join(file), &spec)?;
    }
    Ok(json!({
        "command": "synth",
        "out": a.out,
        "seed": cfg.seed,
        "dim": cfg.dim,
        "concepts": cfg.concepts,
        "samples": cfg.samples,
        "labels": ds.labels.len(),
    }))
}

fn word_set(
    path: Option<&PathBuf>,
    flag: &str,
    lowercase: bool,
) -> Result<Option<HashSet<String>>> {
    let Some(path) = path else { return Ok(None) };
    require(path, flag)?;
    Ok(Some(
        read_lines(path)?
            .into_iter()
            .map(|w| if lowercase { w.to_lowercase() } else { w })
            .collect(),
    ))
}

fn tag_table(a: &BuildVocabArgs) -> Result<TagFrequencyTable> {
    let path = a
        .tags
        .as_ref()
        .ok_or_else(|| invalid(format!("--tags is required for {}", a.construction)))?;
    require(path, "--tags")?;
    Ok(TagFrequencyTable::read_csv(path)?)
}

#[derive(Serialize)]
struct ConceptCount<'a> {
    concept: &'a str,
    count: u64,
    members: String,
}

fn write_counts(path: &Path, rows: &[ConceptCount<'_>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn build_vocab(a: &BuildVocabArgs) -> Result<Value> {
    require(&a.pool, "--pool")?;
    if a.vocab_size == 0 {
        return Err(invalid("--vocab-size must be at least 1"));
    }
    let pool = read_embedding_set(&a.pool)?;
    let id =
        a.id.clone()
            .unwrap_or_else(|| format!("{}-{}", a.construction, a.vocab_size));
    out_dir(&a.out)?;
    let concepts = match a.construction {
        Construction::Baseline => {
            let table = tag_table(a)?;
            let blocklist =
                word_set(a.blocklist.as_ref(), "--blocklist", false)?.unwrap_or_default();
            let wordlist = word_set(a.wordlist.as_ref(), "--wordlist", true)?;
            let filter = TagFilter::baseline(blocklist, wordlist);
            let concepts = build_baseline(&table, &filter, a.vocab_size)?;
            let counts: BTreeMap<&str, u64> = table
                .entries()
                .iter()
                .map(|(t, c)| (t.as_str(), *c))
                .collect();
            let rows: Vec<ConceptCount> = concepts
                .iter()
                .map(|c| ConceptCount {
                    concept: c,
                    count: counts[c.as_str()],
                    members: c.clone(),
                })
                .collect();
            write_counts(&a.out.join("concept_counts.csv"), &rows)?;
            concepts
        }
        Construction::Pruned => {
            let table = tag_table(a)?;
            let wordlist = word_set(a.wordlist.as_ref(), "--wordlist", true)?;
            let groups = match &a.groups {
                Some(p) => {
                    require(p, "--groups")?;
                    read_groups(p)?
                }
                None => Vec::new(),
            };
            let filter = TagFilter::pruned(wordlist);
            let pool_size = a.pool_size.unwrap_or(table.entries().len());
            let concepts = build_pruned(&table, &filter, &groups, a.vocab_size, pool_size)?;
            let merged = merge_synonyms(&table, &filter, &groups, pool_size)?;
            let rows: Vec<ConceptCount> = merged
                .iter()
                .take(concepts.len())
                .map(|m| ConceptCount {
                    concept: &m.representative,
                    count: m.count,
                    members: m.members.join(";"),
                })
                .collect();
            write_counts(&a.out.join("concept_counts.csv"), &rows)?;
            concepts
        }
        Construction::Clustered => {
            let candidates = clustering_pool(a, &pool)?;
            build_clustered(&candidates, a.vocab_size, a.seed, a.max_iters)?
        }
    };
    let vocab = ConceptVocabulary::from_pool(id, a.construction, &concepts, &pool)?;
    vocab.write(&a.out)?;
    Ok(json!({
        "command": "build-vocab",
        "vocabulary_id": vocab.id(),
        "construction": a.construction.to_string(),
        "size": vocab.len(),
        "dim": vocab.dim(),
        "out": a.out,
    }))
}

/// The normalized pool rows k-means runs on: the `--pool-size` most frequent
/// tags of `--tags` that have embeddings, or the first `--pool-size` rows.
fn clustering_pool(a: &BuildVocabArgs, pool: &EmbeddingSet) -> Result<EmbeddingSet> {
    let limit = a.pool_size.unwrap_or(usize::MAX);
    let rows: Vec<usize> = match &a.tags {
        Some(path) => {
            require(path, "--tags")?;
            let table = TagFrequencyTable::read_csv(path)?;
            let index = pool.id_index();
            table
                .ranked()
                .iter()
                .filter_map(|(t, _)| index.get(t.as_str()).copied())
                .take(limit)
                .collect()
        }
        None => (0..pool.len().min(limit)).collect(),
    };
    if rows.is_empty() {
        return Err(invalid("no pool embeddings to cluster"));
    }
    let subset = pool.select(&rows)?;
    Ok(if subset.is_normalized() {
        subset
    } else {
        subset.l2_normalize()?
    })
}

fn propose_groups(a: &ProposeGroupsArgs) -> Result<Value> {
    require(&a.tags, "--tags")?;
    let table = TagFrequencyTable::read_csv(&a.tags)?;
    let groups = propose_synonym_groups(&table);
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        out_dir(parent)?;
    }
    write_groups(&a.out, &groups)?;
    Ok(json!({
        "command": "propose-groups",
        "groups": groups.len(),
        "out": a.out,
    }))
}

/// A file-name-safe form of a class label.
fn file_stem(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

fn decompose(a: &DecomposeArgs) -> Result<Value> {
    require(&a.embeddings, "--embeddings")?;
    let set = read_embedding_set(&a.embeddings)?;
    let vocab = read_vocab(&a.vocab, set.dim())?;
    let cfg = solver_config(&a.solver)?;
    let manifest = match &a.manifest {
        Some(p) => {
            require(p, "--manifest")?;
            Some(DatasetManifest::read(p)?)
        }
        None => None,
    };
    let dec = Decomposer::new(&vocab)?;
    let codes = dec.decompose_all(&set, &cfg)?;
    let reports = codes
        .par_iter()
        .enumerate()
        .map(|(i, c)| dec.report(c, &widen(set.row(i)), a.top_k))
        .collect::<Result<Vec<ConceptReport>, _>>()?;
    out_dir(&a.out)?;
    write_jsonl(&a.out.join("codes.jsonl"), &codes)?;
    write_jsonl(&a.out.join("reports.jsonl"), &reports)?;

    let n = codes.len() as f64;
    let empty = reports.iter().filter(|r| r.empty).count();
    if empty > 0 {
        warn(
            "penalty zeroed every concept for some embeddings",
            json!({"empty_codes": empty, "lambda": cfg.lambda}),
        );
    }
    let profiles = match &manifest {
        Some(m) => write_profiles(&a.out.join("profiles"), m, &codes, &vocab)?,
        None => 0,
    };
    Ok(json!({
        "command": "decompose",
        "vocabulary_id": vocab.id(),
        "lambda": cfg.lambda,
        "n": codes.len(),
        "mean_l0": reports.iter().map(|r| r.l0 as f64).sum::<f64>() / n,
        "mean_reconstruction_cosine": reports.iter().map(|r| r.reconstruction_cosine).sum::<f64>() / n,
        "empty_codes": empty,
        "profiles": profiles,
        "out": a.out,
    }))
}

/// One CSV per class label plus `index.csv`; returns the number of classes.
fn write_profiles(
    dir: &Path,
    manifest: &DatasetManifest,
    codes: &[SparseCodeRecord],
    vocab: &ConceptVocabulary,
) -> Result<usize> {
    let by_id: BTreeMap<&str, &SparseCodeRecord> =
        codes.iter().map(|c| (c.embedding_id.as_str(), c)).collect();
    out_dir(dir)?;
    let mut index = String::from("label,file,samples\n");
    let mut used = HashSet::new();
    let mut written = 0;
    for label in manifest.label_set() {
        let members: Vec<&SparseCodeRecord> = manifest
            .entries()
            .iter()
            .filter(|e| e.labels.contains(&label))
            .filter_map(|e| by_id.get(e.id.as_str()).copied())
            .collect();
        if members.is_empty() {
            warn("class has no decomposed samples", json!({"label": label}));
            continue;
        }
        let profile = class_profile(&members, &label, vocab.len())?;
        let mut stem = file_stem(&label);
        if !used.insert(stem.clone()) {
            stem = format!("{stem}-{written}");
            used.insert(stem.clone());
        }
        let file = format!("{stem}.csv");
        fs::write(dir.join(&file), profile.to_csv(vocab.concepts()))?;
        index.push_str(&format!(
            "{},{file},{}\n",
            csv_field(&label),
            profile.sample_count
        ));
        written += 1;
    }
    fs::write(dir.join("index.csv"), index)?;
    Ok(written)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Builds a task spec from `--task-spec` and/or the individual flags.
fn resolve_spec(args: &TaskArgs, kind: TaskKind) -> Result<TaskSpec> {
    let mut spec = match &args.task_spec {
        Some(path) => {
            require(path, "--task-spec")?;
            let spec = TaskSpec::load(path)?;
            if spec.task != kind {
                return Err(invalid(format!(
                    "{} describes a {:?} task, this command runs {kind:?}",
                    path.display(),
                    spec.task
                )));
            }
            spec
        }
        None => {
            let missing = |flag: &str| invalid(format!("{flag} is required without --task-spec"));
            TaskSpec {
                task: kind,
                manifest: args.manifest.clone().ok_or_else(|| missing("--manifest"))?,
                embeddings: args
                    .embeddings
                    .clone()
                    .ok_or_else(|| missing("--embeddings"))?,
                text_embeddings: args
                    .text_embeddings
                    .clone()
                    .ok_or_else(|| missing("--text-embeddings"))?,
                template: DEFAULT_TEMPLATE.to_string(),
                metric: None,
                direction: None,
                split: None,
                labels: None,
            }
        }
    };
    if args.task_spec.is_some() {
        if let Some(p) = &args.manifest {
            spec.manifest = p.clone();
        }
        if let Some(p) = &args.embeddings {
            spec.embeddings = p.clone();
        }
        if let Some(p) = &args.text_embeddings {
            spec.text_embeddings = p.clone();
        }
    }
    if let Some(t) = &args.template {
        spec.template = t.clone();
    }
    if args.metric.is_some() {
        spec.metric = args.metric;
    }
    if args.split.is_some() {
        spec.split = args.split;
    }
    if args.labels.is_some() {
        spec.labels = args.labels.clone();
    }
    if args.direction.is_some() {
        spec.direction = args.direction;
    }
    if spec.direction.is_some() && kind == TaskKind::Classification {
        return Err(invalid("--direction applies to retrieval only"));
    }
    let metric = spec.resolved_metric();
    let task = spec.resolved_task();
    if !metric.applies_to(task) {
        return Err(invalid(format!("metric {metric} does not apply to {task}")));
    }
    require(&spec.manifest, "--manifest")?;
    require(&spec.embeddings, "--embeddings")?;
    require(&spec.text_embeddings, "--text-embeddings")?;
    Ok(spec)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("--alpha {alpha} must lie in (0, 1)")))
    }
}

/// Per-sample rows written next to a report.
fn sample_rows(
    spec: &TaskSpec,
    prepared: &PreparedTask,
    evaluated: &Evaluated,
) -> Result<Vec<Value>> {
    Ok(match &evaluated.outcomes {
        Outcomes::Classification {
            predictions,
            scores,
            ..
        } => {
            let labels = match &spec.labels {
                Some(l) => l.clone(),
                None => DatasetManifest::read(&spec.manifest)?.label_set(),
            };
            prepared
                .entries
                .iter()
                .zip(predictions)
                .zip(scores)
                .map(|((entry, &p), s)| {
                    json!({
                        "id": entry.id,
                        "predicted": labels[p],
                        "gold": entry.labels,
                        "correct": entry.labels.contains(&labels[p]),
                        "probabilities": s,
                    })
                })
                .collect()
        }
        Outcomes::Retrieval(queries) => queries
            .iter()
            .enumerate()
            .map(|(i, q)| json!({"query": i, "hit_at_1": q.hit_at_1, "ap_at_10": q.ap_at_10}))
            .collect(),
    })
}

fn report_summary(command: &str, report: &EvalReport, n: usize) -> Value {
    json!({
        "command": command,
        "task": report.task,
        "metric": report.metric_name,
        "value": report.value,
        "ci_low": report.ci_low,
        "ci_high": report.ci_high,
        "n": n,
        "lambda": report.lambda,
        "vocabulary_id": report.vocabulary_id,
    })
}

fn evaluate(a: &EvalArgs, kind: TaskKind, command: &str) -> Result<Value> {
    check_alpha(a.bootstrap.alpha)?;
    let spec = resolve_spec(&a.task, kind)?;
    let prepared = spec.prepare()?;
    let task = &*prepared.task;
    out_dir(&a.out)?;
    let (evaluated, lambda, vocabulary_id, mean_l0) = match &a.vocab {
        Some(path) => {
            let vocab = read_vocab(path, prepared.embeddings.dim())?;
            let cfg = solver_config(&a.solver)?;
            let dec = Decomposer::new(&vocab)?;
            let ev = evaluate_concepts(&dec, &prepared.embeddings, &cfg, task)?;
            if ev.empty_codes > 0 {
                warn(
                    "penalty zeroed every concept for some embeddings",
                    json!({"empty_codes": ev.empty_codes, "lambda": cfg.lambda}),
                );
            }
            write_jsonl(&a.out.join("codes.jsonl"), &ev.codes)?;
            (
                ev.evaluated,
                Some(cfg.lambda),
                Some(vocab.id().to_string()),
                Some(ev.mean_l0),
            )
        }
        None => (
            evaluate_dense(&prepared.embeddings, task)?,
            None,
            None,
            None,
        ),
    };
    let report = evaluated.report(
        a.bootstrap.n_bootstrap,
        a.bootstrap.seed,
        a.bootstrap.alpha,
        lambda,
        vocabulary_id,
    )?;
    write_json(&a.out.join("report.json"), &report)?;
    let file = match kind {
        TaskKind::Classification => "predictions.jsonl",
        TaskKind::Retrieval => "queries.jsonl",
    };
    write_jsonl(
        &a.out.join(file),
        &sample_rows(&spec, &prepared, &evaluated)?,
    )?;
    let mut summary = report_summary(command, &report, evaluated.len());
    summary["representation"] = if a.vocab.is_some() {
        "concepts"
    } else {
        "dense"
    }
    .into();
    summary["mean_l0"] = json!(mean_l0);
    summary["out"] = json!(a.out);
    Ok(summary)
}

fn run_sweep(a: &SweepArgs) -> Result<Value> {
    let kind = match (a.task_kind, &a.task.task_spec) {
        (Some(k), _) => k.into(),
        (None, Some(path)) => {
            require(path, "--task-spec")?;
            TaskSpec::load(path)?.task
        }
        (None, None) if a.task.direction.is_some() => TaskKind::Retrieval,
        (None, None) => TaskKind::Classification,
    };
    let spec = resolve_spec(&a.task, kind)?;
    let prepared = spec.prepare()?;
    let vocabs = a
        .vocab
        .iter()
        .map(|p| read_vocab(p, prepared.embeddings.dim()))
        .collect::<Result<Vec<_>>>()?;
    let mut ids = HashSet::new();
    for v in &vocabs {
        if !ids.insert(v.id()) {
            return Err(invalid(format!("vocabulary id {:?} given twice", v.id())));
        }
    }
    let base = SolverConfig {
        lambda: 0.0,
        max_sweeps: a.max_sweeps,
        tolerance: a.tolerance,
        epsilon_target: None,
        scale: a.scale.into(),
    };
    base.validate()?;
    let rows = sweep::sweep(
        &prepared.embeddings,
        &vocabs,
        &a.lambda_grid,
        &base,
        &*prepared.task,
    )?;
    out_dir(&a.out)?;
    sweep::write_csv(&a.out.join("sweep.csv"), &rows)?;
    Ok(json!({
        "command": "sweep",
        "task": prepared.task.task(),
        "metric": prepared.task.metric(),
        "rows": rows.len(),
        "vocabularies": vocabs.iter().map(|v| v.id()).collect::<Vec<_>>(),
        "lambda_grid": a.lambda_grid,
        "out": a.out,
    }))
}

fn finetune(a: &FinetuneArgs) -> Result<Value> {
    check_alpha(a.alpha)?;
    if a.train_split == a.eval_split {
        return Err(invalid("--train-split and --eval-split must differ"));
    }
    if a.task.split.is_some() {
        return Err(invalid(
            "use --train-split and --eval-split instead of --split",
        ));
    }
    let mut spec = resolve_spec(&a.task, TaskKind::Classification)?;
    let cfg = TrainConfig {
        learning_rate: a.learning_rate,
        max_epochs: a.epochs,
        batch_size: a.batch_size,
        early_stop_patience: a.patience,
        seed: a.seed,
        init_scale: a.init_scale,
    };
    cfg.validate()?;
    let solver = solver_config(&a.solver)?;

    spec.split = Some(a.train_split);
    let dev = spec.prepare()?;
    let bank = spec.prompt_bank()?;
    let vocab = read_vocab(&a.vocab, dev.embeddings.dim())?;
    let (z, t) = training_pairs(&dev.embeddings, &dev.entries, &bank)?;
    let outcome = if a.identity_init {
        train_from(
            ProjectionMatrix::identity(dev.embeddings.dim()),
            &z,
            &t,
            &cfg,
        )?
    } else {
        train(&z, &t, &cfg)?
    };
    if outcome.skipped > 0 {
        warn(
            "some training samples project to zero and were skipped",
            json!({"skipped": outcome.skipped}),
        );
    }
    let mut h = outcome.matrix;
    h.trained_on = format!("{}:{}", dataset_name(&spec.manifest), a.train_split);

    spec.split = Some(a.eval_split);
    let eval = spec.prepare()?;
    let dec = Decomposer::new(&vocab)?;
    let codes = (0..eval.embeddings.len())
        .into_par_iter()
        .map(|i| {
            project_then_decompose(
                &h,
                &eval.embeddings.ids()[i],
                &widen(eval.embeddings.row(i)),
                &dec,
                &solver,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let reconstructions = codes
        .iter()
        .map(|c| dec.reconstruct(c))
        .collect::<Result<Vec<_>, _>>()?;
    let projected = eval.task.evaluate(&reconstructions)?;
    let baseline = evaluate_concepts(&dec, &eval.embeddings, &solver, &*eval.task)?;
    let id = Some(vocab.id().to_string());
    let finetuned_report = projected.report(
        a.n_bootstrap,
        a.seed,
        a.alpha,
        Some(solver.lambda),
        id.clone(),
    )?;
    let baseline_report =
        baseline
            .evaluated
            .report(a.n_bootstrap, a.seed, a.alpha, Some(solver.lambda), id)?;

    out_dir(&a.out)?;
    h.write(&a.out.join("projection"))?;
    let mut history = String::from("epoch,loss\n");
    for (epoch, loss) in outcome.loss_history.iter().enumerate() {
        history.push_str(&format!("{epoch},{loss}\n"));
    }
    fs::write(a.out.join("loss_history.csv"), history)?;
    write_jsonl(&a.out.join("codes.jsonl"), &codes)?;
    let best_loss = outcome.loss_history[outcome.best_epoch];
    write_json(
        &a.out.join("report.json"),
        &json!({
            "finetuned": finetuned_report,
            "baseline": baseline_report,
            "training": {
                "config": cfg,
                "epochs_run": outcome.epochs_run,
                "best_epoch": outcome.best_epoch,
                "best_loss": best_loss,
                "skipped": outcome.skipped,
                "samples": z.len(),
            },
        }),
    )?;
    let mut summary = report_summary("finetune", &finetuned_report, projected.len());
    summary["baseline_value"] = json!(baseline_report.value);
    summary["epochs_run"] = json!(outcome.epochs_run);
    summary["best_epoch"] = json!(outcome.best_epoch);
    summary["best_loss"] = json!(best_loss);
    summary["out"] = json!(a.out);
    Ok(summary)
}

fn dataset_name(manifest: &Path) -> String {
    manifest
        .parent()
        .and_then(|p| p.file_name())
        .or_else(|| manifest.file_stem())
        .map_or_else(|| "dataset".into(), |n| n.to_string_lossy().into_owned())
}

fn report(a: &ReportArgs) -> Result<Value> {
    require(&a.input, "--input")?;
    let rows = sweep::read_csv(&a.input)?;
    out_dir(&a.out)?;
    let mut files = Vec::new();
    for q in Quantity::ALL {
        let title = if a.title.is_empty() {
            format!("{} vs lambda", q.column())
        } else {
            format!("{}: {} vs lambda", a.title, q.column())
        };
        let name = q.file_name();
        fs::write(a.out.join(&name), render_chart(&rows, q, &title))?;
        files.push(name);
    }
    Ok(json!({
        "command": "report",
        "rows": rows.len(),
        "files": files,
        "out": a.out,
    }))
}
