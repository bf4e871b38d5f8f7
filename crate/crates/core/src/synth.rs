//! Planted sparse-code datasets.
//!
//! Concepts are random unit vectors. Each sample draws a `sparsity`-subset of
//! concepts with weights in `[0.5, 1.5]`, adds isotropic Gaussian noise of
//! expected norm `noise` and is normalized; the stored truth code is the
//! planted weight vector divided by that same norm.
//!
//! Without `classes`, a sample's label is its heaviest planted concept and the
//! label's prompt is that concept's own embedding. With `classes = m`, the
//! concepts are cut into `m` disjoint blocks, sample `i` belongs to class
//! `i % m` and draws its support from that block, and each class prompt is
//! the normalized sum of its block.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::zeroshot::{PromptBank, DEFAULT_TEMPLATE};
use crate::store::{
    write_embedding_set_with, write_json, write_jsonl, DatasetManifest, EmbeddingSet,
    ManifestEntry, SparseCodeRecord, Split, StoreError,
};
use crate::vocab::{ConceptVocabulary, Construction, VocabError};

pub const VOCAB_DIR: &str = "vocab";
pub const AUDIO_DIR: &str = "audio";
pub const PROMPTS_DIR: &str = "prompts";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const TRUTH_FILE: &str = "truth.jsonl";
pub const CONFIG_FILE: &str = "synth.json";
pub const VOCABULARY_ID: &str = "synth";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub dim: usize,
    pub concepts: usize,
    pub samples: usize,
    pub sparsity: usize,
    pub noise: f64,
    pub classes: Option<usize>,
    pub template: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: 64,
            concepts: 128,
            samples: 200,
            sparsity: 5,
            noise: 0.01,
            classes: None,
            template: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.dim == 0 || self.concepts == 0 || self.samples == 0 {
            return bad("dim, concepts and samples must be positive".into());
        }
        if self.sparsity == 0 || self.sparsity > self.concepts {
            return bad(format!(
                "sparsity {} must be in 1..={} (the concept count)",
                self.sparsity, self.concepts
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!(
                "noise {} must be a non-negative number",
                self.noise
            ));
        }
        if let Some(m) = self.classes {
            if m == 0 || m > self.concepts {
                return bad(format!("classes {m} must be in 1..={}", self.concepts));
            }
            if self.sparsity > self.concepts / m {
                return bad(format!(
                    "sparsity {} exceeds the {} concepts per class",
                    self.sparsity,
                    self.concepts / m
                ));
            }
        }
        if self
            .template
            .matches(crate::eval::zeroshot::LABEL_PLACEHOLDER)
            .count()
            != 1
        {
            return bad(format!(
                "template {:?} needs one [class label]",
                self.template
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub vocab: ConceptVocabulary,
    pub audio: EmbeddingSet,
    /// Keyed by the template-expanded label, one row per label.
    pub prompts: EmbeddingSet,
    pub labels: Vec<String>,
    pub manifest: DatasetManifest,
    pub truth: Vec<SparseCodeRecord>,
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return unit(&v);
        }
    }
}

fn to_f32(rows: &[Vec<f64>]) -> Vec<Vec<f32>> {
    rows.iter()
        .map(|r| r.iter().map(|&v| v as f32).collect())
        .collect()
}

/// Row `i` of a stored set is the f32 rounding of a unit f64 vector, which can
/// sit a few ulps off unit length; re-normalizing in f64 keeps it within the
/// store tolerance.
fn normalized_set(ids: Vec<String>, rows: &[Vec<f64>]) -> Result<EmbeddingSet, StoreError> {
    EmbeddingSet::from_rows(ids, &to_f32(rows), false)?.l2_normalize()
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;
    let width = cfg.concepts.saturating_sub(1).to_string().len();
    let concept_names: Vec<String> = (0..cfg.concepts)
        .map(|j| format!("concept{j:0width$}"))
        .collect();
    let columns: Vec<Vec<f64>> = (0..cfg.concepts)
        .map(|_| gaussian_unit(&mut rng, d))
        .collect();
    let vocab = ConceptVocabulary::new(
        VOCABULARY_ID,
        Construction::Baseline,
        normalized_set(concept_names.clone(), &columns)?,
    )?;

    let block = cfg.classes.map(|m| cfg.concepts / m);
    let sample_width = cfg.samples.saturating_sub(1).to_string().len();
    let noise_std = cfg.noise / (d as f64).sqrt();
    let mut audio_rows = Vec::with_capacity(cfg.samples);
    let mut entries = Vec::with_capacity(cfg.samples);
    let mut truth = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        let (offset, span) = match (cfg.classes, block) {
            (Some(m), Some(b)) => ((i % m) * b, b),
            _ => (0, cfg.concepts),
        };
        let mut support: Vec<usize> = index::sample(&mut rng, span, cfg.sparsity)
            .into_iter()
            .map(|j| j + offset)
            .collect();
        support.sort_unstable();
        let weights: Vec<f64> = support.iter().map(|_| rng.gen_range(0.5..=1.5)).collect();
        let mut x = vec![0.0; d];
        for (&j, &w) in support.iter().zip(&weights) {
            for (xk, ck) in x.iter_mut().zip(&columns[j]) {
                *xk += w * ck;
            }
        }
        if cfg.noise > 0.0 {
            for xk in x.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *xk += noise_std * e;
            }
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let id = format!("sample{i:0sample_width$}");
        let label = match cfg.classes {
            Some(m) => format!("class{}", i % m),
            None => {
                let mut best = 0;
                for (k, w) in weights.iter().enumerate() {
                    if *w > weights[best] {
                        best = k;
                    }
                }
                concept_names[support[best]].clone()
            }
        };
        entries.push(ManifestEntry {
            id: id.clone(),
            split: if i % 5 == 4 { Split::Eval } else { Split::Dev },
            labels: vec![label.clone()],
            captions: Some(vec![PromptBank::prompt_for(&cfg.template, &label)]),
        });
        truth.push(SparseCodeRecord {
            embedding_id: id,
            vocabulary_id: VOCABULARY_ID.to_string(),
            lambda: 0.0,
            indices: support,
            weights: weights.iter().map(|w| w / norm).collect(),
        });
        audio_rows.push(x.iter().map(|v| v / norm).collect::<Vec<f64>>());
    }
    let manifest = DatasetManifest::new(entries)?;
    let audio = normalized_set(
        manifest.entries().iter().map(|e| e.id.clone()).collect(),
        &audio_rows,
    )?;

    let (labels, prompt_rows): (Vec<String>, Vec<Vec<f64>>) = match (cfg.classes, block) {
        (Some(m), Some(b)) => (0..m)
            .map(|c| {
                let mut s = vec![0.0; d];
                for col in &columns[c * b..(c + 1) * b] {
                    for (sk, ck) in s.iter_mut().zip(col) {
                        *sk += ck;
                    }
                }
                (format!("class{c}"), unit(&s))
            })
            .unzip(),
        _ => {
            let used = manifest.label_set();
            let mut used: Vec<(usize, String)> = used
                .into_iter()
                .map(|l| {
                    (
                        concept_names
                            .iter()
                            .position(|n| *n == l)
                            .expect("planted label"),
                        l,
                    )
                })
                .collect();
            used.sort();
            used.into_iter()
                .map(|(j, l)| (l, columns[j].clone()))
                .unzip()
        }
    };
    let prompt_ids = labels
        .iter()
        .map(|l| PromptBank::prompt_for(&cfg.template, l))
        .collect();
    let prompts = normalized_set(prompt_ids, &prompt_rows)?;
    Ok(SynthDataset {
        config: cfg.clone(),
        vocab,
        audio,
        prompts,
        labels,
        manifest,
        truth,
    })
}

impl SynthDataset {
    /// Writes `vocab/`, `audio/`, `prompts/`, `manifest.jsonl`, `truth.jsonl`
    /// and `synth.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir).map_err(crate::store::io_err(dir))?;
        self.vocab.write(&dir.join(VOCAB_DIR))?;
        let mut extra = BTreeMap::new();
        extra.insert("generator".to_string(), "synth".into());
        extra.insert("seed".to_string(), self.config.seed.into());
        write_embedding_set_with(&self.audio, &dir.join(AUDIO_DIR), extra.clone())?;
        write_embedding_set_with(&self.prompts, &dir.join(PROMPTS_DIR), extra)?;
        self.manifest.write(&dir.join(MANIFEST_FILE))?;
        write_jsonl(&dir.join(TRUTH_FILE), &self.truth)?;
        write_json(&dir.join(CONFIG_FILE), &self.config)?;
        Ok(())
    }
}
