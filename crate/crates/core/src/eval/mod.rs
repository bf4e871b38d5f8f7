//! Zero-shot evaluation of dense or concept-based representations.

pub mod bootstrap;
pub mod metrics;
pub mod spec;
pub mod sweep;
pub mod zeroshot;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::DecomposeError;
use crate::store::StoreError;
use crate::vocab::VocabError;
use zeroshot::{PromptBank, QueryOutcome};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("rows have different lengths")]
    Ragged,
    #[error("no class has a positive example")]
    NoPositives,
    #[error("template must contain \"[class label]\" exactly once: {0:?}")]
    Template(String),
    #[error("no prompt embedding for {0:?}")]
    MissingPrompt(String),
    #[error("label {0:?} is not in the prompt bank")]
    UnknownLabel(String),
    #[error("no embedding for {0:?}")]
    MissingEmbedding(String),
    #[error("metric {metric} does not apply to {task}")]
    MetricForTask { metric: MetricName, task: Task },
    #[error("bootstrap: {0}")]
    Bootstrap(String),
    #[error("invalid lambda grid: {0}")]
    Grid(String),
    #[error("invalid task spec: {0}")]
    Spec(String),
    #[error("sweep csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    AudioTextRetrieval,
    TextAudioRetrieval,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classification => "classification",
            Task::AudioTextRetrieval => "audio_text_retrieval",
            Task::TextAudioRetrieval => "text_audio_retrieval",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Accuracy,
    MacroF1,
    MicroF1,
    Map,
    #[serde(rename = "recall_at_1")]
    RecallAt1,
    #[serde(rename = "map_at_10")]
    MapAt10,
}

impl MetricName {
    pub fn applies_to(self, task: Task) -> bool {
        match self {
            MetricName::RecallAt1 | MetricName::MapAt10 => task != Task::Classification,
            _ => task == Task::Classification,
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricName::Accuracy => "accuracy",
            MetricName::MacroF1 => "macro_f1",
            MetricName::MicroF1 => "micro_f1",
            MetricName::Map => "map",
            MetricName::RecallAt1 => "recall_at_1",
            MetricName::MapAt10 => "map_at_10",
        })
    }
}

impl FromStr for MetricName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "accuracy" | "acc" => MetricName::Accuracy,
            "macro_f1" | "f1" => MetricName::MacroF1,
            "micro_f1" => MetricName::MicroF1,
            "map" | "mAP" => MetricName::Map,
            "recall_at_1" | "r@1" | "R@1" => MetricName::RecallAt1,
            "map_at_10" | "map@10" | "mAP@10" => MetricName::MapAt10,
            _ => return Err(format!("unknown metric {s:?}")),
        })
    }
}

/// Retrieval direction: which side supplies the queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AudioText,
    TextAudio,
}

impl Direction {
    pub fn task(self) -> Task {
        match self {
            Direction::AudioText => Task::AudioTextRetrieval,
            Direction::TextAudio => Task::TextAudioRetrieval,
        }
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "audio_text" | "a2t" | "audio-text" => Ok(Direction::AudioText),
            "text_audio" | "t2a" | "text-audio" => Ok(Direction::TextAudio),
            _ => Err(format!("unknown direction {s:?} (audio_text|text_audio)")),
        }
    }
}

/// A metric value with its bootstrap interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub metric_name: MetricName,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_bootstrap: usize,
    /// Absent for dense-embedding baselines.
    pub lambda: Option<f64>,
    pub vocabulary_id: Option<String>,
}

/// Per-sample results of one evaluation, kept so any metric can be
/// recomputed on a resample of the samples.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcomes {
    Classification {
        predictions: Vec<usize>,
        gold: Vec<HashSet<usize>>,
        scores: Vec<Vec<f64>>,
        n_labels: usize,
    },
    Retrieval(Vec<QueryOutcome>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub task: Task,
    pub metric: MetricName,
    pub value: f64,
    pub outcomes: Outcomes,
}

impl Evaluated {
    pub fn len(&self) -> usize {
        match &self.outcomes {
            Outcomes::Classification { predictions, .. } => predictions.len(),
            Outcomes::Retrieval(q) => q.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The metric restricted to the samples at `indices` (repeats allowed).
    pub fn metric_on(&self, indices: &[usize]) -> Option<f64> {
        metric_on(self.metric, &self.outcomes, indices)
    }

    /// Bootstrap interval around `value`, widened if needed so that it
    /// contains the point estimate.
    pub fn report(
        &self,
        n_bootstrap: usize,
        seed: u64,
        alpha: f64,
        lambda: Option<f64>,
        vocabulary_id: Option<String>,
    ) -> Result<EvalReport, EvalError> {
        let (ci_low, ci_high) = if n_bootstrap == 0 {
            (self.value, self.value)
        } else {
            let indices: Vec<usize> = (0..self.len()).collect();
            let (lo, hi) = bootstrap::bootstrap_ci(
                &indices,
                |idx| self.metric_on(idx),
                n_bootstrap,
                seed,
                alpha,
            )?;
            (lo.min(self.value), hi.max(self.value))
        };
        Ok(EvalReport {
            task: self.task,
            metric_name: self.metric,
            value: self.value,
            ci_low,
            ci_high,
            n_bootstrap,
            lambda,
            vocabulary_id,
        })
    }
}

fn metric_on(metric: MetricName, outcomes: &Outcomes, idx: &[usize]) -> Option<f64> {
    match outcomes {
        Outcomes::Classification {
            predictions,
            gold,
            scores,
            n_labels,
        } => {
            let pred: Vec<usize> = idx.iter().map(|&i| predictions[i]).collect();
            // Single-label metrics use the first gold label (lowest index).
            let first: Vec<usize> = idx
                .iter()
                .map(|&i| gold[i].iter().copied().min().unwrap_or(usize::MAX))
                .collect();
            match metric {
                MetricName::Accuracy => {
                    let hits = idx
                        .iter()
                        .zip(&pred)
                        .filter(|(&i, p)| gold[i].contains(p))
                        .count();
                    (!idx.is_empty()).then(|| hits as f64 / idx.len() as f64)
                }
                MetricName::MacroF1 => metrics::macro_f1(&pred, &first, *n_labels).ok(),
                MetricName::MicroF1 => metrics::micro_f1(&pred, &first, *n_labels).ok(),
                MetricName::Map => {
                    let s: Vec<Vec<f64>> = idx.iter().map(|&i| scores[i].clone()).collect();
                    let g: Vec<HashSet<usize>> = idx.iter().map(|&i| gold[i].clone()).collect();
                    metrics::mean_average_precision(&s, &g).ok()
                }
                MetricName::RecallAt1 | MetricName::MapAt10 => None,
            }
        }
        Outcomes::Retrieval(queries) => {
            let picked = idx.iter().map(|&i| &queries[i]);
            let values: Vec<f64> = match metric {
                MetricName::RecallAt1 => picked.map(|q| f64::from(u8::from(q.hit_at_1))).collect(),
                MetricName::MapAt10 => picked.map(|q| q.ap_at_10).collect(),
                _ => return None,
            };
            bootstrap::mean(&values)
        }
    }
}

/// Something that scores a batch of representations, in a fixed sample order.
pub trait EvalTask: Sync {
    fn task(&self) -> Task;
    fn metric(&self) -> MetricName;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn evaluate(&self, representations: &[Vec<f64>]) -> Result<Evaluated, EvalError>;
}

/// Zero-shot classification against a prompt bank.
#[derive(Debug, Clone)]
pub struct ClassificationTask {
    prompts: PromptBank,
    gold: Vec<HashSet<usize>>,
    metric: MetricName,
}

impl ClassificationTask {
    /// `gold[i]` are the label strings of sample `i`.
    pub fn new(
        prompts: PromptBank,
        gold: &[Vec<String>],
        metric: MetricName,
    ) -> Result<Self, EvalError> {
        if !metric.applies_to(Task::Classification) {
            return Err(EvalError::MetricForTask {
                metric,
                task: Task::Classification,
            });
        }
        if gold.is_empty() {
            return Err(EvalError::Empty("samples"));
        }
        let gold = gold
            .iter()
            .map(|labels| {
                if labels.is_empty() {
                    return Err(EvalError::Empty("label set"));
                }
                labels
                    .iter()
                    .map(|l| {
                        prompts
                            .label_index(l)
                            .ok_or_else(|| EvalError::UnknownLabel(l.clone()))
                    })
                    .collect()
            })
            .collect::<Result<Vec<HashSet<usize>>, _>>()?;
        Ok(Self {
            prompts,
            gold,
            metric,
        })
    }

    pub fn prompts(&self) -> &PromptBank {
        &self.prompts
    }

    pub fn gold(&self) -> &[HashSet<usize>] {
        &self.gold
    }
}

impl EvalTask for ClassificationTask {
    fn task(&self) -> Task {
        Task::Classification
    }

    fn metric(&self) -> MetricName {
        self.metric
    }

    fn len(&self) -> usize {
        self.gold.len()
    }

    fn evaluate(&self, representations: &[Vec<f64>]) -> Result<Evaluated, EvalError> {
        if representations.len() != self.gold.len() {
            return Err(EvalError::LengthMismatch(
                representations.len(),
                self.gold.len(),
            ));
        }
        let preds = zeroshot::classify(representations, &self.prompts)?;
        let outcomes = Outcomes::Classification {
            predictions: preds.iter().map(|p| p.label_index).collect(),
            gold: self.gold.clone(),
            scores: preds.into_iter().map(|p| p.probabilities).collect(),
            n_labels: self.prompts.len(),
        };
        let all: Vec<usize> = (0..self.gold.len()).collect();
        let value = metric_on(self.metric, &outcomes, &all).ok_or(EvalError::NoPositives)?;
        Ok(Evaluated {
            task: Task::Classification,
            metric: self.metric,
            value,
            outcomes,
        })
    }
}

/// Retrieval between audio representations and caption text embeddings.
///
/// Audio-to-text: one query per audio item, every caption of that item is
/// relevant. Text-to-audio: one query per distinct caption, relevant to
/// every audio item carrying it.
#[derive(Debug, Clone)]
pub struct RetrievalTask {
    direction: Direction,
    metric: MetricName,
    audio_ids: Vec<String>,
    text_ids: Vec<String>,
    texts: Vec<Vec<f64>>,
    /// `audio_to_text[a]`: caption indices of audio item `a`.
    audio_to_text: Vec<HashSet<usize>>,
}

impl RetrievalTask {
    pub fn new(
        direction: Direction,
        metric: MetricName,
        audio_ids: Vec<String>,
        captions: &[Vec<String>],
        caption_store: &crate::store::EmbeddingSet,
    ) -> Result<Self, EvalError> {
        if !metric.applies_to(direction.task()) {
            return Err(EvalError::MetricForTask {
                metric,
                task: direction.task(),
            });
        }
        if audio_ids.len() != captions.len() {
            return Err(EvalError::LengthMismatch(audio_ids.len(), captions.len()));
        }
        if audio_ids.is_empty() {
            return Err(EvalError::Empty("samples"));
        }
        let index = caption_store.id_index();
        let mut text_ids: Vec<String> = Vec::new();
        let mut text_pos = std::collections::HashMap::new();
        let mut audio_to_text = Vec::with_capacity(captions.len());
        for caps in captions {
            if caps.is_empty() {
                return Err(EvalError::Empty("caption list"));
            }
            let mut rel = HashSet::new();
            for cap in caps {
                if !index.contains_key(cap.as_str()) {
                    return Err(EvalError::MissingEmbedding(cap.clone()));
                }
                let next = text_ids.len();
                let pos = *text_pos.entry(cap.clone()).or_insert_with(|| {
                    text_ids.push(cap.clone());
                    next
                });
                rel.insert(pos);
            }
            audio_to_text.push(rel);
        }
        let texts = text_ids
            .iter()
            .map(|t| crate::decompose::widen(caption_store.row(index[t.as_str()])))
            .collect();
        Ok(Self {
            direction,
            metric,
            audio_ids,
            text_ids,
            texts,
            audio_to_text,
        })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }
}

impl EvalTask for RetrievalTask {
    fn task(&self) -> Task {
        self.direction.task()
    }

    fn metric(&self) -> MetricName {
        self.metric
    }

    fn len(&self) -> usize {
        self.audio_ids.len()
    }

    fn evaluate(&self, representations: &[Vec<f64>]) -> Result<Evaluated, EvalError> {
        if representations.len() != self.audio_ids.len() {
            return Err(EvalError::LengthMismatch(
                representations.len(),
                self.audio_ids.len(),
            ));
        }
        let result = match self.direction {
            Direction::AudioText => zeroshot::retrieve(
                representations,
                &self.texts,
                &self.text_ids,
                &self.audio_to_text,
            )?,
            Direction::TextAudio => {
                let mut text_to_audio = vec![HashSet::new(); self.texts.len()];
                for (a, rel) in self.audio_to_text.iter().enumerate() {
                    for &t in rel {
                        text_to_audio[t].insert(a);
                    }
                }
                zeroshot::retrieve(
                    &self.texts,
                    representations,
                    &self.audio_ids,
                    &text_to_audio,
                )?
            }
        };
        let value = match self.metric {
            MetricName::RecallAt1 => result.recall_at_1,
            _ => result.map_at_10,
        };
        Ok(Evaluated {
            task: self.task(),
            metric: self.metric,
            value,
            outcomes: Outcomes::Retrieval(result.per_query),
        })
    }
}
