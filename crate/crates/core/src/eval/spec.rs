//! JSON task descriptions that bind a manifest and embedding stores into an
//! evaluation task.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::zeroshot::{PromptBank, DEFAULT_TEMPLATE};
use super::{ClassificationTask, Direction, EvalError, EvalTask, MetricName, RetrievalTask, Task};
use crate::store::{read_embedding_set, DatasetManifest, EmbeddingSet, ManifestEntry, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Retrieval,
}

fn default_template() -> String {
    DEFAULT_TEMPLATE.to_string()
}

/// Example:
///
/// ```json
/// {"task": "classification", "manifest": "manifest.jsonl",
///  "embeddings": "audio", "text_embeddings": "prompts",
///  "template": "This is a sound of [class label].", "metric": "accuracy",
///  "split": "eval"}
/// ```
///
/// Relative paths resolve against the directory holding the spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: TaskKind,
    pub manifest: PathBuf,
    /// Audio embedding store.
    pub embeddings: PathBuf,
    /// Prompt store (classification) or caption store (retrieval), keyed by text.
    pub text_embeddings: PathBuf,
    #[serde(default = "default_template")]
    pub template: String,
    #[serde(default)]
    pub metric: Option<MetricName>,
    #[serde(default)]
    pub direction: Option<Direction>,
    /// Restrict to one split; all entries when absent.
    #[serde(default)]
    pub split: Option<Split>,
    /// Class order for the prompt bank; manifest first-seen order when absent.
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

/// A task ready to score representations of `embeddings`, row for row.
pub struct PreparedTask {
    pub embeddings: EmbeddingSet,
    pub task: Box<dyn EvalTask>,
    pub entries: Vec<ManifestEntry>,
}

impl TaskSpec {
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path)
            .map_err(|e| EvalError::Spec(format!("{}: {e}", path.display())))?;
        let mut spec: TaskSpec = serde_json::from_str(&text)
            .map_err(|e| EvalError::Spec(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut spec.manifest,
            &mut spec.embeddings,
            &mut spec.text_embeddings,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(spec)
    }

    pub fn resolved_task(&self) -> Task {
        match self.task {
            TaskKind::Classification => Task::Classification,
            TaskKind::Retrieval => self.direction.unwrap_or(Direction::TextAudio).task(),
        }
    }

    pub fn resolved_metric(&self) -> MetricName {
        self.metric.unwrap_or(match self.task {
            TaskKind::Classification => MetricName::Accuracy,
            TaskKind::Retrieval => MetricName::RecallAt1,
        })
    }

    /// The classification prompt bank: `labels`, or the manifest's label set.
    pub fn prompt_bank(&self) -> Result<PromptBank, EvalError> {
        let labels = match &self.labels {
            Some(labels) => labels.clone(),
            None => DatasetManifest::read(&self.manifest)?.label_set(),
        };
        PromptBank::from_store(
            &self.template,
            labels,
            &read_embedding_set(&self.text_embeddings)?,
        )
    }

    pub fn prepare(&self) -> Result<PreparedTask, EvalError> {
        let manifest = DatasetManifest::read(&self.manifest)?;
        let entries: Vec<ManifestEntry> = manifest
            .entries()
            .iter()
            .filter(|e| self.split.is_none_or(|s| e.split == s))
            .cloned()
            .collect();
        if entries.is_empty() {
            return Err(EvalError::Spec(
                "no manifest entries in the selected split".into(),
            ));
        }
        let audio = read_embedding_set(&self.embeddings)?;
        let index = audio.id_index();
        let rows = entries
            .iter()
            .map(|e| {
                index
                    .get(e.id.as_str())
                    .copied()
                    .ok_or_else(|| EvalError::MissingEmbedding(e.id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut embeddings = audio.select(&rows)?;
        if !embeddings.is_normalized() {
            embeddings = embeddings.l2_normalize()?;
        }
        let texts = read_embedding_set(&self.text_embeddings)?;
        let metric = self.resolved_metric();
        let task: Box<dyn EvalTask> = match self.task {
            TaskKind::Classification => {
                let labels = self.labels.clone().unwrap_or_else(|| manifest.label_set());
                let prompts = PromptBank::from_store(&self.template, labels, &texts)?;
                let gold: Vec<Vec<String>> = entries.iter().map(|e| e.labels.clone()).collect();
                Box::new(ClassificationTask::new(prompts, &gold, metric)?)
            }
            TaskKind::Retrieval => {
                let captions: Vec<Vec<String>> = entries
                    .iter()
                    .map(|e| e.captions.clone().unwrap_or_default())
                    .collect();
                Box::new(RetrievalTask::new(
                    self.direction.unwrap_or(Direction::TextAudio),
                    metric,
                    entries.iter().map(|e| e.id.clone()).collect(),
                    &captions,
                    &texts,
                )?)
            }
        };
        Ok(PreparedTask {
            embeddings,
            task,
            entries,
        })
    }
}
