//! Zero-shot classification against class prompts, and cross-modal retrieval.

use std::cmp::Ordering;
use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::average_precision_at;
use super::EvalError;
use crate::decompose::{cosine, widen};
use crate::store::EmbeddingSet;

pub const LABEL_PLACEHOLDER: &str = "[class label]";
pub const DEFAULT_TEMPLATE: &str = "This is a sound of [class label].";

/// Class labels with one prompt embedding per label, in label order.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBank {
    template: String,
    class_labels: Vec<String>,
    prompt_embeddings: EmbeddingSet,
}

impl PromptBank {
    pub fn new(
        template: impl Into<String>,
        class_labels: Vec<String>,
        prompt_embeddings: EmbeddingSet,
    ) -> Result<Self, EvalError> {
        let template = template.into();
        check_template(&template)?;
        if class_labels.is_empty() {
            return Err(EvalError::Empty("prompt bank"));
        }
        if class_labels.len() != prompt_embeddings.len() {
            return Err(EvalError::LengthMismatch(
                class_labels.len(),
                prompt_embeddings.len(),
            ));
        }
        let prompt_embeddings = if prompt_embeddings.is_normalized() {
            prompt_embeddings
        } else {
            prompt_embeddings.l2_normalize()?
        };
        Ok(Self {
            template,
            class_labels,
            prompt_embeddings,
        })
    }

    /// Fills the template for one label.
    pub fn prompt_for(template: &str, label: &str) -> String {
        template.replacen(LABEL_PLACEHOLDER, label, 1)
    }

    /// Builds the bank from a text-embedding store keyed by the expanded
    /// prompt strings (falling back to the bare label as key).
    pub fn from_store(
        template: &str,
        class_labels: Vec<String>,
        store: &EmbeddingSet,
    ) -> Result<Self, EvalError> {
        check_template(template)?;
        let index = store.id_index();
        let rows = class_labels
            .iter()
            .map(|label| {
                let prompt = Self::prompt_for(template, label);
                index
                    .get(prompt.as_str())
                    .or_else(|| index.get(label.as_str()))
                    .copied()
                    .ok_or(EvalError::MissingPrompt(prompt))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(template, class_labels, store.select(&rows)?)
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn embeddings(&self) -> &EmbeddingSet {
        &self.prompt_embeddings
    }

    pub fn len(&self) -> usize {
        self.class_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_labels.is_empty()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.class_labels.iter().position(|l| l == label)
    }
}

fn check_template(template: &str) -> Result<(), EvalError> {
    if template.matches(LABEL_PLACEHOLDER).count() != 1 {
        return Err(EvalError::Template(template.to_string()));
    }
    Ok(())
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label_index: usize,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// Scores each representation (a dense embedding or a reconstruction `Cw`)
/// by cosine against every prompt; softmax gives probabilities.
pub fn classify(
    representations: &[Vec<f64>],
    prompts: &PromptBank,
) -> Result<Vec<Prediction>, EvalError> {
    if prompts.is_empty() {
        return Err(EvalError::Empty("prompt bank"));
    }
    let prompt_rows: Vec<Vec<f64>> = prompts.embeddings().rows().map(widen).collect();
    let dim = prompts.embeddings().dim();
    if let Some(bad) = representations.iter().find(|r| r.len() != dim) {
        return Err(EvalError::LengthMismatch(bad.len(), dim));
    }
    Ok(representations
        .par_iter()
        .map(|rep| {
            let logits: Vec<f64> = prompt_rows.iter().map(|p| cosine(rep, p)).collect();
            let probabilities = softmax(&logits);
            Prediction {
                label_index: argmax(&logits),
                logits,
                probabilities,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub hit_at_1: bool,
    pub ap_at_10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub recall_at_1: f64,
    pub map_at_10: f64,
    pub per_query: Vec<QueryOutcome>,
}

pub const RETRIEVAL_CUTOFF: usize = 10;

/// Gallery indices ranked by cosine to `query`, ties by gallery id.
pub fn rank_gallery(query: &[f64], gallery: &[Vec<f64>], gallery_ids: &[String]) -> Vec<usize> {
    let scores: Vec<f64> = gallery.iter().map(|g| cosine(query, g)).collect();
    let mut order: Vec<usize> = (0..gallery.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| gallery_ids[a].cmp(&gallery_ids[b]))
    });
    order
}

/// Ranks the gallery for every query and scores R@1 and mAP@10, where
/// `relevance[q]` holds the gallery indices relevant to query `q`.
pub fn retrieve(
    queries: &[Vec<f64>],
    gallery: &[Vec<f64>],
    gallery_ids: &[String],
    relevance: &[HashSet<usize>],
) -> Result<RetrievalResult, EvalError> {
    if gallery.is_empty() {
        return Err(EvalError::Empty("gallery"));
    }
    if queries.is_empty() {
        return Err(EvalError::Empty("queries"));
    }
    if gallery.len() != gallery_ids.len() {
        return Err(EvalError::LengthMismatch(gallery.len(), gallery_ids.len()));
    }
    if queries.len() != relevance.len() {
        return Err(EvalError::LengthMismatch(queries.len(), relevance.len()));
    }
    if relevance.iter().any(HashSet::is_empty) {
        return Err(EvalError::Empty("relevance set"));
    }
    let per_query: Vec<QueryOutcome> = queries
        .par_iter()
        .zip(relevance)
        .map(|(q, rel)| {
            let ranking = rank_gallery(q, gallery, gallery_ids);
            QueryOutcome {
                hit_at_1: rel.contains(&ranking[0]),
                ap_at_10: average_precision_at(&ranking, rel, RETRIEVAL_CUTOFF).unwrap_or(0.0),
            }
        })
        .collect();
    Ok(summarize_queries(per_query))
}

pub fn summarize_queries(per_query: Vec<QueryOutcome>) -> RetrievalResult {
    let n = per_query.len() as f64;
    RetrievalResult {
        recall_at_1: per_query.iter().filter(|q| q.hit_at_1).count() as f64 / n,
        map_at_10: per_query.iter().map(|q| q.ap_at_10).sum::<f64>() / n,
        per_query,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank(rows: &[Vec<f32>]) -> PromptBank {
        let labels: Vec<String> = (0..rows.len()).map(|i| format!("class{i}")).collect();
        let ids = labels
            .iter()
            .map(|l| PromptBank::prompt_for(DEFAULT_TEMPLATE, l))
            .collect();
        let set = EmbeddingSet::from_rows(ids, rows, false).unwrap();
        PromptBank::from_store(DEFAULT_TEMPLATE, labels, &set).unwrap()
    }

    #[test]
    fn orthonormal_bank_picks_matching_prompt() {
        let b = bank(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let p = classify(&[vec![0.0, 0.0, 1.0]], &b).unwrap();
        assert_eq!(p[0].label_index, 2);
        assert_eq!(p[0].logits, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn equal_logits_tie_to_first() {
        let b = bank(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let p = classify(&[vec![0.0, 0.0, 1.0]], &b).unwrap();
        assert_eq!(p[0].probabilities, vec![0.5, 0.5]);
        assert_eq!(p[0].label_index, 0);
    }

    #[test]
    fn softmax_arithmetic() {
        let s = softmax(&[0.9, 0.1]);
        assert!((s[0] - 0.6900).abs() < 1e-4 && (s[1] - 0.3100).abs() < 1e-4);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn template_rules() {
        assert!(check_template("no placeholder").is_err());
        assert!(check_template("[class label] and [class label]").is_err());
        assert_eq!(
            PromptBank::prompt_for(DEFAULT_TEMPLATE, "dog"),
            "This is a sound of dog."
        );
        let set = EmbeddingSet::from_rows(vec!["other".into()], &[vec![1.0]], false).unwrap();
        assert!(matches!(
            PromptBank::from_store(DEFAULT_TEMPLATE, vec!["dog".into()], &set),
            Err(EvalError::MissingPrompt(_))
        ));
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("g{i:02}")).collect()
    }

    fn one_hot(i: usize, n: usize) -> Vec<f64> {
        (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn retrieval_perfect() {
        let gallery: Vec<Vec<f64>> = (0..3).map(|i| one_hot(i, 3)).collect();
        let rel: Vec<HashSet<usize>> = (0..3).map(|i| HashSet::from([i])).collect();
        let r = retrieve(&gallery, &gallery, &ids(3), &rel).unwrap();
        assert_eq!((r.recall_at_1, r.map_at_10), (1.0, 1.0));
    }

    #[test]
    fn retrieval_rank_three_and_two_relevant() {
        // Scores fall with index, so gallery item i sits at rank i + 1.
        let gallery: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let a = 0.05 * i as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
        let q = vec![vec![1.0, 0.0]];
        let r = retrieve(&q, &gallery, &ids(12), &[HashSet::from([2])]).unwrap();
        assert_eq!(r.recall_at_1, 0.0);
        assert!((r.map_at_10 - 1.0 / 3.0).abs() < 1e-12);
        let r = retrieve(&q, &gallery, &ids(12), &[HashSet::from([1, 4])]).unwrap();
        assert!((r.map_at_10 - 0.45).abs() < 1e-12);
    }

    #[test]
    fn retrieval_ties_break_by_id() {
        let gallery = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let names = vec!["b".to_string(), "a".to_string()];
        assert_eq!(rank_gallery(&[1.0, 0.0], &gallery, &names), vec![1, 0]);
        assert!(retrieve(&[vec![1.0, 0.0]], &[], &[], &[HashSet::from([0])]).is_err());
    }
}
