//! Concept-based representations of embedding sets: sparse codes,
//! reconstructions, top-k concept reports and per-class prominence profiles.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::{self, Dictionary, SolverConfig, SolverError, SparseSolution};
use crate::store::{EmbeddingSet, SparseCodeRecord, StoreError};
use crate::vocab::ConceptVocabulary;

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("unknown embedding id {0:?}")]
    UnknownId(String),
    #[error("vocabulary mismatch: code uses {code:?}, vocabulary is {vocab:?}")]
    VocabularyMismatch { code: String, vocab: String },
    #[error("embedding {0:?} has zero norm")]
    ZeroVector(String),
    #[error("no codes to aggregate")]
    NoCodes,
}

/// A vocabulary paired with its solver-ready dictionary.
#[derive(Debug, Clone)]
pub struct Decomposer<'v> {
    vocab: &'v ConceptVocabulary,
    dict: Dictionary,
}

impl<'v> Decomposer<'v> {
    pub fn new(vocab: &'v ConceptVocabulary) -> Result<Self, DecomposeError> {
        Ok(Self {
            vocab,
            dict: Dictionary::from_embedding_set(vocab.embeddings())?,
        })
    }

    pub fn vocab(&self) -> &ConceptVocabulary {
        self.vocab
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    /// Solves for one vector after rescaling it to unit norm.
    pub fn solve_vector(
        &self,
        id: &str,
        z: &[f64],
        cfg: &SolverConfig,
    ) -> Result<SparseSolution, DecomposeError> {
        let unit = unit_vector(z).ok_or_else(|| DecomposeError::ZeroVector(id.to_string()))?;
        Ok(solver::solve(&self.dict, &unit, cfg)?)
    }

    pub fn decompose_vector(
        &self,
        id: &str,
        z: &[f64],
        cfg: &SolverConfig,
    ) -> Result<SparseCodeRecord, DecomposeError> {
        let sol = self.solve_vector(id, z, cfg)?;
        Ok(SparseCodeRecord::from_dense(
            id,
            self.vocab.id(),
            cfg.lambda,
            &sol.weights,
        ))
    }

    /// Decomposes the row of `set` named `id`.
    pub fn decompose(
        &self,
        set: &EmbeddingSet,
        id: &str,
        cfg: &SolverConfig,
    ) -> Result<SparseCodeRecord, DecomposeError> {
        let row = set
            .index_of(id)
            .ok_or_else(|| DecomposeError::UnknownId(id.to_string()))?;
        self.decompose_vector(id, &widen(set.row(row)), cfg)
    }

    /// Decomposes every row; output order follows `set`.
    pub fn decompose_all(
        &self,
        set: &EmbeddingSet,
        cfg: &SolverConfig,
    ) -> Result<Vec<SparseCodeRecord>, DecomposeError> {
        (0..set.len())
            .into_par_iter()
            .map(|i| self.decompose_vector(&set.ids()[i], &widen(set.row(i)), cfg))
            .collect()
    }

    pub fn reconstruct(&self, code: &SparseCodeRecord) -> Result<Vec<f64>, DecomposeError> {
        self.check(code)?;
        code.validate(self.dict.len())?;
        Ok(self.dict.combine_sparse(&code.indices, &code.weights))
    }

    pub fn report(
        &self,
        code: &SparseCodeRecord,
        original: &[f64],
        k: usize,
    ) -> Result<ConceptReport, DecomposeError> {
        let recon = self.reconstruct(code)?;
        let mut all: Vec<ConceptWeight> = code
            .indices
            .iter()
            .zip(&code.weights)
            .map(|(&i, &w)| ConceptWeight {
                concept: self.vocab.concepts()[i].clone(),
                prominence: w,
            })
            .collect();
        all.sort_by(|a, b| {
            b.prominence
                .partial_cmp(&a.prominence)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.concept.cmp(&b.concept))
        });
        all.truncate(k.max(1));
        Ok(ConceptReport {
            embedding_id: code.embedding_id.clone(),
            top: all,
            l0: code.l0(),
            reconstruction_cosine: cosine(&recon, original),
            empty: code.is_empty(),
        })
    }

    fn check(&self, code: &SparseCodeRecord) -> Result<(), DecomposeError> {
        if code.vocabulary_id != self.vocab.id() {
            return Err(DecomposeError::VocabularyMismatch {
                code: code.vocabulary_id.clone(),
                vocab: self.vocab.id().to_string(),
            });
        }
        Ok(())
    }
}

/// `Cw` for a stored code.
pub fn reconstruct(
    code: &SparseCodeRecord,
    vocab: &ConceptVocabulary,
) -> Result<Vec<f64>, DecomposeError> {
    Decomposer::new(vocab)?.reconstruct(code)
}

pub fn widen(row: &[f32]) -> Vec<f64> {
    row.iter().map(|&v| f64::from(v)).collect()
}

pub(crate) fn unit_vector(z: &[f64]) -> Option<Vec<f64>> {
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| z.iter().map(|v| v / norm).collect())
}

/// Cosine similarity; zero when either side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptWeight {
    pub concept: String,
    pub prominence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptReport {
    pub embedding_id: String,
    pub top: Vec<ConceptWeight>,
    pub l0: usize,
    pub reconstruction_cosine: f64,
    /// Set when the penalty zeroed out every concept.
    pub empty: bool,
}

/// Mean prominence of every concept over the samples of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfile {
    pub class_label: String,
    pub sample_count: usize,
    pub mean_prominence: Vec<f64>,
}

/// Averages the densified codes. Each concept's values are summed in sorted
/// order so the result does not depend on the order of `codes`.
pub fn class_profile(
    codes: &[&SparseCodeRecord],
    label: &str,
    vocab_size: usize,
) -> Result<ClassProfile, DecomposeError> {
    let first = codes.first().ok_or(DecomposeError::NoCodes)?;
    let mut per_concept: Vec<Vec<f64>> = vec![Vec::new(); vocab_size];
    for code in codes {
        if code.vocabulary_id != first.vocabulary_id {
            return Err(DecomposeError::VocabularyMismatch {
                code: code.vocabulary_id.clone(),
                vocab: first.vocabulary_id.clone(),
            });
        }
        code.validate(vocab_size)?;
        for (&i, &w) in code.indices.iter().zip(&code.weights) {
            per_concept[i].push(w);
        }
    }
    let n = codes.len() as f64;
    let mean_prominence = per_concept
        .into_iter()
        .map(|mut values| {
            values.sort_by(f64::total_cmp);
            values.iter().sum::<f64>() / n
        })
        .collect();
    Ok(ClassProfile {
        class_label: label.to_string(),
        sample_count: codes.len(),
        mean_prominence,
    })
}

impl ClassProfile {
    /// `concept,mean_prominence` rows for non-zero concepts, most prominent first.
    pub fn to_csv(&self, concepts: &[String]) -> String {
        let mut rows: Vec<(&str, f64)> = self
            .mean_prominence
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(i, &m)| (concepts[i].as_str(), m))
            .collect();
        rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut out = String::from("concept,mean_prominence\n");
        for (concept, mean) in rows {
            let _ = writeln!(out, "{},{mean}", csv_field(concept));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
