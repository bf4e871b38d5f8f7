//! Penalty / vocabulary sweeps: decompose, evaluate, tabulate.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalError, EvalTask, Evaluated};
use crate::decompose::{cosine, widen, Decomposer};
use crate::solver::SolverConfig;
use crate::store::{EmbeddingSet, SparseCodeRecord};
use crate::vocab::ConceptVocabulary;

pub const DEFAULT_LAMBDA_GRID: [f64; 8] = [0.01, 0.03, 0.05, 0.10, 0.15, 0.25, 0.35, 0.50];

/// One sweep cell. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub vocabulary_id: String,
    pub vocab_size: usize,
    pub mean_l0: f64,
    pub metric: f64,
    pub mean_reconstruction_cosine: f64,
}

/// Codes, reconstructions and task score for one (vocabulary, lambda) cell.
#[derive(Debug, Clone)]
pub struct ConceptEvaluation {
    pub codes: Vec<SparseCodeRecord>,
    pub reconstructions: Vec<Vec<f64>>,
    pub evaluated: Evaluated,
    pub mean_l0: f64,
    pub mean_reconstruction_cosine: f64,
    pub empty_codes: usize,
}

/// Decomposes every embedding and evaluates `task` on the reconstructions.
pub fn evaluate_concepts(
    decomposer: &Decomposer<'_>,
    embeddings: &EmbeddingSet,
    cfg: &SolverConfig,
    task: &dyn EvalTask,
) -> Result<ConceptEvaluation, EvalError> {
    let codes = decomposer.decompose_all(embeddings, cfg)?;
    let reconstructions = codes
        .par_iter()
        .map(|c| decomposer.reconstruct(c))
        .collect::<Result<Vec<_>, _>>()?;
    let n = codes.len() as f64;
    let mean_l0 = codes.iter().map(|c| c.l0() as f64).sum::<f64>() / n;
    let mean_reconstruction_cosine = reconstructions
        .iter()
        .zip(embeddings.rows())
        .map(|(r, z)| cosine(r, &widen(z)))
        .sum::<f64>()
        / n;
    let empty_codes = codes.iter().filter(|c| c.is_empty()).count();
    let evaluated = task.evaluate(&reconstructions)?;
    Ok(ConceptEvaluation {
        codes,
        reconstructions,
        evaluated,
        mean_l0,
        mean_reconstruction_cosine,
        empty_codes,
    })
}

/// Evaluates the dense embeddings themselves (the no-decomposition baseline).
pub fn evaluate_dense(
    embeddings: &EmbeddingSet,
    task: &dyn EvalTask,
) -> Result<Evaluated, EvalError> {
    let reps: Vec<Vec<f64>> = embeddings.rows().map(widen).collect();
    task.evaluate(&reps)
}

pub fn validate_grid(grid: &[f64]) -> Result<(), EvalError> {
    if grid.is_empty() {
        return Err(EvalError::Grid("empty".into()));
    }
    if let Some(bad) = grid.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(EvalError::Grid(format!(
            "{bad} is not a non-negative number"
        )));
    }
    Ok(())
}

/// One row per (vocabulary, lambda), ordered by vocabulary id then lambda.
pub fn sweep(
    embeddings: &EmbeddingSet,
    vocabs: &[ConceptVocabulary],
    grid: &[f64],
    base: &SolverConfig,
    task: &dyn EvalTask,
) -> Result<Vec<SweepRow>, EvalError> {
    validate_grid(grid)?;
    if vocabs.is_empty() {
        return Err(EvalError::Empty("vocabulary list"));
    }
    let decomposers = vocabs
        .iter()
        .map(Decomposer::new)
        .collect::<Result<Vec<_>, _>>()?;
    // Build every Gram matrix once before the cells share them.
    decomposers.par_iter().for_each(|d| {
        d.dictionary().gram();
    });
    let cells: Vec<(usize, f64)> = (0..vocabs.len())
        .flat_map(|v| grid.iter().map(move |&l| (v, l)))
        .collect();
    let mut rows = cells
        .par_iter()
        .map(|&(v, lambda)| {
            let cfg = SolverConfig { lambda, ..*base };
            let eval = evaluate_concepts(&decomposers[v], embeddings, &cfg, task)?;
            Ok(SweepRow {
                lambda,
                vocabulary_id: vocabs[v].id().to_string(),
                vocab_size: vocabs[v].len(),
                mean_l0: eval.mean_l0,
                metric: eval.evaluated.value,
                mean_reconstruction_cosine: eval.mean_reconstruction_cosine,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    rows.sort_by(|a, b| {
        a.vocabulary_id
            .cmp(&b.vocabulary_id)
            .then(a.lambda.total_cmp(&b.lambda))
    });
    Ok(rows)
}

pub fn write_csv(path: &Path, rows: &[SweepRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| EvalError::Csv(e.to_string()))?;
    for row in rows {
        w.serialize(row)
            .map_err(|e| EvalError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| EvalError::Csv(e.to_string()))
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRow>, EvalError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| EvalError::Csv(e.to_string()))?;
    let expected = [
        "lambda",
        "vocabulary_id",
        "vocab_size",
        "mean_l0",
        "metric",
        "mean_reconstruction_cosine",
    ];
    let headers = r.headers().map_err(|e| EvalError::Csv(e.to_string()))?;
    if headers.iter().ne(expected) {
        return Err(EvalError::Csv(format!("unexpected header {headers:?}")));
    }
    let rows = r
        .deserialize()
        .collect::<Result<Vec<SweepRow>, _>>()
        .map_err(|e| EvalError::Csv(e.to_string()))?;
    if rows.is_empty() {
        return Err(EvalError::Csv("no rows".into()));
    }
    Ok(rows)
}
