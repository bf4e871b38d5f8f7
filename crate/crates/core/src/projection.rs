//! A learned square linear map `H` that pulls audio embeddings toward the
//! prompt embedding of their class before decomposition.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{unit_vector, widen, DecomposeError, Decomposer};
use crate::eval::zeroshot::PromptBank;
use crate::solver::SolverConfig;
use crate::store::{
    io_err, read_f32_blob, read_json, write_f32_blob, write_json, EmbeddingSet, ManifestEntry,
    SparseCodeRecord, StoreError, DATA_FILE, FORMAT_VERSION, META_FILE,
};

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("projection is {expected}-dimensional, input has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("projection weights must be finite")]
    NonFinite,
    #[error("H·z is the zero vector for {0:?}")]
    ZeroProjection(String),
    #[error("every sample projects to the zero vector")]
    AllSkipped,
    #[error("non-finite loss at epoch {epoch} (learning rate {learning_rate})")]
    Diverged { epoch: usize, learning_rate: f64 },
    #[error("{0} samples but {1} targets")]
    LengthMismatch(usize, usize),
    #[error("no training samples")]
    Empty,
    #[error("sample {id:?}: label {label:?} has no prompt")]
    MissingTarget { id: String, label: String },
    #[error("store holds a {0:?}, not a projection")]
    WrongKind(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
}

pub const PROJECTION_KIND: &str = "projection";

/// Row-major `dim × dim` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    dim: usize,
    weights: Vec<f64>,
    pub trained_on: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProjectionMeta {
    format: String,
    kind: String,
    dim: usize,
    seed: u64,
    trained_on: String,
}

impl ProjectionMatrix {
    pub fn new(
        dim: usize,
        weights: Vec<f64>,
        trained_on: impl Into<String>,
        seed: u64,
    ) -> Result<Self, ProjectionError> {
        if weights.len() != dim * dim || dim == 0 {
            return Err(ProjectionError::DimensionMismatch {
                expected: dim * dim,
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(ProjectionError::NonFinite);
        }
        Ok(Self {
            dim,
            weights,
            trained_on: trained_on.into(),
            seed,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        Self {
            dim,
            weights,
            trained_on: String::new(),
            seed: 0,
        }
    }

    /// Entries i.i.d. uniform in `[-init_scale, init_scale]`.
    pub fn init(dim: usize, cfg: &TrainConfig) -> Result<Self, ProjectionError> {
        if dim == 0 {
            return Err(ProjectionError::Config("dim must be at least 1".into()));
        }
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let s = cfg.init_scale;
        let weights = (0..dim * dim)
            .map(|_| if s == 0.0 { 0.0 } else { rng.gen_range(-s..=s) })
            .collect();
        Ok(Self {
            dim,
            weights,
            trained_on: String::new(),
            seed: cfg.seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>, ProjectionError> {
        if z.len() != self.dim {
            return Err(ProjectionError::DimensionMismatch {
                expected: self.dim,
                actual: z.len(),
            });
        }
        Ok(self
            .weights
            .chunks_exact(self.dim)
            .map(|row| {
                let mut acc = 0.0;
                for (h, v) in row.iter().zip(z) {
                    acc += h * v;
                }
                acc
            })
            .collect())
    }

    /// Weights are stored as `f32`, so a round trip rounds them.
    pub fn write(&self, dir: &Path) -> Result<(), ProjectionError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_json(
            &dir.join(META_FILE),
            &ProjectionMeta {
                format: FORMAT_VERSION.to_string(),
                kind: PROJECTION_KIND.to_string(),
                dim: self.dim,
                seed: self.seed,
                trained_on: self.trained_on.clone(),
            },
        )?;
        let data: Vec<f32> = self.weights.iter().map(|&w| w as f32).collect();
        write_f32_blob(&dir.join(DATA_FILE), &data)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, ProjectionError> {
        let meta: ProjectionMeta = read_json(&dir.join(META_FILE))?;
        if meta.format != FORMAT_VERSION {
            return Err(StoreError::Format(meta.format).into());
        }
        if meta.kind != PROJECTION_KIND {
            return Err(ProjectionError::WrongKind(meta.kind));
        }
        let data = read_f32_blob(&dir.join(DATA_FILE), meta.dim * meta.dim)?;
        Self::new(
            meta.dim,
            data.into_iter().map(f64::from).collect(),
            meta.trained_on,
            meta.seed,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without improvement before stopping; 0 never stops early.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            max_epochs: 200,
            batch_size: 32,
            early_stop_patience: 10,
            seed: 0,
            init_scale: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ProjectionError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ProjectionError::Config(format!(
                "learning_rate {} must be a non-negative number",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(ProjectionError::Config(
                "max_epochs must be at least 1".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(ProjectionError::Config(
                "batch_size must be at least 1".into(),
            ));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(ProjectionError::Config(format!(
                "init_scale {} must be a non-negative number",
                self.init_scale
            )));
        }
        Ok(())
    }
}

/// Mean cosine loss over the samples whose projection is non-zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub skipped: usize,
}

fn check_batch(
    h: &ProjectionMatrix,
    z: &[Vec<f64>],
    t: &[Vec<f64>],
) -> Result<(), ProjectionError> {
    if z.len() != t.len() {
        return Err(ProjectionError::LengthMismatch(z.len(), t.len()));
    }
    if z.is_empty() {
        return Err(ProjectionError::Empty);
    }
    for v in z.iter().chain(t) {
        if v.len() != h.dim {
            return Err(ProjectionError::DimensionMismatch {
                expected: h.dim,
                actual: v.len(),
            });
        }
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `mean(1 - cos(H z_i, t_i))`; samples with `H z_i = 0` are skipped and counted.
pub fn loss(
    h: &ProjectionMatrix,
    z: &[Vec<f64>],
    t: &[Vec<f64>],
) -> Result<LossValue, ProjectionError> {
    check_batch(h, z, t)?;
    let terms: Vec<Option<f64>> = z
        .par_iter()
        .zip(t)
        .map(|(zi, ti)| {
            let u = h.apply(zi).expect("dimension checked");
            let nu = norm(&u);
            let nt = norm(ti);
            (nu > 0.0 && nt > 0.0).then(|| 1.0 - dot(&u, ti) / (nu * nt))
        })
        .collect();
    mean_terms(&terms)
}

fn mean_terms(terms: &[Option<f64>]) -> Result<LossValue, ProjectionError> {
    let kept: Vec<f64> = terms.iter().flatten().copied().collect();
    if kept.is_empty() {
        return Err(ProjectionError::AllSkipped);
    }
    Ok(LossValue {
        loss: kept.iter().sum::<f64>() / kept.len() as f64,
        skipped: terms.len() - kept.len(),
    })
}

/// Loss and its gradient with respect to the row-major entries of `H`.
///
/// For `u = H z` the per-sample gradient is `g zᵀ` with
/// `g = -(t̂ / |u| - (u·t̂) u / |u|³)`.
pub fn loss_and_gradient(
    h: &ProjectionMatrix,
    z: &[Vec<f64>],
    t: &[Vec<f64>],
) -> Result<(LossValue, Vec<f64>), ProjectionError> {
    check_batch(h, z, t)?;
    let d = h.dim;
    let per_sample: Vec<Option<(f64, Vec<f64>)>> = z
        .par_iter()
        .zip(t)
        .map(|(zi, ti)| {
            let u = h.apply(zi).expect("dimension checked");
            let nu = norm(&u);
            let nt = norm(ti);
            if nu == 0.0 || nt == 0.0 {
                return None;
            }
            let that: Vec<f64> = ti.iter().map(|v| v / nt).collect();
            let ut = dot(&u, &that);
            let g = (0..d)
                .map(|k| -(that[k] / nu - ut * u[k] / (nu * nu * nu)))
                .collect();
            Some((1.0 - ut / nu, g))
        })
        .collect();
    let terms: Vec<Option<f64>> = per_sample.iter().map(|s| s.as_ref().map(|p| p.0)).collect();
    let value = mean_terms(&terms)?;
    let kept = (per_sample.len() - value.skipped) as f64;
    // Row i of the gradient only touches g[i], so rows reduce independently
    // and always in sample order.
    let mut grad = vec![0.0; d * d];
    grad.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
        for (s, zi) in per_sample.iter().zip(z) {
            if let Some((_, g)) = s {
                let gi = g[i] / kept;
                for (r, v) in row.iter_mut().zip(zi) {
                    *r += gi * v;
                }
            }
        }
    });
    Ok((value, grad))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The lowest-loss iterate seen, including the starting matrix.
    pub matrix: ProjectionMatrix,
    /// Full-set loss before training and after every epoch.
    pub loss_history: Vec<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub skipped: usize,
}

/// Trains from a fresh [`ProjectionMatrix::init`].
pub fn train(
    z: &[Vec<f64>],
    t: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ProjectionError> {
    let dim = z.first().ok_or(ProjectionError::Empty)?.len();
    train_from(ProjectionMatrix::init(dim, cfg)?, z, t, cfg)
}

/// Mini-batch gradient descent on [`loss`] from `initial`.
pub fn train_from(
    initial: ProjectionMatrix,
    z: &[Vec<f64>],
    t: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ProjectionError> {
    cfg.validate()?;
    check_batch(&initial, z, t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut h = initial;
    h.seed = cfg.seed;
    let start = loss(&h, z, t)?;
    let mut best = (start.loss, h.clone(), 0);
    let mut history = vec![start.loss];
    let mut skipped = start.skipped;
    let mut order: Vec<usize> = (0..z.len()).collect();
    let mut since_best = 0;
    let mut epochs_run = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let bz: Vec<Vec<f64>> = batch.iter().map(|&i| z[i].clone()).collect();
            let bt: Vec<Vec<f64>> = batch.iter().map(|&i| t[i].clone()).collect();
            let (_, grad) = match loss_and_gradient(&h, &bz, &bt) {
                Ok(v) => v,
                Err(ProjectionError::AllSkipped) => continue,
                Err(e) => return Err(e),
            };
            for (w, g) in h.weights.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
        }
        epochs_run = epoch;
        let current = match loss(&h, z, t) {
            Ok(v) if v.loss.is_finite() && h.weights.iter().all(|w| w.is_finite()) => v,
            Ok(_) | Err(ProjectionError::AllSkipped) => {
                return Err(ProjectionError::Diverged {
                    epoch,
                    learning_rate: cfg.learning_rate,
                })
            }
            Err(e) => return Err(e),
        };
        history.push(current.loss);
        skipped = current.skipped;
        if current.loss < best.0 {
            best = (current.loss, h.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        matrix: best.1,
        loss_history: history,
        best_epoch: best.2,
        epochs_run,
        skipped,
    })
}

/// Inputs and their targets, row-aligned.
pub type TrainingPairs = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Training pairs from manifest entries: each embedding row is matched with
/// the prompt embedding of its first label. Entries and rows align by index.
pub fn training_pairs(
    embeddings: &EmbeddingSet,
    entries: &[ManifestEntry],
    prompts: &PromptBank,
) -> Result<TrainingPairs, ProjectionError> {
    if entries.len() != embeddings.len() {
        return Err(ProjectionError::LengthMismatch(
            embeddings.len(),
            entries.len(),
        ));
    }
    let prompt_rows: Vec<Vec<f64>> = prompts.embeddings().rows().map(widen).collect();
    let mut z = Vec::with_capacity(entries.len());
    let mut t = Vec::with_capacity(entries.len());
    for (entry, row) in entries.iter().zip(embeddings.rows()) {
        let label = entry.labels.first().cloned().unwrap_or_default();
        let idx = prompts
            .label_index(&label)
            .ok_or_else(|| ProjectionError::MissingTarget {
                id: entry.id.clone(),
                label,
            })?;
        z.push(widen(row));
        t.push(prompt_rows[idx].clone());
    }
    Ok((z, t))
}

/// Normalizes `H z` and decomposes it.
pub fn project_then_decompose(
    h: &ProjectionMatrix,
    id: &str,
    z: &[f64],
    decomposer: &Decomposer<'_>,
    cfg: &SolverConfig,
) -> Result<SparseCodeRecord, ProjectionError> {
    let u = h.apply(z)?;
    if unit_vector(&u).is_none() {
        return Err(ProjectionError::ZeroProjection(id.to_string()));
    }
    Ok(decomposer.decompose_vector(id, &u, cfg)?)
}

/// `H z` for every row of `set`, in order.
pub fn project_all(
    h: &ProjectionMatrix,
    set: &EmbeddingSet,
) -> Result<Vec<Vec<f64>>, ProjectionError> {
    set.rows().map(|r| h.apply(&widen(r))).collect()
}
