//! Non-negative L1-regularized least squares by cyclic coordinate descent.
//!
//! Solves
//!
//! ```text
//! minimize  (1 / 2s) * ||C w - z||^2 + lambda * sum(w)   subject to  w >= 0
//! ```
//!
//! where the columns of `C` are unit-norm concept embeddings and `s` is the
//! residual scale ([`ResidualScale`]). Coordinate updates run on the Gram
//! matrix `C^T C`, so after the one-off `O(c^2 d)` precomputation a sweep
//! costs `O(c)` plus `O(c)` per coordinate that actually moves.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{EmbeddingSet, NORM_TOLERANCE};

/// Weights below this are clamped to exactly zero after the last sweep.
pub const ZERO_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("column {index} has norm {norm}, expected 1")]
    ColumnNorm { index: usize, norm: f64 },
    #[error("empty dictionary")]
    Empty,
    #[error("invalid solver config: {0}")]
    Config(String),
}

/// Divisor applied to the squared residual.
///
/// `Unit` gives `1/2 ||Cw - z||^2`. `Dimension` gives `1/(2d) ||Cw - z||^2`,
/// the convention of scikit-learn's `Lasso`, which treats the `d` embedding
/// coordinates as samples. With unit-norm inputs the zero solution is
/// optimal once `lambda >= max_j c_j.z / s`, so under `Dimension` every
/// penalty above `1/d` yields an empty code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResidualScale {
    #[default]
    Unit,
    Dimension,
}

impl ResidualScale {
    pub fn factor(self, dim: usize) -> f64 {
        match self {
            ResidualScale::Unit => 1.0,
            ResidualScale::Dimension => dim as f64,
        }
    }
}

impl fmt::Display for ResidualScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResidualScale::Unit => "unit",
            ResidualScale::Dimension => "dimension",
        })
    }
}

impl FromStr for ResidualScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unit" => Ok(ResidualScale::Unit),
            "dimension" | "sklearn" => Ok(ResidualScale::Dimension),
            _ => Err(format!("unknown residual scale {s:?} (unit|dimension)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    pub max_sweeps: usize,
    /// Converged once no coordinate moves by this much in a full sweep.
    pub tolerance: f64,
    /// Reconstruction-cosine target `1 - epsilon`; reported, never enforced.
    #[serde(default)]
    pub epsilon_target: Option<f64>,
    #[serde(default)]
    pub scale: ResidualScale,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            max_sweeps: 10_000,
            tolerance: 1e-6,
            epsilon_target: None,
            scale: ResidualScale::default(),
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(SolverError::Config(format!("lambda {} < 0", self.lambda)));
        }
        if !(self.tolerance > 0.0) {
            return Err(SolverError::Config(format!(
                "tolerance {} must be positive",
                self.tolerance
            )));
        }
        if self.max_sweeps == 0 {
            return Err(SolverError::Config("max_sweeps must be at least 1".into()));
        }
        if let Some(eps) = self.epsilon_target {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(SolverError::Config(format!(
                    "epsilon_target {eps} not in (0,1)"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// `max_sweeps` ran out; the weights are the last (and best) iterate.
    MaxSweepsReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolution {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub sweeps_used: usize,
    pub kkt_residual: f64,
    pub status: SolveStatus,
}

impl SparseSolution {
    pub fn l0(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Concept matrix `C`: `c` unit-norm atoms of dimension `d`, stored atom-major.
#[derive(Debug)]
pub struct Dictionary {
    dim: usize,
    atoms: Vec<f64>,
    gram: OnceLock<Vec<f64>>,
}

impl Clone for Dictionary {
    fn clone(&self) -> Self {
        let gram = OnceLock::new();
        if let Some(g) = self.gram.get() {
            let _ = gram.set(g.clone());
        }
        Self {
            dim: self.dim,
            atoms: self.atoms.clone(),
            gram,
        }
    }
}

impl Dictionary {
    /// `atoms` is row-major `c x dim`; every row must have unit norm.
    pub fn new(dim: usize, atoms: Vec<f64>) -> Result<Self, SolverError> {
        if dim == 0 || atoms.is_empty() {
            return Err(SolverError::Empty);
        }
        if !atoms.len().is_multiple_of(dim) {
            return Err(SolverError::DimensionMismatch {
                expected: dim,
                got: atoms.len() % dim,
            });
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite("dictionary"));
        }
        for (index, atom) in atoms.chunks_exact(dim).enumerate() {
            let norm = dot(atom, atom).sqrt();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(SolverError::ColumnNorm { index, norm });
            }
        }
        Ok(Self {
            dim,
            atoms,
            gram: OnceLock::new(),
        })
    }

    pub fn from_embedding_set(set: &EmbeddingSet) -> Result<Self, SolverError> {
        Self::new(
            set.dim(),
            set.data().iter().map(|&v| f64::from(v)).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of atoms `c`.
    pub fn len(&self) -> usize {
        self.atoms.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atom(&self, j: usize) -> &[f64] {
        &self.atoms[j * self.dim..(j + 1) * self.dim]
    }

    /// `C^T C`, computed on first use and shared by every later solve.
    pub fn gram(&self) -> &[f64] {
        self.gram.get_or_init(|| {
            let c = self.len();
            let mut g = vec![0.0; c * c];
            for i in 0..c {
                for j in i..c {
                    let v = dot(self.atom(i), self.atom(j));
                    g[i * c + j] = v;
                    g[j * c + i] = v;
                }
            }
            g
        })
    }

    /// `C^T z`.
    pub fn correlations(&self, z: &[f64]) -> Vec<f64> {
        self.atoms
            .chunks_exact(self.dim)
            .map(|a| dot(a, z))
            .collect()
    }

    /// `C w` for a dense weight vector.
    pub fn combine(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (j, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                axpy(w, self.atom(j), &mut out);
            }
        }
        out
    }

    /// `C w` for a sparse weight vector.
    pub fn combine_sparse(&self, indices: &[usize], weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&j, &w) in indices.iter().zip(weights) {
            axpy(w, self.atom(j), &mut out);
        }
        out
    }

    fn check_target(&self, z: &[f64]) -> Result<(), SolverError> {
        if z.len() != self.dim {
            return Err(SolverError::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite("target"));
        }
        Ok(())
    }

    fn check_weights(&self, w: &[f64]) -> Result<(), SolverError> {
        if w.len() != self.len() {
            return Err(SolverError::DimensionMismatch {
                expected: self.len(),
                got: w.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `max(0, x - t)`, never returning `-0.0`.
pub fn soft_threshold_nonneg(x: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    let v = x - t;
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Smallest penalty whose optimal code is identically zero.
pub fn lambda_max(dict: &Dictionary, z: &[f64], scale: ResidualScale) -> Result<f64, SolverError> {
    dict.check_target(z)?;
    let best = dict.correlations(z).into_iter().fold(0.0_f64, f64::max);
    Ok(best / scale.factor(dict.dim()))
}

/// Objective value at `w`.
pub fn objective(
    dict: &Dictionary,
    z: &[f64],
    w: &[f64],
    lambda: f64,
    scale: ResidualScale,
) -> Result<f64, SolverError> {
    dict.check_target(z)?;
    dict.check_weights(w)?;
    let mut residual = dict.combine(w);
    for (r, zi) in residual.iter_mut().zip(z) {
        *r -= zi;
    }
    let s = scale.factor(dict.dim());
    Ok(dot(&residual, &residual) / (2.0 * s) + lambda * w.iter().sum::<f64>())
}

/// Worst violation of the optimality conditions at `w`; zero at the optimum.
///
/// With gradient `g_j = c_j.(Cw - z) / s + lambda`, active coordinates need
/// `g_j = 0` and inactive ones need `g_j >= 0`.
pub fn kkt_check(
    dict: &Dictionary,
    z: &[f64],
    w: &[f64],
    lambda: f64,
    scale: ResidualScale,
) -> Result<f64, SolverError> {
    dict.check_target(z)?;
    dict.check_weights(w)?;
    let mut residual = dict.combine(w);
    for (r, zi) in residual.iter_mut().zip(z) {
        *r -= zi;
    }
    let s = scale.factor(dict.dim());
    let worst = w
        .iter()
        .enumerate()
        .map(|(j, &wj)| {
            let g = dot(dict.atom(j), &residual) / s + lambda;
            if wj > 0.0 {
                g.abs()
            } else {
                (-g).max(0.0)
            }
        })
        .fold(0.0, f64::max);
    Ok(worst)
}

/// Solves the non-negative Lasso for one target, cold-starting at zero and
/// sweeping coordinates in ascending order.
pub fn solve(
    dict: &Dictionary,
    z: &[f64],
    cfg: &SolverConfig,
) -> Result<SparseSolution, SolverError> {
    cfg.validate()?;
    dict.check_target(z)?;
    let c = dict.len();
    let s = cfg.scale.factor(dict.dim());
    let threshold = s * cfg.lambda;
    let gram = dict.gram();
    let b = dict.correlations(z);
    let zz = dot(z, z);

    // q = C^T (z - C w), kept current as coordinates move.
    let mut q = b.clone();
    let mut w = vec![0.0; c];
    let objective_of = |w: &[f64], q: &[f64]| {
        (zz - dot(w, &b) - dot(w, q)) / (2.0 * s) + cfg.lambda * w.iter().sum::<f64>()
    };
    let mut previous = objective_of(&w, &q);
    let mut status = SolveStatus::MaxSweepsReached;
    let mut sweeps_used = 0;

    for sweep in 1..=cfg.max_sweeps {
        sweeps_used = sweep;
        let mut max_change = 0.0_f64;
        for j in 0..c {
            let gjj = gram[j * c + j];
            let rho = q[j] + gjj * w[j];
            let updated = soft_threshold_nonneg(rho, threshold) / gjj;
            let delta = updated - w[j];
            if delta != 0.0 {
                w[j] = updated;
                let column = &gram[j * c..(j + 1) * c];
                axpy(-delta, column, &mut q);
                max_change = max_change.max(delta.abs());
            }
        }
        if cfg!(debug_assertions) {
            let current = objective_of(&w, &q);
            debug_assert!(
                current <= previous + 1e-12 * (1.0 + previous.abs()),
                "objective increased in sweep {sweep}: {previous} -> {current}"
            );
            previous = current;
        }
        if max_change < cfg.tolerance {
            status = SolveStatus::Converged;
            break;
        }
    }

    for v in &mut w {
        if *v < ZERO_CLAMP {
            *v = 0.0;
        }
    }
    let objective = objective(dict, z, &w, cfg.lambda, cfg.scale)?;
    let kkt_residual = kkt_check(dict, z, &w, cfg.lambda, cfg.scale)?;
    Ok(SparseSolution {
        weights: w,
        objective,
        sweeps_used,
        kkt_residual,
        status,
    })
}
