//! On-disk formats shared by every stage of the pipeline.
//!
//! An embedding store is a directory holding `meta.json` (ids, shape, flags)
//! and `data.f32` (row-major little-endian `f32`). Manifests and sparse codes
//! are JSON Lines.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Value of the `format` field in every `meta.json` we write.
pub const FORMAT_VERSION: &str = "cemb-1";
pub const META_FILE: &str = "meta.json";
pub const DATA_FILE: &str = "data.f32";

/// Tolerance on row norms for sets flagged as normalized.
pub const NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("empty set")]
    EmptySet,
    #[error("dimension must be at least 1")]
    ZeroDim,
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("shape mismatch: {ids} ids but {values} values for dim {dim}")]
    Shape {
        ids: usize,
        values: usize,
        dim: usize,
    },
    #[error("non-finite value in row {id:?}")]
    NonFinite { id: String },
    #[error("normalization flag violated: row {id:?} has norm {norm}")]
    NotNormalized { id: String, norm: f64 },
    #[error("zero-norm row {id:?} cannot be normalized")]
    ZeroNorm { id: String },
    #[error("size mismatch: {path} holds {actual} bytes, meta implies {expected}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("malformed meta {path}: {reason}")]
    MalformedMeta { path: PathBuf, reason: String },
    #[error("unsupported format {0:?}")]
    Format(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid sparse code for {id:?}: {reason}")]
    SparseCode { id: String, reason: String },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Ordered, validated collection of `dim`-dimensional vectors keyed by id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingSet {
    pub fn new(
        ids: Vec<String>,
        dim: usize,
        data: Vec<f32>,
        normalized: bool,
    ) -> Result<Self, StoreError> {
        if ids.is_empty() {
            return Err(StoreError::EmptySet);
        }
        if dim == 0 {
            return Err(StoreError::ZeroDim);
        }
        if data.len() != ids.len() * dim {
            return Err(StoreError::Shape {
                ids: ids.len(),
                values: data.len(),
                dim,
            });
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(StoreError::DuplicateId(id.clone()));
            }
        }
        let set = Self {
            ids,
            dim,
            data,
            normalized,
        };
        for (i, row) in set.rows().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(StoreError::NonFinite {
                    id: set.ids[i].clone(),
                });
            }
            if normalized {
                let norm = l2_norm(row);
                if (norm - 1.0).abs() > NORM_TOLERANCE {
                    return Err(StoreError::NotNormalized {
                        id: set.ids[i].clone(),
                        norm,
                    });
                }
            }
        }
        Ok(set)
    }

    /// Builds a set from per-row vectors; all rows must share one length.
    pub fn from_rows(
        ids: Vec<String>,
        rows: &[Vec<f32>],
        normalized: bool,
    ) -> Result<Self, StoreError> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(StoreError::Shape {
                ids: ids.len(),
                values: rows.iter().map(Vec::len).sum(),
                dim,
            });
        }
        Self::new(ids, dim, rows.concat(), normalized)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Row-major backing storage.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Map from id to row index, for repeated lookups.
    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    /// Scales every row to unit L2 norm and sets the normalized flag.
    pub fn l2_normalize(&self) -> Result<EmbeddingSet, StoreError> {
        let mut data = Vec::with_capacity(self.data.len());
        for (i, row) in self.rows().enumerate() {
            let norm = l2_norm(row);
            if norm == 0.0 {
                return Err(StoreError::ZeroNorm {
                    id: self.ids[i].clone(),
                });
            }
            data.extend(row.iter().map(|&v| (f64::from(v) / norm) as f32));
        }
        EmbeddingSet::new(self.ids.clone(), self.dim, data, true)
    }

    /// New set holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<EmbeddingSet, StoreError> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            ids.push(self.ids[i].clone());
            data.extend_from_slice(self.row(i));
        }
        EmbeddingSet::new(ids, self.dim, data, self.normalized)
    }
}

pub fn l2_norm(row: &[f32]) -> f64 {
    row.iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EmbeddingMeta {
    format: String,
    count: usize,
    dim: usize,
    normalized: bool,
    ids: Vec<String>,
    /// Producer-specific fields (encoder id, checkpoint hash, skipped inputs).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    extra: BTreeMap<String, serde_json::Value>,
}

pub fn write_embedding_set(set: &EmbeddingSet, dir: &Path) -> Result<(), StoreError> {
    write_embedding_set_with(set, dir, BTreeMap::new())
}

/// Writes a store, recording `extra` as producer metadata in `meta.json`.
pub fn write_embedding_set_with(
    set: &EmbeddingSet,
    dir: &Path,
    extra: BTreeMap<String, serde_json::Value>,
) -> Result<(), StoreError> {
    // Re-check invariants so a hand-built set never reaches disk half-valid.
    let set = EmbeddingSet::new(set.ids.clone(), set.dim, set.data.clone(), set.normalized)?;
    let meta = EmbeddingMeta {
        format: FORMAT_VERSION.to_string(),
        count: set.len(),
        dim: set.dim,
        normalized: set.normalized,
        ids: set.ids.clone(),
        extra,
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join(META_FILE), &meta)?;
    write_f32_blob(&dir.join(DATA_FILE), &set.data)
}

pub fn read_embedding_set(dir: &Path) -> Result<EmbeddingSet, StoreError> {
    let meta_path = dir.join(META_FILE);
    let meta: EmbeddingMeta = read_json(&meta_path)?;
    if meta.format != FORMAT_VERSION {
        return Err(StoreError::Format(meta.format));
    }
    if meta.count != meta.ids.len() {
        return Err(StoreError::MalformedMeta {
            path: meta_path,
            reason: format!("count {} but {} ids", meta.count, meta.ids.len()),
        });
    }
    let data = read_f32_blob(&dir.join(DATA_FILE), meta.count * meta.dim)?;
    EmbeddingSet::new(meta.ids, meta.dim, data, meta.normalized)
}

/// Producer metadata stored alongside an embedding set.
pub fn read_embedding_extra(dir: &Path) -> Result<BTreeMap<String, serde_json::Value>, StoreError> {
    let meta: EmbeddingMeta = read_json(&dir.join(META_FILE))?;
    Ok(meta.extra)
}

pub(crate) fn write_f32_blob(path: &Path, values: &[f32]) -> Result<(), StoreError> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn read_f32_blob(path: &Path, expected_len: usize) -> Result<Vec<f32>, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let expected = expected_len as u64 * 4;
    if bytes.len() as u64 != expected {
        return Err(StoreError::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        line: 0,
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| StoreError::MalformedMeta {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), StoreError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for (i, item) in items.iter().enumerate() {
        serde_json::to_writer(&mut out, item).map_err(|source| StoreError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|source| StoreError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        items.push(item);
    }
    Ok(items)
}

/// Dataset partition a manifest entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Dev,
    Eval,
    Fold(u32),
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Dev => f.write_str("dev"),
            Split::Eval => f.write_str("eval"),
            Split::Fold(k) => write!(f, "fold-{k}"),
        }
    }
}

impl FromStr for Split {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dev" => Ok(Split::Dev),
            "eval" => Ok(Split::Eval),
            _ => s
                .strip_prefix("fold-")
                .and_then(|k| k.parse().ok())
                .map(Split::Fold)
                .ok_or_else(|| StoreError::Manifest(format!("unknown split {s:?}"))),
        }
    }
}

impl Serialize for Split {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Split {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, StoreError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(StoreError::Manifest(format!("duplicate id {:?}", e.id)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn splits(&self) -> Vec<Split> {
        let mut splits: Vec<Split> = self.entries.iter().map(|e| e.split).collect();
        splits.sort();
        splits.dedup();
        splits
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Checks that every entry carries at least one label.
    pub fn require_labels(&self) -> Result<(), StoreError> {
        match self.entries.iter().find(|e| e.labels.is_empty()) {
            Some(e) => Err(StoreError::Manifest(format!(
                "entry {:?} has no labels",
                e.id
            ))),
            None => Ok(()),
        }
    }

    /// Checks that every entry carries at least one caption.
    pub fn require_captions(&self) -> Result<(), StoreError> {
        match self
            .entries
            .iter()
            .find(|e| e.captions.as_ref().is_none_or(Vec::is_empty))
        {
            Some(e) => Err(StoreError::Manifest(format!(
                "entry {:?} has no captions",
                e.id
            ))),
            None => Ok(()),
        }
    }

    /// Distinct labels in first-seen order.
    pub fn label_set(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for label in self.entries.iter().flat_map(|e| &e.labels) {
            if seen.insert(label.as_str()) {
                out.push(label.clone());
            }
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self, StoreError> {
        Self::new(read_jsonl(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), StoreError> {
        write_jsonl(path, &self.entries)
    }
}

/// Sparse non-negative code of one embedding over one vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCodeRecord {
    pub embedding_id: String,
    pub vocabulary_id: String,
    pub lambda: f64,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl SparseCodeRecord {
    /// Keeps the strictly positive entries of a dense weight vector.
    pub fn from_dense(
        embedding_id: impl Into<String>,
        vocabulary_id: impl Into<String>,
        lambda: f64,
        dense: &[f64],
    ) -> Self {
        let (indices, weights) = dense
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, &w)| (i, w))
            .unzip();
        Self {
            embedding_id: embedding_id.into(),
            vocabulary_id: vocabulary_id.into(),
            lambda,
            indices,
            weights,
        }
    }

    pub fn l0(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn to_dense(&self, vocab_size: usize) -> Vec<f64> {
        let mut dense = vec![0.0; vocab_size];
        for (&i, &w) in self.indices.iter().zip(&self.weights) {
            dense[i] = w;
        }
        dense
    }

    pub fn validate(&self, vocab_size: usize) -> Result<(), StoreError> {
        let fail = |reason: String| {
            Err(StoreError::SparseCode {
                id: self.embedding_id.clone(),
                reason,
            })
        };
        if !(self.lambda >= 0.0) {
            return fail(format!("lambda {} is negative", self.lambda));
        }
        if self.indices.len() != self.weights.len() {
            return fail("indices and weights differ in length".into());
        }
        if self.indices.windows(2).any(|w| w[0] >= w[1]) {
            return fail("indices not strictly increasing".into());
        }
        if let Some(&last) = self.indices.last() {
            if last >= vocab_size {
                return fail(format!("index {last} out of bounds for {vocab_size}"));
            }
        }
        if self.weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return fail("weights must be finite and strictly positive".into());
        }
        Ok(())
    }
}
