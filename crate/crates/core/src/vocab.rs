//! Concept vocabularies: frequency-ranked tags (baseline), filtered and
//! synonym-merged tags (pruned), and k-means cluster representatives
//! (clustered).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{
    io_err, read_embedding_extra, read_embedding_set, write_embedding_set_with, EmbeddingSet,
    StoreError,
};

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("insufficient concepts: requested {requested}, only {available} survive filtering")]
    Insufficient { requested: usize, available: usize },
    #[error("invalid tag table: {0}")]
    Table(String),
    #[error("tag {0:?} appears in more than one synonym group")]
    OverlappingGroups(String),
    #[error("pool of {pool} points cannot form {k} clusters")]
    PoolTooSmall { pool: usize, k: usize },
    #[error("concept {0:?} has no embedding in the pool")]
    MissingEmbedding(String),
    #[error("invalid vocabulary: {0}")]
    Invalid(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    Baseline,
    Pruned,
    Clustered,
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Construction::Baseline => "baseline",
            Construction::Pruned => "pruned",
            Construction::Clustered => "clustered",
        })
    }
}

impl FromStr for Construction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Construction::Baseline),
            "pruned" => Ok(Construction::Pruned),
            "clustered" => Ok(Construction::Clustered),
            _ => Err(format!("unknown construction {s:?}")),
        }
    }
}

/// Tag occurrence counts, e.g. scraped from a tagged audio corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct TagFrequencyTable {
    entries: Vec<(String, u64)>,
}

impl TagFrequencyTable {
    pub fn new(entries: Vec<(String, u64)>) -> Result<Self, VocabError> {
        if entries.is_empty() {
            return Err(VocabError::Table("empty table".into()));
        }
        let mut seen = HashSet::new();
        for (tag, count) in &entries {
            if !seen.insert(tag.as_str()) {
                return Err(VocabError::Table(format!("duplicate tag {tag:?}")));
            }
            if *count == 0 {
                return Err(VocabError::Table(format!("tag {tag:?} has zero count")));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries
    }

    /// Entries by descending count, ties broken by tag ascending.
    pub fn ranked(&self) -> Vec<(String, u64)> {
        let mut ranked = self.entries.clone();
        sort_by_frequency(&mut ranked);
        ranked
    }

    /// Reads a `tag,count` CSV; a leading `tag,count` header row is skipped.
    pub fn read_csv(path: &Path) -> Result<Self, VocabError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| VocabError::Table(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| VocabError::Table(e.to_string()))?;
            if record.len() != 2 {
                return Err(VocabError::Table(format!(
                    "line {}: expected tag,count",
                    line + 1
                )));
            }
            if line == 0 && &record[0] == "tag" && &record[1] == "count" {
                continue;
            }
            let count = record[1].parse().map_err(|_| {
                VocabError::Table(format!("line {}: bad count {:?}", line + 1, &record[1]))
            })?;
            entries.push((record[0].to_string(), count));
        }
        Self::new(entries)
    }
}

fn sort_by_frequency(entries: &mut [(String, u64)]) {
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

/// Token rules applied before ranking.
///
/// The wordlist, when present, is the set of accepted (correctly spelled
/// English) words; comparison is case-insensitive.
#[derive(Debug, Clone, Default)]
pub struct TagFilter {
    pub blocklist: HashSet<String>,
    pub wordlist: Option<HashSet<String>>,
    pub drop_single_letter: bool,
    pub drop_numeric: bool,
}

impl TagFilter {
    /// Blocklist and optional wordlist only, as used for the baseline.
    pub fn baseline(blocklist: HashSet<String>, wordlist: Option<HashSet<String>>) -> Self {
        Self {
            blocklist,
            wordlist,
            drop_single_letter: false,
            drop_numeric: false,
        }
    }

    /// Wordlist plus the single-letter and numeric rules.
    pub fn pruned(wordlist: Option<HashSet<String>>) -> Self {
        Self {
            blocklist: HashSet::new(),
            wordlist,
            drop_single_letter: true,
            drop_numeric: true,
        }
    }

    pub fn keeps(&self, tag: &str) -> bool {
        let trimmed = tag.trim();
        if trimmed.is_empty() || self.blocklist.contains(trimmed) {
            return false;
        }
        if self.drop_single_letter && trimmed.chars().count() == 1 {
            return false;
        }
        if self.drop_numeric && is_numeric(trimmed) {
            return false;
        }
        match &self.wordlist {
            Some(words) => words.contains(&trimmed.to_lowercase()),
            None => true,
        }
    }
}

fn is_numeric(tag: &str) -> bool {
    tag.parse::<f64>().is_ok()
        || tag
            .chars()
            .all(|c| c.is_ascii_digit() || ",._-".contains(c))
}

/// The `size` most frequent tags that pass `filter`.
pub fn build_baseline(
    table: &TagFrequencyTable,
    filter: &TagFilter,
    size: usize,
) -> Result<Vec<String>, VocabError> {
    let kept: Vec<String> = table
        .ranked()
        .into_iter()
        .filter(|(tag, _)| filter.keeps(tag))
        .map(|(tag, _)| tag)
        .collect();
    take_top(kept, size)
}

fn take_top(mut kept: Vec<String>, size: usize) -> Result<Vec<String>, VocabError> {
    if kept.len() < size {
        return Err(VocabError::Insufficient {
            requested: size,
            available: kept.len(),
        });
    }
    kept.truncate(size);
    Ok(kept)
}

/// A merged synonym group: its most frequent member and the summed count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedConcept {
    pub representative: String,
    pub count: u64,
    pub members: Vec<String>,
}

/// Restricts to the `pool` most frequent tags, filters them, merges each
/// synonym group into its most frequent member with summed counts, and
/// ranks the survivors.
pub fn merge_synonyms(
    table: &TagFrequencyTable,
    filter: &TagFilter,
    synonym_groups: &[Vec<String>],
    pool: usize,
) -> Result<Vec<MergedConcept>, VocabError> {
    let mut group_of: HashMap<&str, usize> = HashMap::new();
    for (g, group) in synonym_groups.iter().enumerate() {
        for tag in group {
            if let Some(prev) = group_of.insert(tag.as_str(), g) {
                if prev != g {
                    return Err(VocabError::OverlappingGroups(tag.clone()));
                }
            }
        }
    }

    let mut ranked = table.ranked();
    ranked.truncate(pool);
    // Group key: synonym-group index, or the tag itself for singletons.
    let mut merged: BTreeMap<Result<usize, String>, MergedConcept> = BTreeMap::new();
    for (tag, count) in ranked.into_iter().filter(|(t, _)| filter.keeps(t)) {
        let key = group_of
            .get(tag.as_str())
            .map_or_else(|| Err(tag.clone()), |&g| Ok(g));
        // Ranked order means the first member seen is the representative.
        merged
            .entry(key)
            .and_modify(|m| {
                m.count += count;
                m.members.push(tag.clone());
            })
            .or_insert_with(|| MergedConcept {
                representative: tag.clone(),
                count,
                members: vec![tag],
            });
    }
    let mut out: Vec<MergedConcept> = merged.into_values().collect();
    out.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.representative.cmp(&b.representative))
    });
    Ok(out)
}

pub fn build_pruned(
    table: &TagFrequencyTable,
    filter: &TagFilter,
    synonym_groups: &[Vec<String>],
    size: usize,
    pool: usize,
) -> Result<Vec<String>, VocabError> {
    if pool < size {
        return Err(VocabError::Insufficient {
            requested: size,
            available: pool,
        });
    }
    let merged = merge_synonyms(table, filter, synonym_groups, pool)?;
    take_top(merged.into_iter().map(|m| m.representative).collect(), size)
}

/// Reads synonym groups: one comma-separated group per line.
pub fn read_groups(path: &Path) -> Result<Vec<Vec<String>>, VocabError> {
    Ok(read_lines(path)?
        .into_iter()
        .map(|line| {
            line.split(',')
                .map(|t| t.trim().to_string())
                .filter(|t| !t.is_empty())
                .collect::<Vec<_>>()
        })
        .filter(|g| !g.is_empty())
        .collect())
}

pub fn write_groups(path: &Path, groups: &[Vec<String>]) -> Result<(), VocabError> {
    let text: String = groups.iter().map(|g| g.join(",") + "\n").collect();
    fs::write(path, text).map_err(io_err(path))?;
    Ok(())
}

/// Non-empty trimmed lines of a text file.
pub fn read_lines(path: &Path) -> Result<Vec<String>, VocabError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Root form used to propose synonym groups: strips `s`, `es`, `ing`, `ed`,
/// undoubles a final consonant pair and drops a trailing `e`, so that
/// "cough"/"coughs"/"coughing" and "rattle"/"rattling" share a stem.
pub fn stem(word: &str) -> String {
    let w = word.to_lowercase();
    let mut root = w.as_str();
    for suffix in ["ing", "ed", "es", "s"] {
        if let Some(r) = root.strip_suffix(suffix) {
            if suffix == "s" && (r.ends_with('s') || r.ends_with("u") || r.ends_with("i")) {
                continue;
            }
            if suffix == "es" && !["s", "x", "z", "ch", "sh"].iter().any(|e| r.ends_with(e)) {
                continue;
            }
            if r.chars().count() >= 3 {
                root = r;
                break;
            }
        }
    }
    let mut out: Vec<char> = root.chars().collect();
    let n = out.len();
    if n >= 4 && out[n - 1] == out[n - 2] && !"aeiouls".contains(out[n - 1]) {
        out.pop();
    }
    if out.len() >= 4 && out.last() == Some(&'e') {
        out.pop();
    }
    out.into_iter().collect()
}

/// Groups tags sharing a stem; only groups with two or more members are
/// returned, ordered by their most frequent member.
pub fn propose_synonym_groups(table: &TagFrequencyTable) -> Vec<Vec<String>> {
    let mut by_stem: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (tag, _) in table.ranked() {
        by_stem.entry(stem(&tag)).or_default().push(tag);
    }
    let rank: HashMap<String, usize> = table
        .ranked()
        .into_iter()
        .enumerate()
        .map(|(i, (t, _))| (t, i))
        .collect();
    let mut groups: Vec<Vec<String>> = by_stem.into_values().filter(|g| g.len() > 1).collect();
    groups.sort_by_key(|g| rank[&g[0]]);
    groups
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    /// Row-major `k x d`.
    pub centroids: Vec<f64>,
    pub inertia: f64,
    /// Inertia after each assignment step, for monotonicity checks.
    pub history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// `points` is row-major `n x dim`. Assignment ties keep the current
/// cluster, otherwise go to the lowest index. A cluster left empty takes
/// the point farthest from its own centroid.
pub fn kmeans(points: &[f64], dim: usize, k: usize, seed: u64, max_iters: usize) -> KMeansResult {
    let n = points.len() / dim;
    assert!(k >= 1 && n >= k, "kmeans needs 1 <= k <= n (k={k}, n={n})");
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, dim, k, &mut rng);

    let mut assignments = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        let next: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|i| nearest(point(i), &centroids, dim, assignments[i]).0)
            .collect();
        let changed = next != assignments;
        assignments = next;
        let repaired = repair_empty(points, dim, k, &mut centroids, &mut assignments);
        history.push(inertia_of(points, dim, &centroids, &assignments));
        update_centroids(points, dim, k, &assignments, &mut centroids);
        if !changed && !repaired {
            break;
        }
    }
    let inertia = inertia_of(points, dim, &centroids, &assignments);
    KMeansResult {
        assignments,
        centroids,
        inertia,
        history,
        iterations,
    }
}

fn plus_plus_init(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(point(i), point(chosen[0])))
        .collect();
    while chosen.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // All remaining mass is zero: every point coincides with a centroid.
            Err(_) => (0..n).find(|i| !chosen.contains(i)).unwrap_or(0),
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(point(i), point(next)));
        }
    }
    chosen
        .iter()
        .flat_map(|&i| point(i).iter().copied())
        .collect()
}

fn nearest(p: &[f64], centroids: &[f64], dim: usize, current: usize) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 || (d == best.1 && j == current) {
            best = (j, d);
        }
    }
    best
}

fn inertia_of(points: &[f64], dim: usize, centroids: &[f64], assignments: &[usize]) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            sq_dist(
                &points[i * dim..(i + 1) * dim],
                &centroids[a * dim..(a + 1) * dim],
            )
        })
        .sum()
}

fn update_centroids(
    points: &[f64],
    dim: usize,
    k: usize,
    assignments: &[usize],
    centroids: &mut [f64],
) {
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for (s, p) in sums[a * dim..(a + 1) * dim]
            .iter_mut()
            .zip(&points[i * dim..(i + 1) * dim])
        {
            *s += p;
        }
    }
    for j in 0..k {
        if counts[j] > 0 {
            for (c, s) in centroids[j * dim..(j + 1) * dim]
                .iter_mut()
                .zip(&sums[j * dim..(j + 1) * dim])
            {
                *c = s / counts[j] as f64;
            }
        }
    }
}

/// Moves each empty cluster onto the point farthest from its centroid,
/// taken from a cluster that keeps at least one member.
fn repair_empty(
    points: &[f64],
    dim: usize,
    k: usize,
    centroids: &mut [f64],
    assignments: &mut [usize],
) -> bool {
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    let mut repaired = false;
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut far = None::<(usize, f64)>;
        for (i, &a) in assignments.iter().enumerate() {
            if counts[a] < 2 {
                continue;
            }
            let d = sq_dist(
                &points[i * dim..(i + 1) * dim],
                &centroids[a * dim..(a + 1) * dim],
            );
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let Some((i, _)) = far else { break };
        counts[assignments[i]] -= 1;
        counts[empty] = 1;
        assignments[i] = empty;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(&points[i * dim..(i + 1) * dim]);
        repaired = true;
    }
    repaired
}

/// Clusters the pool into `k` groups and returns, per cluster, the member
/// closest to the centroid.
pub fn build_clustered(
    pool: &EmbeddingSet,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<Vec<String>, VocabError> {
    if k == 0 || pool.len() < k {
        return Err(VocabError::PoolTooSmall {
            pool: pool.len(),
            k,
        });
    }
    if !pool.is_normalized() {
        return Err(VocabError::Invalid(
            "pool embeddings must be normalized".into(),
        ));
    }
    let dim = pool.dim();
    let points: Vec<f64> = pool.data().iter().map(|&v| f64::from(v)).collect();
    let result = kmeans(&points, dim, k, seed, max_iters);
    let mut best: Vec<Option<(usize, f64)>> = vec![None; k];
    for (i, &a) in result.assignments.iter().enumerate() {
        let d = sq_dist(
            &points[i * dim..(i + 1) * dim],
            &result.centroids[a * dim..(a + 1) * dim],
        );
        if best[a].is_none_or(|(_, bd)| d < bd) {
            best[a] = Some((i, d));
        }
    }
    best.into_iter()
        .map(|b| {
            b.map(|(i, _)| pool.ids()[i].clone())
                .ok_or_else(|| VocabError::Invalid("empty cluster after repair".into()))
        })
        .collect()
}

pub const CONCEPTS_FILE: &str = "concepts.txt";

/// Concept strings with their unit-norm text embeddings (the matrix `C`,
/// one row per concept).
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptVocabulary {
    vocabulary_id: String,
    construction: Construction,
    embeddings: EmbeddingSet,
}

impl ConceptVocabulary {
    pub fn new(
        vocabulary_id: impl Into<String>,
        construction: Construction,
        embeddings: EmbeddingSet,
    ) -> Result<Self, VocabError> {
        if !embeddings.is_normalized() {
            return Err(VocabError::Invalid(
                "vocabulary embeddings must be normalized".into(),
            ));
        }
        Ok(Self {
            vocabulary_id: vocabulary_id.into(),
            construction,
            embeddings,
        })
    }

    /// Looks up each concept's row in `pool` (normalizing if needed).
    pub fn from_pool(
        vocabulary_id: impl Into<String>,
        construction: Construction,
        concepts: &[String],
        pool: &EmbeddingSet,
    ) -> Result<Self, VocabError> {
        let index = pool.id_index();
        let rows = concepts
            .iter()
            .map(|c| {
                index
                    .get(c.as_str())
                    .copied()
                    .ok_or_else(|| VocabError::MissingEmbedding(c.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut set = pool.select(&rows)?;
        if !set.is_normalized() {
            set = set.l2_normalize()?;
        }
        Self::new(vocabulary_id, construction, set)
    }

    pub fn id(&self) -> &str {
        &self.vocabulary_id
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn concepts(&self) -> &[String] {
        self.embeddings.ids()
    }

    pub fn embeddings(&self) -> &EmbeddingSet {
        &self.embeddings
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    /// Writes the embedding store plus `concepts.txt` in row order.
    pub fn write(&self, dir: &Path) -> Result<(), VocabError> {
        let mut extra = BTreeMap::new();
        extra.insert("vocabulary_id".into(), self.vocabulary_id.clone().into());
        extra.insert("construction".into(), self.construction.to_string().into());
        write_embedding_set_with(&self.embeddings, dir, extra)?;
        let path = dir.join(CONCEPTS_FILE);
        let text: String = self.concepts().iter().map(|c| format!("{c}\n")).collect();
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, VocabError> {
        let embeddings = read_embedding_set(dir)?;
        let extra = read_embedding_extra(dir)?;
        let concepts = read_lines(&dir.join(CONCEPTS_FILE))?;
        if concepts != embeddings.ids() {
            return Err(VocabError::Invalid(format!(
                "{} does not match store ids",
                CONCEPTS_FILE
            )));
        }
        let vocabulary_id = extra
            .get("vocabulary_id")
            .and_then(|v| v.as_str())
            .map(String::from)
            .unwrap_or_else(|| {
                dir.file_name()
                    .map_or_else(|| "vocabulary".into(), |n| n.to_string_lossy().into_owned())
            });
        let construction = extra
            .get("construction")
            .and_then(|v| v.as_str())
            .and_then(|s| s.parse().ok())
            .unwrap_or(Construction::Baseline);
        let embeddings = if embeddings.is_normalized() {
            embeddings
        } else {
            embeddings.l2_normalize()?
        };
        Self::new(vocabulary_id, construction, embeddings)
    }
}
