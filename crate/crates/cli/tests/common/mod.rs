#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use concept_lens::store::{write_embedding_set, EmbeddingSet};
use concept_lens::vocab::TagFrequencyTable;
use concept_lens_cli::{run_from, CliError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Runs a command in-process and returns its summary.
pub fn run(args: &[&str]) -> Value {
    try_run(args).unwrap_or_else(|e| panic!("{args:?}: {e}"))
}

pub fn try_run(args: &[&str]) -> Result<Value, CliError> {
    run_from(std::iter::once("concept-lens").chain(args.iter().copied()))
}

/// A normalized text-embedding store with one random row per tag in `tags_csv`.
pub fn tag_pool(tags_csv: &Path, dir: &Path, dim: usize, seed: u64) -> PathBuf {
    let table = TagFrequencyTable::read_csv(tags_csv).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = table.entries().iter().map(|(t, _)| t.clone()).collect();
    let rows: Vec<Vec<f32>> = ids
        .iter()
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
        .collect();
    let set = EmbeddingSet::from_rows(ids, &rows, false)
        .unwrap()
        .l2_normalize()
        .unwrap();
    let out = dir.join("pool");
    write_embedding_set(&set, &out).unwrap();
    out
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}
