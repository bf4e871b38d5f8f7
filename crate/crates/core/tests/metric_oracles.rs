mod oracles;

use std::collections::HashSet;

use concept_lens::eval::metrics;
use concept_lens::eval::zeroshot::retrieve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: usize = 200;
const TOL: f64 = 1e-9;

fn labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..k)).collect()
}

/// Half the instances use a coarse score lattice so ties occur.
fn score(rng: &mut ChaCha8Rng, case: usize) -> f64 {
    if case % 2 == 0 {
        rng.gen()
    } else {
        f64::from(rng.gen_range(0..4u8)) / 4.0
    }
}

#[test]
fn accuracy_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..CASES {
        let n = rng.gen_range(1..60);
        let k = rng.gen_range(1..6);
        let (p, g) = (labels(&mut rng, n, k), labels(&mut rng, n, k));
        let got = metrics::accuracy(&p, &g).unwrap();
        assert!((got - oracles::accuracy(&p, &g)).abs() <= TOL);
    }
}

#[test]
fn macro_f1_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..CASES {
        let n = rng.gen_range(1..60);
        let k = rng.gen_range(1..6);
        let (p, g) = (labels(&mut rng, n, k), labels(&mut rng, n, k));
        let got = metrics::macro_f1(&p, &g, k).unwrap();
        assert!((got - oracles::macro_f1(&p, &g, k)).abs() <= TOL);
    }
}

#[test]
fn map_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..CASES {
        let n = rng.gen_range(1..40);
        let k = rng.gen_range(1..6);
        let scores: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| score(&mut rng, case)).collect())
            .collect();
        let mut gold: Vec<Vec<usize>> = (0..n)
            .map(|_| (0..k).filter(|_| rng.gen_bool(0.3)).collect())
            .collect();
        gold[0].push(0);
        gold[0].dedup();
        let sets: Vec<HashSet<usize>> = gold.iter().map(|g| g.iter().copied().collect()).collect();
        let got = metrics::mean_average_precision(&scores, &sets).unwrap();
        let want = oracles::mean_ap(&scores, &gold, k);
        assert!((got - want).abs() <= TOL, "case {case}: {got} vs {want}");
    }
}

#[test]
fn retrieval_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..CASES {
        let d = rng.gen_range(2..5);
        let n_gallery = rng.gen_range(1..25);
        let n_queries = rng.gen_range(1..8);
        // Quantized coordinates make exact cosine ties possible.
        let vector = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            loop {
                let v: Vec<f64> = (0..d).map(|_| score(rng, case) - 0.5).collect();
                if v.iter().any(|x| *x != 0.0) {
                    return v;
                }
            }
        };
        let gallery: Vec<Vec<f64>> = (0..n_gallery).map(|_| vector(&mut rng)).collect();
        let queries: Vec<Vec<f64>> = (0..n_queries).map(|_| vector(&mut rng)).collect();
        let relevant: Vec<Vec<usize>> = (0..n_queries)
            .map(|_| {
                let k = rng.gen_range(1..=n_gallery.min(12));
                let mut r = rand::seq::index::sample(&mut rng, n_gallery, k).into_vec();
                r.sort_unstable();
                r
            })
            .collect();
        let ids: Vec<String> = (0..n_gallery).map(|i| format!("g{i:03}")).collect();
        let sets: Vec<HashSet<usize>> = relevant
            .iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        let got = retrieve(&queries, &gallery, &ids, &sets).unwrap();
        let (r1, map10) = oracles::retrieval(&queries, &gallery, &relevant);
        assert!((got.recall_at_1 - r1).abs() <= TOL, "case {case}");
        assert!((got.map_at_10 - map10).abs() <= TOL, "case {case}");
    }
}
