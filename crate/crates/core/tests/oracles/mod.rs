//! Reference implementations used as test oracles. They share no code with
//! the library and favour obviousness over speed.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, so the oracle does not lean on the library's samplers.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// `(1/2s)|Cw - z|^2 + lambda * sum(w)` with `atoms[j]` the j-th column.
pub fn lasso_objective(atoms: &[Vec<f64>], z: &[f64], w: &[f64], lambda: f64, s: f64) -> f64 {
    let d = z.len();
    let mut r = vec![0.0; d];
    for (a, &wj) in atoms.iter().zip(w) {
        for k in 0..d {
            r[k] += wj * a[k];
        }
    }
    let rss: f64 = r.iter().zip(z).map(|(x, y)| (x - y) * (x - y)).sum();
    rss / (2.0 * s) + lambda * w.iter().sum::<f64>()
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting; `None`
/// when `A` is numerically singular.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Exact minimizer by enumerating every support: on support `S` the
/// stationarity condition is `G_S w_S = C_S^T z - s*lambda`, and the best
/// non-negative stationary point over all supports is the optimum.
pub fn lasso_enumerate(atoms: &[Vec<f64>], z: &[f64], lambda: f64, s: f64) -> (Vec<f64>, f64) {
    let c = atoms.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut best = (
        vec![0.0; c],
        lasso_objective(atoms, z, &vec![0.0; c], lambda, s),
    );
    for mask in 1u32..(1 << c) {
        let support: Vec<usize> = (0..c).filter(|j| mask & (1 << j) != 0).collect();
        let g: Vec<Vec<f64>> = support
            .iter()
            .map(|&i| support.iter().map(|&j| dot(&atoms[i], &atoms[j])).collect())
            .collect();
        let rhs: Vec<f64> = support
            .iter()
            .map(|&i| dot(&atoms[i], z) - s * lambda)
            .collect();
        let Some(ws) = solve_linear(g, rhs) else {
            continue;
        };
        if ws.iter().any(|&v| v < 0.0) {
            continue;
        }
        let mut w = vec![0.0; c];
        for (&j, &v) in support.iter().zip(&ws) {
            w[j] = v;
        }
        let obj = lasso_objective(atoms, z, &w, lambda, s);
        if obj < best.1 {
            best = (w, obj);
        }
    }
    best
}

/// Grid search over `[0, 2]^c`: a 0.1 grid, then repeated 4x zooms onto a
/// window of two old steps around the incumbent, down to a 1e-5 step.
pub fn lasso_grid(atoms: &[Vec<f64>], z: &[f64], lambda: f64, s: f64) -> (Vec<f64>, f64) {
    let c = atoms.len();
    let mut lo = vec![0.0; c];
    let mut hi = vec![2.0; c];
    let mut step: f64 = 0.1;
    let mut best = (vec![0.0; c], f64::INFINITY);
    while step >= 1e-5 {
        let counts: Vec<usize> = (0..c)
            .map(|j| ((hi[j] - lo[j]) / step).round() as usize + 1)
            .collect();
        let total: usize = counts.iter().product();
        for flat in 0..total {
            let mut rem = flat;
            let w: Vec<f64> = (0..c)
                .map(|j| {
                    let k = rem % counts[j];
                    rem /= counts[j];
                    (lo[j] + k as f64 * step).min(2.0)
                })
                .collect();
            let obj = lasso_objective(atoms, z, &w, lambda, s);
            if obj < best.1 {
                best = (w, obj);
            }
        }
        for j in 0..c {
            lo[j] = (best.0[j] - 2.0 * step).max(0.0);
            hi[j] = (best.0[j] + 2.0 * step).min(2.0);
        }
        step /= 4.0;
    }
    best
}

pub fn accuracy(pred: &[usize], gold: &[usize]) -> f64 {
    let mut hits = 0;
    for i in 0..pred.len() {
        if pred[i] == gold[i] {
            hits += 1;
        }
    }
    hits as f64 / pred.len() as f64
}

/// Macro F1 from an explicit confusion matrix.
pub fn macro_f1(pred: &[usize], gold: &[usize], n_labels: usize) -> f64 {
    let mut m = vec![vec![0usize; n_labels]; n_labels];
    for (&p, &g) in pred.iter().zip(gold) {
        m[g][p] += 1;
    }
    let mut total = 0.0;
    for k in 0..n_labels {
        let tp = m[k][k] as f64;
        let predicted: usize = (0..n_labels).map(|g| m[g][k]).sum();
        let actual: usize = m[k].iter().sum();
        let fp = predicted as f64 - tp;
        let fneg = actual as f64 - tp;
        let f1 = if tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fneg)
        };
        total += f1;
    }
    total / n_labels as f64
}

/// 1-based rank of `i` when items are ordered by score descending, ties
/// broken by `key` ascending.
fn rank_of(i: usize, scores: &[f64], key: &dyn Fn(usize) -> usize) -> usize {
    1 + (0..scores.len())
        .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && key(j) < key(i)))
        .count()
}

/// AP over the top `cutoff` ranks, normalized by `min(|relevant|, cutoff)`,
/// computed item by item without sorting.
pub fn ap_at(
    scores: &[f64],
    relevant: &[usize],
    cutoff: usize,
    key: &dyn Fn(usize) -> usize,
) -> f64 {
    let mut sum = 0.0;
    for &r in relevant {
        let rank = rank_of(r, scores, key);
        if rank <= cutoff {
            let above = relevant
                .iter()
                .filter(|&&o| rank_of(o, scores, key) <= rank)
                .count();
            sum += above as f64 / rank as f64;
        }
    }
    sum / relevant.len().min(cutoff) as f64
}

/// Per-class AP over samples, averaged over classes with a positive.
pub fn mean_ap(scores: &[Vec<f64>], gold: &[Vec<usize>], n_labels: usize) -> f64 {
    let mut aps = Vec::new();
    for k in 0..n_labels {
        let col: Vec<f64> = scores.iter().map(|s| s[k]).collect();
        let positives: Vec<usize> = (0..gold.len()).filter(|&i| gold[i].contains(&k)).collect();
        if positives.is_empty() {
            continue;
        }
        aps.push(ap_at(&col, &positives, usize::MAX, &|i| i));
    }
    aps.iter().sum::<f64>() / aps.len() as f64
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / (na * nb)
}

/// `(R@1, mAP@10)` by exhaustive scoring; gallery ties break by index,
/// matching gallery ids that sort in index order.
pub fn retrieval(
    queries: &[Vec<f64>],
    gallery: &[Vec<f64>],
    relevant: &[Vec<usize>],
) -> (f64, f64) {
    let mut hits = 0.0;
    let mut ap = 0.0;
    for (q, rel) in queries.iter().zip(relevant) {
        let scores: Vec<f64> = gallery.iter().map(|g| cosine(q, g)).collect();
        let mut top = 0;
        for j in 1..scores.len() {
            if scores[j] > scores[top] {
                top = j;
            }
        }
        if rel.contains(&top) {
            hits += 1.0;
        }
        ap += ap_at(&scores, rel, 10, &|i| i);
    }
    let n = queries.len() as f64;
    (hits / n, ap / n)
}
