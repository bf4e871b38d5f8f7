//! Classification and ranking metrics.

use std::cmp::Ordering;
use std::collections::HashSet;

use super::EvalError;

pub fn accuracy<T: PartialEq>(predictions: &[T], gold: &[T]) -> Result<f64, EvalError> {
    check_lengths(predictions.len(), gold.len())?;
    let correct = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(correct as f64 / gold.len() as f64)
}

fn check_lengths(a: usize, b: usize) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(EvalError::Empty("predictions"));
    }
    Ok(())
}

/// One-vs-rest counts for `label`.
fn confusion(predictions: &[usize], gold: &[usize], label: usize) -> (usize, usize, usize) {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for (&p, &g) in predictions.iter().zip(gold) {
        match (p == label, g == label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    (tp, fp, fn_)
}

fn f1_from(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Unweighted mean of per-class F1 over labels `0..n_labels`; a class with
/// no predictions and no gold members scores 0.
pub fn macro_f1(predictions: &[usize], gold: &[usize], n_labels: usize) -> Result<f64, EvalError> {
    check_lengths(predictions.len(), gold.len())?;
    if n_labels == 0 {
        return Err(EvalError::Empty("labels"));
    }
    let total: f64 = (0..n_labels)
        .map(|l| {
            let (tp, fp, fn_) = confusion(predictions, gold, l);
            f1_from(tp, fp, fn_)
        })
        .sum();
    Ok(total / n_labels as f64)
}

/// F1 from counts pooled over all classes.
pub fn micro_f1(predictions: &[usize], gold: &[usize], n_labels: usize) -> Result<f64, EvalError> {
    check_lengths(predictions.len(), gold.len())?;
    if n_labels == 0 {
        return Err(EvalError::Empty("labels"));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for l in 0..n_labels {
        let c = confusion(predictions, gold, l);
        tp += c.0;
        fp += c.1;
        fn_ += c.2;
    }
    Ok(f1_from(tp, fp, fn_))
}

/// Item indices ordered by descending score, ties by ascending index.
pub fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Mean over relevant items of precision at their rank in `ranking`,
/// truncated to the first `cutoff` ranks and normalized by
/// `min(|relevant|, cutoff)`. `None` when nothing is relevant.
pub fn average_precision_at(
    ranking: &[usize],
    relevant: &HashSet<usize>,
    cutoff: usize,
) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, item) in ranking.iter().take(cutoff).enumerate() {
        if relevant.contains(item) {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / relevant.len().min(cutoff) as f64)
}

/// Per-class average precision of `scores[sample][class]` against gold
/// label sets; `None` for classes without positives.
pub fn per_class_average_precision(
    scores: &[Vec<f64>],
    gold: &[HashSet<usize>],
) -> Result<Vec<Option<f64>>, EvalError> {
    check_lengths(scores.len(), gold.len())?;
    let n_classes = scores[0].len();
    if scores.iter().any(|r| r.len() != n_classes) {
        return Err(EvalError::Ragged);
    }
    Ok((0..n_classes)
        .map(|class| {
            let column: Vec<f64> = scores.iter().map(|r| r[class]).collect();
            let relevant: HashSet<usize> = gold
                .iter()
                .enumerate()
                .filter(|(_, g)| g.contains(&class))
                .map(|(i, _)| i)
                .collect();
            average_precision_at(&rank_desc(&column), &relevant, usize::MAX)
        })
        .collect())
}

/// Unweighted mean of per-class AP over classes with at least one positive.
pub fn mean_average_precision(
    scores: &[Vec<f64>],
    gold: &[HashSet<usize>],
) -> Result<f64, EvalError> {
    let aps: Vec<f64> = per_class_average_precision(scores, gold)?
        .into_iter()
        .flatten()
        .collect();
    if aps.is_empty() {
        return Err(EvalError::NoPositives);
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}
