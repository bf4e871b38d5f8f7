//! Percentile bootstrap over per-sample evaluation outcomes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EvalError;

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Linear-interpolated quantile of sorted values (`q` in `[0, 1]`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Resamples `outcomes` with replacement `n_bootstrap` times and returns the
/// `(alpha/2, 1 - alpha/2)` percentiles of `metric` over the resamples.
///
/// A resample on which `metric` returns `None` is replaced by a fresh draw;
/// at most `10 * n_bootstrap` draws are attempted in total.
pub fn bootstrap_ci<T, F>(
    outcomes: &[T],
    metric: F,
    n_bootstrap: usize,
    seed: u64,
    alpha: f64,
) -> Result<(f64, f64), EvalError>
where
    T: Clone,
    F: Fn(&[T]) -> Option<f64>,
{
    if outcomes.is_empty() {
        return Err(EvalError::Empty("outcomes"));
    }
    if n_bootstrap == 0 {
        return Err(EvalError::Bootstrap(
            "n_bootstrap must be at least 1".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EvalError::Bootstrap(format!("alpha {alpha} not in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = outcomes.len();
    let max_draws = 10 * n_bootstrap;
    let mut values = Vec::with_capacity(n_bootstrap);
    let mut sample = Vec::with_capacity(n);
    let mut draws = 0;
    while values.len() < n_bootstrap {
        if draws == max_draws {
            return Err(EvalError::Bootstrap(format!(
                "metric undefined on {} of {draws} resamples",
                draws - values.len()
            )));
        }
        draws += 1;
        sample.clear();
        sample.extend((0..n).map(|_| outcomes[rng.gen_range(0..n)].clone()));
        if let Some(v) = metric(&sample) {
            values.push(v);
        }
    }
    values.sort_by(f64::total_cmp);
    Ok((
        quantile(&values, alpha / 2.0),
        quantile(&values, 1.0 - alpha / 2.0),
    ))
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}
