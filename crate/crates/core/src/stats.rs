//! Small descriptive-statistics helpers shared by several stages.

use alloc::vec::Vec;

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total
}

/// Average-rank percentile normalisation to `[0, 1]`.
///
/// The smallest value maps to 0 and the largest to 1; tied values share the
/// mean of their ranks. A constant (or single-element) series maps to 0.5.
pub fn percentile_rank(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = alloc::vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    if n == 1 || values[order[0]] == values[order[n - 1]] {
        return alloc::vec![0.5; n];
    }
    let top = (n - 1) as f64;
    ranks.iter().map(|r| r / top).collect()
}

/// Quantile with linear interpolation between order statistics (`q` in [0,1]).
pub fn quantile_linear(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn rmse(pred: &[f64], obs: &[f64]) -> f64 {
    let sq: f64 = pred.iter().zip(obs).map(|(p, o)| (p - o) * (p - o)).sum();
    libm::sqrt(sq / pred.len() as f64)
}

pub fn mae(pred: &[f64], obs: &[f64]) -> f64 {
    pred.iter().zip(obs).map(|(p, o)| libm::fabs(p - o)).sum::<f64>() / pred.len() as f64
}
