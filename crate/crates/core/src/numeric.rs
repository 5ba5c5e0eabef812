//! Small numeric kernels shared by detectors and metrics.

/// `log Σ exp(x_i)` using the max-shift form.
pub fn logsumexp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax<T: PartialOrd + Copy>(x: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] {
            best = i;
        }
    }
    best
}

/// Rank `q = ceil(p/100 * n)` clamped to `[1, n]`.
pub fn nearest_rank(p: f64, n: usize) -> usize {
    ((p * n as f64 / 100.0).ceil() as usize).clamp(1, n.max(1))
}

/// Nearest-rank percentile: the q-th smallest value, no interpolation.
pub fn percentile_nearest_rank(values: &[f32], p: f64) -> f32 {
    assert!(!values.is_empty(), "percentile of empty slice");
    let q = nearest_rank(p, values.len());
    let mut v = values.to_vec();
    let (_, kth, _) = v.select_nth_unstable_by(q - 1, f32::total_cmp);
    *kth
}

pub fn to_f64(x: &[f32]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}
