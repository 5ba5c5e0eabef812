use crate::numeric::{softmax, to_f64};
use crate::repset::RepSet;

/// L1 norm of the last-layer weight gradient of `KL(uniform ‖ softmax(z))`.
/// That gradient is the outer product `(p - 1/C) fᵀ`, whose entrywise L1 norm
/// factors into `‖p - 1/C‖₁ · ‖f‖₁`.
pub(super) fn score(batch: &RepSet) -> Vec<f64> {
    batch
        .logits()
        .iter_rows()
        .zip(batch.penultimate().iter_rows())
        .map(|(z, f)| {
            let p = softmax(&to_f64(z));
            let u = 1.0 / p.len() as f64;
            let dp: f64 = p.iter().map(|&v| (v - u).abs()).sum();
            let df: f64 = f.iter().map(|&v| (v as f64).abs()).sum();
            dp * df
        })
        .collect()
}
