//! Scores that read only the logits: MSP, temperature scaling, ODIN
//! (temperature only), max-logit and energy.

use crate::error::Result;
use crate::matrix::Matrix;
use crate::numeric::{logsumexp, to_f64};
use crate::repset::RepSet;

pub(super) fn score_rows(logits: &Matrix, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    logits.iter_rows().map(|z| f(&to_f64(z))).collect()
}

/// `max_c softmax(z / T)_c`, evaluated as `1 / Σ exp(z_c/T - max/T)`.
pub(super) fn max_softmax(z: &[f64], temperature: f64) -> f64 {
    let scaled: Vec<f64> = z.iter().map(|&v| v / temperature).collect();
    let m = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    1.0 / scaled.iter().map(|&v| (v - m).exp()).sum::<f64>()
}

pub(super) fn max_logit(z: &[f64]) -> f64 {
    z.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Negative energy `T · logsumexp(z / T)`.
pub(super) fn energy(z: &[f64], temperature: f64) -> f64 {
    let scaled: Vec<f64> = z.iter().map(|&v| v / temperature).collect();
    temperature * logsumexp(&scaled)
}

/// The 100 candidate temperatures, log-spaced over `[0.01, 100]`.
pub fn temperature_grid() -> Vec<f64> {
    (0..100)
        .map(|i| match i {
            0 => 0.01,
            99 => 100.0,
            _ => 10f64.powf(-2.0 + 4.0 * i as f64 / 99.0),
        })
        .collect()
}

/// Mean negative log-likelihood of the labels under `softmax(z / T)`.
pub(super) fn mean_nll(logits: &Matrix, labels: &[usize], temperature: f64) -> f64 {
    let total: f64 = logits
        .iter_rows()
        .zip(labels)
        .map(|(z, &y)| {
            let scaled: Vec<f64> = z.iter().map(|&v| v as f64 / temperature).collect();
            let m = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = scaled.iter().map(|&v| (v - m).exp()).sum();
            sum.ln() - (scaled[y] - m)
        })
        .sum();
    total / labels.len().max(1) as f64
}

/// Grid-searched temperature minimizing validation NLL; ties go to the
/// smaller temperature.
pub fn fit_temperature(id_val: &RepSet) -> Result<f64> {
    let labels = id_val.require_labels()?;
    let mut best = (f64::INFINITY, 0.0);
    for t in temperature_grid() {
        let nll = mean_nll(id_val.logits(), labels, t);
        if nll < best.0 {
            best = (nll, t);
        }
    }
    Ok(best.1)
}
