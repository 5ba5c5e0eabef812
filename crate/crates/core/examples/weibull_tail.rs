//! Fit a Weibull tail by maximum likelihood, as OpenMax does per class.

use oodeval::detectors::weibull::{fit_mle, TailModel};
use oodeval::synth::SynthRng;

fn main() {
    let mut rng = SynthRng::new(1, 0);
    let draws: Vec<f64> = (0..10_000)
        .map(|_| 3.0 * (-(1.0 - rng.uniform()).ln()).powf(0.5))
        .collect();
    let (shape, scale) = fit_mle(&draws).expect("positive samples");
    println!("MLE shape {shape:.4}, scale {scale:.4} (true 2, 3)");

    let tail = TailModel::fit_tail(&draws, 20);
    for x in [4.0, 6.0, 8.0, 10.0] {
        println!("tail cdf({x}) = {:.4}", tail.cdf(x));
    }
}
