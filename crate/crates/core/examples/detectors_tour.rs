//! Fit every detector kind with default hyperparameters and report near and
//! far AUROC on an in-memory synthetic benchmark.

use oodeval::protocol::evaluate_pair;
use oodeval::{synth, DetectorKind, DetectorSpec, FittedDetector, SynthSpec};

fn main() -> oodeval::Result<()> {
    let m = synth::build(&SynthSpec { n: 1000, ..SynthSpec::default() })?;
    println!("{:<10} {:>8} {:>8}", "detector", "near", "far");
    for kind in DetectorKind::ALL {
        let det = FittedDetector::fit(&DetectorSpec::new(kind), &m.id_train, &m.id_val, &m.head)?;
        let near = evaluate_pair(&det, &[&m.id_test], &m.near_ood[0])?;
        let far = evaluate_pair(&det, &[&m.id_test], &m.far_ood[0])?;
        println!("{:<10} {:>8.4} {:>8.4}  {}", kind, near.auroc, far.auroc, det.spec().label());
    }
    Ok(())
}
