//! Grid search over ASH percentiles and variants on the validation splits.

use oodeval::detectors::default_grid;
use oodeval::protocol::hparam_search;
use oodeval::{synth, DetectorKind, DetectorSpec, Mode, SynthSpec};

fn main() -> oodeval::Result<()> {
    let m = synth::build(&SynthSpec { n: 800, ..SynthSpec::default() })?;
    let grid = default_grid(DetectorKind::Ash, m.id_train.penultimate().cols(), m.id_train.len());
    let outcome = hparam_search(&DetectorSpec::new(DetectorKind::Ash), &grid, &m, Mode::Standard)?;
    for t in &outcome.trials {
        let hp: Vec<String> = t.hyperparams.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{:<18} {:?}", hp.join(" "), t.val_auroc);
    }
    println!("chosen: {}", outcome.chosen.label());
    Ok(())
}
