//! Generate a small synthetic benchmark, evaluate two detectors, print the
//! leaderboard.

use oodeval::report::{self, RenderOptions};
use oodeval::{protocol, synth, DetectorKind, DetectorSpec, RunConfig, SynthSpec};

fn main() -> oodeval::Result<()> {
    let dir = std::env::temp_dir().join("oodeval-quickstart");
    let manifest = synth::generate(&SynthSpec { n: 500, ..SynthSpec::default() }, &dir)?;

    let mut cfg = RunConfig::new(manifest);
    cfg.detectors.push(DetectorSpec::new(DetectorKind::Ebo).into());
    cfg.detectors.push(DetectorSpec::new(DetectorKind::Mds).into());
    let report = protocol::run(&cfg)?;

    print!("{}", report::to_markdown(&report, &RenderOptions::default()));
    Ok(())
}
