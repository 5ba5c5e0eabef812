//! Run all detectors with and without tuning, then render CSV and a
//! comparison table of the two reports.

use oodeval::report::{self, RenderOptions, SortKey};
use oodeval::{protocol, synth, RunConfig, SynthSpec};

fn main() -> oodeval::Result<()> {
    let m = synth::build(&SynthSpec { n: 600, ..SynthSpec::default() })?;
    let mut cfg = RunConfig::new("in-memory");
    cfg.all_detectors = true;
    cfg.search = false;
    let plain = protocol::run_manifest(&m, &cfg)?;
    cfg.search = true;
    let tuned = protocol::run_manifest(&m, &cfg)?;

    let opts = RenderOptions { sort: SortKey::FarAuroc, aupr_in: false };
    print!("{}", report::to_csv(&tuned, &opts));
    println!();
    print!("{}", report::compare(&plain, &tuned)?.to_markdown());
    Ok(())
}
