use oodeval::detectors::DetectorKind;
use oodeval::synth::{mc_auroc_oracle, mc_auroc_oracle_at, SynthSpec};

fn spec() -> SynthSpec {
    SynthSpec {
        seed: 9,
        n: 1000,
        delta_far: 8.0,
        ..SynthSpec::default()
    }
}

#[test]
fn oracle_auroc_increases_with_near_shift() {
    let mut prev = 0.0;
    for delta in [0.5, 1.0, 2.0, 4.0] {
        let s = SynthSpec {
            delta_near: delta,
            ..spec()
        };
        let a = mc_auroc_oracle(&s, DetectorKind::Mds, 10_000).unwrap();
        assert!(a > prev, "delta {delta}: {a} not above {prev}");
        prev = a;
    }
}

#[test]
fn overlapping_distributions_give_chance() {
    for kind in [DetectorKind::Msp, DetectorKind::Knn] {
        let a = mc_auroc_oracle_at(&spec(), kind, 2000, 0.0).unwrap();
        assert!((a - 0.5).abs() <= 0.02, "{kind}: {a}");
    }
}

#[test]
fn oracle_is_reproducible() {
    let a = mc_auroc_oracle(&spec(), DetectorKind::Ebo, 1000).unwrap();
    let b = mc_auroc_oracle(&spec(), DetectorKind::Ebo, 1000).unwrap();
    assert_eq!(a, b);
}
