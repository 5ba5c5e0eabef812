use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oodeval::protocol::{AggregateReport, Mode, Status};
use oodeval::report::{self, pct};
use oodeval::synth::{self, SynthSpec};

fn oodeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oodeval"))
        .env_remove("OODEVAL_THREADS")
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn bench(dir: &Path, extra_layer: bool) -> PathBuf {
    let spec = SynthSpec {
        seed: 5,
        n: 200,
        extra_layer,
        ..SynthSpec::default()
    };
    synth::generate(&spec, dir.join("bench")).unwrap()
}

#[test]
fn single_detector_run() {
    let dir = tempfile::tempdir().unwrap();
    let m = bench(dir.path(), true);
    let out = dir.path().join("r.json");
    let o = oodeval(&["run", "--manifest", s(&m), "--detector", "msp", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let r = AggregateReport::load(&out).unwrap();
    assert_eq!(r.detectors.len(), 1);
    assert_eq!(r.detectors[0].name, "msp");
    assert_eq!(r.modes, vec![Mode::Standard]);
}

#[test]
fn unknown_detector_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let m = bench(dir.path(), true);
    let o = oodeval(&["run", "--manifest", s(&m), "--detector", "nosuch"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("nosuch"), "{err}");
    for kind in ["msp", "ebo", "mds", "knn", "vim", "ash", "openmax"] {
        assert!(err.contains(kind), "{err}");
    }
}

#[test]
fn all_detectors_skip_ensemble_without_extra_layers() {
    let dir = tempfile::tempdir().unwrap();
    let m = bench(dir.path(), false);
    let out = dir.path().join("r.json");
    let o = oodeval(&["run", "--manifest", s(&m), "--all-detectors", "--no-search", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = AggregateReport::load(&out).unwrap();
    assert_eq!(r.detectors.len(), 17);
    let ens = r.detector("mdsens").unwrap();
    assert_eq!(ens.status, Status::Skipped);
    assert!(ens.results.is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("mdsens"));
    assert!(r.detectors.iter().filter(|d| d.name != "mdsens").all(|d| d.status == Status::Ok));
    let md = report::to_markdown(&r, &Default::default());
    assert!(md.contains("Skipped:") && md.contains("- mdsens:"), "{md}");
}

#[test]
fn help_and_usage_exit_codes() {
    for args in [&["--help"][..], &["run", "--help"], &["report", "--help"], &["compare", "--help"], &["synth", "--help"]] {
        let o = oodeval(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}");
        assert!(!o.stdout.is_empty());
    }
    assert_eq!(oodeval(&["run", "--bogus"]).status.code(), Some(1));
    assert_eq!(oodeval(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(oodeval(&[]).status.code(), Some(1));
    let o = oodeval(&["run", "--manifest", "/nonexistent/manifest.json", "--detector", "msp"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(oodeval(&["report", "/nonexistent/r.json"]).status.code(), Some(2));
}

#[test]
fn threads_fall_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let m = bench(dir.path(), true);
    let run = |env: &str| {
        Command::new(env!("CARGO_BIN_EXE_oodeval"))
            .env("OODEVAL_THREADS", env)
            .args(["run", "--manifest", s(&m), "--detector", "knn"])
            .output()
            .unwrap()
    };
    let one = run("1");
    assert!(one.status.success());
    assert_eq!(one.stdout, run("3").stdout);
    assert_eq!(run("0").status.code(), Some(1));
}

/// Numbers in the Markdown tables, keyed by (mode, detector).
fn parse_tables(md: &str) -> Vec<(String, String, Vec<f64>)> {
    let mut out = Vec::new();
    let mut mode = String::new();
    for line in md.lines() {
        if let Some(h) = line.strip_prefix("## ") {
            mode = h.rsplit('(').next().unwrap().trim_end_matches(')').to_string();
        } else if line.starts_with("| ") && !line.starts_with("| Detector") {
            let cells: Vec<&str> = line.trim_matches('|').split('|').map(str::trim).collect();
            let nums = cells[2..].iter().map(|c| c.trim_matches('*').parse().unwrap()).collect();
            out.push((mode.clone(), cells[0].to_string(), nums));
        }
    }
    out
}

#[test]
fn markdown_parses_back_to_json_values() {
    let dir = tempfile::tempdir().unwrap();
    let m = bench(dir.path(), true);
    let out = dir.path().join("r.json");
    let o = oodeval(&["run", "--manifest", s(&m), "--all-detectors", "--mode", "both", "--out", s(&out)]);
    assert!(o.status.success());
    let md = oodeval(&["report", s(&out), "--format", "md", "--aupr-in"]);
    assert!(md.status.success());
    let md = String::from_utf8(md.stdout).unwrap();
    let r = AggregateReport::load(&out).unwrap();
    let rows = parse_tables(&md);
    assert_eq!(rows.len(), 2 * 17);
    for (mode, name, nums) in rows {
        let mr = r.detector(&name).unwrap().mode(mode.parse().unwrap()).unwrap();
        let expect = [
            mr.near_ood_avg.auroc,
            mr.near_ood_avg.aupr,
            mr.near_ood_avg.fpr95,
            mr.far_ood_avg.auroc,
            mr.far_ood_avg.aupr,
            mr.far_ood_avg.fpr95,
            mr.id_accuracy,
            mr.near_ood_avg.aupr_in,
            mr.far_ood_avg.aupr_in,
        ];
        assert_eq!(nums.len(), expect.len());
        for (got, want) in nums.iter().zip(expect) {
            assert!((got - want * 100.0).abs() <= 0.005 + 1e-9, "{name} {mode}: {got} vs {want}");
            assert_eq!(format!("{got:.2}"), pct(want));
        }
    }
    // rows within each table are sorted by near AUROC descending
    for mode in [Mode::Standard, Mode::FullSpectrum] {
        let lb = report::leaderboard(&r, mode, Default::default());
        assert!(lb.windows(2).all(|w| w[0].near.auroc >= w[1].near.auroc));
    }
}

#[test]
fn csv_json_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let m = bench(dir.path(), true);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let base = ["run", "--manifest", s(&m), "--detector", "msp", "--detector", "knn", "--detector", "react"];
    assert!(oodeval(&[&base[..], &["--no-search", "--out", s(&a)]].concat()).status.success());
    let with_search = [&base[..], &["--detector", "ebo", "--search", "--out", s(&b)]].concat();
    assert!(oodeval(&with_search).status.success());

    let csv = oodeval(&["report", s(&a), "--format", "csv"]);
    let csv = String::from_utf8(csv.stdout).unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    assert_eq!(reader.headers().unwrap().len(), 10);
    assert_eq!(reader.records().count(), 3);

    let json = oodeval(&["report", s(&a), "--format", "json"]);
    assert_eq!(json.stdout, std::fs::read(&a).unwrap());

    let cmp = oodeval(&["compare", s(&a), s(&b)]);
    assert!(cmp.status.success());
    let text = String::from_utf8(cmp.stdout).unwrap();
    assert!(text.contains("Only in B: ebo"), "{text}");

    let (ra, rb) = (AggregateReport::load(&a).unwrap(), AggregateReport::load(&b).unwrap());
    let c = report::compare(&ra, &rb).unwrap();
    for row in &c.rows {
        let (x, y) = (
            ra.detector(&row.detector).unwrap().mode(row.mode).unwrap(),
            rb.detector(&row.detector).unwrap().mode(row.mode).unwrap(),
        );
        assert!((row.near.auroc - (y.near_ood_avg.auroc - x.near_ood_avg.auroc)).abs() <= 1e-12);
    }
    let same = report::compare(&ra, &ra).unwrap();
    assert!(same.rows.iter().all(|r| r.near.auroc == 0.0 && r.far.fpr95 == 0.0 && r.id_accuracy == 0.0));

    let disjoint = dir.path().join("d.json");
    assert!(oodeval(&["run", "--manifest", s(&m), "--detector", "she", "--out", s(&disjoint)]).status.success());
    assert_eq!(oodeval(&["compare", s(&a), s(&disjoint)]).status.code(), Some(1));
}

#[test]
fn synth_subcommand_writes_loadable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = oodeval(&["synth", "--seed", "7", "--out", s(&out), "--n", "50", "--d", "6", "--classes", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = oodeval::load_manifest(out.join("manifest.json")).unwrap();
    assert_eq!((m.num_classes, m.id_train.len()), (3, 50));
    let bad = oodeval(&["synth", "--out", s(&out), "--delta-near", "5", "--delta-far", "1"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    bench(dir.path(), true);
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"manifest": "bench/manifest.json",
            "detectors": [{"kind": "ash", "hyperparams": {"p": 80, "variant": "B"}},
                          {"name": "ash-s", "kind": "ash", "hyperparams": {"p": 90}}],
            "search": false}"#,
    )
    .unwrap();
    let o = oodeval(&["run", "--config", s(&cfg), "--mode", "fullspectrum"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = AggregateReport::from_json(std::str::from_utf8(&o.stdout).unwrap()).unwrap();
    assert_eq!(r.modes, vec![Mode::FullSpectrum]);
    let names: Vec<_> = r.detectors.iter().map(|d| d.name.as_str()).collect();
    assert_eq!(names, ["ash", "ash-s"]);
    assert_eq!(r.detectors[1].spec.label(), "ash(p=90,variant=S)");
}
