//! Leaderboard rendering (Markdown, CSV, JSON) and report comparison.
//!
//! Rendered numbers are percentages with two decimals; the JSON report keeps
//! full precision. CSV columns, in order:
//!
//! `mode,detector,hyperparams,near_auroc,near_aupr,near_fpr95,far_auroc,far_aupr,far_fpr95,id_accuracy`
//!
//! followed by `near_aupr_in,far_aupr_in` when AUPR-In output is requested.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::protocol::{AggregateReport, GroupAverage, Mode, Status};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SortKey {
    #[default]
    NearAuroc,
    FarAuroc,
    NearFpr95,
    FarFpr95,
    IdAccuracy,
    Name,
}

impl FromStr for SortKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "near-auroc" => SortKey::NearAuroc,
            "far-auroc" => SortKey::FarAuroc,
            "near-fpr95" => SortKey::NearFpr95,
            "far-fpr95" => SortKey::FarFpr95,
            "id-acc" => SortKey::IdAccuracy,
            "name" => SortKey::Name,
            other => {
                return Err(Error::ConfigInvalid(format!(
                    "unknown sort key `{other}` (near-auroc, far-auroc, near-fpr95, far-fpr95, id-acc, name)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RenderOptions {
    pub sort: SortKey,
    /// Also emit AUPR with ID as the positive class.
    pub aupr_in: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderboardRow {
    pub detector: String,
    pub hyperparams: String,
    pub mode: Mode,
    pub near: GroupAverage,
    pub far: GroupAverage,
    pub id_accuracy: f64,
}

/// Rows of successfully evaluated detectors for one mode, best first.
pub fn leaderboard(report: &AggregateReport, mode: Mode, sort: SortKey) -> Vec<LeaderboardRow> {
    let mut rows: Vec<LeaderboardRow> = report
        .detectors
        .iter()
        .filter(|d| d.status == Status::Ok)
        .filter_map(|d| {
            let r = d.mode(mode)?;
            let hp: Vec<String> = d.spec.hyperparams.iter().map(|(k, v)| format!("{k}={v}")).collect();
            Some(LeaderboardRow {
                detector: d.name.clone(),
                hyperparams: hp.join(", "),
                mode,
                near: r.near_ood_avg,
                far: r.far_ood_avg,
                id_accuracy: r.id_accuracy,
            })
        })
        .collect();
    let key = |r: &LeaderboardRow| -> f64 {
        match sort {
            SortKey::NearAuroc => -r.near.auroc,
            SortKey::FarAuroc => -r.far.auroc,
            SortKey::NearFpr95 => r.near.fpr95,
            SortKey::FarFpr95 => r.far.fpr95,
            SortKey::IdAccuracy => -r.id_accuracy,
            SortKey::Name => 0.0,
        }
    };
    rows.sort_by(|a, b| key(a).total_cmp(&key(b)).then_with(|| a.detector.cmp(&b.detector)));
    rows
}

pub fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

struct Column {
    header: &'static str,
    csv: &'static str,
    value: fn(&LeaderboardRow) -> f64,
    higher_is_better: bool,
}

fn columns(aupr_in: bool) -> Vec<Column> {
    let mut cols = vec![
        Column { header: "Near AUROC", csv: "near_auroc", value: |r| r.near.auroc, higher_is_better: true },
        Column { header: "Near AUPR", csv: "near_aupr", value: |r| r.near.aupr, higher_is_better: true },
        Column { header: "Near FPR@95", csv: "near_fpr95", value: |r| r.near.fpr95, higher_is_better: false },
        Column { header: "Far AUROC", csv: "far_auroc", value: |r| r.far.auroc, higher_is_better: true },
        Column { header: "Far AUPR", csv: "far_aupr", value: |r| r.far.aupr, higher_is_better: true },
        Column { header: "Far FPR@95", csv: "far_fpr95", value: |r| r.far.fpr95, higher_is_better: false },
        Column { header: "ID Acc.", csv: "id_accuracy", value: |r| r.id_accuracy, higher_is_better: true },
    ];
    if aupr_in {
        cols.push(Column { header: "Near AUPR-In", csv: "near_aupr_in", value: |r| r.near.aupr_in, higher_is_better: true });
        cols.push(Column { header: "Far AUPR-In", csv: "far_aupr_in", value: |r| r.far.aupr_in, higher_is_better: true });
    }
    cols
}

/// One table per mode, best value per column in bold, skipped detectors
/// listed after the tables.
pub fn to_markdown(report: &AggregateReport, opts: &RenderOptions) -> String {
    let cols = columns(opts.aupr_in);
    let mut out = String::new();
    for &mode in &report.modes {
        let rows = leaderboard(report, mode, opts.sort);
        let _ = writeln!(out, "## {} ({mode})\n", report.benchmark);
        let headers: Vec<&str> = ["Detector", "Hyperparams"]
            .into_iter()
            .chain(cols.iter().map(|c| c.header))
            .collect();
        let _ = writeln!(out, "| {} |", headers.join(" | "));
        let _ = writeln!(
            out,
            "|{}|",
            headers
                .iter()
                .enumerate()
                .map(|(i, _)| if i < 2 { "---" } else { "---:" })
                .collect::<Vec<_>>()
                .join("|")
        );
        let best: Vec<Option<f64>> = cols
            .iter()
            .map(|c| {
                rows.iter().map(|r| (c.value)(r)).reduce(|a, b| {
                    let better = if c.higher_is_better { b > a } else { b < a };
                    if better { b } else { a }
                })
            })
            .collect();
        for r in &rows {
            let mut cells = vec![r.detector.clone(), r.hyperparams.clone()];
            for (c, b) in cols.iter().zip(&best) {
                let v = (c.value)(r);
                let text = pct(v);
                cells.push(if Some(v) == *b { format!("**{text}**") } else { text });
            }
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
        out.push('\n');
    }
    let skipped: Vec<_> = report
        .detectors
        .iter()
        .filter(|d| d.status == Status::Skipped)
        .collect();
    if !skipped.is_empty() {
        out.push_str("Skipped:\n\n");
        for d in skipped {
            let _ = writeln!(out, "- {}: {}", d.name, d.skip_reason.as_deref().unwrap_or("unknown"));
        }
        out.push('\n');
    }
    out
}

pub fn to_csv(report: &AggregateReport, opts: &RenderOptions) -> String {
    let cols = columns(opts.aupr_in);
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let header: Vec<&str> = ["mode", "detector", "hyperparams"]
        .into_iter()
        .chain(cols.iter().map(|c| c.csv))
        .collect();
    w.write_record(&header).expect("in-memory csv");
    for &mode in &report.modes {
        for r in leaderboard(report, mode, opts.sort) {
            let mut rec = vec![mode.to_string(), r.detector.clone(), r.hyperparams.clone()];
            rec.extend(cols.iter().map(|c| pct((c.value)(&r))));
            w.write_record(&rec).expect("in-memory csv");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
}

pub fn to_json(report: &AggregateReport) -> String {
    report.to_json()
}

/// `b - a` for every metric of one detector in one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub detector: String,
    pub mode: Mode,
    pub near: GroupAverage,
    pub far: GroupAverage,
    pub id_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub only_a: Vec<String>,
    pub only_b: Vec<String>,
}

fn delta(a: &GroupAverage, b: &GroupAverage) -> GroupAverage {
    GroupAverage {
        auroc: b.auroc - a.auroc,
        aupr: b.aupr - a.aupr,
        aupr_in: b.aupr_in - a.aupr_in,
        fpr95: b.fpr95 - a.fpr95,
    }
}

/// Per-detector deltas `b - a` over detectors evaluated in both reports.
pub fn compare(a: &AggregateReport, b: &AggregateReport) -> Result<Comparison> {
    let ok = |r: &AggregateReport| -> Vec<String> {
        r.detectors
            .iter()
            .filter(|d| d.status == Status::Ok)
            .map(|d| d.name.clone())
            .collect()
    };
    let (names_a, names_b) = (ok(a), ok(b));
    let mut rows = Vec::new();
    for name in names_a.iter().filter(|n| names_b.contains(n)) {
        let (da, db) = (a.detector(name).unwrap(), b.detector(name).unwrap());
        for ra in &da.results {
            if let Some(rb) = db.mode(ra.mode) {
                rows.push(ComparisonRow {
                    detector: name.clone(),
                    mode: ra.mode,
                    near: delta(&ra.near_ood_avg, &rb.near_ood_avg),
                    far: delta(&ra.far_ood_avg, &rb.far_ood_avg),
                    id_accuracy: rb.id_accuracy - ra.id_accuracy,
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(Comparison {
        rows,
        only_a: names_a.iter().filter(|n| !names_b.contains(n)).cloned().collect(),
        only_b: names_b.iter().filter(|n| !names_a.contains(n)).cloned().collect(),
    })
}

fn signed_pct(v: f64) -> String {
    format!("{:+.2}", v * 100.0)
}

impl Comparison {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| Detector | Mode | Δ Near AUROC | Δ Near AUPR | Δ Near FPR@95 | Δ Far AUROC | Δ Far AUPR | Δ Far FPR@95 | Δ ID Acc. |\n\
             |---|---|---:|---:|---:|---:|---:|---:|---:|\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                r.detector,
                r.mode,
                signed_pct(r.near.auroc),
                signed_pct(r.near.aupr),
                signed_pct(r.near.fpr95),
                signed_pct(r.far.auroc),
                signed_pct(r.far.aupr),
                signed_pct(r.far.fpr95),
                signed_pct(r.id_accuracy),
            );
        }
        for (label, names) in [("Only in A", &self.only_a), ("Only in B", &self.only_b)] {
            if !names.is_empty() {
                let _ = write!(out, "\n{label}: {}\n", names.join(", "));
            }
        }
        out
    }
}
