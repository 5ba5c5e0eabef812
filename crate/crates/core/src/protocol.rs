//! Fit, search, and evaluate detectors over a benchmark manifest.
//!
//! For every detector the run (1) optionally searches its grid, fitting on ID
//! train and picking the point with the best AUROC of ID val against OOD val,
//! (2) fits the chosen spec on ID train, (3) scores every near- and far-OOD
//! test set against the ID side of each requested mode and (4) averages the
//! metrics per group. The ID side is ID test alone in standard mode and ID
//! test plus every covariate-shifted ID test set in full-spectrum mode.
//!
//! Detectors whose fit or scoring fails on this data are reported as skipped;
//! they never abort the run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{
    default_grid, DetectorKind, DetectorSpec, FittedDetector, Hyperparams, ScoreWarnings,
};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsRecord};
use crate::repset::{load_manifest, BenchmarkManifest, RepSet};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Standard,
    #[serde(rename = "fullspectrum")]
    FullSpectrum,
    Both,
}

impl Mode {
    /// The concrete evaluation modes this selection expands to.
    pub fn expand(self) -> Vec<Mode> {
        match self {
            Mode::Both => vec![Mode::Standard, Mode::FullSpectrum],
            m => vec![m],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Standard => "standard",
            Mode::FullSpectrum => "fullspectrum",
            Mode::Both => "both",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Mode::Standard),
            "fullspectrum" | "full-spectrum" => Ok(Mode::FullSpectrum),
            "both" => Ok(Mode::Both),
            other => Err(Error::ConfigInvalid(format!(
                "unknown mode `{other}` (standard, fullspectrum, both)"
            ))),
        }
    }
}

/// A detector entry in the run config; `name` defaults to the kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub spec: DetectorSpec,
}

impl DetectorEntry {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.spec.kind.name().to_string())
    }
}

impl From<DetectorSpec> for DetectorEntry {
    fn from(spec: DetectorSpec) -> Self {
        Self { name: None, spec }
    }
}

fn default_true() -> bool {
    true
}

/// Run configuration, as read from JSON:
///
/// ```json
/// {
///   "manifest": "bench/manifest.json",
///   "detectors": [{"kind": "ash", "hyperparams": {"p": 90, "variant": "S"}}],
///   "all_detectors": false,
///   "search": true,
///   "mode": "both",
///   "seed": 0,
///   "threads": 4,
///   "grids": {"knn": [{"k": 1}, {"k": 10}]}
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    #[serde(default)]
    pub detectors: Vec<DetectorEntry>,
    /// Appends every kind not already listed, with default hyperparameters.
    #[serde(default)]
    pub all_detectors: bool,
    #[serde(default = "default_true")]
    pub search: bool,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; `None` uses the available parallelism.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Per-kind grid overrides.
    #[serde(default)]
    pub grids: BTreeMap<DetectorKind, Vec<Hyperparams>>,
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>) -> Self {
        Self {
            manifest: manifest.into(),
            detectors: Vec::new(),
            all_detectors: false,
            search: true,
            mode: Mode::Standard,
            seed: 0,
            threads: None,
            grids: BTreeMap::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if cfg.manifest.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.manifest = dir.join(&cfg.manifest);
            }
        }
        Ok(cfg)
    }

    /// Detector list after expanding `all_detectors`.
    pub fn resolved_detectors(&self) -> Vec<DetectorEntry> {
        let mut out = self.detectors.clone();
        if self.all_detectors {
            for kind in DetectorKind::ALL {
                if !out.iter().any(|e| e.spec.kind == kind && e.name.is_none()) {
                    out.push(DetectorSpec::new(kind).into());
                }
            }
        }
        out
    }

    /// Checks detector specs, names, grids and mode against the manifest.
    pub fn validate(&self, manifest: &BenchmarkManifest) -> Result<Vec<DetectorEntry>> {
        let entries = self.resolved_detectors();
        if entries.is_empty() {
            return Err(Error::ConfigInvalid("no detectors selected".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for e in &entries {
            e.spec.params()?;
            if !names.insert(e.display_name()) {
                return Err(Error::ConfigInvalid(format!(
                    "detector name `{}` used twice; give entries distinct `name`s",
                    e.display_name()
                )));
            }
        }
        for (kind, grid) in &self.grids {
            for point in grid {
                DetectorSpec {
                    kind: *kind,
                    hyperparams: point.clone(),
                }
                .params()?;
            }
        }
        if self.mode != Mode::Standard && manifest.csid_tests.is_empty() {
            return Err(Error::ConfigInvalid(format!(
                "mode `{}` needs covariate-shifted ID test sets, manifest `{}` has none",
                self.mode, manifest.name
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::ConfigInvalid("threads must be at least 1".into()));
        }
        Ok(entries)
    }

    fn grid_for(&self, kind: DetectorKind, manifest: &BenchmarkManifest) -> Vec<Hyperparams> {
        self.grids.get(&kind).cloned().unwrap_or_else(|| {
            default_grid(
                kind,
                manifest.id_train.penultimate().cols(),
                manifest.id_train.len(),
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrial {
    pub hyperparams: Hyperparams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_auroc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub chosen: DetectorSpec,
    pub trials: Vec<SearchTrial>,
}

/// Validation AUROC of `spec`: fit on ID train, ID val against OOD val.
pub fn validation_auroc(spec: &DetectorSpec, manifest: &BenchmarkManifest) -> Result<f64> {
    let fitted = FittedDetector::fit(spec, &manifest.id_train, &manifest.id_val, &manifest.head)?;
    let id = fitted.score(&manifest.id_val)?;
    let ood = fitted.score(&manifest.ood_val)?;
    metrics::auroc(&id.values, &ood.values)
}

/// Grid search over `grid` merged onto `base`'s hyperparameters. Returns the
/// point with the highest validation AUROC, earliest on ties. Points that
/// fail to fit are recorded and passed over.
///
/// Both modes validate on ID val only: there is no covariate-shifted
/// validation split, and using csID test data would leak it.
pub fn hparam_search(
    base: &DetectorSpec,
    grid: &[Hyperparams],
    manifest: &BenchmarkManifest,
    _mode: Mode,
) -> Result<SearchOutcome> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let candidates: Vec<DetectorSpec> = grid
        .iter()
        .map(|point| {
            let mut spec = base.clone();
            spec.hyperparams.extend(point.clone());
            spec
        })
        .collect();
    let results: Vec<Result<f64>> = candidates
        .par_iter()
        .map(|spec| validation_auroc(spec, manifest))
        .collect();

    let mut best: Option<(f64, usize)> = None;
    let mut first_err = None;
    let mut trials = Vec::with_capacity(grid.len());
    for (i, (point, r)) in grid.iter().zip(results).enumerate() {
        match r {
            Ok(a) => {
                if best.is_none_or(|(b, _)| a > b) {
                    best = Some((a, i));
                }
                trials.push(SearchTrial {
                    hyperparams: point.clone(),
                    val_auroc: Some(a),
                    error: None,
                });
            }
            Err(e) => {
                trials.push(SearchTrial {
                    hyperparams: point.clone(),
                    val_auroc: None,
                    error: Some(e.to_string()),
                });
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some((_, i)) => Ok(SearchOutcome {
            chosen: candidates[i].clone(),
            trials,
        }),
        None => Err(first_err.expect("non-empty grid")),
    }
}

/// Scores the concatenated ID side and one OOD set.
pub fn evaluate_pair(
    fitted: &FittedDetector,
    id_side: &[&RepSet],
    ood_set: &RepSet,
) -> Result<MetricsRecord> {
    if id_side.is_empty() {
        return Err(Error::EmptyInput("empty ID side"));
    }
    let id = RepSet::concat("id_side", id_side)?;
    let id_scores = fitted.score(&id)?;
    let ood_scores = fitted.score(ood_set)?;
    MetricsRecord::compute(&id_scores.values, &ood_scores.values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub dataset: String,
    #[serde(flatten)]
    pub metrics: MetricsRecord,
}

/// Arithmetic means of per-dataset metrics within one OOD group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupAverage {
    pub auroc: f64,
    pub aupr: f64,
    pub aupr_in: f64,
    pub fpr95: f64,
}

impl GroupAverage {
    pub fn of(rows: &[DatasetMetrics]) -> Self {
        let n = rows.len() as f64;
        let mean = |f: fn(&MetricsRecord) -> f64| rows.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
        Self {
            auroc: mean(|m| m.auroc),
            aupr: mean(|m| m.aupr),
            aupr_in: mean(|m| m.aupr_in),
            fpr95: mean(|m| m.fpr95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: Mode,
    pub id_accuracy: f64,
    pub near_ood: Vec<DatasetMetrics>,
    pub far_ood: Vec<DatasetMetrics>,
    pub near_ood_avg: GroupAverage,
    pub far_ood_avg: GroupAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub name: String,
    /// Chosen spec with every default filled in.
    pub spec: DetectorSpec,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<Vec<SearchTrial>>,
    #[serde(default)]
    pub results: Vec<ModeReport>,
    #[serde(default, skip_serializing_if = "ScoreWarnings::is_empty")]
    pub warnings: ScoreWarnings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl DetectorReport {
    pub fn mode(&self, mode: Mode) -> Option<&ModeReport> {
        self.results.iter().find(|r| r.mode == mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub benchmark: String,
    pub modes: Vec<Mode>,
    pub search: bool,
    pub seed: u64,
    pub detectors: Vec<DetectorReport>,
}

impl AggregateReport {
    pub fn detector(&self, name: &str) -> Option<&DetectorReport> {
        self.detectors.iter().find(|d| d.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("<report>", e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

fn notes_for(kind: DetectorKind) -> Vec<String> {
    match kind {
        DetectorKind::OdinT => vec!["temperature-only ODIN: no input perturbation".into()],
        DetectorKind::MdsEns => vec!["layers combined by unweighted mean".into()],
        _ => Vec::new(),
    }
}

/// Loads the manifest named in `config` and runs it.
pub fn run(config: &RunConfig) -> Result<AggregateReport> {
    let manifest = load_manifest(&config.manifest)?;
    run_manifest(&manifest, config)
}

/// Runs `config` on an already loaded manifest (`config.manifest` is ignored).
pub fn run_manifest(manifest: &BenchmarkManifest, config: &RunConfig) -> Result<AggregateReport> {
    let entries = config.validate(manifest)?;
    let threads = config.threads.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?;
    let modes = config.mode.expand();
    let detectors = pool.install(|| {
        entries
            .par_iter()
            .map(|e| evaluate_detector(e, manifest, config, &modes))
            .collect::<Vec<_>>()
    });
    Ok(AggregateReport {
        benchmark: manifest.name.clone(),
        modes,
        search: config.search,
        seed: config.seed,
        detectors,
    })
}

fn evaluate_detector(
    entry: &DetectorEntry,
    manifest: &BenchmarkManifest,
    config: &RunConfig,
    modes: &[Mode],
) -> DetectorReport {
    let mut report = DetectorReport {
        name: entry.display_name(),
        spec: entry.spec.clone(),
        status: Status::Ok,
        skip_reason: None,
        search: None,
        results: Vec::new(),
        warnings: ScoreWarnings::default(),
        notes: notes_for(entry.spec.kind),
    };
    let mut spec = entry.spec.clone();
    if config.search {
        let grid = config.grid_for(spec.kind, manifest);
        if !grid.is_empty() {
            match hparam_search(&spec, &grid, manifest, config.mode) {
                Ok(outcome) => {
                    spec = outcome.chosen;
                    report.search = Some(outcome.trials);
                }
                Err(e) => return skipped(report, e),
            }
        }
    }
    let fitted = match FittedDetector::fit(&spec, &manifest.id_train, &manifest.id_val, &manifest.head) {
        Ok(f) => f,
        Err(e) => return skipped(report, e),
    };
    report.spec = fitted.spec().clone();
    match evaluate_modes(&fitted, manifest, modes) {
        Ok((results, warnings)) => {
            report.results = results;
            report.warnings = warnings;
            report
        }
        Err(e) => skipped(report, e),
    }
}

fn skipped(mut report: DetectorReport, e: Error) -> DetectorReport {
    report.status = Status::Skipped;
    report.skip_reason = Some(e.to_string());
    report
}

fn evaluate_modes(
    fitted: &FittedDetector,
    manifest: &BenchmarkManifest,
    modes: &[Mode],
) -> Result<(Vec<ModeReport>, ScoreWarnings)> {
    let mut warnings = ScoreWarnings::default();
    let mut score = |set: &RepSet| -> Result<Vec<f64>> {
        let s = fitted.score(set)?;
        warnings.merge(s.warnings);
        Ok(s.values)
    };
    let id_test = score(&manifest.id_test)?;
    let csid: Vec<Vec<f64>> = if modes.contains(&Mode::FullSpectrum) {
        manifest.csid_tests.iter().map(&mut score).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let near: Vec<Vec<f64>> = manifest.near_ood.iter().map(&mut score).collect::<Result<_>>()?;
    let far: Vec<Vec<f64>> = manifest.far_ood.iter().map(&mut score).collect::<Result<_>>()?;

    let mut reports = Vec::new();
    for &mode in modes {
        let (id_side, accuracy) = match mode {
            Mode::Standard => (id_test.clone(), metrics::id_accuracy([&manifest.id_test])?),
            Mode::FullSpectrum => {
                let mut all = id_test.clone();
                for c in &csid {
                    all.extend_from_slice(c);
                }
                let sets = std::iter::once(&manifest.id_test).chain(&manifest.csid_tests);
                (all, metrics::id_accuracy(sets)?)
            }
            Mode::Both => unreachable!("expanded"),
        };
        let group = |sets: &[RepSet], scores: &[Vec<f64>]| -> Result<Vec<DatasetMetrics>> {
            sets.par_iter()
                .zip(scores.par_iter())
                .map(|(set, s)| {
                    Ok(DatasetMetrics {
                        dataset: set.name().to_string(),
                        metrics: MetricsRecord::compute(&id_side, s)?,
                    })
                })
                .collect()
        };
        let near_ood = group(&manifest.near_ood, &near)?;
        let far_ood = group(&manifest.far_ood, &far)?;
        reports.push(ModeReport {
            mode,
            id_accuracy: accuracy,
            near_ood_avg: GroupAverage::of(&near_ood),
            far_ood_avg: GroupAverage::of(&far_ood),
            near_ood,
            far_ood,
        });
    }
    Ok((reports, warnings))
}
