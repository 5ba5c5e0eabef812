//! Post-hoc detectors as fit-then-score procedures.
//!
//! Every detector produces an ID-confidence score: higher means more
//! in-distribution. Metrics negate internally where OOD is the positive
//! class, so no detector needs its own sign handling.

mod gradnorm;
mod klm;
mod knn;
mod logit;
mod mahalanobis;
mod openmax;
mod rectified;
mod she;
mod vim;
pub mod weibull;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::repset::{ClassifierHead, RepSet};

pub use klm::KlmState;
pub use knn::KnnState;
pub use logit::{fit_temperature, temperature_grid};
pub use mahalanobis::{GaussianFit, MdsState, RmdsState};
pub use openmax::OpenmaxState;
pub use rectified::{AshVariant, DiceState, ReactState};
pub use she::SheState;
pub use vim::VimState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Msp,
    #[serde(rename = "tempscale")]
    TempScale,
    OdinT,
    Mls,
    Ebo,
    Klm,
    Mds,
    #[serde(rename = "mdsens")]
    MdsEns,
    Rmds,
    Knn,
    Vim,
    React,
    Dice,
    Ash,
    #[serde(rename = "gradnorm")]
    GradNorm,
    She,
    #[serde(rename = "openmax")]
    OpenMax,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 17] = [
        DetectorKind::Msp,
        DetectorKind::TempScale,
        DetectorKind::OdinT,
        DetectorKind::Mls,
        DetectorKind::Ebo,
        DetectorKind::Klm,
        DetectorKind::Mds,
        DetectorKind::MdsEns,
        DetectorKind::Rmds,
        DetectorKind::Knn,
        DetectorKind::Vim,
        DetectorKind::React,
        DetectorKind::Dice,
        DetectorKind::Ash,
        DetectorKind::GradNorm,
        DetectorKind::She,
        DetectorKind::OpenMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Msp => "msp",
            DetectorKind::TempScale => "tempscale",
            DetectorKind::OdinT => "odin_t",
            DetectorKind::Mls => "mls",
            DetectorKind::Ebo => "ebo",
            DetectorKind::Klm => "klm",
            DetectorKind::Mds => "mds",
            DetectorKind::MdsEns => "mdsens",
            DetectorKind::Rmds => "rmds",
            DetectorKind::Knn => "knn",
            DetectorKind::Vim => "vim",
            DetectorKind::React => "react",
            DetectorKind::Dice => "dice",
            DetectorKind::Ash => "ash",
            DetectorKind::GradNorm => "gradnorm",
            DetectorKind::She => "she",
            DetectorKind::OpenMax => "openmax",
        }
    }

    /// Hyperparameter names the kind accepts.
    pub fn hyperparam_names(self) -> &'static [&'static str] {
        match self {
            DetectorKind::TempScale | DetectorKind::OdinT | DetectorKind::Ebo => &["T"],
            DetectorKind::Mds | DetectorKind::MdsEns | DetectorKind::Rmds => &["eps_scale"],
            DetectorKind::Knn => &["k"],
            DetectorKind::Vim => &["D"],
            DetectorKind::React | DetectorKind::Dice => &["p"],
            DetectorKind::Ash => &["p", "variant"],
            DetectorKind::OpenMax => &["eta", "alpha_top"],
            _ => &[],
        }
    }

    fn needs_train_labels(self) -> bool {
        matches!(
            self,
            DetectorKind::Klm
                | DetectorKind::Mds
                | DetectorKind::MdsEns
                | DetectorKind::Rmds
                | DetectorKind::She
                | DetectorKind::OpenMax
                | DetectorKind::TempScale
        )
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownDetector {
                name: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

/// A hyperparameter value as written in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Number(f64),
    Text(String),
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Number(v) => write!(f, "{v}"),
            HyperValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for HyperValue {
    fn from(v: f64) -> Self {
        HyperValue::Number(v)
    }
}

impl From<&str> for HyperValue {
    fn from(v: &str) -> Self {
        HyperValue::Text(v.to_string())
    }
}

pub type Hyperparams = BTreeMap<String, HyperValue>;

/// Detector kind plus hyperparameters, e.g.
/// `{"kind":"ash","hyperparams":{"p":90,"variant":"S"}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    #[serde(default)]
    pub hyperparams: Hyperparams,
}

impl DetectorSpec {
    pub fn new(kind: DetectorKind) -> Self {
        Self {
            kind,
            hyperparams: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: impl Into<HyperValue>) -> Self {
        self.hyperparams.insert(name.to_string(), value.into());
        self
    }

    /// Short label such as `ash(p=90,variant=S)`.
    pub fn label(&self) -> String {
        if self.hyperparams.is_empty() {
            return self.kind.name().to_string();
        }
        let inner: Vec<String> = self
            .hyperparams
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!("{}({})", self.kind, inner.join(","))
    }

    /// Validates names and ranges and fills defaults.
    pub fn params(&self) -> Result<Params> {
        let kind = self.kind;
        let bad = |detail: String| Error::InvalidHyperparam {
            kind: kind.name().to_string(),
            detail,
        };
        for key in self.hyperparams.keys() {
            if !kind.hyperparam_names().contains(&key.as_str()) {
                return Err(bad(format!(
                    "unknown hyperparameter `{key}` (accepted: {:?})",
                    kind.hyperparam_names()
                )));
            }
        }
        let num = |key: &str| -> Result<Option<f64>> {
            match self.hyperparams.get(key) {
                None => Ok(None),
                Some(HyperValue::Number(v)) if v.is_finite() => Ok(Some(*v)),
                Some(v) => Err(bad(format!("`{key}` must be a finite number, got {v}"))),
            }
        };
        let int = |key: &str, min: usize| -> Result<Option<usize>> {
            match num(key)? {
                None => Ok(None),
                Some(v) if v.fract() == 0.0 && v >= min as f64 => Ok(Some(v as usize)),
                Some(v) => Err(bad(format!("`{key}` must be an integer >= {min}, got {v}"))),
            }
        };
        let temperature = |default: Option<f64>| -> Result<Option<f64>> {
            match num("T")? {
                Some(t) if t <= 0.0 => Err(bad(format!("`T` must be positive, got {t}"))),
                Some(t) => Ok(Some(t)),
                None => Ok(default),
            }
        };
        let percentile = |default: f64| -> Result<f64> {
            let p = num("p")?.unwrap_or(default);
            if !(0.0..=100.0).contains(&p) {
                return Err(bad(format!("`p` must lie in [0, 100], got {p}")));
            }
            Ok(p)
        };
        let eps_scale = || -> Result<f64> {
            let e = num("eps_scale")?.unwrap_or(DEFAULT_EPS_SCALE);
            if e < 0.0 {
                return Err(bad(format!("`eps_scale` must be >= 0, got {e}")));
            }
            Ok(e)
        };
        Ok(match kind {
            DetectorKind::Msp => Params::Msp,
            DetectorKind::TempScale => Params::TempScale {
                temperature: temperature(None)?,
            },
            DetectorKind::OdinT => Params::OdinT {
                temperature: temperature(Some(1000.0))?.unwrap(),
            },
            DetectorKind::Mls => Params::Mls,
            DetectorKind::Ebo => Params::Ebo {
                temperature: temperature(Some(1.0))?.unwrap(),
            },
            DetectorKind::Klm => Params::Klm,
            DetectorKind::Mds => Params::Mds {
                eps_scale: eps_scale()?,
            },
            DetectorKind::MdsEns => Params::MdsEns {
                eps_scale: eps_scale()?,
            },
            DetectorKind::Rmds => Params::Rmds {
                eps_scale: eps_scale()?,
            },
            DetectorKind::Knn => Params::Knn {
                k: int("k", 1)?.unwrap_or(50),
            },
            DetectorKind::Vim => Params::Vim { dim: int("D", 1)? },
            DetectorKind::React => Params::React {
                percentile: percentile(90.0)?,
            },
            DetectorKind::Dice => Params::Dice {
                percentile: percentile(90.0)?,
            },
            DetectorKind::Ash => {
                let variant = match self.hyperparams.get("variant") {
                    None => AshVariant::S,
                    Some(HyperValue::Text(s)) => s.parse().map_err(bad)?,
                    Some(v) => return Err(bad(format!("`variant` must be P, B or S, got {v}"))),
                };
                Params::Ash {
                    percentile: percentile(90.0)?,
                    variant,
                }
            }
            DetectorKind::GradNorm => Params::GradNorm,
            DetectorKind::She => Params::She,
            DetectorKind::OpenMax => Params::OpenMax {
                tail_size: int("eta", 2)?.unwrap_or(20),
                alpha_top: int("alpha_top", 1)?.unwrap_or(3),
            },
        })
    }
}

impl fmt::Display for DetectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub const DEFAULT_EPS_SCALE: f64 = 1e-6;

/// Resolved, range-checked hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Msp,
    /// `None` fits the temperature on the ID validation split.
    TempScale { temperature: Option<f64> },
    OdinT { temperature: f64 },
    Mls,
    Ebo { temperature: f64 },
    Klm,
    Mds { eps_scale: f64 },
    MdsEns { eps_scale: f64 },
    Rmds { eps_scale: f64 },
    Knn { k: usize },
    /// `None` uses half the feature dimension.
    Vim { dim: Option<usize> },
    React { percentile: f64 },
    Dice { percentile: f64 },
    Ash { percentile: f64, variant: AshVariant },
    GradNorm,
    She,
    OpenMax { tail_size: usize, alpha_top: usize },
}

/// Fitted per-detector state. Immutable once built.
#[derive(Debug, Clone)]
pub enum DetectorState {
    Stateless,
    Logit { temperature: f64 },
    Klm(KlmState),
    Mds(MdsState),
    Rmds(RmdsState),
    Knn(KnnState),
    Vim(VimState),
    React(ReactState),
    Dice(DiceState),
    Ash { percentile: f64, variant: AshVariant, head: Arc<ClassifierHead> },
    She(SheState),
    OpenMax(OpenmaxState),
}

/// Per-batch diagnostics that do not invalidate the scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreWarnings {
    /// ASH samples whose shaping left no surviving activation mass; scored as
    /// `logsumexp(b)`.
    pub all_pruned: usize,
    /// ASH samples containing negative activations.
    pub negative_activations: usize,
}

impl ScoreWarnings {
    pub fn merge(&mut self, other: ScoreWarnings) {
        self.all_pruned += other.all_pruned;
        self.negative_activations += other.negative_activations;
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

/// ID-confidence scores for one batch, one finite value per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub warnings: ScoreWarnings,
}

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct FittedDetector {
    spec: DetectorSpec,
    state: DetectorState,
}

impl FittedDetector {
    /// Fits on ID data only. `id_val` is consulted by `tempscale` when no
    /// temperature is given.
    pub fn fit(
        spec: &DetectorSpec,
        id_train: &RepSet,
        id_val: &RepSet,
        head: &Arc<ClassifierHead>,
    ) -> Result<Self> {
        let params = spec.params()?;
        if spec.kind.needs_train_labels() {
            id_train.require_labels()?;
        }
        let mut spec = spec.clone();
        let state = match params {
            Params::Msp | Params::Mls | Params::GradNorm => DetectorState::Stateless,
            Params::TempScale { temperature } => {
                let temperature = match temperature {
                    Some(t) => t,
                    None => fit_temperature(id_val)?,
                };
                spec.hyperparams.insert("T".into(), temperature.into());
                DetectorState::Logit { temperature }
            }
            Params::OdinT { temperature } | Params::Ebo { temperature } => {
                spec.hyperparams.insert("T".into(), temperature.into());
                DetectorState::Logit { temperature }
            }
            Params::Klm => DetectorState::Klm(KlmState::fit(id_train)?),
            Params::Mds { eps_scale } => {
                spec.hyperparams.insert("eps_scale".into(), eps_scale.into());
                DetectorState::Mds(MdsState::fit_single(id_train, eps_scale)?)
            }
            Params::MdsEns { eps_scale } => {
                spec.hyperparams.insert("eps_scale".into(), eps_scale.into());
                DetectorState::Mds(MdsState::fit_ensemble(id_train, eps_scale)?)
            }
            Params::Rmds { eps_scale } => {
                spec.hyperparams.insert("eps_scale".into(), eps_scale.into());
                DetectorState::Rmds(RmdsState::fit(id_train, eps_scale)?)
            }
            Params::Knn { k } => {
                spec.hyperparams.insert("k".into(), (k as f64).into());
                DetectorState::Knn(KnnState::fit(id_train, k)?)
            }
            Params::Vim { dim } => {
                let d = id_train.penultimate().cols();
                let dim = dim.unwrap_or((d / 2).max(1));
                spec.hyperparams.insert("D".into(), (dim as f64).into());
                DetectorState::Vim(VimState::fit(id_train, head, dim)?)
            }
            Params::React { percentile } => {
                spec.hyperparams.insert("p".into(), percentile.into());
                DetectorState::React(ReactState::fit(id_train, head, percentile))
            }
            Params::Dice { percentile } => {
                spec.hyperparams.insert("p".into(), percentile.into());
                DetectorState::Dice(DiceState::fit(id_train, head, percentile))
            }
            Params::Ash {
                percentile,
                variant,
            } => {
                spec.hyperparams.insert("p".into(), percentile.into());
                spec.hyperparams
                    .insert("variant".into(), HyperValue::Text(variant.to_string()));
                DetectorState::Ash {
                    percentile,
                    variant,
                    head: Arc::clone(head),
                }
            }
            Params::She => DetectorState::She(SheState::fit(id_train)?),
            Params::OpenMax {
                tail_size,
                alpha_top,
            } => {
                spec.hyperparams.insert("eta".into(), (tail_size as f64).into());
                spec.hyperparams
                    .insert("alpha_top".into(), (alpha_top as f64).into());
                DetectorState::OpenMax(OpenmaxState::fit(id_train, tail_size, alpha_top)?)
            }
        };
        Ok(Self { spec, state })
    }

    /// The spec with every default filled in.
    pub fn spec(&self) -> &DetectorSpec {
        &self.spec
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    pub fn score(&self, batch: &RepSet) -> Result<ScoreVector> {
        let mut warnings = ScoreWarnings::default();
        let logits = batch.logits();
        let values = match (&self.spec.kind, &self.state) {
            (DetectorKind::Msp, _) => logit::score_rows(logits, |z| logit::max_softmax(z, 1.0)),
            (DetectorKind::TempScale | DetectorKind::OdinT, DetectorState::Logit { temperature }) => {
                logit::score_rows(logits, |z| logit::max_softmax(z, *temperature))
            }
            (DetectorKind::Mls, _) => logit::score_rows(logits, logit::max_logit),
            (DetectorKind::Ebo, DetectorState::Logit { temperature }) => {
                logit::score_rows(logits, |z| logit::energy(z, *temperature))
            }
            (DetectorKind::GradNorm, _) => gradnorm::score(batch),
            (_, DetectorState::Klm(s)) => s.score(batch),
            (_, DetectorState::Mds(s)) => s.score(batch)?,
            (_, DetectorState::Rmds(s)) => s.score(batch),
            (_, DetectorState::Knn(s)) => s.score(batch)?,
            (_, DetectorState::Vim(s)) => s.score(batch),
            (_, DetectorState::React(s)) => s.score(batch),
            (_, DetectorState::Dice(s)) => s.score(batch),
            (
                _,
                DetectorState::Ash {
                    percentile,
                    variant,
                    head,
                },
            ) => rectified::score_ash(batch, head, *percentile, *variant, &mut warnings),
            (_, DetectorState::She(s)) => s.score(batch),
            (_, DetectorState::OpenMax(s)) => s.score(batch),
            (kind, state) => unreachable!("state {state:?} does not belong to {kind}"),
        };
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                path: format!("scores of {} on {}", self.spec.label(), batch.name()).into(),
                index,
            });
        }
        Ok(ScoreVector { values, warnings })
    }
}

/// Default search grid for a kind, given the feature dimension `d` and the
/// number of training samples `m`. Empty when the kind is not searched.
pub fn default_grid(kind: DetectorKind, d: usize, m: usize) -> Vec<Hyperparams> {
    let one = |k: &str, v: HyperValue| -> Hyperparams { [(k.to_string(), v)].into() };
    match kind {
        DetectorKind::OdinT => [1.0, 10.0, 100.0, 1000.0]
            .into_iter()
            .map(|t| one("T", t.into()))
            .collect(),
        DetectorKind::React => [85.0, 90.0, 95.0, 99.0]
            .into_iter()
            .map(|p| one("p", p.into()))
            .collect(),
        DetectorKind::Dice => [30.0, 50.0, 70.0, 90.0]
            .into_iter()
            .map(|p| one("p", p.into()))
            .collect(),
        DetectorKind::Ash => {
            let mut g = Vec::new();
            for p in [65.0, 75.0, 85.0, 90.0, 95.0] {
                for v in ["P", "B", "S"] {
                    let mut h = one("p", p.into());
                    h.insert("variant".into(), v.into());
                    g.push(h);
                }
            }
            g
        }
        DetectorKind::Knn => [1usize, 5, 10, 20, 50, 100]
            .into_iter()
            .filter(|&k| k <= m)
            .map(|k| one("k", (k as f64).into()))
            .collect(),
        DetectorKind::Vim => {
            let mut dims: Vec<usize> = Vec::new();
            for dim in [16, 32, 64, 128, 256, 512, d / 2] {
                if dim >= 1 && dim < d && !dims.contains(&dim) {
                    dims.push(dim);
                }
            }
            dims.into_iter().map(|dim| one("D", (dim as f64).into())).collect()
        }
        DetectorKind::OpenMax => {
            let mut g = Vec::new();
            for eta in [10.0, 20.0, 40.0] {
                for a in [2.0, 3.0] {
                    let mut h = one("eta", eta.into());
                    h.insert("alpha_top".into(), a.into());
                    g.push(h);
                }
            }
            g
        }
        _ => Vec::new(),
    }
}
