use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: data file has {actual} bytes, shape {shape:?} requires {expected}")]
    SizeMismatch {
        path: PathBuf,
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("{path}: non-finite value at flat index {index}")]
    NonFinite { path: PathBuf, index: usize },

    #[error("{path}: unsupported dtype {dtype:?} (expected {expected})")]
    UnsupportedDtype {
        path: PathBuf,
        dtype: String,
        expected: &'static str,
    },

    #[error("{path}: unsupported tensor encoding: {detail}")]
    UnsupportedEncoding { path: PathBuf, detail: String },

    #[error("manifest is missing split or field `{0}`")]
    MissingSplit(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("dataset `{dataset}` has label {label} outside [0, {num_classes})")]
    LabelOutOfRange {
        dataset: String,
        label: i64,
        num_classes: usize,
    },

    #[error("dataset name `{0}` appears more than once in the manifest")]
    DuplicateDatasetName(String),

    #[error("dataset `{0}` carries no labels")]
    MissingLabels(String),

    #[error("sample covariance is singular (eps_scale = 0 or zero-variance features)")]
    SingularCovariance,

    #[error("class {0} has no qualifying training samples")]
    EmptyClass(usize),

    #[error("feature layers differ between fit ({fit:?}) and score ({score:?})")]
    LayerMismatch {
        fit: Vec<String>,
        score: Vec<String>,
    },

    #[error("no feature layers beyond `penultimate` are available")]
    NoExtraLayers,

    #[error("sample {0} has a zero-norm feature vector")]
    ZeroNormFeature(usize),

    #[error("k = {k} exceeds the {available} training samples")]
    KTooLarge { k: usize, available: usize },

    #[error("principal dimension D = {dim} must be below the feature dimension {features}")]
    DTooLarge { dim: usize, features: usize },

    #[error("unknown detector `{name}`; valid kinds: {valid}")]
    UnknownDetector { name: String, valid: String },

    #[error("invalid hyperparameter for {kind}: {detail}")]
    InvalidHyperparam { kind: String, detail: String },

    #[error("hyperparameter grid is empty")]
    EmptyGrid,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid run configuration: {0}")]
    ConfigInvalid(String),

    #[error("reports share no detectors")]
    NoOverlap,

    #[error("invalid synthetic benchmark spec: {0}")]
    SynthInvalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the filesystem rather than of the data or configuration.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
