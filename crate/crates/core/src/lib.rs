//! Post-hoc out-of-distribution detection over exported model
//! representations.
//!
//! A benchmark is a [`BenchmarkManifest`] of [`RepSet`]s (penultimate
//! features, logits and labels per split) plus the classifier head. Detectors
//! in [`detectors`] turn representations into ID-confidence scores (higher
//! means more in-distribution), [`metrics`] scores them with OOD as the
//! positive class, and [`protocol`] runs tuning and evaluation end to end.
//!
//! ```no_run
//! use oodeval::{protocol, DetectorKind, DetectorSpec, RunConfig};
//!
//! let mut cfg = RunConfig::new("bench/manifest.json");
//! cfg.detectors.push(DetectorSpec::new(DetectorKind::Ebo).into());
//! let report = protocol::run(&cfg)?;
//! println!("{}", report.to_json());
//! # Ok::<(), oodeval::Error>(())
//! ```

pub mod cli;
pub mod detectors;
pub mod error;
pub mod linalg;
pub mod matrix;
pub mod metrics;
pub mod numeric;
pub mod protocol;
pub mod report;
pub mod repset;
pub mod synth;
pub mod tensor;

pub use detectors::{DetectorKind, DetectorSpec, FittedDetector, ScoreVector};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use metrics::MetricsRecord;
pub use protocol::{AggregateReport, Mode, RunConfig};
pub use repset::{load_manifest, BenchmarkManifest, ClassifierHead, RepSet};
pub use synth::SynthSpec;
