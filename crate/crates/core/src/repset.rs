//! Representation sets, the classifier head, and benchmark manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tensor;

/// Name of the mandatory feature layer feeding the classifier head.
pub const PENULTIMATE: &str = "penultimate";

/// Exported representations of one dataset split under a fixed model.
#[derive(Debug, Clone, PartialEq)]
pub struct RepSet {
    name: String,
    features: BTreeMap<String, Matrix>,
    logits: Matrix,
    labels: Option<Vec<usize>>,
}

impl RepSet {
    pub fn new(
        name: impl Into<String>,
        features: BTreeMap<String, Matrix>,
        logits: Matrix,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let name = name.into();
        let n = logits.rows();
        if !features.contains_key(PENULTIMATE) {
            return Err(Error::MissingSplit(format!("{name}.features.{PENULTIMATE}")));
        }
        for (layer, m) in &features {
            if m.rows() != n {
                return Err(Error::DimMismatch(format!(
                    "{name}: layer `{layer}` has {} rows, logits have {n}",
                    m.rows()
                )));
            }
        }
        let all_finite = features
            .values()
            .chain(std::iter::once(&logits))
            .all(|m| m.as_slice().iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(Error::NonFinite {
                path: PathBuf::from(&name),
                index: 0,
            });
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::DimMismatch(format!(
                    "{name}: {} labels for {n} samples",
                    l.len()
                )));
            }
            if let Some(&bad) = l.iter().find(|&&y| y >= logits.cols()) {
                return Err(Error::LabelOutOfRange {
                    dataset: name,
                    label: bad as i64,
                    num_classes: logits.cols(),
                });
            }
        }
        Ok(Self {
            name,
            features,
            logits,
            labels,
        })
    }

    /// Convenience constructor for a set with only penultimate features.
    pub fn with_penultimate(
        name: impl Into<String>,
        penultimate: Matrix,
        logits: Matrix,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let mut features = BTreeMap::new();
        features.insert(PENULTIMATE.to_string(), penultimate);
        Self::new(name, features, logits, labels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.logits.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.logits.cols()
    }

    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    pub fn penultimate(&self) -> &Matrix {
        &self.features[PENULTIMATE]
    }

    pub fn layer(&self, name: &str) -> Option<&Matrix> {
        self.features.get(name)
    }

    pub fn layers(&self) -> &BTreeMap<String, Matrix> {
        &self.features
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.features.keys().cloned().collect()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels()
            .ok_or_else(|| Error::MissingLabels(self.name.clone()))
    }

    /// Concatenates sets that share a layer structure.
    pub fn concat(name: impl Into<String>, parts: &[&RepSet]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyInput("no repsets to concatenate"))?;
        let mut features = BTreeMap::new();
        for layer in first.features.keys() {
            let mats = parts
                .iter()
                .map(|p| {
                    p.layer(layer).ok_or_else(|| Error::LayerMismatch {
                        fit: first.layer_names(),
                        score: p.layer_names(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            features.insert(layer.clone(), Matrix::vstack(mats)?);
        }
        let logits = Matrix::vstack(parts.iter().map(|p| &p.logits))?;
        let labels = if parts.iter().all(|p| p.labels.is_some()) {
            Some(parts.iter().flat_map(|p| p.labels.clone().unwrap()).collect())
        } else {
            None
        };
        Self::new(name, features, logits, labels)
    }

    /// Subset of samples by index, in the given order.
    pub fn select(&self, name: impl Into<String>, idx: &[usize]) -> Result<Self> {
        let features = self
            .features
            .iter()
            .map(|(k, m)| (k.clone(), m.select_rows(idx)))
            .collect();
        let labels = self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect());
        Self::new(name, features, self.logits.select_rows(idx), labels)
    }
}

/// Final linear layer `z = W f + b` of the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    weight: Matrix,
    bias: Vec<f32>,
}

impl ClassifierHead {
    pub fn new(weight: Matrix, bias: Vec<f32>) -> Result<Self> {
        if weight.rows() != bias.len() {
            return Err(Error::DimMismatch(format!(
                "head weight has {} rows, bias has {} entries",
                weight.rows(),
                bias.len()
            )));
        }
        if !weight.as_slice().iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                path: PathBuf::from("head"),
                index: 0,
            });
        }
        Ok(Self { weight, bias })
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    /// Logits for one feature vector. Accumulates in `f64` in index order and
    /// rounds to `f32`, the precision logits are exported at, so logits written
    /// by [`ClassifierHead::logits_matrix`] and logits recomputed from
    /// unmodified features agree bit for bit.
    pub fn logits(&self, f: &[f32]) -> Vec<f32> {
        linear(&self.weight, &self.bias, f)
    }

    pub fn logits_matrix(&self, features: &Matrix) -> Matrix {
        let c = self.num_classes();
        let mut out = Matrix::zeros(features.rows(), c);
        for i in 0..features.rows() {
            out.row_mut(i).copy_from_slice(&self.logits(features.row(i)));
        }
        out
    }
}

pub(crate) fn linear(weight: &Matrix, bias: &[f32], f: &[f32]) -> Vec<f32> {
    weight
        .iter_rows()
        .zip(bias)
        .map(|(w, &b)| {
            let dot: f64 = w.iter().zip(f).map(|(&a, &x)| a as f64 * x as f64).sum();
            (dot + b as f64) as f32
        })
        .collect()
}

/// A fully validated benchmark: ID splits, covariate-shifted ID test sets,
/// OOD validation, and near/far OOD test groups.
#[derive(Debug, Clone)]
pub struct BenchmarkManifest {
    pub name: String,
    pub num_classes: usize,
    pub head: Arc<ClassifierHead>,
    pub id_train: RepSet,
    pub id_val: RepSet,
    pub id_test: RepSet,
    pub csid_tests: Vec<RepSet>,
    pub ood_val: RepSet,
    pub near_ood: Vec<RepSet>,
    pub far_ood: Vec<RepSet>,
    /// Author's attestation that OOD validation and test categories are
    /// disjoint. Recorded only; not verifiable from representations.
    pub category_disjoint_attested: Option<bool>,
}

impl BenchmarkManifest {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        num_classes: usize,
        head: ClassifierHead,
        id_train: RepSet,
        id_val: RepSet,
        id_test: RepSet,
        csid_tests: Vec<RepSet>,
        ood_val: RepSet,
        near_ood: Vec<RepSet>,
        far_ood: Vec<RepSet>,
    ) -> Result<Self> {
        let m = Self {
            name: name.into(),
            num_classes,
            head: Arc::new(head),
            id_train,
            id_val,
            id_test,
            csid_tests,
            ood_val,
            near_ood,
            far_ood,
            category_disjoint_attested: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn all_sets(&self) -> impl Iterator<Item = &RepSet> {
        [&self.id_train, &self.id_val, &self.id_test, &self.ood_val]
            .into_iter()
            .chain(&self.csid_tests)
            .chain(&self.near_ood)
            .chain(&self.far_ood)
    }

    fn validate(&self) -> Result<()> {
        if self.near_ood.is_empty() {
            return Err(Error::MissingSplit("near_ood".into()));
        }
        if self.far_ood.is_empty() {
            return Err(Error::MissingSplit("far_ood".into()));
        }
        let c = self.num_classes;
        if self.head.num_classes() != c {
            return Err(Error::DimMismatch(format!(
                "head has {} classes, manifest declares {c}",
                self.head.num_classes()
            )));
        }
        let mut names = BTreeSet::new();
        let mut layer_dims: BTreeMap<&str, usize> = BTreeMap::new();
        for set in self.all_sets() {
            if !names.insert(set.name()) {
                return Err(Error::DuplicateDatasetName(set.name().to_string()));
            }
            if set.num_classes() != c {
                return Err(Error::DimMismatch(format!(
                    "{}: logits have {} columns, expected {c}",
                    set.name(),
                    set.num_classes()
                )));
            }
            if set.penultimate().cols() != self.head.input_dim() {
                return Err(Error::DimMismatch(format!(
                    "{}: penultimate dim {} differs from head input dim {}",
                    set.name(),
                    set.penultimate().cols(),
                    self.head.input_dim()
                )));
            }
            for (layer, m) in set.layers() {
                let d = *layer_dims.entry(layer.as_str()).or_insert(m.cols());
                if d != m.cols() {
                    return Err(Error::DimMismatch(format!(
                        "{}: layer `{layer}` has dim {}, other sets have {d}",
                        set.name(),
                        m.cols()
                    )));
                }
            }
        }
        for set in [&self.id_train, &self.id_val, &self.id_test] {
            set.require_labels()?;
        }
        Ok(())
    }
}

/// On-disk JSON form of a dataset entry. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub features: BTreeMap<String, String>,
    pub logits: String,
    #[serde(default)]
    pub labels: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadEntry {
    #[serde(rename = "W")]
    pub weight: String,
    pub b: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitEntries {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_train: Option<DatasetEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_val: Option<DatasetEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_test: Option<DatasetEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ood_val: Option<DatasetEntry>,
    /// Accepted for compatibility with manifests that list outlier-exposure
    /// data; never loaded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ood_train: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub num_classes: usize,
    pub head: HeadEntry,
    pub splits: SplitEntries,
    #[serde(default)]
    pub csid_tests: Vec<DatasetEntry>,
    #[serde(default)]
    pub near_ood: Vec<DatasetEntry>,
    #[serde(default)]
    pub far_ood: Vec<DatasetEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_disjoint_attested: Option<bool>,
}

/// Loads and validates a manifest. Never writes to disk.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<BenchmarkManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ManifestFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let c = file.num_classes;

    let resolve = |p: &str| base.join(p);
    let load_set = |e: &DatasetEntry| -> Result<RepSet> {
        let mut features = BTreeMap::new();
        for (layer, p) in &e.features {
            features.insert(layer.clone(), tensor::load_matrix(resolve(p))?);
        }
        let logits = tensor::load_matrix(resolve(&e.logits))?;
        let labels = match &e.labels {
            None => None,
            Some(p) => {
                let raw = tensor::load_i32_vector(resolve(p))?;
                if let Some(&bad) = raw.iter().find(|&&y| y < 0 || y as usize >= c) {
                    return Err(Error::LabelOutOfRange {
                        dataset: e.name.clone(),
                        label: bad as i64,
                        num_classes: c,
                    });
                }
                Some(raw.into_iter().map(|y| y as usize).collect())
            }
        };
        if logits.cols() != c {
            return Err(Error::DimMismatch(format!(
                "{}: logits have {} columns, manifest declares {c}",
                e.name,
                logits.cols()
            )));
        }
        RepSet::new(e.name.clone(), features, logits, labels)
    };
    let required = |slot: &Option<DatasetEntry>, key: &str| -> Result<RepSet> {
        slot.as_ref()
            .ok_or_else(|| Error::MissingSplit(format!("splits.{key}")))
            .and_then(load_set)
    };

    let weight = tensor::load_matrix(resolve(&file.head.weight))?;
    let bias = tensor::load_f32_vector(resolve(&file.head.b))?;
    let head = ClassifierHead::new(weight, bias)?;

    let id_train = required(&file.splits.id_train, "id_train")?;
    let id_val = required(&file.splits.id_val, "id_val")?;
    let id_test = required(&file.splits.id_test, "id_test")?;
    let ood_val = required(&file.splits.ood_val, "ood_val")?;
    let many = |v: &[DatasetEntry]| v.iter().map(load_set).collect::<Result<Vec<_>>>();

    let mut manifest = BenchmarkManifest::new(
        file.name.clone(),
        c,
        head,
        id_train,
        id_val,
        id_test,
        many(&file.csid_tests)?,
        ood_val,
        many(&file.near_ood)?,
        many(&file.far_ood)?,
    )?;
    manifest.category_disjoint_attested = file.category_disjoint_attested;
    Ok(manifest)
}

/// Writes `manifest` under `dir` as `manifest.json` plus one subdirectory of
/// tensors per dataset; returns the manifest path.
pub fn save_manifest(manifest: &BenchmarkManifest, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let head = &manifest.head;
    tensor::save_matrix(dir.join("head/W"), head.weight())?;
    tensor::save_f32(dir.join("head/b"), &[head.num_classes()], head.bias())?;
    let save_set = |set: &RepSet| -> Result<DatasetEntry> {
        let name = set.name();
        let mut features = BTreeMap::new();
        for (layer, m) in set.layers() {
            tensor::save_matrix(dir.join(name).join(layer), m)?;
            features.insert(layer.clone(), format!("{name}/{layer}.bin"));
        }
        tensor::save_matrix(dir.join(name).join("logits"), set.logits())?;
        let labels = match set.labels() {
            None => None,
            Some(y) => {
                let y: Vec<i32> = y.iter().map(|&v| v as i32).collect();
                tensor::save_i32(dir.join(name).join("labels"), &[y.len()], &y)?;
                Some(format!("{name}/labels.bin"))
            }
        };
        Ok(DatasetEntry {
            name: name.to_string(),
            features,
            logits: format!("{name}/logits.bin"),
            labels,
        })
    };
    let many = |v: &[RepSet]| v.iter().map(save_set).collect::<Result<Vec<_>>>();
    let file = ManifestFile {
        name: manifest.name.clone(),
        num_classes: manifest.num_classes,
        head: HeadEntry {
            weight: "head/W.bin".into(),
            b: "head/b.bin".into(),
        },
        splits: SplitEntries {
            id_train: Some(save_set(&manifest.id_train)?),
            id_val: Some(save_set(&manifest.id_val)?),
            id_test: Some(save_set(&manifest.id_test)?),
            ood_val: Some(save_set(&manifest.ood_val)?),
            ood_train: None,
        },
        csid_tests: many(&manifest.csid_tests)?,
        near_ood: many(&manifest.near_ood)?,
        far_ood: many(&manifest.far_ood)?,
        category_disjoint_attested: manifest.category_disjoint_attested,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&file).map_err(|e| Error::json(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
