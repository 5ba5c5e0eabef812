//! Class-conditional Gaussian scores: MDS, its multi-layer ensemble, and the
//! relative variant RMDS.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{canonical_class_means, mean_of_rows, CholeskyFactor};
use crate::matrix::Matrix;
use crate::numeric::to_f64;
use crate::repset::{RepSet, PENULTIMATE};

/// Per-class means with a shared, regularized covariance.
#[derive(Debug, Clone)]
pub struct GaussianFit {
    /// `None` for classes absent from the training labels.
    pub means: Vec<Option<Vec<f64>>>,
    pub factor: CholeskyFactor,
}

impl GaussianFit {
    /// Shared covariance `(1/N) Σ_c Σ_{i∈c} (f_i - μ_c)(f_i - μ_c)ᵀ + εI` with
    /// `ε = eps_scale · trace / d`.
    pub fn fit_class_conditional(
        features: &Matrix,
        labels: &[usize],
        num_classes: usize,
        eps_scale: f64,
    ) -> Result<Self> {
        let classes: Vec<Option<usize>> = labels.iter().map(|&y| Some(y)).collect();
        let means = canonical_class_means(features, &classes, num_classes);
        let centered = DMatrix::from_fn(features.rows(), features.cols(), |i, j| {
            features.get(i, j) as f64 - means[labels[i]].as_ref().expect("member class")[j]
        });
        let factor = regularized_factor(&centered, eps_scale)?;
        Ok(Self { means, factor })
    }

    /// Squared Mahalanobis distance to the closest class mean.
    pub fn min_distance(&self, f: &[f64]) -> f64 {
        self.means
            .iter()
            .flatten()
            .map(|mu| self.distance_to(f, mu))
            .fold(f64::INFINITY, f64::min)
    }

    fn distance_to(&self, f: &[f64], mu: &[f64]) -> f64 {
        let diff: Vec<f64> = f.iter().zip(mu).map(|(a, b)| a - b).collect();
        self.factor.squared_norm(&diff)
    }
}

fn regularized_factor(centered: &DMatrix<f64>, eps_scale: f64) -> Result<CholeskyFactor> {
    let n = centered.nrows().max(1) as f64;
    let d = centered.ncols();
    let mut sigma = centered.tr_mul(centered) / n;
    let eps = eps_scale * sigma.trace() / d as f64;
    for i in 0..d {
        sigma[(i, i)] += eps;
    }
    CholeskyFactor::new(sigma)
}

/// One Gaussian fit per feature layer; MDS uses only the penultimate layer.
#[derive(Debug, Clone)]
pub struct MdsState {
    pub layers: Vec<(String, GaussianFit)>,
}

impl MdsState {
    pub fn fit_single(id_train: &RepSet, eps_scale: f64) -> Result<Self> {
        Self::fit_layers(id_train, &[PENULTIMATE.to_string()], eps_scale)
    }

    /// Fits every layer present in `id_train`; needs at least one layer
    /// besides the penultimate one.
    pub fn fit_ensemble(id_train: &RepSet, eps_scale: f64) -> Result<Self> {
        let names = id_train.layer_names();
        if names.len() < 2 {
            return Err(Error::NoExtraLayers);
        }
        Self::fit_layers(id_train, &names, eps_scale)
    }

    fn fit_layers(id_train: &RepSet, names: &[String], eps_scale: f64) -> Result<Self> {
        let labels = id_train.require_labels()?;
        let c = id_train.num_classes();
        let layers = names
            .iter()
            .map(|name| {
                let m = id_train.layer(name).expect("listed layer");
                Ok((name.clone(), GaussianFit::fit_class_conditional(m, labels, c, eps_scale)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    /// Negated closest-class distance, averaged over layers.
    pub(super) fn score(&self, batch: &RepSet) -> Result<Vec<f64>> {
        let fitted: Vec<String> = self.layers.iter().map(|(n, _)| n.clone()).collect();
        let ensemble = fitted.len() > 1;
        if ensemble && fitted != batch.layer_names() {
            return Err(Error::LayerMismatch {
                fit: fitted,
                score: batch.layer_names(),
            });
        }
        let mut scores = vec![0.0; batch.len()];
        for (name, fit) in &self.layers {
            let m = batch.layer(name).ok_or_else(|| Error::LayerMismatch {
                fit: fitted.clone(),
                score: batch.layer_names(),
            })?;
            for (s, f) in scores.iter_mut().zip(m.iter_rows()) {
                *s -= fit.min_distance(&to_f64(f));
            }
        }
        let layers = self.layers.len() as f64;
        Ok(scores.into_iter().map(|s| s / layers).collect())
    }
}

/// Class-conditional fit plus one background Gaussian over all training
/// features.
#[derive(Debug, Clone)]
pub struct RmdsState {
    pub class_fit: GaussianFit,
    pub background_mean: Vec<f64>,
    pub background: CholeskyFactor,
}

impl RmdsState {
    pub fn fit(id_train: &RepSet, eps_scale: f64) -> Result<Self> {
        let labels = id_train.require_labels()?;
        let feats = id_train.penultimate();
        let class_fit =
            GaussianFit::fit_class_conditional(feats, labels, id_train.num_classes(), eps_scale)?;
        let background_mean = mean_of_rows(feats.iter_rows(), feats.cols());
        let centered = DMatrix::from_fn(feats.rows(), feats.cols(), |i, j| {
            feats.get(i, j) as f64 - background_mean[j]
        });
        let background = regularized_factor(&centered, eps_scale)?;
        Ok(Self {
            class_fit,
            background_mean,
            background,
        })
    }

    /// `-min_c [M_c(f) - M_0(f)]`.
    pub(super) fn score(&self, batch: &RepSet) -> Vec<f64> {
        batch
            .penultimate()
            .iter_rows()
            .map(|f| {
                let f = to_f64(f);
                let diff: Vec<f64> = f.iter().zip(&self.background_mean).map(|(a, b)| a - b).collect();
                let m0 = self.background.squared_norm(&diff);
                let closest = self
                    .class_fit
                    .means
                    .iter()
                    .flatten()
                    .map(|mu| self.class_fit.distance_to(&f, mu) - m0)
                    .fold(f64::INFINITY, f64::min);
                -closest
            })
            .collect()
    }
}
