use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse, symmetric_eigen_ascending, to_dmatrix, to_dvector};
use crate::numeric::{logsumexp, to_f64};
use crate::repset::{ClassifierHead, RepSet};

/// Origin, residual basis and logit-matching scale for virtual-logit scoring.
#[derive(Debug, Clone)]
pub struct VimState {
    /// `u = -pinv(W) b`.
    pub origin: Vec<f64>,
    /// `d x (d - D)` orthonormal basis of the residual space.
    pub basis: DMatrix<f64>,
    pub alpha: f64,
}

impl VimState {
    pub fn fit(id_train: &RepSet, head: &ClassifierHead, dim: usize) -> Result<Self> {
        let feats = id_train.penultimate();
        let d = feats.cols();
        if dim >= d {
            return Err(Error::DTooLarge { dim, features: d });
        }
        let w = to_dmatrix(head.weight());
        let b = to_dvector(head.bias());
        let origin: DVector<f64> = -(pseudo_inverse(&w) * b);

        // second moment about the origin
        let centered = DMatrix::from_fn(feats.rows(), d, |i, j| feats.get(i, j) as f64 - origin[j]);
        let cov = centered.tr_mul(&centered) / feats.rows().max(1) as f64;
        let (_, vectors) = symmetric_eigen_ascending(cov);
        let basis = vectors.columns(0, d - dim).into_owned();

        let origin: Vec<f64> = origin.iter().copied().collect();
        let mut state = Self {
            origin,
            basis,
            alpha: 1.0,
        };
        let max_logits: f64 = id_train
            .logits()
            .iter_rows()
            .map(|z| z.iter().map(|&v| v as f64).fold(f64::NEG_INFINITY, f64::max))
            .sum();
        let residuals: f64 = feats.iter_rows().map(|f| state.residual_norm(&to_f64(f))).sum();
        let alpha = max_logits / residuals;
        if residuals >= 1e-12 && alpha.is_finite() && alpha > 0.0 {
            state.alpha = alpha;
        }
        Ok(state)
    }

    /// `‖Rᵀ (f - u)‖`.
    pub fn residual_norm(&self, f: &[f64]) -> f64 {
        let x = DVector::from_iterator(f.len(), f.iter().zip(&self.origin).map(|(a, u)| a - u));
        (self.basis.transpose() * x).norm()
    }

    pub(super) fn score(&self, batch: &RepSet) -> Vec<f64> {
        batch
            .logits()
            .iter_rows()
            .zip(batch.penultimate().iter_rows())
            .map(|(z, f)| logsumexp(&to_f64(z)) - self.alpha * self.residual_norm(&to_f64(f)))
            .collect()
    }
}
