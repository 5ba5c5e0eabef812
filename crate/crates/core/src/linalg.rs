//! Dense linear algebra on `f64`, backed by nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Lower Cholesky factor `L` of a symmetric positive-definite matrix, used to
/// evaluate squared Mahalanobis norms `xᵀ Σ⁻¹ x = ‖L⁻¹ x‖²`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
}

impl CholeskyFactor {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        let chol = nalgebra::Cholesky::new(sigma).ok_or(Error::SingularCovariance)?;
        let lower = chol.unpack();
        // Cholesky accepts tiny positive pivots from rank-deficient input
        let d = lower.diagonal();
        let max = d.iter().copied().fold(0.0, f64::max);
        if d.iter().any(|&v| v <= max * 1e-12 || v.is_nan()) {
            return Err(Error::SingularCovariance);
        }
        Ok(Self { lower })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// `xᵀ Σ⁻¹ x` by forward substitution.
    pub fn squared_norm(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut y = vec![0.0; n];
        let mut acc = 0.0;
        for i in 0..n {
            let mut s = x[i];
            for (j, yj) in y.iter().enumerate().take(i) {
                s -= self.lower[(i, j)] * yj;
            }
            y[i] = s / self.lower[(i, i)];
            acc += y[i] * y[i];
        }
        acc
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues ascending.
pub fn symmetric_eigen_ascending(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Moore-Penrose pseudo-inverse via SVD.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = f64::EPSILON * (m.nrows().max(m.ncols()) as f64) * max_sv;
    svd.pseudo_inverse(eps)
        .expect("svd computed with both factors")
}

pub fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_iterator(m.rows(), m.cols(), m.as_slice().iter().map(|&v| v as f64))
}

pub fn to_dvector(v: &[f32]) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().map(|&x| x as f64))
}

/// Per-row mean in `f64`, summed in the given row order.
pub fn mean_of_rows<'a>(rows: impl IntoIterator<Item = &'a [f32]>, dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for r in rows {
        for (a, &v) in acc.iter_mut().zip(r) {
            *a += v as f64;
        }
        n += 1;
    }
    if n > 0 {
        for a in &mut acc {
            *a /= n as f64;
        }
    }
    acc
}

/// Class means in a canonical row order (rows sorted by bit pattern within
/// each class), so the result does not depend on how the training set was
/// ordered. `None` for classes with no member.
pub fn canonical_class_means(
    features: &Matrix,
    classes: &[Option<usize>],
    num_classes: usize,
) -> Vec<Option<Vec<f64>>> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, c) in classes.iter().enumerate() {
        if let Some(c) = *c {
            members[c].push(i);
        }
    }
    members
        .into_iter()
        .map(|mut idx| {
            if idx.is_empty() {
                return None;
            }
            idx.sort_by(|&a, &b| {
                let (ra, rb) = (features.row(a), features.row(b));
                ra.iter()
                    .zip(rb)
                    .map(|(x, y)| x.to_bits().cmp(&y.to_bits()))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            Some(mean_of_rows(idx.iter().map(|&i| features.row(i)), features.cols()))
        })
        .collect()
}
