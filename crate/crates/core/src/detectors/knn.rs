use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::repset::RepSet;

/// Bank of L2-normalized training features for exact k-NN search.
#[derive(Debug, Clone)]
pub struct KnnState {
    bank: Vec<f64>,
    dim: usize,
    pub k: usize,
}

impl KnnState {
    pub fn fit(id_train: &RepSet, k: usize) -> Result<Self> {
        let feats = id_train.penultimate();
        if k > feats.rows() {
            return Err(Error::KTooLarge {
                k,
                available: feats.rows(),
            });
        }
        let bank = normalize_rows(feats)?.into_iter().flatten().collect();
        Ok(Self {
            bank,
            dim: feats.cols(),
            k,
        })
    }

    pub fn bank_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.bank.chunks_exact(self.dim)
    }

    /// Negated distance to the k-th nearest bank entry.
    pub(super) fn score(&self, batch: &RepSet) -> Result<Vec<f64>> {
        let queries = normalize_rows(batch.penultimate())?;
        Ok(queries
            .par_iter()
            .map(|q| {
                let mut dist: Vec<f64> = self
                    .bank_rows()
                    .map(|b| b.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum())
                    .collect();
                let (_, kth, _) = dist.select_nth_unstable_by(self.k - 1, f64::total_cmp);
                -kth.sqrt()
            })
            .collect())
    }
}

fn normalize_rows(m: &Matrix) -> Result<Vec<Vec<f64>>> {
    m.iter_rows()
        .enumerate()
        .map(|(i, r)| {
            let norm = r.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroNormFeature(i));
            }
            Ok(r.iter().map(|&v| v as f64 / norm).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[Vec<f32>]) -> RepSet {
        let z = Matrix::from_rows(&vec![vec![0.0, 0.0]; rows.len()]).unwrap();
        RepSet::with_penultimate("s", Matrix::from_rows(rows).unwrap(), z, None).unwrap()
    }

    #[test]
    fn hand_distances() {
        let st = KnnState::fit(&set(&[vec![1.0, 0.0], vec![0.0, 1.0]]), 1).unwrap();
        assert_eq!(st.score(&set(&[vec![0.0, 1.0]])).unwrap(), vec![-0.0]);
        let s = st.score(&set(&[vec![0.0, -1.0]])).unwrap()[0];
        assert!((s + 2f64.sqrt()).abs() < 1e-12);

        let st2 = KnnState::fit(&set(&[vec![1.0, 0.0], vec![0.0, 1.0]]), 2).unwrap();
        assert_eq!(st2.score(&set(&[vec![0.0, -1.0]])).unwrap(), vec![-2.0]);
    }

    #[test]
    fn errors() {
        let train = set(&[vec![1.0, 0.0]]);
        assert!(matches!(KnnState::fit(&train, 2), Err(Error::KTooLarge { .. })));
        assert!(matches!(
            KnnState::fit(&set(&[vec![0.0, 0.0]]), 1),
            Err(Error::ZeroNormFeature(0))
        ));
        let st = KnnState::fit(&train, 1).unwrap();
        assert!(matches!(st.score(&set(&[vec![1.0, 1.0], vec![0.0, 0.0]])), Err(Error::ZeroNormFeature(1))));
    }

    #[test]
    fn bank_rows_unit_norm() {
        let st = KnnState::fit(&set(&[vec![3.0, 4.0], vec![-0.1, 0.2]]), 1).unwrap();
        for r in st.bank_rows() {
            let n: f64 = r.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
