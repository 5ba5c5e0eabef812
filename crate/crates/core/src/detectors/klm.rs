use crate::error::Result;
use crate::numeric::{argmax, softmax, to_f64};
use crate::repset::RepSet;

const LOG_FLOOR: f64 = 1e-12;

/// Mean softmax distribution per predicted class.
#[derive(Debug, Clone)]
pub struct KlmState {
    pub templates: Vec<Vec<f64>>,
}

impl KlmState {
    pub fn fit(id_train: &RepSet) -> Result<Self> {
        let c = id_train.num_classes();
        let mut sums = vec![vec![0.0; c]; c];
        let mut counts = vec![0usize; c];
        for z in id_train.logits().iter_rows() {
            let k = argmax(z);
            let p = softmax(&to_f64(z));
            for (s, v) in sums[k].iter_mut().zip(p) {
                *s += v;
            }
            counts[k] += 1;
        }
        let templates = sums
            .into_iter()
            .zip(counts)
            .map(|(s, n)| {
                if n == 0 {
                    vec![1.0 / c as f64; c]
                } else {
                    s.into_iter().map(|v| v / n as f64).collect()
                }
            })
            .collect();
        Ok(Self { templates })
    }

    pub(super) fn score(&self, batch: &RepSet) -> Vec<f64> {
        batch
            .logits()
            .iter_rows()
            .map(|z| {
                let p = softmax(&to_f64(z));
                let closest = self
                    .templates
                    .iter()
                    .map(|d| kl_divergence(d, &p))
                    .fold(f64::INFINITY, f64::min);
                -closest.max(0.0)
            })
            .collect()
    }
}

/// `KL(d ‖ p)` in nats; `p` is floored at 1e-12 inside the log and terms with
/// `d_c = 0` contribute nothing.
pub(crate) fn kl_divergence(d: &[f64], p: &[f64]) -> f64 {
    d.iter()
        .zip(p)
        .filter(|(&dc, _)| dc > 0.0)
        .map(|(&dc, &pc)| dc * (dc.ln() - pc.max(LOG_FLOOR).ln()))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    #[test]
    fn identical_distribution_scores_zero() {
        let z = Matrix::from_rows(&[vec![2.0, 0.0, -1.0]]).unwrap();
        let f = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let set = RepSet::with_penultimate("t", f, z, Some(vec![0])).unwrap();
        let st = KlmState::fit(&set).unwrap();
        assert_eq!(st.score(&set), vec![0.0]);
    }

    #[test]
    fn floored_kl_hand_value() {
        let kl = kl_divergence(&[0.5, 0.5], &[1.0 - 1e-12, 1e-12]);
        let expected = 0.5 * (0.5f64 / (1.0 - 1e-12)).ln() + 0.5 * (0.5f64 / 1e-12).ln();
        assert!((kl - expected).abs() < 1e-12);
        assert!((-kl - (-13.1)).abs() < 0.05);
    }

    #[test]
    fn empty_predicted_class_gets_uniform_template() {
        let z = Matrix::from_rows(&[vec![3.0, 0.0, 0.0], vec![2.0, 1.0, 0.0]]).unwrap();
        let f = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let set = RepSet::with_penultimate("t", f, z, Some(vec![0, 0])).unwrap();
        let st = KlmState::fit(&set).unwrap();
        assert_eq!(st.templates[1], vec![1.0 / 3.0; 3]);
        assert!(st.score(&set).iter().all(|&s| s <= 0.0));
    }
}
