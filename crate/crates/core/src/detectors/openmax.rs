use crate::detectors::weibull::TailModel;
use crate::error::{Error, Result};
use crate::linalg::canonical_class_means;
use crate::numeric::{argmax, to_f64};
use crate::repset::RepSet;

/// Mean activation vector and Weibull tail per class, over logits of
/// correctly classified training samples.
#[derive(Debug, Clone)]
pub struct OpenmaxState {
    pub mean_activations: Vec<Vec<f64>>,
    pub tails: Vec<TailModel>,
    pub alpha_top: usize,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl OpenmaxState {
    pub fn fit(id_train: &RepSet, tail_size: usize, alpha_top: usize) -> Result<Self> {
        let labels = id_train.require_labels()?;
        let logits = id_train.logits();
        let c = id_train.num_classes();
        let correct: Vec<Option<usize>> = logits
            .iter_rows()
            .zip(labels)
            .map(|(z, &y)| (argmax(z) == y).then_some(y))
            .collect();
        let mean_activations = canonical_class_means(logits, &correct, c)
            .into_iter()
            .enumerate()
            .map(|(k, m)| m.ok_or(Error::EmptyClass(k)))
            .collect::<Result<Vec<_>>>()?;
        let mut distances = vec![Vec::new(); c];
        for (z, k) in logits.iter_rows().zip(&correct) {
            if let Some(k) = *k {
                distances[k].push(euclidean(&to_f64(z), &mean_activations[k]));
            }
        }
        let tails = distances
            .iter()
            .map(|d| TailModel::fit_tail(d, tail_size))
            .collect();
        Ok(Self {
            mean_activations,
            tails,
            alpha_top: alpha_top.min(c),
        })
    }

    /// Known-class probability after moving Weibull-weighted logit mass of the
    /// top classes into an extra unknown class.
    pub fn score_logits(&self, z: &[f64]) -> f64 {
        let c = z.len();
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
        let mut revised = z.to_vec();
        let mut unknown = 0.0;
        let alpha = self.alpha_top as f64;
        for (rank, &k) in order.iter().take(self.alpha_top).enumerate() {
            let weight = (alpha - rank as f64) / alpha;
            let w = self.tails[k].cdf(euclidean(z, &self.mean_activations[k])) * weight;
            revised[k] = z[k] * (1.0 - w);
            unknown += z[k] * w;
        }
        let m = revised.iter().copied().fold(unknown, f64::max);
        let denom: f64 = revised.iter().map(|&v| (v - m).exp()).sum::<f64>() + (unknown - m).exp();
        let best = revised.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (best - m).exp() / denom
    }

    pub(super) fn score(&self, batch: &RepSet) -> Vec<f64> {
        batch
            .logits()
            .iter_rows()
            .map(|z| self.score_logits(&to_f64(z)))
            .collect()
    }
}
