use crate::error::{Error, Result};
use crate::linalg::canonical_class_means;
use crate::numeric::argmax;
use crate::repset::RepSet;

/// Mean penultimate feature of correctly classified training samples, per class.
#[derive(Debug, Clone)]
pub struct SheState {
    pub templates: Vec<Vec<f64>>,
}

impl SheState {
    pub fn fit(id_train: &RepSet) -> Result<Self> {
        let labels = id_train.require_labels()?;
        let correct: Vec<Option<usize>> = id_train
            .logits()
            .iter_rows()
            .zip(labels)
            .map(|(z, &y)| (argmax(z) == y).then_some(y))
            .collect();
        let templates = canonical_class_means(id_train.penultimate(), &correct, id_train.num_classes())
            .into_iter()
            .enumerate()
            .map(|(k, t)| t.ok_or(Error::EmptyClass(k)))
            .collect::<Result<_>>()?;
        Ok(Self { templates })
    }

    /// `⟨f, t_ŷ⟩` with `ŷ` the predicted class.
    pub(super) fn score(&self, batch: &RepSet) -> Vec<f64> {
        batch
            .logits()
            .iter_rows()
            .zip(batch.penultimate().iter_rows())
            .map(|(z, f)| {
                let t = &self.templates[argmax(z)];
                f.iter().zip(t).map(|(&a, b)| a as f64 * b).sum()
            })
            .collect()
    }
}
