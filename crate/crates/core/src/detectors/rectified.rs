//! Energy scores on manipulated activations or weights: ReAct clips
//! activations, DICE sparsifies the head, ASH prunes and reshapes each
//! activation vector.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::detectors::ScoreWarnings;
use crate::linalg::mean_of_rows;
use crate::matrix::Matrix;
use crate::numeric::{logsumexp, percentile_nearest_rank, to_f64};
use crate::repset::{linear, ClassifierHead, RepSet};

fn energy_of(weight: &Matrix, bias: &[f32], f: &[f32]) -> f64 {
    logsumexp(&to_f64(&linear(weight, bias, f)))
}

#[derive(Debug, Clone)]
pub struct ReactState {
    pub clip: f32,
    pub head: Arc<ClassifierHead>,
}

impl ReactState {
    /// Clip threshold is the nearest-rank percentile of all training
    /// activations pooled.
    pub fn fit(id_train: &RepSet, head: &Arc<ClassifierHead>, percentile: f64) -> Self {
        let clip = percentile_nearest_rank(id_train.penultimate().as_slice(), percentile);
        Self {
            clip,
            head: Arc::clone(head),
        }
    }

    pub(super) fn score(&self, batch: &RepSet) -> Vec<f64> {
        batch
            .penultimate()
            .iter_rows()
            .map(|f| {
                let clipped: Vec<f32> = f.iter().map(|&v| v.min(self.clip)).collect();
                energy_of(self.head.weight(), self.head.bias(), &clipped)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct DiceState {
    /// Head weights with the smallest contributions zeroed per class row.
    pub weight: Matrix,
    pub bias: Vec<f32>,
}

impl DiceState {
    /// Keeps the `ceil((1 - p/100) d)` largest entries of `w_i ⊙ m` in every
    /// row, where `m` is the mean training activation.
    pub fn fit(id_train: &RepSet, head: &ClassifierHead, percentile: f64) -> Self {
        let feats = id_train.penultimate();
        let d = feats.cols();
        let mean = mean_of_rows(feats.iter_rows(), d);
        let keep = (((100.0 - percentile) * d as f64 / 100.0).ceil() as usize).min(d);
        let mut weight = Matrix::zeros(head.num_classes(), d);
        for (i, w) in head.weight().iter_rows().enumerate() {
            let contrib: Vec<f64> = w.iter().zip(&mean).map(|(&a, m)| a as f64 * m).collect();
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| contrib[b].total_cmp(&contrib[a]).then(a.cmp(&b)));
            let row = weight.row_mut(i);
            for &j in &order[..keep] {
                row[j] = w[j];
            }
        }
        Self {
            weight,
            bias: head.bias().to_vec(),
        }
    }

    pub(super) fn score(&self, batch: &RepSet) -> Vec<f64> {
        batch
            .penultimate()
            .iter_rows()
            .map(|f| energy_of(&self.weight, &self.bias, f))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AshVariant {
    /// Prune only.
    P,
    /// Prune, then set survivors to the mean of the original activation sum.
    B,
    /// Prune, then scale survivors by `exp(s1 / s2)`.
    S,
}

impl fmt::Display for AshVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AshVariant::P => "P",
            AshVariant::B => "B",
            AshVariant::S => "S",
        })
    }
}

impl FromStr for AshVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "P" | "p" => Ok(AshVariant::P),
            "B" | "b" => Ok(AshVariant::B),
            "S" | "s" => Ok(AshVariant::S),
            other => Err(format!("`variant` must be P, B or S, got {other:?}")),
        }
    }
}

/// Shapes one activation vector. `None` when no activation mass survives.
pub(crate) fn ash_shape(f: &[f32], percentile: f64, variant: AshVariant) -> Option<Vec<f32>> {
    let t = percentile_nearest_rank(f, percentile);
    let keep: Vec<bool> = f.iter().map(|&v| v >= t).collect();
    let total: f64 = f.iter().map(|&v| v as f64).sum();
    let shaped = match variant {
        AshVariant::P => f.iter().zip(&keep).map(|(&v, &k)| if k { v } else { 0.0 }).collect(),
        AshVariant::B => {
            let n_kept = keep.iter().filter(|&&k| k).count();
            let fill = (total / n_kept as f64) as f32;
            keep.iter().map(|&k| if k { fill } else { 0.0 }).collect()
        }
        AshVariant::S => {
            let kept: f64 = f
                .iter()
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(&v, _)| v as f64)
                .sum();
            if kept == 0.0 {
                return None;
            }
            let scale = (total / kept).exp();
            if !scale.is_finite() {
                return None;
            }
            f.iter()
                .zip(&keep)
                .map(|(&v, &k)| if k { (v as f64 * scale) as f32 } else { 0.0 })
                .collect::<Vec<f32>>()
        }
    };
    shaped.iter().all(|v| v.is_finite()).then_some(shaped)
}

pub(super) fn score_ash(
    batch: &RepSet,
    head: &ClassifierHead,
    percentile: f64,
    variant: AshVariant,
    warnings: &mut ScoreWarnings,
) -> Vec<f64> {
    let fallback = logsumexp(&to_f64(head.bias()));
    batch
        .penultimate()
        .iter_rows()
        .map(|f| {
            if f.iter().any(|&v| v < 0.0) {
                warnings.negative_activations += 1;
            }
            match ash_shape(f, percentile, variant) {
                Some(shaped) => {
                    let e = energy_of(head.weight(), head.bias(), &shaped);
                    if e.is_finite() {
                        return e;
                    }
                    warnings.all_pruned += 1;
                    fallback
                }
                None => {
                    warnings.all_pruned += 1;
                    fallback
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ash_b_hand_value() {
        assert_eq!(ash_shape(&[1.0, 3.0], 50.0, AshVariant::B), Some(vec![2.0, 2.0]));
    }

    #[test]
    fn ash_p_prunes_below_threshold() {
        assert_eq!(
            ash_shape(&[0.5, 4.0, 1.0, 2.0], 50.0, AshVariant::P),
            Some(vec![0.0, 4.0, 1.0, 2.0])
        );
        assert_eq!(
            ash_shape(&[0.5, 4.0, 1.0, 2.0], 75.0, AshVariant::P),
            Some(vec![0.0, 4.0, 0.0, 2.0])
        );
    }

    #[test]
    fn ash_s_scales_survivors() {
        let got = ash_shape(&[1.0, 3.0], 100.0, AshVariant::S).unwrap();
        let scale = (4.0f64 / 3.0).exp();
        assert_eq!(got, vec![0.0, (3.0 * scale) as f32]);
    }

    #[test]
    fn ash_s_zero_mass_is_all_pruned() {
        assert_eq!(ash_shape(&[0.0, 0.0, 0.0], 90.0, AshVariant::S), None);
        let head = ClassifierHead::new(Matrix::from_rows(&[vec![1.0, 1.0, 1.0], vec![0.0; 3]]).unwrap(), vec![0.5, -0.5]).unwrap();
        let f = Matrix::from_rows(&[vec![0.0, 0.0, 0.0], vec![-1.0, 2.0, 1.0]]).unwrap();
        let batch = RepSet::with_penultimate("b", f.clone(), head.logits_matrix(&f), None).unwrap();
        let mut w = ScoreWarnings::default();
        let s = score_ash(&batch, &head, 90.0, AshVariant::S, &mut w);
        assert_eq!(s[0], logsumexp(&[0.5, -0.5]));
        assert_eq!(w.all_pruned, 1);
        assert_eq!(w.negative_activations, 1);
    }

    #[test]
    fn dice_keeps_largest_contributions_per_row() {
        let head = ClassifierHead::new(
            Matrix::from_rows(&[vec![1.0, -2.0, 3.0, 0.5], vec![-1.0, 2.0, 0.1, 0.2]]).unwrap(),
            vec![0.0, 0.0],
        )
        .unwrap();
        let f = Matrix::from_rows(&[vec![1.0, 1.0, 1.0, 1.0]]).unwrap();
        let set = RepSet::with_penultimate("t", f.clone(), head.logits_matrix(&f), None).unwrap();
        let st = DiceState::fit(&set, &head, 50.0);
        assert_eq!(st.weight.row(0), &[1.0, 0.0, 3.0, 0.0]);
        assert_eq!(st.weight.row(1), &[0.0, 2.0, 0.0, 0.2]);
        assert_eq!(DiceState::fit(&set, &head, 0.0).weight, *head.weight());
    }
}
