//! Detection metrics with OOD as the positive class, plus ID accuracy.
//!
//! Inputs are ID-confidence scores (higher = more ID). Conventions:
//!
//! * AUROC is `P(S_id > S_ood) + 0.5 · P(S_id = S_ood)` over all pairs.
//! * AUPR is step-wise average precision with OOD positive, ranking samples
//!   by ascending ID-confidence; tied scores form one threshold block.
//!   [`aupr_in`] is the ID-positive counterpart.
//! * FPR@95 fixes the largest threshold that keeps at least 95% of ID scores
//!   at or above it, and reports the fraction of OOD scores that also pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::argmax;
use crate::repset::RepSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub auroc: f64,
    pub aupr: f64,
    /// AUPR with ID as the positive class.
    pub aupr_in: f64,
    pub fpr95: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

impl MetricsRecord {
    pub fn compute(id: &[f64], ood: &[f64]) -> Result<Self> {
        Ok(Self {
            auroc: auroc(id, ood)?,
            aupr: aupr(id, ood)?,
            aupr_in: aupr_in(id, ood)?,
            fpr95: fpr_at_95(id, ood)?,
            n_id: id.len(),
            n_ood: ood.len(),
        })
    }
}

fn check(id: &[f64], ood: &[f64]) -> Result<()> {
    if id.is_empty() {
        return Err(Error::EmptyInput("no ID scores"));
    }
    if ood.is_empty() {
        return Err(Error::EmptyInput("no OOD scores"));
    }
    Ok(())
}

/// Scores sorted ascending and grouped into runs of equal value; each group
/// carries its (ID count, OOD count).
fn tie_groups(id: &[f64], ood: &[f64]) -> Vec<(u64, u64)> {
    let mut all: Vec<(f64, bool)> = id
        .iter()
        .map(|&s| (s, false))
        .chain(ood.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut prev: Option<f64> = None;
    for (s, is_ood) in all {
        // -0.0 and 0.0 compare equal and belong to one group
        if prev != Some(s) {
            groups.push((0, 0));
            prev = Some(s);
        }
        let g = groups.last_mut().unwrap();
        if is_ood {
            g.1 += 1;
        } else {
            g.0 += 1;
        }
    }
    groups
}

/// Twice the Mann-Whitney count `#{S_id > S_ood} + 0.5 #{S_id = S_ood}` and
/// twice the number of pairs. Integer, so identities such as
/// `auroc(-s) = 1 - auroc(s)` hold exactly at this level.
pub fn auroc_counts(id: &[f64], ood: &[f64]) -> Result<(u128, u128)> {
    check(id, ood)?;
    let mut ood_below: u128 = 0;
    let mut twice_concordant: u128 = 0;
    for (n_id, n_ood) in tie_groups(id, ood) {
        twice_concordant += 2 * n_id as u128 * ood_below + n_id as u128 * n_ood as u128;
        ood_below += n_ood as u128;
    }
    Ok((twice_concordant, 2 * id.len() as u128 * ood.len() as u128))
}

/// The division always produces the half at or above 0.5 and derives the
/// other half by an exact subtraction, so `auroc(-id, -ood)` equals
/// `1 - auroc(id, ood)` bit for bit.
pub fn auroc(id: &[f64], ood: &[f64]) -> Result<f64> {
    let (num, den) = auroc_counts(id, ood)?;
    let upper = num.max(den - num) as f64 / den as f64;
    Ok(if 2 * num >= den { upper } else { 1.0 - upper })
}

/// Average precision with OOD positive.
pub fn aupr(id: &[f64], ood: &[f64]) -> Result<f64> {
    check(id, ood)?;
    let m = ood.len() as f64;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut ap = 0.0;
    for (n_id, n_ood) in tie_groups(id, ood) {
        tp += n_ood;
        fp += n_id;
        if n_ood > 0 {
            ap += (n_ood as f64 / m) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(ap)
}

/// Average precision with ID positive, ranking by descending ID-confidence.
pub fn aupr_in(id: &[f64], ood: &[f64]) -> Result<f64> {
    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
    aupr(&neg(ood), &neg(id))
}

/// OOD false-positive rate at the threshold that retains 95% of ID.
pub fn fpr_at_95(id: &[f64], ood: &[f64]) -> Result<f64> {
    check(id, ood)?;
    let n = id.len();
    let keep = (95 * n).div_ceil(100);
    let q = n - keep + 1;
    let mut sorted = id.to_vec();
    let (_, tau, _) = sorted.select_nth_unstable_by(q - 1, f64::total_cmp);
    let tau = *tau;
    let passing = ood.iter().filter(|&&s| s >= tau).count();
    Ok(passing as f64 / ood.len() as f64)
}

/// Top-1 accuracy pooled over the concatenation of `sets`; argmax ties go to
/// the smallest class index.
pub fn id_accuracy<'a>(sets: impl IntoIterator<Item = &'a RepSet>) -> Result<f64> {
    let (mut correct, mut total) = (0usize, 0usize);
    for set in sets {
        let labels = set.require_labels()?;
        for (z, &y) in set.logits().iter_rows().zip(labels) {
            correct += usize::from(argmax(z) == y);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("no labeled samples"));
    }
    Ok(correct as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    #[test]
    fn auroc_hand_examples() {
        assert_eq!(auroc(&[1., 2., 3.], &[-1., 0.]).unwrap(), 1.0);
        assert_eq!(auroc(&[0., 0.], &[0., 0.]).unwrap(), 0.5);
        assert_eq!(auroc(&[1., 3.], &[2., 4.]).unwrap(), 0.25);
    }

    #[test]
    fn negation_is_exact_complement() {
        let id = [0.3, 1.7, 2.2, 2.2, 5.0, 0.1, 9.0];
        let ood = [0.2, 2.2, 4.0];
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let a = auroc(&id, &ood).unwrap();
        let b = auroc(&neg(&id), &neg(&ood)).unwrap();
        assert_eq!(b, 1.0 - a);
        assert_eq!(a, 1.0 - b);
    }

    #[test]
    fn aupr_hand_examples() {
        assert_eq!(aupr(&[5., 6.], &[1., 2., 3.]).unwrap(), 1.0);
        assert_eq!(aupr(&[1., 1.], &[1., 1., 1.]).unwrap(), 3.0 / 5.0);
        assert!((aupr(&[3.], &[2., 4.]).unwrap() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn fpr95_hand_examples() {
        let id: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(fpr_at_95(&id, &[0.5, 3.5, 97.]).unwrap(), 1.0 / 3.0);
        assert_eq!(fpr_at_95(&id, &[-1., 0.]).unwrap(), 0.0);
        // the same multiset as ID: 95 or 96 of 100 pass
        let f = fpr_at_95(&id, &id).unwrap();
        assert!((f - 0.95).abs() <= 0.01 + 1e-12, "{f}");
    }

    #[test]
    fn empty_input() {
        assert!(matches!(auroc(&[], &[1.]), Err(Error::EmptyInput(_))));
        assert!(matches!(aupr(&[1.], &[]), Err(Error::EmptyInput(_))));
        assert!(matches!(fpr_at_95(&[], &[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn accuracy_pools_and_breaks_ties_low() {
        let mk = |z: Vec<Vec<f32>>, y: Vec<usize>| {
            let f = Matrix::from_rows(&vec![vec![1.0]; z.len()]).unwrap();
            RepSet::with_penultimate("s", f, Matrix::from_rows(&z).unwrap(), Some(y)).unwrap()
        };
        let a = mk(vec![vec![1., 0.]], vec![0]);
        let b = mk(vec![vec![1., 0.], vec![1., 0.], vec![0., 0.]], vec![1, 1, 1]);
        assert_eq!(id_accuracy([&a]).unwrap(), 1.0);
        assert_eq!(id_accuracy([&a, &b]).unwrap(), 0.25);
        let unlabeled = RepSet::with_penultimate(
            "u",
            Matrix::from_rows(&[vec![1.0]]).unwrap(),
            Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap(),
            None,
        )
        .unwrap();
        assert!(matches!(id_accuracy([&unlabeled]), Err(Error::MissingLabels(_))));
    }
}
