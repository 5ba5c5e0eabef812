#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::sync::Arc;

use oodeval::repset::PENULTIMATE;
use oodeval::synth::SynthRng;
use oodeval::{ClassifierHead, Matrix, RepSet};

pub fn rng(seed: u64) -> SynthRng {
    SynthRng::new(seed, 0)
}

pub fn below(rng: &mut SynthRng, n: usize) -> usize {
    ((rng.uniform() * n as f64) as usize).min(n - 1)
}

pub fn random_head(rng: &mut SynthRng, c: usize, d: usize) -> Arc<ClassifierHead> {
    let w: Vec<f32> = (0..c * d).map(|_| (rng.normal() * 0.5) as f32).collect();
    let b: Vec<f32> = (0..c).map(|_| (rng.normal() * 0.5) as f32).collect();
    Arc::new(ClassifierHead::new(Matrix::new(c, d, w).unwrap(), b).unwrap())
}

/// Class-structured Gaussian features with logits from `head`; class of
/// sample `i` is `i mod C`. `relu` clamps features at zero.
pub fn blobs(
    rng: &mut SynthRng,
    name: &str,
    n: usize,
    means: &[Vec<f64>],
    head: &ClassifierHead,
    relu: bool,
) -> RepSet {
    let d = means[0].len();
    let c = means.len();
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        for j in 0..d {
            let mut x = means[i % c][j] + rng.normal();
            if relu {
                x = x.max(0.0);
            }
            data.push(x as f32);
        }
    }
    let f = Matrix::new(n, d, data).unwrap();
    let z = head.logits_matrix(&f);
    RepSet::with_penultimate(name, f, z, Some((0..n).map(|i| i % c).collect())).unwrap()
}

pub fn random_means(rng: &mut SynthRng, c: usize, d: usize, scale: f64, offset: f64) -> Vec<Vec<f64>> {
    (0..c)
        .map(|_| (0..d).map(|_| offset + scale * rng.normal()).collect())
        .collect()
}

/// Same samples with features replaced (logits kept).
pub fn with_features(set: &RepSet, features: Matrix) -> RepSet {
    let mut layers = BTreeMap::new();
    layers.insert(PENULTIMATE.to_string(), features);
    RepSet::new(set.name(), layers, set.logits().clone(), set.labels().map(|l| l.to_vec())).unwrap()
}

/// Inverse of a square matrix by Gauss-Jordan elimination with partial
/// pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular");
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[col][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Eigenvalues and eigenvectors (as columns of the returned matrix) of a
/// symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i][i]).collect(), v)
}

pub fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

pub fn logsumexp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `P(S_id > S_ood) + 0.5 P(S_id = S_ood)` over all pairs.
pub fn pairwise_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &a in id {
        for &b in ood {
            twice += if a > b { 2 } else if a == b { 1 } else { 0 };
        }
    }
    twice as f64 / (2 * id.len() * ood.len()) as f64
}

/// Average precision with OOD positive by enumerating every threshold of the
/// PR curve: predict OOD when the ID-confidence is at most `t`.
pub fn brute_force_ap(id: &[f64], ood: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = id.iter().chain(ood).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let m = ood.len() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let tp = ood.iter().filter(|&&s| s <= t).count() as f64;
        let fp = id.iter().filter(|&&s| s <= t).count() as f64;
        let recall = tp / m;
        if tp > 0.0 {
            ap += (recall - prev_recall) * tp / (tp + fp);
        }
        prev_recall = recall;
    }
    ap
}
