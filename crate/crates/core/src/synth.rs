//! Seeded synthetic benchmarks with controllable semantic and covariate shift.
//!
//! # Randomness
//!
//! Every draw comes from ChaCha20 (the `rand_chacha` implementation, 20
//! rounds, 64-bit block counter and 64-bit stream id). The 32-byte key is the
//! seed as a little-endian `u64` followed by 24 zero bytes. Each split reads
//! its own stream, so splits are independent of generation order:
//!
//! | stream | use |
//! |---|---|
//! | 0 | class means, head, extra layer map, displacement directions |
//! | 1..=7 | `id_train`, `id_val`, `id_test`, `csid`, `ood_val`, `near`, `far` |
//! | 101.. | Monte-Carlo oracle redraws |
//!
//! A uniform `f64` in `[0, 1)` is `(x >> 11) · 2^-53` for the next `u64` `x`.
//! Standard normals use Box-Muller: for uniforms `u1, u2`,
//! `r = sqrt(-2 ln(1 - u1))`, `θ = 2π u2`, emitting `r cos θ` then `r sin θ`.
//! Transcendentals go through `libm`, so output is bit-identical across
//! platforms.
//!
//! # Generative model
//!
//! Class means are `offset · 1 + radius · v_c` with the `v_c` orthonormal and
//! orthogonal to the all-ones vector (random unit directions once the
//! classes outnumber `d - 1`). ID samples are `N(μ_c, I)` with class `i mod C`.
//! The head is the linear discriminant of that mixture plus small Gaussian
//! noise. Each class has an OOD displacement direction mixing "toward the
//! centroid of the means" with a random component; near and far OOD sit at
//! `μ_c + δ · u_c` with unit noise, and OOD validation uses a second,
//! independently drawn set of directions at the midpoint displacement. csID
//! adds isotropic noise of scale `sigma_cov` to fresh ID draws.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{DetectorKind, DetectorSpec, FittedDetector};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::repset::{save_manifest, BenchmarkManifest, ClassifierHead, RepSet, PENULTIMATE};

/// Name of the optional extra feature layer.
pub const EXTRA_LAYER: &str = "layer3";

const OFFSET: f64 = 8.0;
const RADIUS: f64 = 4.5;
const HEAD_NOISE: f64 = 0.05;
const EXTRA_NOISE: f64 = 0.1;
const ORACLE_STREAM: u64 = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    #[serde(rename = "d")]
    pub dim: usize,
    #[serde(rename = "C")]
    pub num_classes: usize,
    /// Samples per split.
    pub n: usize,
    pub delta_near: f64,
    pub delta_far: f64,
    pub sigma_cov: f64,
    /// Weight of the random part of each OOD direction relative to the
    /// toward-centroid part.
    #[serde(default = "default_mix")]
    pub direction_mix: f64,
    /// Whether to write the extra `layer3` feature layer.
    #[serde(default = "default_true")]
    pub extra_layer: bool,
}

fn default_mix() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: 16,
            num_classes: 5,
            n: 2000,
            delta_near: 1.0,
            delta_far: 4.0,
            sigma_cov: 2.0,
            direction_mix: default_mix(),
            extra_layer: true,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SynthInvalid(m));
        if self.dim < 2 {
            return bad(format!("d = {} (need at least 2)", self.dim));
        }
        if self.num_classes < 2 {
            return bad(format!("C = {} (need at least 2)", self.num_classes));
        }
        if self.n < self.num_classes {
            return bad(format!("n = {} is smaller than C = {}", self.n, self.num_classes));
        }
        if !(self.delta_near > 0.0 && self.delta_far > self.delta_near && self.delta_far.is_finite()) {
            return bad(format!(
                "need delta_far > delta_near > 0, got delta_near = {}, delta_far = {}",
                self.delta_near, self.delta_far
            ));
        }
        if !(self.sigma_cov >= 0.0 && self.sigma_cov.is_finite()) {
            return bad(format!("sigma_cov = {} (need >= 0)", self.sigma_cov));
        }
        if !(self.direction_mix >= 0.0 && self.direction_mix.is_finite()) {
            return bad(format!("direction_mix = {} (need >= 0)", self.direction_mix));
        }
        Ok(())
    }
}

/// ChaCha20 stream with the Box-Muller normal sampler.
pub struct SynthRng {
    inner: ChaCha20Rng,
    spare: Option<f64>,
}

impl SynthRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha20Rng::from_seed(key);
        inner.set_stream(stream);
        Self { inner, spare: None }
    }

    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(1.0 - u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    fn normal_vec(&mut self, d: usize) -> Vec<f64> {
        (0..d).map(|_| self.normal()).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = libm::sqrt(dot(v, v));
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Removes the components along each (unit) vector of `basis`.
fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
    }
}

/// Generator parameters shared by all splits, drawn from stream 0.
#[derive(Debug, Clone)]
struct Model {
    means: Vec<Vec<f64>>,
    head: Arc<ClassifierHead>,
    extra: Option<Vec<Vec<f64>>>,
    test_dirs: Vec<Vec<f64>>,
    val_dirs: Vec<Vec<f64>>,
}

impl Model {
    fn draw(spec: &SynthSpec) -> Self {
        let (d, c) = (spec.dim, spec.num_classes);
        let mut rng = SynthRng::new(spec.seed, 0);
        let ones = vec![1.0 / (d as f64).sqrt(); d];

        let mut basis = vec![ones];
        let mut means = Vec::with_capacity(c);
        for _ in 0..c {
            let mut v = rng.normal_vec(d);
            if basis.len() < d {
                project_out(&mut v, &basis);
                normalize(&mut v);
                basis.push(v.clone());
            } else {
                project_out(&mut v, &basis[..1]);
                normalize(&mut v);
            }
            means.push(v.iter().map(|x| OFFSET + RADIUS * x).collect::<Vec<f64>>());
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| means.iter().map(|m| m[j]).sum::<f64>() / c as f64)
            .collect();

        let mut weight = Vec::with_capacity(c * d);
        let mut bias = Vec::with_capacity(c);
        for m in &means {
            let w: Vec<f64> = m.iter().zip(&centroid).map(|(a, b)| a - b).collect();
            let b = -dot(&w, &centroid) - 0.5 * dot(&w, &w);
            weight.extend(w.iter().map(|x| (x + HEAD_NOISE * rng.normal()) as f32));
            bias.push((b + HEAD_NOISE * rng.normal()) as f32);
        }
        let head = ClassifierHead::new(Matrix::new(c, d, weight).expect("shape"), bias).expect("finite head");

        let extra = spec.extra_layer.then(|| {
            let s = 1.0 / (d as f64).sqrt();
            (0..d).map(|_| rng.normal_vec(d).into_iter().map(|x| x * s).collect()).collect()
        });

        let dirs = |rng: &mut SynthRng| -> Vec<Vec<f64>> {
            means
                .iter()
                .map(|m| {
                    let mut toward: Vec<f64> = centroid.iter().zip(m).map(|(a, b)| a - b).collect();
                    normalize(&mut toward);
                    let mut rand = rng.normal_vec(d);
                    project_out(&mut rand, &basis[..1]);
                    normalize(&mut rand);
                    let mut u: Vec<f64> = toward
                        .iter()
                        .zip(&rand)
                        .map(|(t, r)| t + spec.direction_mix * r)
                        .collect();
                    project_out(&mut u, &basis[..1]);
                    normalize(&mut u);
                    u
                })
                .collect()
        };
        let test_dirs = dirs(&mut rng);
        let val_dirs = dirs(&mut rng);
        Self {
            means,
            head: Arc::new(head),
            extra,
            test_dirs,
            val_dirs,
        }
    }

    /// Draws `n` samples of class `i mod C` at `μ_c + delta · dirs[c]` with
    /// unit noise plus extra noise of scale `sigma`.
    fn sample(
        &self,
        name: &str,
        rng: &mut SynthRng,
        n: usize,
        shift: Option<(&[Vec<f64>], f64)>,
        sigma: f64,
        labeled: bool,
    ) -> RepSet {
        let c = self.means.len();
        let d = self.means[0].len();
        let mut feats = Vec::with_capacity(n * d);
        for i in 0..n {
            let k = i % c;
            for j in 0..d {
                let mut x = self.means[k][j] + rng.normal();
                if let Some((dirs, delta)) = shift {
                    x += delta * dirs[k][j];
                }
                if sigma > 0.0 {
                    x += sigma * rng.normal();
                }
                feats.push(x as f32);
            }
        }
        let penultimate = Matrix::new(n, d, feats).expect("shape");
        let logits = self.head.logits_matrix(&penultimate);
        let mut layers = BTreeMap::new();
        if let Some(a) = &self.extra {
            let mut data = Vec::with_capacity(n * d);
            for f in penultimate.iter_rows() {
                for row in a {
                    let v: f64 = row.iter().zip(f).map(|(w, &x)| w * x as f64).sum();
                    data.push((v + EXTRA_NOISE * rng.normal()) as f32);
                }
            }
            layers.insert(EXTRA_LAYER.to_string(), Matrix::new(n, d, data).expect("shape"));
        }
        layers.insert(PENULTIMATE.to_string(), penultimate);
        let labels = labeled.then(|| (0..n).map(|i| i % c).collect());
        RepSet::new(name, layers, logits, labels).expect("generated set is valid")
    }
}

#[derive(Clone, Copy)]
enum Split {
    IdTrain,
    IdVal,
    IdTest,
    Csid,
    OodVal,
    Near,
    Far,
}

impl Split {
    const ALL: [Split; 7] = [
        Split::IdTrain,
        Split::IdVal,
        Split::IdTest,
        Split::Csid,
        Split::OodVal,
        Split::Near,
        Split::Far,
    ];

    fn stream(self) -> u64 {
        self as u64 + 1
    }

    fn name(self) -> &'static str {
        match self {
            Split::IdTrain => "id_train",
            Split::IdVal => "id_val",
            Split::IdTest => "id_test",
            Split::Csid => "csid",
            Split::OodVal => "ood_val",
            Split::Near => "near",
            Split::Far => "far",
        }
    }

    fn draw(self, spec: &SynthSpec, model: &Model, seed: u64, stream: u64, n: usize) -> RepSet {
        let mut rng = SynthRng::new(seed, stream);
        let name = self.name();
        match self {
            Split::IdTrain | Split::IdVal | Split::IdTest => model.sample(name, &mut rng, n, None, 0.0, true),
            Split::Csid => model.sample(name, &mut rng, n, None, spec.sigma_cov, true),
            Split::OodVal => {
                let delta = 0.5 * (spec.delta_near + spec.delta_far);
                model.sample(name, &mut rng, n, Some((&model.val_dirs, delta)), 0.0, false)
            }
            Split::Near => model.sample(name, &mut rng, n, Some((&model.test_dirs, spec.delta_near)), 0.0, false),
            Split::Far => model.sample(name, &mut rng, n, Some((&model.test_dirs, spec.delta_far)), 0.0, false),
        }
    }
}

/// Builds the benchmark in memory.
pub fn build(spec: &SynthSpec) -> Result<BenchmarkManifest> {
    spec.validate()?;
    let model = Model::draw(spec);
    let mut sets: Vec<RepSet> = Split::ALL
        .par_iter()
        .map(|s| s.draw(spec, &model, spec.seed, s.stream(), spec.n))
        .collect();
    let mut take = || sets.remove(0);
    let (id_train, id_val, id_test, csid, ood_val, near, far) =
        (take(), take(), take(), take(), take(), take(), take());
    let head = Arc::try_unwrap(model.head).unwrap_or_else(|h| (*h).clone());
    let mut m = BenchmarkManifest::new(
        format!("synth-{}", spec.seed),
        spec.num_classes,
        head,
        id_train,
        id_val,
        id_test,
        vec![csid],
        ood_val,
        vec![near],
        vec![far],
    )?;
    m.category_disjoint_attested = Some(true);
    Ok(m)
}

/// Writes a complete manifest directory; returns the manifest path.
pub fn generate(spec: &SynthSpec, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let manifest = build(spec)?;
    save_manifest(&manifest, dir)
}

/// `P(S_id > S_ood) + 0.5 P(S_id = S_ood)` by direct enumeration of all pairs.
pub fn pairwise_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut total = 0.0;
    for &a in id {
        for &b in ood {
            total += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    total / (id.len() as f64 * ood.len() as f64)
}

/// Near-OOD AUROC of `kind` (default hyperparameters) on fresh draws from the
/// generator of `spec`: the detector is fit on a new training split, then
/// `n_mc` ID and `n_mc` near-OOD samples are scored.
pub fn mc_auroc_oracle(spec: &SynthSpec, kind: DetectorKind, n_mc: usize) -> Result<f64> {
    spec.validate()?;
    mc_auroc_oracle_at(spec, kind, n_mc, spec.delta_near)
}

/// [`mc_auroc_oracle`] at an explicit near-OOD displacement; `delta = 0`
/// makes the OOD sample distributed exactly as ID.
pub fn mc_auroc_oracle_at(spec: &SynthSpec, kind: DetectorKind, n_mc: usize, delta: f64) -> Result<f64> {
    if n_mc < 1000 {
        return Err(Error::SynthInvalid(format!("n_mc = {n_mc} (need at least 1000)")));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::SynthInvalid(format!("delta = {delta} (need >= 0)")));
    }
    let mut probe = spec.clone();
    probe.delta_near = delta;
    let model = Model::draw(&probe);
    let s = ORACLE_STREAM;
    let train = Split::IdTrain.draw(&probe, &model, probe.seed, s, probe.n.max(probe.num_classes));
    let val = Split::IdVal.draw(&probe, &model, probe.seed, s + 1, probe.n.max(probe.num_classes));
    let id = Split::IdTest.draw(&probe, &model, probe.seed, s + 2, n_mc);
    let near = Split::Near.draw(&probe, &model, probe.seed, s + 3, n_mc);
    let det = FittedDetector::fit(&DetectorSpec::new(kind), &train, &val, &model.head)?;
    let a = det.score(&id)?.values;
    let b = det.score(&near)?.values;
    Ok(pairwise_auroc(&a, &b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use crate::protocol::evaluate_pair;
    use crate::repset::load_manifest;

    fn small() -> SynthSpec {
        SynthSpec {
            seed: 7,
            dim: 8,
            num_classes: 3,
            n: 60,
            ..SynthSpec::default()
        }
    }

    fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
        let mut out = BTreeMap::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(p) = stack.pop() {
            for e in std::fs::read_dir(&p).unwrap() {
                let e = e.unwrap().path();
                if e.is_dir() {
                    stack.push(e);
                } else {
                    out.insert(e.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&e).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn uniform_and_normal_streams_are_fixed() {
        let mut a = SynthRng::new(42, 3);
        let mut b = SynthRng::new(42, 3);
        let xs: Vec<f64> = (0..5).map(|_| a.normal()).collect();
        let ys: Vec<f64> = (0..5).map(|_| b.normal()).collect();
        assert_eq!(xs, ys);
        let mut c = SynthRng::new(42, 4);
        assert_ne!(xs[0], c.normal());
        let u = SynthRng::new(1, 0).uniform();
        assert!((0.0..1.0).contains(&u));
    }

    #[test]
    fn normal_moments() {
        let mut r = SynthRng::new(3, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| r.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn same_seed_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate(&small(), a.path()).unwrap();
        generate(&small(), b.path()).unwrap();
        let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
        assert!(ta.len() > 20);
        assert_eq!(ta, tb);
        let mut other = small();
        other.seed = 8;
        let c = tempfile::tempdir().unwrap();
        generate(&other, c.path()).unwrap();
        assert_ne!(ta, read_tree(c.path()));
    }

    #[test]
    fn generated_manifest_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = generate(&small(), dir.path()).unwrap();
        let m = load_manifest(&path).unwrap();
        let mem = build(&small()).unwrap();
        assert_eq!(m.id_test, mem.id_test);
        assert_eq!(m.far_ood, mem.far_ood);
        assert_eq!(m.id_train.layer_names(), vec![EXTRA_LAYER.to_string(), PENULTIMATE.to_string()]);
        for set in m.all_sets() {
            assert_eq!(set.logits(), &m.head.logits_matrix(set.penultimate()));
        }
    }

    #[test]
    fn zero_sigma_cov_matches_id_distribution() {
        let mut spec = small();
        spec.sigma_cov = 0.0;
        spec.n = 3000;
        let m = build(&spec).unwrap();
        let csid = &m.csid_tests[0];
        assert_eq!(csid.labels(), m.id_test.labels());
        assert_ne!(csid.penultimate(), m.id_test.penultimate());
        // same generator parameters: per-class means and variances agree
        let stats = |s: &RepSet| -> (Vec<f64>, f64) {
            let f = s.penultimate();
            let y = s.labels().unwrap();
            let mut mean = vec![0.0; f.cols()];
            let mut sq = 0.0;
            for (row, &k) in f.iter_rows().zip(y) {
                if k == 0 {
                    for (m, &x) in mean.iter_mut().zip(row) {
                        *m += x as f64;
                    }
                }
            }
            let n0 = y.iter().filter(|&&k| k == 0).count() as f64;
            mean.iter_mut().for_each(|m| *m /= n0);
            for (row, &k) in f.iter_rows().zip(y) {
                if k == 0 {
                    sq += row.iter().zip(&mean).map(|(&x, m)| (x as f64 - m).powi(2)).sum::<f64>();
                }
            }
            (mean, sq / (n0 * f.cols() as f64))
        };
        let (ma, va) = stats(csid);
        let (mb, vb) = stats(&m.id_test);
        for (a, b) in ma.iter().zip(&mb) {
            assert!((a - b).abs() < 0.15, "{a} vs {b}");
        }
        assert!((va - vb).abs() < 0.1, "{va} vs {vb}");
    }

    #[test]
    fn csid_noise_scales_variance() {
        let mut spec = small();
        spec.n = 3000;
        let m = build(&spec).unwrap();
        let var = |s: &RepSet| {
            let f = s.penultimate();
            let col: Vec<f64> = f.iter_rows().map(|r| r[0] as f64).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64
        };
        assert!(var(&m.csid_tests[0]) > var(&m.id_test) + 3.0);
    }

    #[test]
    fn rejects_invalid_specs() {
        let cases = [
            SynthSpec { delta_near: 0.0, ..small() },
            SynthSpec { delta_far: 0.5, ..small() },
            SynthSpec { sigma_cov: -1.0, ..small() },
            SynthSpec { n: 2, ..small() },
        ];
        for s in cases {
            assert!(matches!(build(&s), Err(Error::SynthInvalid(_))), "{s:?}");
        }
        assert!(matches!(
            mc_auroc_oracle(&small(), DetectorKind::Msp, 999),
            Err(Error::SynthInvalid(_))
        ));
    }

    #[test]
    fn zero_extra_layers() {
        let spec = SynthSpec {
            extra_layer: false,
            ..small()
        };
        let m = build(&spec).unwrap();
        assert_eq!(m.id_train.layer_names(), vec![PENULTIMATE.to_string()]);
    }

    #[test]
    fn mds_separates_distant_far_ood() {
        let spec = SynthSpec {
            seed: 11,
            dim: 8,
            num_classes: 4,
            n: 2000,
            delta_near: 1.0,
            delta_far: 50.0,
            sigma_cov: 0.0,
            ..SynthSpec::default()
        };
        let m = build(&spec).unwrap();
        let det = FittedDetector::fit(&DetectorSpec::new(DetectorKind::Mds), &m.id_train, &m.id_val, &m.head).unwrap();
        let rec = evaluate_pair(&det, &[&m.id_test], &m.far_ood[0]).unwrap();
        assert!(rec.auroc >= 0.999, "{}", rec.auroc);
    }

    #[test]
    fn oracle_at_zero_delta_is_chance() {
        let a = mc_auroc_oracle_at(&small(), DetectorKind::Mds, 4000, 0.0).unwrap();
        assert!((a - 0.5).abs() <= 0.02, "{a}");
    }

    #[test]
    fn pairwise_oracle_matches_metrics() {
        let m = build(&small()).unwrap();
        let det = FittedDetector::fit(&DetectorSpec::new(DetectorKind::Msp), &m.id_train, &m.id_val, &m.head).unwrap();
        let a = det.score(&m.id_test).unwrap().values;
        let b = det.score(&m.near_ood[0]).unwrap().values;
        let fast = metrics::auroc(&a, &b).unwrap();
        assert!((fast - pairwise_auroc(&a, &b)).abs() <= 1e-9);
        let tied = [1.0, 1.0, 2.0];
        assert_eq!(pairwise_auroc(&tied, &[1.0, 0.0]), metrics::auroc(&tied, &[1.0, 0.0]).unwrap());
    }
}
