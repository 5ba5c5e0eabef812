//! Weibull tail fitting for OpenMax.

/// Bisection stops once the shape bracket is narrower than this.
pub const SHAPE_TOLERANCE: f64 = 1e-8;
const SHAPE_MIN: f64 = 1e-6;
const SHAPE_MAX: f64 = 1e6;

/// Two-parameter Weibull on `x - shift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weibull {
    pub shape: f64,
    pub scale: f64,
    pub shift: f64,
}

impl Weibull {
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.shift {
            return 0.0;
        }
        1.0 - (-((x - self.shift) / self.scale).powf(self.shape)).exp()
    }
}

/// Tail model of one class: a fitted Weibull, or a step when the tail has
/// no spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailModel {
    Weibull(Weibull),
    /// All tail distances equal this value; CDF is 0 at or below it, 1 above.
    Step(f64),
}

impl TailModel {
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            TailModel::Weibull(w) => w.cdf(x),
            TailModel::Step(v) => {
                if x > v {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Fits the `tail_size` largest of `distances`. The shift is the smallest
    /// tail value; the shape/scale MLE uses the strictly positive excesses
    /// over it.
    pub fn fit_tail(distances: &[f64], tail_size: usize) -> Self {
        let mut sorted = distances.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        sorted.truncate(tail_size.max(1));
        let shift = *sorted.last().expect("non-empty tail");
        let excess: Vec<f64> = sorted.iter().map(|&x| x - shift).filter(|&e| e > 0.0).collect();
        match fit_mle(&excess) {
            Some((shape, scale)) => TailModel::Weibull(Weibull { shape, scale, shift }),
            None => TailModel::Step(shift),
        }
    }
}

/// Maximum-likelihood shape and scale for positive samples. The shape solves
///
/// `Σ x^k ln x / Σ x^k - 1/k - mean(ln x) = 0`
///
/// by bisection; the left side is increasing in `k`. Returns `None` for an
/// empty sample.
pub fn fit_mle(samples: &[f64]) -> Option<(f64, f64)> {
    if samples.is_empty() || samples.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
        return None;
    }
    // the stationarity equation is scale-free; work on x / max to keep powers bounded
    let max = samples.iter().copied().fold(0.0, f64::max);
    let y: Vec<f64> = samples.iter().map(|&x| x / max).collect();
    let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mean_log = logs.iter().sum::<f64>() / y.len() as f64;
    let g = |k: f64| {
        let (mut num, mut den) = (0.0, 0.0);
        for (&v, &l) in y.iter().zip(&logs) {
            let p = v.powf(k);
            num += p * l;
            den += p;
        }
        num / den - 1.0 / k - mean_log
    };

    let mut lo = 1.0;
    while g(lo) > 0.0 && lo > SHAPE_MIN {
        lo /= 2.0;
    }
    let mut hi = 1.0;
    while g(hi) < 0.0 && hi < SHAPE_MAX {
        hi *= 2.0;
    }
    let shape = if g(hi) < 0.0 {
        SHAPE_MAX
    } else {
        while hi - lo > SHAPE_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let mean_pow = y.iter().map(|v| v.powf(shape)).sum::<f64>() / y.len() as f64;
    Some((shape, max * mean_pow.powf(1.0 / shape)))
}
