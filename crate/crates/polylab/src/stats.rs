//! Small statistics toolkit: chunk-mergeable accumulators, log-space weight
//! reduction, self-normalized estimators, and a Kolmogorov-Smirnov harness
//! for checking simulated distributions.
//!
//! Accumulators merge by explicit binary operations so that a chunked
//! reduction gives bit-identical results for a fixed chunk layout, no
//! matter how many threads fold the chunks.

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

/// Running first and second moments of a scalar sample.
#[derive(Debug, Clone, Copy, Default)]
pub struct MomentAcc {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl MomentAcc {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    /// Merges `other` into `self`; call in fixed chunk order.
    pub fn merge(&mut self, other: &MomentAcc) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean; identical to the leave-one-out jackknife
    /// standard error for a sample mean.
    pub fn std_err(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Log-space weight accumulator tracking `max`, `sum exp(h - max)` and
/// `sum exp(2(h - max))`.
///
/// When every pushed value equals `c`, the internal scaled sums are exact
/// integers, so `log_sum_exp() - ln(n) == c` and `ess() == n` hold exactly.
#[derive(Debug, Clone, Copy)]
pub struct LogWeightAcc {
    pub n: u64,
    pub max: f64,
    s1: f64,
    s2: f64,
}

impl Default for LogWeightAcc {
    fn default() -> Self {
        LogWeightAcc { n: 0, max: f64::NEG_INFINITY, s1: 0.0, s2: 0.0 }
    }
}

impl LogWeightAcc {
    pub fn push(&mut self, h: f64) {
        self.n += 1;
        if h <= self.max {
            let r = (h - self.max).exp();
            self.s1 += r;
            self.s2 += r * r;
        } else {
            let r = (self.max - h).exp();
            self.s1 = self.s1 * r + 1.0;
            self.s2 = self.s2 * (r * r) + 1.0;
            self.max = h;
        }
    }

    pub fn merge(&mut self, other: &LogWeightAcc) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        if other.max <= self.max {
            let r = (other.max - self.max).exp();
            self.s1 += other.s1 * r;
            self.s2 += other.s2 * (r * r);
        } else {
            let r = (self.max - other.max).exp();
            self.s1 = self.s1 * r + other.s1;
            self.s2 = self.s2 * (r * r) + other.s2;
            self.max = other.max;
        }
        self.n += other.n;
    }

    /// `ln(sum_i exp(h_i))`.
    pub fn log_sum_exp(&self) -> f64 {
        self.max + self.s1.ln()
    }

    /// Effective sample size `(sum w)^2 / sum w^2`, scale-invariant.
    pub fn ess(&self) -> f64 {
        self.s1 * self.s1 / self.s2
    }

    /// Delta-method standard error of `(1/n) sum_i exp(h_i)` on the linear
    /// scale. Underflows to zero when the weights themselves underflow.
    pub fn mean_std_err(&self) -> f64 {
        let n = self.n as f64;
        let q = (self.s2 - self.s1 * self.s1 / n).max(0.0);
        self.max.exp() * (q / (n * (n - 1.0))).sqrt()
    }
}

/// Self-normalized estimate `sum w_i v_i / sum w_i` with delta-method
/// standard error, weights given in log space. Two-pass, sequential, and
/// invariant under a common shift of the log weights.
pub fn self_normalized(log_weights: &[f64], values: &[f64]) -> (f64, f64) {
    assert_eq!(log_weights.len(), values.len());
    let m = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sw = 0.0;
    let mut swv = 0.0;
    for (&h, &v) in log_weights.iter().zip(values) {
        let w = (h - m).exp();
        sw += w;
        swv += w * v;
    }
    let est = swv / sw;
    let mut dev = 0.0;
    for (&h, &v) in log_weights.iter().zip(values) {
        let w = (h - m).exp();
        dev += w * w * (v - est) * (v - est);
    }
    (est, dev.sqrt() / sw)
}

/// Median of a sample (averages the two central order statistics).
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Standard normal CDF via the Abramowitz-Stegun 7.1.26 rational
/// approximation of erf; absolute error below 1.5e-7.
pub fn normal_cdf(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    0.5 * (1.0 + erf(z))
}

fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Two-sided Kolmogorov-Smirnov distance between a sample and a reference
/// CDF. Sorts a copy of the sample.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!sample.is_empty());
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Asymptotic KS acceptance threshold `sqrt(ln(2/alpha) / 2n)`.
pub fn ks_threshold(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}
