//! Threshold calibration for the safety monitor.
//!
//! Observed inter-channel IoU values are summarised by a Beta distribution
//! fitted with the method of moments. The monitor threshold is the
//! `(1 - availability)` quantile of that fit, so that under the model a
//! fraction `availability` of frames clears the threshold.
//!
//! The regularized incomplete beta function is evaluated with the modified
//! Lentz continued fraction, switching to the reflected argument where the
//! direct expansion converges slowly. The quantile is found by bisection on
//! `[0, 1]`, which always brackets the root of a monotone CDF.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::{Error, Result};

/// Fixed bin count of the IoU histogram emitted with calibration results.
pub const HISTOGRAM_BINS: usize = 20;

const CF_MAX_ITER: usize = 1000;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    alpha: f64,
    beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0) {
            return Err(Error::InvalidValue(format!(
                "Beta parameters must be finite and positive, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        beta_cdf(self, x)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        beta_quantile(self, p)
    }
}

/// Mean and unbiased (n - 1) variance of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
}

impl SampleMoments {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::DegenerateSample(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(bad) = samples.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!(
                "sample {bad} lies outside [0, 1]"
            )));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let constant = samples.iter().all(|&v| v == samples[0]);
        let variance = if constant {
            0.0
        } else {
            samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        };
        Ok(Self {
            count: samples.len(),
            mean,
            variance,
        })
    }
}

/// Method-of-moments Beta parameters from a mean and variance.
pub fn fit_beta_moments(mean: f64, variance: f64) -> Result<BetaParams> {
    if !(mean > 0.0 && mean < 1.0) {
        return Err(Error::DegenerateSample(format!(
            "mean {mean} must lie strictly inside (0, 1)"
        )));
    }
    let bound = mean * (1.0 - mean);
    if variance.is_nan() || variance <= 0.0 {
        return Err(Error::DegenerateSample("sample variance is zero".into()));
    }
    if variance >= bound {
        return Err(Error::DegenerateSample(format!(
            "variance {variance} must be below mean*(1-mean) = {bound}"
        )));
    }
    let k = bound / variance - 1.0;
    BetaParams::new(mean * k, (1.0 - mean) * k)
}

pub fn fit_beta_mom(samples: &[f64]) -> Result<BetaParams> {
    let m = SampleMoments::from_samples(samples)?;
    fit_beta_moments(m.mean, m.variance)
}

/// Regularized incomplete beta function `I_x(alpha, beta)`.
///
/// `x` is clamped to `[0, 1]`.
pub fn beta_cdf(params: &BetaParams, x: f64) -> f64 {
    let (a, b) = (params.alpha, params.beta);
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    let v = if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() / a) * continued_fraction(a, b, x)
    } else {
        1.0 - (ln_front.exp() / b) * continued_fraction(b, a, 1.0 - x)
    };
    v.clamp(0.0, 1.0)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
fn continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let clamp_tiny = |v: f64| if v.abs() < CF_TINY { CF_TINY } else { v };
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 / clamp_tiny(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / clamp_tiny(1.0 + even * d);
        c = clamp_tiny(1.0 + even / c);
        h *= d * c;
        let odd = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / clamp_tiny(1.0 + odd * d);
        c = clamp_tiny(1.0 + odd / c);
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Inverse of [`beta_cdf`] by bisection. `p` is clamped to `[0, 1]`.
pub fn beta_quantile(params: &BetaParams, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_cdf(params, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Both endpoints are within one ulp; return whichever lands closer to p.
    if (beta_cdf(params, lo) - p).abs() <= (beta_cdf(params, hi) - p).abs() {
        lo
    } else {
        hi
    }
}

/// Empirical threshold: the largest sample value `t` such that at least a
/// fraction `availability` of the samples are `>= t`.
pub fn empirical_threshold(samples: &[f64], availability: f64) -> Result<f64> {
    check_availability(availability)?;
    if samples.is_empty() {
        return Err(Error::DegenerateSample("no samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // need n - k >= availability * n
    let k = ((1.0 - availability) * n as f64).floor() as usize;
    Ok(sorted[k.min(n - 1)])
}

fn check_availability(availability: f64) -> Result<()> {
    if availability > 0.0 && availability < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidValue(format!(
            "target availability {availability} must lie strictly inside (0, 1)"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: BetaParams,
    pub sample_count: usize,
    pub sample_mean: f64,
    pub sample_variance: f64,
    pub target_availability: f64,
    /// Fitted-model threshold, used by the monitor.
    pub threshold: f64,
    /// Order-statistic threshold from the raw samples, for comparison.
    pub empirical_threshold: f64,
}

impl CalibrationResult {
    /// Fraction of frames the fitted model predicts will clear `threshold`.
    pub fn model_availability(&self, threshold: f64) -> f64 {
        1.0 - beta_cdf(&self.params, threshold)
    }
}

pub fn calibrate_threshold(samples: &[f64], target_availability: f64) -> Result<CalibrationResult> {
    check_availability(target_availability)?;
    let moments = SampleMoments::from_samples(samples)?;
    let params = fit_beta_moments(moments.mean, moments.variance)?;
    Ok(CalibrationResult {
        params,
        sample_count: moments.count,
        sample_mean: moments.mean,
        sample_variance: moments.variance,
        target_availability,
        threshold: beta_quantile(&params, 1.0 - target_availability),
        empirical_threshold: empirical_threshold(samples, target_availability)?,
    })
}

/// Equal-width histogram over `[0, 1]`; the value `1.0` falls in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn unit_histogram(samples: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    for &v in samples {
        if (0.0..=1.0).contains(&v) {
            let idx = ((v * bins as f64) as usize).min(bins - 1);
            counts[idx] += 1;
        }
    }
    let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    Histogram { edges, counts }
}
