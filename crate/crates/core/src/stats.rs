//! Goodness-of-fit helpers used to summarize simulated p-values.

use serde::Serialize;

use crate::{Error, Result};

/// One-sample Kolmogorov-Smirnov result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// KS test of `sample` against a continuous `cdf`.
///
/// The p-value uses the asymptotic Kolmogorov law with Stephens' small-sample
/// correction, which is accurate to a few percent for `n >= 10`.
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if sample.is_empty() {
        return Err(Error::InvalidArgument("KS test needs a nonempty sample".into()));
    }
    if sample.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("KS sample contains NaN".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let nf = n as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    let root = nf.sqrt();
    let lambda = (root + 0.12 + 0.11 / root) * statistic;
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_sf(lambda),
        n,
    })
}

/// KS test against the uniform law on `[0, 1]`.
pub fn ks_uniform(sample: &[f64]) -> Result<KsResult> {
    ks_test(sample, |x| x.clamp(0.0, 1.0))
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut total = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        total += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * total).clamp(0.0, 1.0)
}

/// Proportion with a Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub successes: usize,
    pub trials: usize,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Wilson interval at normal quantile `z` (1.96 for 95%).
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> Result<Proportion> {
    if trials == 0 {
        return Err(Error::InvalidArgument("proportion of zero trials".into()));
    }
    if successes > trials {
        return Err(Error::InvalidArgument("more successes than trials".into()));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(Proportion {
        successes,
        trials,
        estimate: p,
        lower: (centre - half).max(0.0),
        upper: (centre + half).min(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_known_values() {
        // Critical values of the limiting law.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn evenly_spaced_points_pass() {
        let sample: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let ks = ks_uniform(&sample).unwrap();
        assert!((ks.statistic - 0.0005).abs() < 1e-12);
        assert!(ks.p_value > 0.99);
    }

    #[test]
    fn shifted_sample_fails() {
        let sample: Vec<f64> = (0..1000).map(|i| ((i as f64 + 0.5) / 1000.0).powi(2)).collect();
        assert!(ks_uniform(&sample).unwrap().p_value < 1e-6);
    }

    #[test]
    fn wilson_contains_estimate() {
        let p = wilson_interval(50, 1000, 1.96).unwrap();
        assert!(p.lower < 0.05 && p.upper > 0.05);
        assert!((p.upper - p.lower) < 0.03);
        let zero = wilson_interval(0, 10, 1.96).unwrap();
        assert_eq!(zero.lower, 0.0);
        assert!(wilson_interval(3, 2, 1.96).is_err());
    }
}
