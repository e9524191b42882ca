//! Distribution kernels used by the tests: F, chi-squared, scaled chi and
//! Beta laws, their truncations to finite unions of intervals, the
//! chi-squared approximation to the F CDF, and the truncated-normal proposal
//! of the importance sampler.
//!
//! Probabilities of truncation sets are accumulated in log space. The mass
//! of each interval is a difference of CDFs or of survival functions,
//! whichever side of the median the interval starts on.

use serde::{Deserialize, Serialize, Serializer};
use statrs::function::erf::{erfc, erfc_inv};

use crate::rng::{stream_rng, uniform_open};
use crate::special::{ln_add_exp, ln_beta, ln_beta_inc, ln_gamma_inc, ln_sub_exp};
use crate::{Error, Result};

/// Continuous laws on `(0, inf)` (or `(0, 1)` for Beta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Distribution {
    F { d1: f64, d2: f64 },
    ChiSquared { k: f64 },
    /// `scale * chi_k`.
    ScaledChi { k: f64, scale: f64 },
    Beta { a: f64, b: f64 },
}

impl Distribution {
    pub fn f(d1: usize, d2: usize) -> Self {
        Distribution::F {
            d1: d1 as f64,
            d2: d2 as f64,
        }
    }

    fn upper_support(&self) -> f64 {
        match self {
            Distribution::Beta { .. } => 1.0,
            _ => f64::INFINITY,
        }
    }

    /// `(ln P(Z <= x), ln P(Z > x))`.
    pub fn ln_cdf_sf(&self, x: f64) -> (f64, f64) {
        if x.is_nan() {
            return (f64::NAN, f64::NAN);
        }
        if x <= 0.0 {
            return (f64::NEG_INFINITY, 0.0);
        }
        if x >= self.upper_support() {
            return (0.0, f64::NEG_INFINITY);
        }
        match *self {
            Distribution::F { d1, d2 } => {
                let denom = d1 * x + d2;
                ln_beta_inc(d1 / 2.0, d2 / 2.0, d1 * x / denom, d2 / denom)
            }
            Distribution::ChiSquared { k } => ln_gamma_inc(k / 2.0, x / 2.0),
            Distribution::ScaledChi { k, scale } => {
                let u = x / scale;
                ln_gamma_inc(k / 2.0, u * u / 2.0)
            }
            Distribution::Beta { a, b } => ln_beta_inc(a, b, x, 1.0 - x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.ln_cdf_sf(x).0.exp()
    }

    pub fn sf(&self, x: f64) -> f64 {
        self.ln_cdf_sf(x).1.exp()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 || x >= self.upper_support() {
            return f64::NEG_INFINITY;
        }
        match *self {
            Distribution::F { d1, d2 } => {
                let (a, b) = (d1 / 2.0, d2 / 2.0);
                a * (d1 / d2).ln() + (a - 1.0) * x.ln() - (a + b) * (d1 * x / d2).ln_1p() - ln_beta(a, b)
            }
            Distribution::ChiSquared { k } => {
                let h = k / 2.0;
                (h - 1.0) * x.ln() - x / 2.0 - h * std::f64::consts::LN_2 - statrs::function::gamma::ln_gamma(h)
            }
            Distribution::ScaledChi { k, scale } => {
                let u = x / scale;
                let h = k / 2.0;
                (k - 1.0) * u.ln() - u * u / 2.0 - (h - 1.0) * std::f64::consts::LN_2
                    - statrs::function::gamma::ln_gamma(h)
                    - scale.ln()
            }
            Distribution::Beta { a, b } => (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Inverse CDF by bisection; upper quantiles are matched on the survival
    /// side so `p = 1 - 1e-12` is resolved accurately.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!("quantile level {p} outside (0,1)")));
        }
        let upper_side = p > 0.5;
        let target = if upper_side { (-p).ln_1p() } else { p.ln() };
        // g > 0 when x lies above the quantile.
        let g = |x: f64| {
            let (lc, ls) = self.ln_cdf_sf(x);
            if upper_side {
                target - ls
            } else {
                lc - target
            }
        };
        if let Distribution::Beta { .. } = self {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        let (mut lo, mut hi) = (1.0f64, 1.0f64);
        while g(lo) > 0.0 {
            lo *= 0.5;
            if lo < 1e-300 {
                return Ok(lo);
            }
        }
        while g(hi) <= 0.0 {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::Numeric("quantile bracket overflow".into()));
            }
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi / lo - 1.0 < 1e-14 {
                break;
            }
        }
        Ok((lo * hi).sqrt())
    }

    /// `ln P(lo < Z < hi)`.
    pub fn ln_interval_mass(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return f64::NEG_INFINITY;
        }
        let (lc_lo, ls_lo) = self.ln_cdf_sf(lo);
        let (lc_hi, ls_hi) = self.ln_cdf_sf(hi);
        if ls_lo < -std::f64::consts::LN_2 {
            ln_sub_exp(ls_lo, ls_hi)
        } else {
            ln_sub_exp(lc_hi, lc_lo)
        }
    }
}

/// CDF of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_cdf(t: f64, d1: usize, d2: usize) -> f64 {
    Distribution::f(d1, d2).cdf(t)
}

/// Argument of the chi-squared CDF in the F-to-chi-squared tail
/// approximation; increasing in `t`.
pub fn li_transform(t: f64, k: usize, l: usize) -> f64 {
    if t.is_infinite() {
        return f64::INFINITY;
    }
    let (k, l) = (k as f64, l as f64);
    (2.0 * l + k * t / 3.0 + k - 2.0) / (2.0 * l + 4.0 * k * t / 3.0) * k * t
}

/// Chi-squared approximation of the `F_{k,l}` CDF, accurate for fixed `k`
/// and large `l`.
pub fn f_cdf_li(t: f64, k: usize, l: usize) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    Distribution::ChiSquared { k: k as f64 }.cdf(li_transform(t, k, l))
}

/// Coordinate a truncation set lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    /// The ratio statistic `R`.
    R,
    /// The contrast norm `||X^T v||`.
    Phi,
    /// Beta coordinate `z = R / (m - 2 + R)`.
    Z,
    /// Chi-squared coordinate of the F tail approximation.
    Chi2,
}

fn serialize_upper<S: Serializer>(hi: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if hi.is_finite() {
        s.serialize_f64(*hi)
    } else {
        s.serialize_none()
    }
}

/// Open interval `(lo, hi)`; `hi` may be infinite (serialized as `null`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    #[serde(serialize_with = "serialize_upper")]
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

/// Finite union of sorted, disjoint open intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationSet {
    intervals: Vec<Interval>,
    space: Space,
}

impl TruncationSet {
    pub fn new(intervals: Vec<Interval>, space: Space) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::EmptyTruncation);
        }
        let upper = if space == Space::Z { 1.0 } else { f64::INFINITY };
        for (idx, iv) in intervals.iter().enumerate() {
            if iv.lo.is_nan() || iv.hi.is_nan() || iv.lo < 0.0 || iv.lo >= iv.hi || iv.hi > upper {
                return Err(Error::InvalidArgument(format!("invalid interval ({}, {})", iv.lo, iv.hi)));
            }
            if idx > 0 && intervals[idx - 1].hi > iv.lo {
                return Err(Error::InvalidArgument("intervals must be sorted and disjoint".into()));
            }
        }
        Ok(Self { intervals, space })
    }

    /// The whole support: `(0, inf)`, or `(0, 1)` in Beta space.
    pub fn full(space: Space) -> Self {
        let hi = if space == Space::Z { 1.0 } else { f64::INFINITY };
        Self {
            intervals: vec![Interval::new(0.0, hi)],
            space,
        }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.containing_interval(x).is_some()
    }

    pub fn containing_interval(&self, x: f64) -> Option<usize> {
        let idx = self.intervals.partition_point(|iv| iv.hi <= x);
        (idx < self.intervals.len() && self.intervals[idx].contains(x)).then_some(idx)
    }

    pub fn inf(&self) -> f64 {
        self.intervals[0].lo
    }

    pub fn sup(&self) -> f64 {
        self.intervals[self.intervals.len() - 1].hi
    }

    /// Image under an increasing map into `space`.
    pub fn map_increasing(&self, space: Space, f: impl Fn(f64) -> f64) -> Result<Self> {
        let intervals = self
            .intervals
            .iter()
            .map(|iv| Interval::new(f(iv.lo), f(iv.hi)))
            .filter(|iv| iv.lo < iv.hi)
            .collect();
        Self::new(intervals, space)
    }

    /// `ln P(Z in S)`.
    pub fn ln_mass(&self, dist: &Distribution) -> f64 {
        self.intervals
            .iter()
            .fold(f64::NEG_INFINITY, |acc, iv| ln_add_exp(acc, dist.ln_interval_mass(iv.lo, iv.hi)))
    }

    /// `ln P(Z in S, Z > x)`.
    pub fn ln_mass_above(&self, dist: &Distribution, x: f64) -> f64 {
        self.intervals.iter().fold(f64::NEG_INFINITY, |acc, iv| {
            if iv.hi <= x {
                acc
            } else {
                ln_add_exp(acc, dist.ln_interval_mass(iv.lo.max(x), iv.hi))
            }
        })
    }

    /// `ln P(Z in S, Z <= x)`.
    pub fn ln_mass_below(&self, dist: &Distribution, x: f64) -> f64 {
        self.intervals.iter().fold(f64::NEG_INFINITY, |acc, iv| {
            if iv.lo >= x {
                acc
            } else {
                ln_add_exp(acc, dist.ln_interval_mass(iv.lo, iv.hi.min(x)))
            }
        })
    }
}

/// `P(Z <= x | Z in S)`.
pub fn truncated_cdf(x: f64, dist: &Distribution, set: &TruncationSet) -> Result<f64> {
    let total = checked_mass(dist, set)?;
    Ok((set.ln_mass_below(dist, x) - total).exp().clamp(0.0, 1.0))
}

/// `P(Z > x | Z in S)`, computed directly rather than as `1 - cdf`.
pub fn truncated_sf(x: f64, dist: &Distribution, set: &TruncationSet) -> Result<f64> {
    let total = checked_mass(dist, set)?;
    Ok((set.ln_mass_above(dist, x) - total).exp().clamp(0.0, 1.0))
}

fn checked_mass(dist: &Distribution, set: &TruncationSet) -> Result<f64> {
    let total = set.ln_mass(dist);
    if total.is_nan() || total < (1e-300f64).ln() {
        return Err(Error::EmptyTruncation);
    }
    Ok(total)
}

/// Maps an `R`-space set into Beta space through `r -> r / (m - 2 + r)`.
pub fn beta_transform_set(set: &TruncationSet, m: usize) -> Result<TruncationSet> {
    if m < 3 {
        return Err(Error::InsufficientDegreesOfFreedom { m });
    }
    let c = (m - 2) as f64;
    set.map_increasing(Space::Z, |r| if r.is_infinite() { 1.0 } else { r / (c + r) })
}

/// Inverse of the Beta transform, `z -> (m - 2) z / (1 - z)`.
pub fn beta_to_ratio(z: f64, m: usize) -> f64 {
    if z >= 1.0 {
        f64::INFINITY
    } else {
        (m - 2) as f64 * z / (1.0 - z)
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// `N(mean, sd^2)` restricted to `[lo, hi]`, sampled by inverting its CDF.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedNormal {
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    // Bounds in standard units, reflected when both lie above the mean so
    // that the CDF differences below are taken in the lower tail.
    reflected: bool,
    p_lo: f64,
    p_hi: f64,
    ln_norm: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, sd: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(sd > 0.0) || !(lo < hi) || !mean.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "truncated normal needs sd > 0 and lo < hi, got sd={sd}, [{lo}, {hi}]"
            )));
        }
        let a = (lo - mean) / sd;
        let b = (hi - mean) / sd;
        let reflected = a > 0.0;
        let (p_lo, p_hi) = if reflected {
            (std_normal_cdf(-b), std_normal_cdf(-a))
        } else {
            (std_normal_cdf(a), std_normal_cdf(b))
        };
        let mass = p_hi - p_lo;
        if !(mass >= 1e-300) {
            return Err(Error::Numeric(format!(
                "truncation interval [{lo}, {hi}] has negligible normal mass"
            )));
        }
        let ln_norm = sd.ln() + 0.5 * (std::f64::consts::TAU).ln() + mass.ln();
        Ok(Self {
            mean,
            sd,
            lo,
            hi,
            reflected,
            p_lo,
            p_hi,
            ln_norm,
        })
    }

    /// Draw from a uniform variate `u` in `(0, 1)`.
    pub fn invert(&self, u: f64) -> f64 {
        let p = self.p_lo + u * (self.p_hi - self.p_lo);
        let s = std_normal_quantile(p);
        let s = if self.reflected { -s } else { s };
        (self.mean + self.sd * s).clamp(self.lo, self.hi)
    }

    pub fn sample<R: rand::RngCore>(&self, rng: &mut R) -> f64 {
        self.invert(uniform_open(rng))
    }

    pub fn ln_pdf(&self, z: f64) -> f64 {
        if z < self.lo || z > self.hi {
            return f64::NEG_INFINITY;
        }
        let s = (z - self.mean) / self.sd;
        -0.5 * s * s - self.ln_norm
    }
}

/// `n` draws from `N(mean, alpha^2)` truncated to `[lo, hi]`.
pub fn tn_sample(mean: f64, alpha: f64, lo: f64, hi: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let tn = TruncatedNormal::new(mean, alpha, lo, hi)?;
    let mut rng = stream_rng(seed, 0);
    Ok((0..n).map(|_| tn.sample(&mut rng)).collect())
}

/// Log density of the truncated normal; `-inf` outside `[lo, hi]`.
pub fn tn_log_density(z: f64, mean: f64, alpha: f64, lo: f64, hi: f64) -> Result<f64> {
    Ok(TruncatedNormal::new(mean, alpha, lo, hi)?.ln_pdf(z))
}
