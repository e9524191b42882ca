//! Orthogonal split of the data relative to a pair of clusters.
//!
//! For clusters `C_k`, `C_k'` with `m = |C_k| + |C_k'|` points, `X` is
//! written as `P0 X + P1 X + P2 X` where
//!
//! * `P0` projects onto the contrast `v = 1_{C_k}/|C_k| - 1_{C_k'}/|C_k'|`
//!   (rank 1),
//! * `P1` centers each of the two clusters (rank `m - 2`),
//! * `P2` is the rest: the pooled mean of the pair and every row outside it
//!   (rank `n - m + 1`).
//!
//! The projections are computed by centering; no `n x n` matrix is formed.

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterPartition;
use crate::data::DataMatrix;
use crate::{Error, Result};

/// Relative threshold below which a projected norm counts as zero.
const DEGENERACY_TOL: f64 = 1e-12;

/// Ordered pair of distinct 0-based cluster labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClusterPair {
    pub first: usize,
    pub second: usize,
}

impl ClusterPair {
    pub fn new(first: usize, second: usize) -> Result<Self> {
        if first == second {
            return Err(Error::InvalidArgument("the two clusters must differ".into()));
        }
        Ok(Self { first, second })
    }
}

impl std::fmt::Display for ClusterPair {
    /// 1-based, as shown to users.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.first + 1, self.second + 1)
    }
}

/// Squared Frobenius norms of the contrast and within-cluster components,
/// without requiring either to be nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedNorms {
    pub norm0_sq: f64,
    pub norm1_sq: f64,
    pub m: usize,
}

impl ProjectedNorms {
    pub fn compute(x: &DataMatrix, part: &ClusterPartition, pair: ClusterPair) -> Result<Self> {
        let parts = PairParts::new(x, part, pair)?;
        let q = x.q();
        let diff: Vec<f64> = (0..q).map(|j| parts.mean1[j] - parts.mean2[j]).collect();
        let v_norm_sq = 1.0 / parts.n1 as f64 + 1.0 / parts.n2 as f64;
        let norm0_sq = diff.iter().map(|d| d * d).sum::<f64>() / v_norm_sq;
        let mut norm1_sq = 0.0;
        for (i, row) in x.rows().enumerate() {
            let mean = match parts.side(i) {
                Some(Side::First) => &parts.mean1,
                Some(Side::Second) => &parts.mean2,
                None => continue,
            };
            norm1_sq += row.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(Self {
            norm0_sq,
            norm1_sq,
            m: parts.n1 + parts.n2,
        })
    }

    pub fn statistic_r(&self) -> Result<f64> {
        r_statistic(self.norm0_sq, self.norm1_sq, self.m)
    }
}

/// `R = (m - 2) ||P0 X||^2 / ||P1 X||^2`.
pub fn r_statistic(norm0_sq: f64, norm1_sq: f64, m: usize) -> Result<f64> {
    if m < 3 {
        return Err(Error::InsufficientDegreesOfFreedom { m });
    }
    if !(norm1_sq > 0.0) {
        return Err(Error::DegenerateData("within-cluster spread is zero".into()));
    }
    Ok((m - 2) as f64 * norm0_sq / norm1_sq)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    First,
    Second,
}

struct PairParts {
    side: Vec<Option<Side>>,
    n1: usize,
    n2: usize,
    mean1: Vec<f64>,
    mean2: Vec<f64>,
}

impl PairParts {
    fn new(x: &DataMatrix, part: &ClusterPartition, pair: ClusterPair) -> Result<Self> {
        if part.n() != x.n() {
            return Err(Error::Dimension(format!(
                "partition covers {} points, data has {}",
                part.n(),
                x.n()
            )));
        }
        let k = part.num_clusters();
        if pair.first == pair.second {
            return Err(Error::InvalidArgument("the two clusters must differ".into()));
        }
        if pair.first >= k || pair.second >= k {
            return Err(Error::InvalidArgument(format!(
                "cluster pair {pair} outside the {k} available clusters"
            )));
        }
        let q = x.q();
        let mut side = vec![None; x.n()];
        let (mut n1, mut n2) = (0, 0);
        let (mut mean1, mut mean2) = (vec![0.0; q], vec![0.0; q]);
        for (i, &label) in part.labels().iter().enumerate() {
            let (count, mean, s) = if label == pair.first {
                (&mut n1, &mut mean1, Side::First)
            } else if label == pair.second {
                (&mut n2, &mut mean2, Side::Second)
            } else {
                continue;
            };
            *count += 1;
            side[i] = Some(s);
            for (acc, v) in mean.iter_mut().zip(x.row(i)) {
                *acc += v;
            }
        }
        mean1.iter_mut().for_each(|v| *v /= n1 as f64);
        mean2.iter_mut().for_each(|v| *v /= n2 as f64);
        Ok(Self {
            side,
            n1,
            n2,
            mean1,
            mean2,
        })
    }

    fn side(&self, i: usize) -> Option<Side> {
        self.side[i]
    }
}

/// The decomposition together with everything the reconstructions need.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub pair: ClusterPair,
    /// Contrast vector `v`.
    pub v: Vec<f64>,
    /// Pooled-mean weights `w = 1_{C_k u C_k'} / m`.
    pub w: Vec<f64>,
    pub m: usize,
    pub sizes: (usize, usize),
    pub p0x: DataMatrix,
    pub p1x: DataMatrix,
    pub p2x: DataMatrix,
    pub norm0: f64,
    pub norm1: f64,
    /// `P0 X / ||P0 X||_F`.
    pub dir0: DataMatrix,
    /// `P1 X / ||P1 X||_F`.
    pub dir1: DataMatrix,
}

/// Splits `x` relative to clusters `pair` of `part`.
pub fn build_decomposition(x: &DataMatrix, part: &ClusterPartition, pair: ClusterPair) -> Result<Decomposition> {
    let parts = PairParts::new(x, part, pair)?;
    let (n, q) = (x.n(), x.q());
    let m = parts.n1 + parts.n2;
    if m < 3 {
        return Err(Error::InsufficientDegreesOfFreedom { m });
    }
    let (n1, n2) = (parts.n1 as f64, parts.n2 as f64);
    let pooled: Vec<f64> = (0..q)
        .map(|j| (n1 * parts.mean1[j] + n2 * parts.mean2[j]) / (n1 + n2))
        .collect();

    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut p0 = vec![0.0; n * q];
    let mut p1 = vec![0.0; n * q];
    let mut p2 = vec![0.0; n * q];
    for i in 0..n {
        let row = x.row(i);
        let out = i * q..(i + 1) * q;
        let mean = match parts.side(i) {
            Some(Side::First) => {
                v[i] = 1.0 / n1;
                &parts.mean1
            }
            Some(Side::Second) => {
                v[i] = -1.0 / n2;
                &parts.mean2
            }
            None => {
                p2[out].copy_from_slice(row);
                continue;
            }
        };
        w[i] = 1.0 / m as f64;
        for (j, idx) in out.enumerate() {
            p0[idx] = mean[j] - pooled[j];
            p1[idx] = row[j] - mean[j];
            p2[idx] = pooled[j];
        }
    }

    let norm = |m: &[f64]| m.iter().map(|a| a * a).sum::<f64>().sqrt();
    let (norm0, norm1) = (norm(&p0), norm(&p1));
    let scale = x.frobenius_norm();
    if norm0 <= DEGENERACY_TOL * scale {
        return Err(Error::DegenerateData("the two cluster means coincide".into()));
    }
    if norm1 <= DEGENERACY_TOL * scale {
        return Err(Error::DegenerateData("both clusters have zero within-cluster spread".into()));
    }
    let dir0 = p0.iter().map(|a| a / norm0).collect();
    let dir1 = p1.iter().map(|a| a / norm1).collect();
    Ok(Decomposition {
        pair,
        v,
        w,
        m,
        sizes: (parts.n1, parts.n2),
        p0x: DataMatrix::from_raw(n, q, p0),
        p1x: DataMatrix::from_raw(n, q, p1),
        p2x: DataMatrix::from_raw(n, q, p2),
        norm0,
        norm1,
        dir0: DataMatrix::from_raw(n, q, dir0),
        dir1: DataMatrix::from_raw(n, q, dir1),
    })
}

impl Decomposition {
    pub fn n(&self) -> usize {
        self.p0x.n()
    }

    pub fn q(&self) -> usize {
        self.p0x.q()
    }

    /// `(q, (m - 2) q)`.
    pub fn degrees_of_freedom(&self) -> (usize, usize) {
        (self.q(), (self.m - 2) * self.q())
    }

    /// The null law of `R`, `F_{q, (m-2) q}`.
    pub fn f_distribution(&self) -> crate::Distribution {
        let (d1, d2) = self.degrees_of_freedom();
        crate::Distribution::f(d1, d2)
    }

    /// `||v||_2 = sqrt(1/|C_k| + 1/|C_k'|)`.
    pub fn v_norm(&self) -> f64 {
        (1.0 / self.sizes.0 as f64 + 1.0 / self.sizes.1 as f64).sqrt()
    }

    /// `||X^T v||_2`, the known-variance statistic.
    pub fn contrast_statistic(&self) -> f64 {
        self.norm0 * self.v_norm()
    }

    /// `sqrt(||P0 X||^2 + ||P1 X||^2)`, held fixed by the conditioning.
    pub fn total_norm(&self) -> f64 {
        self.norm0.hypot(self.norm1)
    }

    pub fn statistic_r(&self) -> f64 {
        (self.m - 2) as f64 * (self.norm0 / self.norm1).powi(2)
    }

    /// Data with the ratio statistic replaced by `r`.
    pub fn reconstruct_x_prime(&self, r: f64) -> Result<DataMatrix> {
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!("ratio statistic must be positive, got {r}")));
        }
        let z = if r.is_infinite() {
            1.0
        } else {
            r / ((self.m - 2) as f64 + r)
        };
        Ok(self.reconstruct_beta(z))
    }

    /// Same as [`Self::reconstruct_x_prime`], parametrized by the Beta
    /// coordinate `z = r / (m - 2 + r)` in `[0, 1]`.
    pub fn reconstruct_beta(&self, z: f64) -> DataMatrix {
        let total = self.total_norm();
        let c0 = z.clamp(0.0, 1.0).sqrt() * total;
        let c1 = (1.0 - z).clamp(0.0, 1.0).sqrt() * total;
        let values = self
            .dir0
            .values()
            .iter()
            .zip(self.dir1.values())
            .zip(self.p2x.values())
            .map(|((d0, d1), p2)| c0 * d0 + c1 * d1 + p2)
            .collect();
        DataMatrix::from_raw(self.n(), self.q(), values)
    }

    /// Data with the contrast norm replaced by `phi`.
    pub fn reconstruct_x_phi(&self, phi: f64) -> Result<DataMatrix> {
        if !(phi > 0.0) || !phi.is_finite() {
            return Err(Error::InvalidArgument(format!("contrast norm must be positive, got {phi}")));
        }
        let c0 = phi / self.v_norm();
        let values = self
            .dir0
            .values()
            .iter()
            .zip(self.p1x.values())
            .zip(self.p2x.values())
            .map(|((d0, p1), p2)| c0 * d0 + p1 + p2)
            .collect();
        Ok(DataMatrix::from_raw(self.n(), self.q(), values))
    }

    /// The contrast norm at which `x(phi)` is an affine image of `x'(r)`
    /// when `K = 2`: `phi = sqrt(r / (m-2)) ||P1 X|| ||v||`.
    pub fn map_prop1(&self, r: f64) -> f64 {
        (r / (self.m - 2) as f64).sqrt() * self.norm1 * self.v_norm()
    }

    /// Inverse of [`Self::map_prop1`].
    pub fn map_prop1_inverse(&self, phi: f64) -> f64 {
        (self.m - 2) as f64 * (phi / (self.norm1 * self.v_norm())).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    TrueSigma,
    All,
    Clustered,
}

/// Noise standard deviation used by the known-variance baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub value: f64,
    pub mode: SigmaMode,
}

impl SigmaEstimate {
    pub fn known(value: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {value}")));
        }
        Ok(Self {
            value,
            mode: SigmaMode::TrueSigma,
        })
    }
}

/// Pooled estimate treating all rows as one cluster, denominator `(n-1) q`.
pub fn sigma_hat_all(x: &DataMatrix) -> Result<SigmaEstimate> {
    let all = ClusterPartition::from_labels(&vec![0; x.n()])?;
    within_cluster_sigma(x, &all, SigmaMode::All)
}

/// Within-cluster estimate, denominator `(n - K) q`.
pub fn sigma_hat_clustered(x: &DataMatrix, part: &ClusterPartition) -> Result<SigmaEstimate> {
    within_cluster_sigma(x, part, SigmaMode::Clustered)
}

fn within_cluster_sigma(x: &DataMatrix, part: &ClusterPartition, mode: SigmaMode) -> Result<SigmaEstimate> {
    let (n, q, k) = (x.n(), x.q(), part.num_clusters());
    if part.n() != n {
        return Err(Error::Dimension("partition and data disagree on n".into()));
    }
    if n <= k {
        return Err(Error::DegenerateData(format!("need more points than clusters, got n={n}, K={k}")));
    }
    let mut sums = vec![0.0; k * q];
    let sizes = part.sizes();
    for (row, &l) in x.rows().zip(part.labels()) {
        for (j, v) in row.iter().enumerate() {
            sums[l * q + j] += v;
        }
    }
    let mut ss = 0.0;
    for (row, &l) in x.rows().zip(part.labels()) {
        for (j, v) in row.iter().enumerate() {
            let mean = sums[l * q + j] / sizes[l] as f64;
            ss += (v - mean).powi(2);
        }
    }
    let value = (ss / ((n - k) * q) as f64).sqrt();
    let scale = x.frobenius_norm() / ((n * q) as f64).sqrt();
    if !(value > DEGENERACY_TOL * scale) {
        return Err(Error::DegenerateData("zero within-cluster variation".into()));
    }
    Ok(SigmaEstimate { value, mode })
}
