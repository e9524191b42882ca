//! Agglomerative hierarchical clustering on Euclidean distances and
//! set-partition comparison.
//!
//! A cluster is identified by the smallest original row index among its
//! members. At each step the pair of clusters with the smallest linkage
//! distance is merged; ties go to the lexicographically smallest
//! `(smaller id, larger id)` pair. Linkage distances are updated with the
//! Lance-Williams recurrence.
//!
//! The search keeps, for every active cluster, its nearest neighbour among
//! clusters with a larger id, so a merge only rescans the rows it touched.
//! This returns exactly the pair a full quadratic scan would.

use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Average,
    Complete,
    Single,
    /// Average linkage on squared Euclidean distances.
    AverageSquared,
}

impl std::str::FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" | "avg" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            "single" => Ok(Linkage::Single),
            "average_sq" | "average-sq" => Ok(Linkage::AverageSquared),
            other => Err(Error::InvalidArgument(format!("unknown linkage {other:?}"))),
        }
    }
}

impl Linkage {
    #[inline]
    fn update(self, d_ik: f64, d_jk: f64, size_i: usize, size_j: usize) -> f64 {
        match self {
            Linkage::Average | Linkage::AverageSquared => {
                (size_i as f64 * d_ik + size_j as f64 * d_jk) / (size_i + size_j) as f64
            }
            Linkage::Complete => d_ik.max(d_jk),
            Linkage::Single => d_ik.min(d_jk),
        }
    }
}

/// One agglomeration step: clusters `left < right` merged at `distance`.
/// The merged cluster keeps the id `left`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
}

/// Labelling of `[n]` into `k` clusters. Labels are 0-based and canonical:
/// clusters are numbered in order of their first member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPartition {
    labels: Vec<usize>,
    k: usize,
    merge_history: Vec<Merge>,
}

impl ClusterPartition {
    /// Partition from arbitrary integer labels; relabels canonically.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Dimension("empty labelling".into()));
        }
        let (canonical, k) = canonicalize(labels);
        Ok(Self {
            labels: canonical,
            k,
            merge_history: Vec::new(),
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.k
    }

    pub fn merge_history(&self) -> &[Merge] {
        &self.merge_history
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == cluster).collect()
    }

    pub fn size(&self, cluster: usize) -> usize {
        self.labels.iter().filter(|&&l| l == cluster).count()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

fn canonicalize(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let canonical = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (canonical, map.len())
}

/// Agglomerative clustering of the rows of `x`, cut at `k` clusters.
pub fn hclust(x: &DataMatrix, linkage: Linkage, k: usize) -> Result<ClusterPartition> {
    let n = x.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cluster count {k} outside 1..={n}")));
    }

    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        let xi = x.row(i);
        for j in (i + 1)..n {
            let d = xi
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            let d = if linkage == Linkage::AverageSquared { d } else { d.sqrt() };
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut parent: Vec<usize> = (0..n).collect();
    let mut nn = vec![usize::MAX; n];
    let mut nn_dist = vec![f64::INFINITY; n];

    let rescan = |i: usize, dist: &[f64], active: &[bool], nn: &mut [usize], nn_dist: &mut [f64]| {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        let row = &dist[i * n..(i + 1) * n];
        for j in (i + 1)..n {
            if active[j] && row[j] < best_d {
                best_d = row[j];
                best = j;
            }
        }
        nn[i] = best;
        nn_dist[i] = best_d;
    };

    for i in 0..n {
        rescan(i, &dist, &active, &mut nn, &mut nn_dist);
    }

    let mut merge_history = Vec::with_capacity(n - k);
    for _ in 0..(n - k) {
        let mut left = usize::MAX;
        let mut best = f64::INFINITY;
        for i in 0..n {
            if active[i] && nn[i] != usize::MAX && nn_dist[i] < best {
                best = nn_dist[i];
                left = i;
            }
        }
        if left == usize::MAX {
            // Only reachable through NaN distances, which DataMatrix excludes.
            return Err(Error::Numeric("no mergeable pair found".into()));
        }
        let right = nn[left];
        merge_history.push(Merge {
            left,
            right,
            distance: best,
        });

        let (size_l, size_r) = (size[left], size[right]);
        for other in 0..n {
            if !active[other] || other == left || other == right {
                continue;
            }
            let d = linkage.update(dist[left * n + other], dist[right * n + other], size_l, size_r);
            dist[left * n + other] = d;
            dist[other * n + left] = d;
        }
        active[right] = false;
        size[left] += size_r;
        parent[right] = left;

        rescan(left, &dist, &active, &mut nn, &mut nn_dist);
        for other in 0..right {
            if !active[other] || other == left {
                continue;
            }
            if other < left {
                if nn[other] == left || nn[other] == right {
                    rescan(other, &dist, &active, &mut nn, &mut nn_dist);
                } else {
                    let d = dist[other * n + left];
                    if d < nn_dist[other] || (d == nn_dist[other] && left < nn[other]) {
                        nn[other] = left;
                        nn_dist[other] = d;
                    }
                }
            } else if nn[other] == right {
                rescan(other, &dist, &active, &mut nn, &mut nn_dist);
            }
        }
    }

    let root = |mut i: usize| {
        while parent[i] != i {
            i = parent[i];
        }
        i
    };
    let raw: Vec<usize> = (0..n).map(root).collect();
    let (labels, clusters) = canonicalize(&raw);
    debug_assert_eq!(clusters, k);
    Ok(ClusterPartition {
        labels,
        k: clusters,
        merge_history,
    })
}

/// True iff both labellings induce the same set partition of `[n]`.
pub fn partitions_equal(a: &ClusterPartition, b: &ClusterPartition) -> Result<bool> {
    labels_equal(a.labels(), b.labels())
}

/// Label-permutation-invariant comparison of two raw labellings.
pub fn labels_equal(a: &[usize], b: &[usize]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "partitions cover {} and {} points",
            a.len(),
            b.len()
        )));
    }
    let mut forward = std::collections::HashMap::new();
    let mut backward = std::collections::HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if *forward.entry(x).or_insert(y) != y || *backward.entry(y).or_insert(x) != x {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A deterministic clustering procedure that can be re-run on perturbed data.
pub trait ClusterProcedure: Sync {
    fn num_clusters(&self) -> usize;

    fn cluster(&self, x: &DataMatrix) -> Result<ClusterPartition>;

    /// Location and scale invariance, required for the exact `K = 2` route.
    fn is_location_scale_invariant(&self) -> bool {
        false
    }

    /// Whether clustering `x` reproduces `reference`.
    fn reproduces(&self, x: &DataMatrix, reference: &ClusterPartition) -> Result<bool> {
        let part = self.cluster(x)?;
        // Both sides are canonical, so equal partitions have equal labels.
        Ok(part.labels() == reference.labels() || partitions_equal(&part, reference)?)
    }
}

/// Hierarchical clustering with a fixed linkage and cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hierarchical {
    pub linkage: Linkage,
    pub k: usize,
}

impl Hierarchical {
    pub fn new(linkage: Linkage, k: usize) -> Self {
        Self { linkage, k }
    }
}

impl ClusterProcedure for Hierarchical {
    fn num_clusters(&self) -> usize {
        self.k
    }

    fn cluster(&self, x: &DataMatrix) -> Result<ClusterPartition> {
        hclust(x, self.linkage, self.k)
    }

    fn is_location_scale_invariant(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points_1d(xs: &[f64]) -> DataMatrix {
        let rows: Vec<[f64; 1]> = xs.iter().map(|&v| [v]).collect();
        DataMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn three_points_average() {
        let p = hclust(&points_1d(&[0.0, 1.0, 10.0]), Linkage::Average, 2).unwrap();
        assert_eq!(p.labels(), &[0, 0, 1]);
        assert_eq!(p.merge_history().len(), 1);
        assert_eq!(p.merge_history()[0].distance, 1.0);
    }

    #[test]
    fn extreme_cuts() {
        let x = points_1d(&[3.0, -1.0, 4.0, 1.5, 9.0]);
        for linkage in [Linkage::Average, Linkage::Complete, Linkage::Single] {
            let all = hclust(&x, linkage, 5).unwrap();
            assert_eq!(all.labels(), &[0, 1, 2, 3, 4]);
            assert!(all.merge_history().is_empty());
            let one = hclust(&x, linkage, 1).unwrap();
            assert_eq!(one.labels(), &[0; 5]);
            assert_eq!(one.merge_history().len(), 4);
        }
        assert!(hclust(&x, Linkage::Average, 0).is_err());
        assert!(hclust(&x, Linkage::Average, 6).is_err());
    }

    #[test]
    fn ties_merge_lowest_pair_first() {
        // d(0,1) = d(1,2) = 1; the (0,1) pair wins.
        let p = hclust(&points_1d(&[0.0, 1.0, 2.0]), Linkage::Single, 2).unwrap();
        assert_eq!(p.labels(), &[0, 0, 1]);
        assert_eq!((p.merge_history()[0].left, p.merge_history()[0].right), (0, 1));
    }

    #[test]
    fn linkages_differ_where_expected() {
        // Chain: single linkage joins the chain, complete splits it.
        let x = points_1d(&[0.0, 1.0, 2.0, 3.0, 4.0, 4.9, 20.0]);
        let single = hclust(&x, Linkage::Single, 2).unwrap();
        assert_eq!(single.labels(), &[0, 0, 0, 0, 0, 0, 1]);
        let complete = hclust(&x, Linkage::Complete, 3).unwrap();
        assert_eq!(complete.num_clusters(), 3);
        assert_eq!(complete.labels()[6], 2);
    }

    #[test]
    fn average_merge_heights_nondecreasing() {
        let (x, _) = crate::data::gen_mixture(&crate::MixtureSpec::null(40, 2, 1.0), 8).unwrap();
        let p = hclust(&x, Linkage::Average, 1).unwrap();
        let h = p.merge_history();
        assert!(h.windows(2).all(|w| w[0].distance <= w[1].distance * (1.0 + 1e-12)));
    }

    #[test]
    fn partition_comparison() {
        let a = ClusterPartition::from_labels(&[1, 1, 2, 2]).unwrap();
        let b = ClusterPartition::from_labels(&[2, 2, 1, 1]).unwrap();
        let c = ClusterPartition::from_labels(&[1, 2, 1, 2]).unwrap();
        assert!(partitions_equal(&a, &b).unwrap());
        assert!(!partitions_equal(&a, &c).unwrap());
        assert!(partitions_equal(&a, &a).unwrap());
        assert!(labels_equal(&[0, 1], &[0, 1, 2]).is_err());
        // Merging two clusters is not equal even though the map is a function.
        assert!(!labels_equal(&[0, 1, 2], &[0, 0, 1]).unwrap());
        assert!(!labels_equal(&[0, 0, 1], &[0, 1, 2]).unwrap());
    }

    #[test]
    fn from_labels_canonicalizes() {
        let p = ClusterPartition::from_labels(&[7, 3, 7, 9]).unwrap();
        assert_eq!(p.labels(), &[0, 1, 0, 2]);
        assert_eq!(p.sizes(), vec![2, 1, 1]);
        assert_eq!(p.members(0), vec![0, 2]);
    }
}
