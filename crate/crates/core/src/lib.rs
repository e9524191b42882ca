//! Selective inference for hierarchical clustering when the noise variance is
//! unknown.
//!
//! The crate tests whether two clusters produced by agglomerative clustering
//! have different means, conditioning on the clustering outcome so that the
//! p-value stays valid even though the clusters were chosen from the same
//! data. The main entry points are:
//!
//! * [`infer::p_value_exact_k2`]: truncated-F p-value for `K = 2`, with the
//!   truncation set found by scanning a re-clustering oracle.
//! * [`infer::p_value_importance`]: the same p-value for any `K`, estimated by
//!   importance sampling in Beta space.
//! * [`infer::p_value_gao`]: the known-variance truncated-chi baseline, used
//!   with the true sigma or a plug-in estimate.
//!
//! [`sim`] reproduces the calibration, power and misspecification studies.

// Argument checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod data;
pub mod decomp;
pub mod dist;
mod error;
pub mod infer;
pub mod rng;
pub mod sim;
pub mod special;
pub mod stats;
#[cfg(test)]
mod testutil;

pub use cluster::{hclust, partitions_equal, ClusterPartition, ClusterProcedure, Hierarchical, Linkage};
pub use data::{DataMatrix, MixtureSpec, TrueLabels};
pub use decomp::{build_decomposition, ClusterPair, Decomposition, SigmaEstimate, SigmaMode};
pub use dist::{Distribution, Interval, Space, TruncationSet};
pub use error::{Error, Result};
pub use infer::{ExactConfig, ISConfig, Method, PValueReport, ScanConfig};
