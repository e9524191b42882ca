//! Selective p-values for the difference between two estimated clusters.
//!
//! All three procedures condition on the clustering outcome through a
//! membership oracle: re-cluster a reconstruction of the data in which a
//! single scalar statistic has been replaced, and check whether the observed
//! partition comes back.
//!
//! * [`p_value_exact_k2`] scans the oracle over the ratio statistic `R`
//!   (or over the contrast norm, pulled back to `R`) and evaluates the
//!   truncated `F_{q,(m-2)q}` survival function.
//! * [`p_value_importance`] estimates the same truncated survival function in
//!   Beta space with a truncated-normal proposal, calling the oracle once per
//!   draw.
//! * [`p_value_gao`] is the known-variance test: truncated scaled-chi
//!   survival of `||X^T v||` over the oracle set in contrast-norm space.

mod exact;
mod gao;
mod importance;
mod scan;

use serde::{Deserialize, Serialize};

pub use exact::{p_value_exact_k2, truncated_f_pvalue, ExactConfig, FEvaluation, ScanRoute};
pub use gao::{gao_pvalue_from_set, p_value_gao};
pub use importance::{importance_estimate, p_value_importance, ISConfig, ImportanceEstimate, ALPHA_GRID};
pub use scan::{default_scan_range, scan_truncation, MembershipOracle, ScanConfig};

use crate::decomp::ClusterPair;
use crate::dist::{Interval, Space, TruncationSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExactK2,
    Importance,
    GaoTrue,
    GaoAll,
    GaoClustered,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ExactK2 => "exact_k2",
            Method::Importance => "importance",
            Method::GaoTrue => "gao_true",
            Method::GaoAll => "gao_all",
            Method::GaoClustered => "gao_clustered",
        }
    }
}

/// Shape and null probability of the truncation set used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetSummary {
    pub space: Space,
    pub interval_count: usize,
    /// Natural log of the set's probability under the untruncated null law.
    pub ln_mass: f64,
    pub intervals: Vec<Interval>,
}

impl SetSummary {
    pub(crate) fn new(set: &TruncationSet, ln_mass: f64) -> Self {
        Self {
            space: set.space(),
            interval_count: set.len(),
            ln_mass,
            intervals: set.intervals().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effective_sample_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub in_set_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_draws: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PValueReport {
    pub p: f64,
    /// `R` for the unknown-variance methods, `||X^T v||` for the baselines.
    pub statistic: f64,
    pub method: Method,
    pub pair: ClusterPair,
    pub set_summary: Option<SetSummary>,
    pub diagnostics: Diagnostics,
}
