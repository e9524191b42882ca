use serde::{Deserialize, Serialize};

use super::scan::{scan_truncation, ScanConfig};
use super::{Diagnostics, Method, PValueReport, SetSummary};
use crate::cluster::{ClusterPartition, ClusterProcedure};
use crate::data::DataMatrix;
use crate::decomp::{build_decomposition, ClusterPair, Decomposition};
use crate::dist::{li_transform, truncated_sf, Distribution, Space, TruncationSet};
use crate::{Error, Result};

/// Where the truncation set of `R` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanRoute {
    /// Scan `x'(r)` directly.
    RSpace,
    /// Scan `x(phi)` and pull the set back with `r = (m-2) (phi / (||P1 X|| ||v||))^2`.
    PhiSpace,
}

/// How the truncated F survival function is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FEvaluation {
    /// Regularized incomplete Beta function in log space.
    IncompleteBeta,
    /// Chi-squared tail approximation of the F law, then a truncated
    /// chi-squared survival function.
    LiChiSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactConfig {
    pub scan: ScanConfig,
    pub route: ScanRoute,
    pub f_evaluation: FEvaluation,
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self {
            scan: ScanConfig::default(),
            route: ScanRoute::RSpace,
            f_evaluation: FEvaluation::IncompleteBeta,
        }
    }
}

/// `P(R' > R | R' in S')` for `R' ~ F_{q,(m-2)q}`, along with `ln P(S')`.
pub fn truncated_f_pvalue(decomp: &Decomposition, set: &TruncationSet, how: FEvaluation) -> Result<(f64, f64)> {
    let r = decomp.statistic_r();
    let (d1, d2) = decomp.degrees_of_freedom();
    match how {
        FEvaluation::IncompleteBeta => {
            let f = Distribution::f(d1, d2);
            Ok((truncated_sf(r, &f, set)?, set.ln_mass(&f)))
        }
        FEvaluation::LiChiSquare => {
            let chi = Distribution::ChiSquared { k: d1 as f64 };
            let mapped = set.map_increasing(Space::Chi2, |t| li_transform(t, d1, d2))?;
            Ok((truncated_sf(li_transform(r, d1, d2), &chi, &mapped)?, mapped.ln_mass(&chi)))
        }
    }
}

/// Selective p-value for two clusters of a `K = 2` clustering.
pub fn p_value_exact_k2<C: ClusterProcedure + ?Sized>(
    x: &DataMatrix,
    part: &ClusterPartition,
    procedure: &C,
    cfg: &ExactConfig,
) -> Result<PValueReport> {
    if part.num_clusters() != 2 || procedure.num_clusters() != 2 {
        return Err(Error::InvalidArgument(format!(
            "the exact route needs K = 2, got K = {}",
            part.num_clusters()
        )));
    }
    let pair = ClusterPair::new(0, 1)?;
    let decomp = build_decomposition(x, part, pair)?;
    let set = truncation_set_k2(&decomp, part, procedure, cfg)?;
    let (p, ln_mass) = truncated_f_pvalue(&decomp, &set, cfg.f_evaluation)?;
    Ok(PValueReport {
        p,
        statistic: decomp.statistic_r(),
        method: Method::ExactK2,
        pair,
        set_summary: Some(SetSummary::new(&set, ln_mass)),
        diagnostics: Diagnostics::default(),
    })
}

/// The `R`-space truncation set via the configured route.
pub(crate) fn truncation_set_k2<C: ClusterProcedure + ?Sized>(
    decomp: &Decomposition,
    part: &ClusterPartition,
    procedure: &C,
    cfg: &ExactConfig,
) -> Result<TruncationSet> {
    match cfg.route {
        ScanRoute::RSpace => scan_truncation(decomp, part, procedure, Space::R, &cfg.scan),
        ScanRoute::PhiSpace => {
            if !procedure.is_location_scale_invariant() {
                return Err(Error::InvalidArgument(
                    "the contrast-norm route needs a location- and scale-invariant clustering".into(),
                ));
            }
            let scan = ScanConfig {
                range: cfg.scan.range.map(|(lo, hi)| (decomp.map_prop1(lo), decomp.map_prop1(hi))),
                ..cfg.scan
            };
            let phi_set = scan_truncation(decomp, part, procedure, Space::Phi, &scan)?;
            phi_set.map_increasing(Space::R, |phi| {
                if phi.is_infinite() {
                    phi
                } else {
                    decomp.map_prop1_inverse(phi)
                }
            })
        }
    }
}
