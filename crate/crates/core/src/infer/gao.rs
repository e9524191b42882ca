use super::scan::{scan_truncation, ScanConfig};
use super::{Diagnostics, Method, PValueReport, SetSummary};
use crate::cluster::{ClusterPartition, ClusterProcedure};
use crate::data::DataMatrix;
use crate::decomp::{build_decomposition, ClusterPair, Decomposition, SigmaEstimate, SigmaMode};
use crate::dist::{truncated_sf, Distribution, Space, TruncationSet};
use crate::{Error, Result};

fn method_for(mode: SigmaMode) -> Method {
    match mode {
        SigmaMode::TrueSigma => Method::GaoTrue,
        SigmaMode::All => Method::GaoAll,
        SigmaMode::Clustered => Method::GaoClustered,
    }
}

/// Known-variance p-value given a contrast-norm truncation set.
///
/// The set does not depend on sigma, so callers comparing several plug-ins
/// can scan once and reuse it here.
pub fn gao_pvalue_from_set(decomp: &Decomposition, set: &TruncationSet, sigma: SigmaEstimate) -> Result<PValueReport> {
    if set.space() != Space::Phi {
        return Err(Error::InvalidArgument(format!(
            "known-variance test needs a contrast-norm set, got {:?}",
            set.space()
        )));
    }
    if !(sigma.value > 0.0) || !sigma.value.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {}", sigma.value)));
    }
    let law = Distribution::ScaledChi {
        k: decomp.q() as f64,
        scale: sigma.value * decomp.v_norm(),
    };
    let phi = decomp.contrast_statistic();
    let p = truncated_sf(phi, &law, set)?;
    Ok(PValueReport {
        p,
        statistic: phi,
        method: method_for(sigma.mode),
        pair: decomp.pair,
        set_summary: Some(SetSummary::new(set, set.ln_mass(&law))),
        diagnostics: Diagnostics {
            sigma: Some(sigma.value),
            ..Diagnostics::default()
        },
    })
}

/// Truncated scaled-chi p-value for clusters `pair`, treating `sigma` as the
/// known noise level.
pub fn p_value_gao<C: ClusterProcedure + ?Sized>(
    x: &DataMatrix,
    part: &ClusterPartition,
    pair: ClusterPair,
    procedure: &C,
    sigma: SigmaEstimate,
    scan: &ScanConfig,
) -> Result<PValueReport> {
    let decomp = build_decomposition(x, part, pair)?;
    let set = scan_truncation(&decomp, part, procedure, Space::Phi, scan)?;
    gao_pvalue_from_set(&decomp, &set, sigma)
}
