use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterPartition, ClusterProcedure};
use crate::decomp::Decomposition;
use crate::dist::{Interval, Space, TruncationSet};
use crate::{Error, Result};

/// Grid scan of the membership oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub grid_points: usize,
    /// Scan bounds in the scanned space; `None` uses [`default_scan_range`].
    pub range: Option<(f64, f64)>,
    /// Relative width at which boundary bisection stops.
    pub refine_tol: f64,
    /// Evaluate grid points on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            grid_points: 2048,
            range: None,
            refine_tol: 1e-8,
            parallel: false,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 16 {
            return Err(Error::InvalidArgument("scan grid needs at least 16 points".into()));
        }
        if !(self.refine_tol > 0.0 && self.refine_tol < 1.0) {
            return Err(Error::InvalidArgument("refine_tol must lie in (0, 1)".into()));
        }
        if let Some((lo, hi)) = self.range {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::InvalidArgument(format!("invalid scan range ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

/// "Does re-clustering the reconstructed data give back `reference`?"
pub struct MembershipOracle<'a, C: ClusterProcedure + ?Sized> {
    decomp: &'a Decomposition,
    procedure: &'a C,
    reference: &'a ClusterPartition,
    space: Space,
}

impl<'a, C: ClusterProcedure + ?Sized> MembershipOracle<'a, C> {
    pub fn new(
        decomp: &'a Decomposition,
        procedure: &'a C,
        reference: &'a ClusterPartition,
        space: Space,
    ) -> Result<Self> {
        if space == Space::Chi2 {
            return Err(Error::InvalidArgument("no reconstruction is defined in chi-squared space".into()));
        }
        Ok(Self {
            decomp,
            procedure,
            reference,
            space,
        })
    }

    pub fn space(&self) -> Space {
        self.space
    }

    /// Observed value of the statistic in this oracle's space.
    pub fn observed(&self) -> f64 {
        match self.space {
            Space::R => self.decomp.statistic_r(),
            Space::Phi => self.decomp.contrast_statistic(),
            Space::Z => {
                let r = self.decomp.statistic_r();
                r / ((self.decomp.m - 2) as f64 + r)
            }
            Space::Chi2 => unreachable!("rejected in new"),
        }
    }

    pub fn contains(&self, value: f64) -> Result<bool> {
        let x = match self.space {
            Space::R => self.decomp.reconstruct_x_prime(value)?,
            Space::Phi => self.decomp.reconstruct_x_phi(value)?,
            Space::Z => self.decomp.reconstruct_beta(value),
            Space::Chi2 => unreachable!("rejected in new"),
        };
        self.procedure.reproduces(&x, self.reference)
    }
}

/// Quantiles `1e-12` and `1 - 1e-12` of the null `F` law, widened to
/// include `R / 1000` and `1000 R`; mapped through the `K = 2` change of
/// variables for the contrast-norm space.
pub fn default_scan_range(decomp: &Decomposition, space: Space) -> Result<(f64, f64)> {
    let f = decomp.f_distribution();
    let r = decomp.statistic_r();
    let lo = f.quantile(1e-12)?.min(r * 1e-3);
    let hi = f.quantile(1.0 - 1e-12)?.max(r * 1e3);
    match space {
        Space::R => Ok((lo, hi)),
        Space::Phi => Ok((decomp.map_prop1(lo), decomp.map_prop1(hi))),
        other => Err(Error::InvalidArgument(format!("cannot scan in {other:?} space"))),
    }
}

/// Truncation set of the statistic in `space` (`R` or contrast norm).
///
/// The oracle is evaluated on a log-spaced grid that includes the observed
/// value; every change of membership between neighbours is bisected to
/// `refine_tol`. Membership at the ends of the grid is extended to `0` and
/// to infinity. Components narrower than the grid spacing can be missed.
pub fn scan_truncation<C: ClusterProcedure + ?Sized>(
    decomp: &Decomposition,
    reference: &ClusterPartition,
    procedure: &C,
    space: Space,
    cfg: &ScanConfig,
) -> Result<TruncationSet> {
    cfg.validate()?;
    if !matches!(space, Space::R | Space::Phi) {
        return Err(Error::InvalidArgument(format!("cannot scan in {space:?} space")));
    }
    let oracle = MembershipOracle::new(decomp, procedure, reference, space)?;
    let observed = oracle.observed();
    let (lo, hi) = match cfg.range {
        Some(range) => range,
        None => default_scan_range(decomp, space)?,
    };

    let steps = cfg.grid_points - 1;
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    let mut grid: Vec<f64> = (0..=steps)
        .map(|i| (ln_lo + (ln_hi - ln_lo) * i as f64 / steps as f64).exp())
        .collect();
    grid.push(observed);
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();

    let membership: Vec<bool> = if cfg.parallel {
        grid.par_iter().map(|&g| oracle.contains(g)).collect::<Result<_>>()?
    } else {
        grid.iter().map(|&g| oracle.contains(g)).collect::<Result<_>>()?
    };

    let obs_idx = grid.iter().position(|&g| g == observed).expect("observed value is on the grid");
    if !membership[obs_idx] {
        return Err(Error::InternalConsistency(
            "reconstructing the data at the observed statistic changed the clustering".into(),
        ));
    }

    let mut intervals = Vec::new();
    let mut start = if membership[0] { Some(0.0) } else { None };
    for idx in 0..grid.len() - 1 {
        if membership[idx] == membership[idx + 1] {
            continue;
        }
        let edge = bisect_boundary(&oracle, grid[idx], grid[idx + 1], membership[idx], cfg.refine_tol)?;
        match start.take() {
            Some(s) => intervals.push(Interval::new(s, edge)),
            None => start = Some(edge),
        }
    }
    if let Some(s) = start {
        intervals.push(Interval::new(s, f64::INFINITY));
    }
    TruncationSet::new(intervals, space)
}

fn bisect_boundary<C: ClusterProcedure + ?Sized>(
    oracle: &MembershipOracle<'_, C>,
    mut lo: f64,
    mut hi: f64,
    lo_member: bool,
    tol: f64,
) -> Result<f64> {
    while hi / lo - 1.0 > tol {
        let mid = (lo * hi).sqrt();
        if oracle.contains(mid)? == lo_member {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}
