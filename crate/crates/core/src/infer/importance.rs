use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Diagnostics, Method, PValueReport};
use crate::cluster::{ClusterPartition, ClusterProcedure};
use crate::data::DataMatrix;
use crate::decomp::{build_decomposition, ClusterPair};
use crate::dist::{Distribution, TruncatedNormal};
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Proposal standard deviations tried by the tuner, `2^-8 .. 2^0`.
pub const ALPHA_GRID: [f64; 9] = [
    1.0 / 256.0,
    1.0 / 128.0,
    1.0 / 64.0,
    1.0 / 32.0,
    1.0 / 16.0,
    1.0 / 8.0,
    1.0 / 4.0,
    1.0 / 2.0,
    1.0,
];

/// Accepted band for the tuned in-set fraction; outside it a warning is
/// attached to the estimate.
const INSET_WINDOW: (f64, f64) = (0.3, 0.7);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ISConfig {
    pub n_draws: usize,
    /// Fixed proposal standard deviation; `None` tunes over [`ALPHA_GRID`].
    pub alpha: Option<f64>,
    pub target_inset: f64,
    /// Pilot draws per grid value when tuning.
    pub pilot_draws: usize,
    pub seed: u64,
    /// Evaluate the oracle on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl Default for ISConfig {
    fn default() -> Self {
        Self {
            n_draws: 8000,
            alpha: None,
            target_inset: 0.5,
            pilot_draws: 400,
            seed: 0,
            parallel: false,
        }
    }
}

impl ISConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws < 100 {
            return Err(Error::InvalidArgument(format!("n_draws must be at least 100, got {}", self.n_draws)));
        }
        if !(self.target_inset > 0.0 && self.target_inset < 1.0) {
            return Err(Error::InvalidArgument("target_inset must lie in (0, 1)".into()));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::InvalidArgument(format!("alpha must be positive, got {a}")));
            }
        }
        if self.alpha.is_none() && self.pilot_draws == 0 {
            return Err(Error::InvalidArgument("alpha tuning needs pilot draws".into()));
        }
        Ok(())
    }
}

/// Ratio estimate of a truncated Beta survival probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceEstimate {
    pub p: f64,
    /// Delta-method standard error of the ratio estimator.
    pub std_error: f64,
    /// `(sum w)^2 / sum w^2` over in-set draws.
    pub effective_sample_size: f64,
    pub in_set_fraction: f64,
    pub alpha: f64,
    pub warnings: Vec<String>,
}

fn draw(tn: &TruncatedNormal, n: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    (0..n).map(|_| tn.sample(&mut rng)).collect()
}

fn evaluate<F>(zs: &[f64], member: &F, parallel: bool) -> Result<Vec<bool>>
where
    F: Fn(f64) -> Result<bool> + Sync,
{
    if parallel {
        zs.par_iter().map(|&z| member(z)).collect()
    } else {
        zs.iter().map(|&z| member(z)).collect()
    }
}

/// Picks the grid value whose pilot in-set fraction is closest to the
/// target; ties go to the wider proposal.
fn tune_alpha<F>(z_obs: f64, member: &F, cfg: &ISConfig) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<bool> + Sync,
{
    let mut best: Option<(f64, f64)> = None;
    for (j, &alpha) in ALPHA_GRID.iter().enumerate() {
        let tn = TruncatedNormal::new(z_obs, alpha, 0.0, 1.0)?;
        let zs = draw(&tn, cfg.pilot_draws, cfg.seed, 1 + j as u64);
        let hits = evaluate(&zs, member, cfg.parallel)?.into_iter().filter(|&b| b).count();
        let frac = hits as f64 / cfg.pilot_draws as f64;
        let better = match best {
            None => true,
            Some((_, f)) => (frac - cfg.target_inset).abs() <= (f - cfg.target_inset).abs(),
        };
        if better {
            best = Some((alpha, frac));
        }
    }
    Ok(best.expect("grid is nonempty"))
}

/// Estimates `P(Z > z_obs | Z in S)` for `Z ~ Beta(a, b)`, where `S` is known
/// only through `member`.
///
/// Draws come from `N(z_obs, alpha^2)` truncated to `[0, 1]`; each is weighted
/// by the Beta density over the proposal density and the in-set draws form a
/// self-normalized ratio estimate.
pub fn importance_estimate<F>(z_obs: f64, shape: (f64, f64), member: F, cfg: &ISConfig) -> Result<ImportanceEstimate>
where
    F: Fn(f64) -> Result<bool> + Sync,
{
    cfg.validate()?;
    if !(z_obs > 0.0 && z_obs < 1.0) {
        return Err(Error::InvalidArgument(format!("observed Beta coordinate {z_obs} outside (0, 1)")));
    }
    let mut warnings = Vec::new();
    let alpha = match cfg.alpha {
        Some(a) => a,
        None => {
            let (alpha, frac) = tune_alpha(z_obs, &member, cfg)?;
            if frac < INSET_WINDOW.0 || frac > INSET_WINDOW.1 {
                warnings.push(format!(
                    "no proposal width reached an in-set fraction in [{}, {}]; using alpha = {alpha} with pilot fraction {frac:.3}",
                    INSET_WINDOW.0, INSET_WINDOW.1
                ));
            }
            alpha
        }
    };

    let beta = Distribution::Beta { a: shape.0, b: shape.1 };
    let tn = TruncatedNormal::new(z_obs, alpha, 0.0, 1.0)?;
    let zs = draw(&tn, cfg.n_draws, cfg.seed, 0);
    let inside = evaluate(&zs, &member, cfg.parallel)?;

    let ln_w: Vec<f64> = zs
        .iter()
        .zip(&inside)
        .filter(|(_, &hit)| hit)
        .map(|(&z, _)| beta.ln_pdf(z) - tn.ln_pdf(z))
        .collect();
    let hits = ln_w.len();
    let shift = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hits == 0 || !shift.is_finite() {
        return Err(Error::EstimationFailure(format!(
            "no in-set draws with positive weight among {} proposals (alpha = {alpha})",
            cfg.n_draws
        )));
    }
    let above: Vec<bool> = zs.iter().zip(&inside).filter(|(_, &hit)| hit).map(|(&z, _)| z > z_obs).collect();
    let w: Vec<f64> = ln_w.iter().map(|l| (l - shift).exp()).collect();
    let sum_w: f64 = w.iter().sum();
    let sum_w2: f64 = w.iter().map(|v| v * v).sum();
    let num: f64 = w.iter().zip(&above).filter(|(_, &a)| a).map(|(v, _)| v).sum();
    let p = (num / sum_w).clamp(0.0, 1.0);
    let var: f64 = w
        .iter()
        .zip(&above)
        .map(|(v, &a)| {
            let h = if a { 1.0 } else { 0.0 };
            (v * (h - p)).powi(2)
        })
        .sum::<f64>()
        / (sum_w * sum_w);

    Ok(ImportanceEstimate {
        p,
        std_error: var.sqrt(),
        effective_sample_size: sum_w * sum_w / sum_w2,
        in_set_fraction: hits as f64 / cfg.n_draws as f64,
        alpha,
        warnings,
    })
}

/// Importance-sampling p-value for clusters `pair` of any clustering.
///
/// Membership of each draw is decided by re-clustering the reconstructed
/// data, so no interval description of the truncation set is needed.
pub fn p_value_importance<C: ClusterProcedure + ?Sized>(
    x: &DataMatrix,
    part: &ClusterPartition,
    pair: ClusterPair,
    procedure: &C,
    cfg: &ISConfig,
) -> Result<PValueReport> {
    let decomp = build_decomposition(x, part, pair)?;
    let r = decomp.statistic_r();
    let c = (decomp.m - 2) as f64;
    let z_obs = r / (c + r);
    let (d1, d2) = decomp.degrees_of_freedom();
    let member = |z: f64| procedure.reproduces(&decomp.reconstruct_beta(z), part);
    let est = importance_estimate(z_obs, (d1 as f64 / 2.0, d2 as f64 / 2.0), member, cfg)?;
    Ok(PValueReport {
        p: est.p,
        statistic: r,
        method: Method::Importance,
        pair,
        set_summary: None,
        diagnostics: Diagnostics {
            effective_sample_size: Some(est.effective_sample_size),
            in_set_fraction: Some(est.in_set_fraction),
            alpha: Some(est.alpha),
            std_error: Some(est.std_error),
            n_draws: Some(cfg.n_draws),
            sigma: None,
            warnings: est.warnings,
        },
    })
}
