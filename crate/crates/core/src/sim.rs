//! Monte Carlo harness for the calibration, power and misspecification
//! studies.
//!
//! Every trial draws its data from `derive_seed(seed, trial)`, so the same
//! trial index sees the same noise at every signal strength and any subset
//! of trials can be rerun on its own. Trials run on the rayon pool when
//! `parallel` is set; records are returned in trial order either way.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{hclust, ClusterPartition, Hierarchical, Linkage};
use crate::data::{gen_misspecified, gen_mixture, DataMatrix, Misspecification, MixtureSpec, TrueLabels};
use crate::decomp::{build_decomposition, sigma_hat_all, sigma_hat_clustered, ClusterPair, SigmaEstimate};
use crate::infer::{
    gao_pvalue_from_set, p_value_exact_k2, p_value_importance, scan_truncation, ExactConfig, ISConfig, PValueReport,
    ScanConfig,
};
use crate::dist::Space;
use crate::rng::{derive_seed, stream_rng};
use crate::stats::{ks_uniform, wilson_interval, KsResult, Proportion};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Type1K2,
    Type1K3,
    PowerSetting1,
    PowerSetting2,
    PowerSetting3,
    MisspecT5,
    MisspecT10,
    MisspecNoniso,
    Custom,
}

impl Scenario {
    pub const ALL: [Scenario; 9] = [
        Scenario::Type1K2,
        Scenario::Type1K3,
        Scenario::PowerSetting1,
        Scenario::PowerSetting2,
        Scenario::PowerSetting3,
        Scenario::MisspecT5,
        Scenario::MisspecT10,
        Scenario::MisspecNoniso,
        Scenario::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Type1K2 => "type1_k2",
            Scenario::Type1K3 => "type1_k3",
            Scenario::PowerSetting1 => "power_setting1",
            Scenario::PowerSetting2 => "power_setting2",
            Scenario::PowerSetting3 => "power_setting3",
            Scenario::MisspecT5 => "misspec_t5",
            Scenario::MisspecT10 => "misspec_t10",
            Scenario::MisspecNoniso => "misspec_noniso",
            Scenario::Custom => "custom",
        }
    }

    fn misspecification(self) -> Option<Misspecification> {
        match self {
            Scenario::MisspecT5 => Some(Misspecification::T5),
            Scenario::MisspecT10 => Some(Misspecification::T10),
            Scenario::MisspecNoniso => Some(Misspecification::NonIsotropic),
            _ => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario {s:?}")))
    }
}

/// Methods compared in the studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMethod {
    /// Unknown-variance test: exact scan for `K = 2`, importance sampling otherwise.
    Proposed,
    /// Unknown-variance test, always by importance sampling.
    ProposedIs,
    GaoTrue,
    GaoAll,
    GaoClustered,
}

impl SimMethod {
    pub const ALL: [SimMethod; 5] = [
        SimMethod::Proposed,
        SimMethod::ProposedIs,
        SimMethod::GaoTrue,
        SimMethod::GaoAll,
        SimMethod::GaoClustered,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SimMethod::Proposed => "proposed",
            SimMethod::ProposedIs => "proposed_is",
            SimMethod::GaoTrue => "gao_true",
            SimMethod::GaoAll => "gao_all",
            SimMethod::GaoClustered => "gao_clustered",
        }
    }

    fn is_known_variance(self) -> bool {
        matches!(self, SimMethod::GaoTrue | SimMethod::GaoAll | SimMethod::GaoClustered)
    }
}

impl fmt::Display for SimMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SimMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SimMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub q: usize,
    pub sigma: f64,
    pub k: usize,
    pub linkage: Linkage,
    pub trials: usize,
    pub delta_grid: Vec<f64>,
    pub methods: Vec<SimMethod>,
    pub alpha_level: f64,
    pub seed: u64,
    /// Importance-sampling draws per test.
    pub n_draws: usize,
    pub scan: ScanConfig,
    /// Run trials on the rayon pool.
    pub parallel: bool,
    /// Generating mixture for [`Scenario::Custom`].
    pub mixture: Option<MixtureSpec>,
}

impl ExperimentConfig {
    /// Defaults of the published protocol for `scenario`: `n = 30`, `q = 2`,
    /// `sigma = 1`, average linkage, 2000 null trials or 500 trials per
    /// signal strength `0..=7`.
    pub fn for_scenario(scenario: Scenario) -> Self {
        let (k, trials, delta_grid, methods) = match scenario {
            Scenario::Type1K2 | Scenario::Custom => (2, 2000, vec![0.0], default_methods()),
            Scenario::Type1K3 => (3, 2000, vec![0.0], default_methods()),
            Scenario::PowerSetting1 => (2, 500, (0..8).map(f64::from).collect(), default_methods()),
            Scenario::PowerSetting2 | Scenario::PowerSetting3 => {
                (3, 500, (0..8).map(f64::from).collect(), default_methods())
            }
            Scenario::MisspecT5 | Scenario::MisspecT10 | Scenario::MisspecNoniso => (
                2,
                2000,
                vec![0.0],
                vec![SimMethod::Proposed, SimMethod::GaoAll, SimMethod::GaoClustered],
            ),
        };
        Self {
            scenario,
            n: 30,
            q: 2,
            sigma: 1.0,
            k,
            linkage: Linkage::Average,
            trials,
            delta_grid,
            methods,
            alpha_level: 0.05,
            seed: 0,
            n_draws: 8000,
            scan: ScanConfig::default(),
            parallel: false,
            mixture: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if !(self.alpha_level > 0.0 && self.alpha_level < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha_level {} outside (0, 1)", self.alpha_level)));
        }
        if self.k < 2 {
            return Err(Error::InvalidArgument("need at least two clusters to compare".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods requested".into()));
        }
        if self.delta_grid.is_empty() || self.delta_grid.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidArgument("delta grid must be nonempty and nonnegative".into()));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {}", self.sigma)));
        }
        match self.scenario {
            Scenario::Custom => match &self.mixture {
                Some(spec) => spec.validate()?,
                None => return Err(Error::InvalidArgument("custom scenario needs a mixture".into())),
            },
            Scenario::MisspecNoniso if self.q != 2 => {
                return Err(Error::InvalidArgument("non-isotropic scenario needs q = 2".into()))
            }
            _ => {}
        }
        if self.n <= self.k {
            return Err(Error::InvalidArgument(format!("n = {} must exceed K = {}", self.n, self.k)));
        }
        self.scan.validate()?;
        ISConfig {
            n_draws: self.n_draws,
            ..ISConfig::default()
        }
        .validate()
    }

    /// Noise standard deviation handed to the oracle-sigma baseline.
    pub fn true_sigma(&self) -> f64 {
        match self.scenario.misspecification() {
            Some(kind) => kind.noise_sd(),
            None => match (&self.scenario, &self.mixture) {
                (Scenario::Custom, Some(spec)) => spec.sigma,
                (Scenario::PowerSetting1 | Scenario::PowerSetting2 | Scenario::PowerSetting3, _) => 1.0,
                _ => self.sigma,
            },
        }
    }

    fn generate(&self, delta: f64, seed: u64) -> Result<(DataMatrix, TrueLabels)> {
        let spec = match self.scenario {
            Scenario::Type1K2 | Scenario::Type1K3 => MixtureSpec::null(self.n, self.q, self.sigma),
            Scenario::PowerSetting1 => MixtureSpec::setting1(delta),
            Scenario::PowerSetting2 => MixtureSpec::setting2(delta),
            Scenario::PowerSetting3 => MixtureSpec::setting3(delta),
            Scenario::Custom => self.mixture.clone().expect("validated"),
            Scenario::MisspecT5 | Scenario::MisspecT10 | Scenario::MisspecNoniso => {
                let kind = self.scenario.misspecification().expect("misspecified scenario");
                let x = gen_misspecified(kind, self.n, self.q, seed)?;
                return Ok((x, TrueLabels(vec![0; self.n])));
            }
        };
        let (x, labels) = gen_mixture(&spec, seed)?;
        Ok((x, merge_equal_means(&spec, labels)))
    }

    /// Signal strengths actually simulated.
    fn deltas(&self) -> Vec<f64> {
        match self.scenario {
            Scenario::PowerSetting1 | Scenario::PowerSetting2 | Scenario::PowerSetting3 => self.delta_grid.clone(),
            Scenario::Custom => vec![self.mixture.as_ref().map_or(0.0, |m| m.delta)],
            _ => vec![0.0],
        }
    }
}

/// The null concerns means, so components that share a mean (every
/// component when `delta = 0`) count as one.
fn merge_equal_means(spec: &MixtureSpec, labels: TrueLabels) -> TrueLabels {
    let canonical: Vec<usize> = (0..spec.means.len())
        .map(|c| (0..=c).find(|&d| spec.means[d] == spec.means[c]).expect("c matches itself"))
        .collect();
    TrueLabels(labels.0.into_iter().map(|l| canonical[l]).collect())
}

fn default_methods() -> Vec<SimMethod> {
    vec![
        SimMethod::Proposed,
        SimMethod::GaoTrue,
        SimMethod::GaoAll,
        SimMethod::GaoClustered,
    ]
}

/// Outcome of one method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub method: SimMethod,
    pub p: Option<f64>,
    pub effective_sample_size: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub delta: f64,
    pub pair: Option<ClusterPair>,
    pub null_true: bool,
    /// Set when the trial could not be analysed at all (for example a
    /// singleton pair); such trials are left out of every summary.
    pub failure: Option<String>,
    pub outcomes: Vec<MethodOutcome>,
}

impl TrialRecord {
    pub fn p_value(&self, method: SimMethod) -> Option<f64> {
        if self.failure.is_some() {
            return None;
        }
        self.outcomes.iter().find(|o| o.method == method).and_then(|o| o.p)
    }
}

/// True iff every point of the two clusters comes from one generating
/// component.
pub fn null_holds(labels: &TrueLabels, part: &ClusterPartition, pair: ClusterPair) -> Result<bool> {
    if labels.len() != part.n() {
        return Err(Error::Dimension(format!(
            "{} true labels for a partition of {} points",
            labels.len(),
            part.n()
        )));
    }
    let mut component = None;
    for (&truth, &l) in labels.as_slice().iter().zip(part.labels()) {
        if l != pair.first && l != pair.second {
            continue;
        }
        match component {
            None => component = Some(truth),
            Some(c) if c != truth => return Ok(false),
            _ => {}
        }
    }
    Ok(true)
}

fn choose_pair(k: usize, seed: u64) -> Result<ClusterPair> {
    if k == 2 {
        return ClusterPair::new(0, 1);
    }
    let mut rng = stream_rng(seed, 2);
    let a = rng.random_range(0..k);
    let b = (a + rng.random_range(1..k)) % k;
    ClusterPair::new(a.min(b), a.max(b))
}

fn outcome(method: SimMethod, res: Result<PValueReport>) -> MethodOutcome {
    match res {
        Ok(report) => MethodOutcome {
            method,
            p: Some(report.p.clamp(0.0, 1.0)),
            effective_sample_size: report.diagnostics.effective_sample_size,
            error: None,
        },
        Err(e) => MethodOutcome {
            method,
            p: None,
            effective_sample_size: None,
            error: Some(e.to_string()),
        },
    }
}

fn run_trial(cfg: &ExperimentConfig, trial: usize, delta: f64) -> TrialRecord {
    let seed = derive_seed(cfg.seed, trial as u64);
    let mut record = TrialRecord {
        trial,
        delta,
        pair: None,
        null_true: true,
        failure: None,
        outcomes: Vec::new(),
    };
    let result = (|| -> Result<()> {
        let (x, labels) = cfg.generate(delta, seed)?;
        let part = hclust(&x, cfg.linkage, cfg.k)?;
        let pair = choose_pair(cfg.k, seed)?;
        record.pair = Some(pair);
        record.null_true = null_holds(&labels, &part, pair)?;
        let decomp = build_decomposition(&x, &part, pair)?;
        let procedure = Hierarchical::new(cfg.linkage, cfg.k);
        let is_cfg = ISConfig {
            n_draws: cfg.n_draws,
            seed: derive_seed(seed, 1),
            ..ISConfig::default()
        };

        let phi_set = if cfg.methods.iter().any(|m| m.is_known_variance()) {
            Some(scan_truncation(&decomp, &part, &procedure, Space::Phi, &cfg.scan))
        } else {
            None
        };
        for &method in &cfg.methods {
            let res = match method {
                SimMethod::Proposed if cfg.k == 2 => {
                    let exact = ExactConfig {
                        scan: cfg.scan,
                        ..ExactConfig::default()
                    };
                    p_value_exact_k2(&x, &part, &procedure, &exact)
                }
                SimMethod::Proposed | SimMethod::ProposedIs => p_value_importance(&x, &part, pair, &procedure, &is_cfg),
                _ => {
                    let sigma = match method {
                        SimMethod::GaoTrue => SigmaEstimate::known(cfg.true_sigma()),
                        SimMethod::GaoAll => sigma_hat_all(&x),
                        _ => sigma_hat_clustered(&x, &part),
                    };
                    match (phi_set.as_ref().expect("scanned above"), sigma) {
                        (Ok(set), Ok(sigma)) => gao_pvalue_from_set(&decomp, set, sigma),
                        (Err(e), _) => Err(Error::InternalConsistency(format!("contrast-norm scan failed: {e}"))),
                        (_, Err(e)) => Err(e),
                    }
                }
            };
            record.outcomes.push(outcome(method, res));
        }
        Ok(())
    })();
    if let Err(e) = result {
        record.failure = Some(e.to_string());
        record.outcomes.clear();
    }
    record
}

/// Runs every trial at every signal strength of `cfg`.
///
/// Records are ordered by signal strength, then trial index. A pure
/// function of `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let jobs: Vec<(f64, usize)> = cfg
        .deltas()
        .into_iter()
        .flat_map(|d| (0..cfg.trials).map(move |t| (d, t)))
        .collect();
    let records = if cfg.parallel {
        jobs.par_iter().map(|&(d, t)| run_trial(cfg, t, d)).collect()
    } else {
        jobs.iter().map(|&(d, t)| run_trial(cfg, t, d)).collect()
    };
    Ok(records)
}

/// Rejection fraction at `alpha_level` among analysable trials whose null is
/// false.
pub fn empirical_power(records: &[TrialRecord], method: SimMethod, alpha_level: f64) -> Result<f64> {
    let ps: Vec<f64> = records
        .iter()
        .filter(|r| !r.null_true)
        .filter_map(|r| r.p_value(method))
        .collect();
    if ps.is_empty() {
        return Err(Error::UndefinedPower);
    }
    Ok(ps.iter().filter(|&&p| p <= alpha_level).count() as f64 / ps.len() as f64)
}

/// Rejection fraction at `alpha_level` over all analysable trials, with a
/// 95% Wilson interval.
pub fn rejection_rate(records: &[TrialRecord], method: SimMethod, alpha_level: f64) -> Result<Proportion> {
    let ps: Vec<f64> = records.iter().filter_map(|r| r.p_value(method)).collect();
    let hits = ps.iter().filter(|&&p| p <= alpha_level).count();
    wilson_interval(hits, ps.len(), 1.96)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformityReport {
    pub method: SimMethod,
    pub ks: KsResult,
    /// Rejections at 0.05.
    pub rejection: Proportion,
    /// Trials without a p-value for this method.
    pub excluded: usize,
}

/// KS distance to the uniform law and rejection rate at 0.05.
pub fn uniformity_report(records: &[TrialRecord], method: SimMethod) -> Result<UniformityReport> {
    if records.iter().any(|r| !r.null_true) {
        return Err(Error::InvalidArgument("uniformity summary needs null-true trials only".into()));
    }
    let ps: Vec<f64> = records.iter().filter_map(|r| r.p_value(method)).collect();
    let rejection = rejection_rate(records, method, 0.05)?;
    Ok(UniformityReport {
        method,
        ks: ks_uniform(&ps)?,
        rejection,
        excluded: records.len() - ps.len(),
    })
}

/// One row of `power.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerRow {
    pub delta: f64,
    pub method: SimMethod,
    pub trials: usize,
    pub excluded: usize,
    pub null_false: usize,
    /// `None` when no trial at this strength has a false null.
    pub power: Option<f64>,
    pub rejection_rate: f64,
}

/// Power and rejection rate per signal strength and method.
pub fn power_table(records: &[TrialRecord], methods: &[SimMethod], alpha_level: f64) -> Vec<PowerRow> {
    let mut deltas: Vec<f64> = records.iter().map(|r| r.delta).collect();
    deltas.dedup();
    let mut rows = Vec::new();
    for delta in deltas {
        let at: Vec<TrialRecord> = records.iter().filter(|r| r.delta == delta).cloned().collect();
        for &method in methods {
            let analysed: Vec<&TrialRecord> = at.iter().filter(|r| r.p_value(method).is_some()).collect();
            let rejects = analysed
                .iter()
                .filter(|r| r.p_value(method).is_some_and(|p| p <= alpha_level))
                .count();
            rows.push(PowerRow {
                delta,
                method,
                trials: at.len(),
                excluded: at.len() - analysed.len(),
                null_false: analysed.iter().filter(|r| !r.null_true).count(),
                power: empirical_power(&at, method, alpha_level).ok(),
                rejection_rate: if analysed.is_empty() {
                    f64::NAN
                } else {
                    rejects as f64 / analysed.len() as f64
                },
            });
        }
    }
    rows
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// One row per trial and method; 1-based cluster indices.
pub fn write_pvalues_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "trial",
        "delta",
        "cluster_a",
        "cluster_b",
        "null_true",
        "method",
        "p",
        "ess",
        "error",
    ])
    .map_err(csv_error)?;
    for r in records {
        let (a, b) = r
            .pair
            .map_or((String::new(), String::new()), |p| ((p.first + 1).to_string(), (p.second + 1).to_string()));
        if let Some(failure) = &r.failure {
            w.write_record([
                r.trial.to_string(),
                r.delta.to_string(),
                a,
                b,
                r.null_true.to_string(),
                String::new(),
                String::new(),
                String::new(),
                failure.clone(),
            ])
            .map_err(csv_error)?;
            continue;
        }
        for o in &r.outcomes {
            w.write_record([
                r.trial.to_string(),
                r.delta.to_string(),
                a.clone(),
                b.clone(),
                r.null_true.to_string(),
                o.method.to_string(),
                opt(o.p),
                opt(o.effective_sample_size),
                o.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_power_csv<W: Write>(rows: &[PowerRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "delta",
        "method",
        "trials",
        "excluded",
        "null_false",
        "power",
        "rejection_rate",
    ])
    .map_err(csv_error)?;
    for row in rows {
        w.write_record([
            row.delta.to_string(),
            row.method.to_string(),
            row.trials.to_string(),
            row.excluded.to_string(),
            row.null_false.to_string(),
            opt(row.power),
            if row.rejection_rate.is_nan() {
                String::new()
            } else {
                row.rejection_rate.to_string()
            },
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
