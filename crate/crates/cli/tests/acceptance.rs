//! Acceptance suite: calibration, agreement between computation paths,
//! power ordering, the penguin study, robustness and reproducibility.
//!
//! Runs without the libtest harness so every criterion prints exactly one
//! `PASS`/`FAIL` line; the process exits nonzero if any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use clustinf::data::{gen_mixture, load_csv, standardize};
use clustinf::decomp::{sigma_hat_all, sigma_hat_clustered};
use clustinf::dist::f_cdf_li;
use clustinf::infer::{default_scan_range, p_value_gao, p_value_importance, MembershipOracle};
use clustinf::rng::{derive_seed, stream_rng, uniform_open};
use clustinf::sim::{empirical_power, rejection_rate, run_experiment, ExperimentConfig, Scenario, SimMethod, TrialRecord};
use clustinf::stats::ks_test;
use clustinf::{
    build_decomposition, hclust, ClusterPair, ClusterPartition, Hierarchical, ISConfig, Linkage, MixtureSpec,
    ScanConfig, Space,
};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use statrs::function::gamma::ln_gamma;

const ALPHA: f64 = 0.05;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rate(records: &[TrialRecord], method: SimMethod) -> f64 {
    rejection_rate(records, method, ALPHA).expect("p-values available").estimate
}

fn experiment(scenario: Scenario, trials: usize, seed: u64, methods: &[SimMethod]) -> ExperimentConfig {
    ExperimentConfig {
        trials,
        seed,
        methods: methods.to_vec(),
        ..ExperimentConfig::for_scenario(scenario)
    }
}

fn calibration() -> Outcome {
    let k2 = run_experiment(&experiment(
        Scenario::Type1K2,
        1000,
        1,
        &[SimMethod::Proposed, SimMethod::GaoTrue, SimMethod::GaoAll, SimMethod::GaoClustered],
    ))
    .expect("type1_k2 runs");
    let k3 = run_experiment(&experiment(Scenario::Type1K3, 1000, 1, &[SimMethod::GaoClustered])).expect("type1_k3 runs");
    let proposed = rate(&k2, SimMethod::Proposed);
    let oracle = rate(&k2, SimMethod::GaoTrue);
    let clustered = rate(&k2, SimMethod::GaoClustered);
    let clustered_k3 = rate(&k3, SimMethod::GaoClustered);
    let in_band = |r: f64| (r - ALPHA).abs() <= 0.02;
    outcome(
        in_band(proposed) && in_band(oracle) && clustered >= 0.10 && clustered_k3 > clustered,
        format!(
            "type I error at 0.05 over 1000 trials: proposed {proposed:.3}, gao_true {oracle:.3} (band 0.03..0.07); \
             gao_clustered {clustered:.3} (K=2, need >= 0.10), {clustered_k3:.3} (K=3, need > K=2)"
        ),
    )
}

fn exact_vs_sampling() -> Outcome {
    let cfg = ExperimentConfig {
        delta_grid: vec![0.0, 4.0],
        n_draws: 8000,
        ..experiment(Scenario::PowerSetting1, 100, 2, &[SimMethod::Proposed, SimMethod::ProposedIs])
    };
    let records = run_experiment(&cfg).expect("setting 1 runs");
    let mut gaps: Vec<f64> = records
        .iter()
        .filter_map(|r| Some((r.p_value(SimMethod::Proposed)? - r.p_value(SimMethod::ProposedIs)?).abs()))
        .collect();
    gaps.sort_by(f64::total_cmp);
    let median = gaps[gaps.len() / 2];
    outcome(
        median <= 0.02 && gaps.len() >= 190,
        format!(
            "median |p_exact - p_IS| = {median:.2e} over {} trials at delta 0 and 4 (N = 8000, need <= 0.02)",
            gaps.len()
        ),
    )
}

fn change_of_variables() -> Outcome {
    let pair = ClusterPair::new(0, 1).unwrap();
    let procedure = Hierarchical::new(Linkage::Average, 2);
    let (mut agree, mut total, mut instances) = (0usize, 0usize, 0usize);
    for i in 0..50u64 {
        let (x, _) = gen_mixture(&MixtureSpec::setting1((i % 8) as f64), derive_seed(3, i)).unwrap();
        let part = hclust(&x, Linkage::Average, 2).unwrap();
        let d = build_decomposition(&x, &part, pair).unwrap();
        let r_oracle = MembershipOracle::new(&d, &procedure, &part, Space::R).unwrap();
        let phi_oracle = MembershipOracle::new(&d, &procedure, &part, Space::Phi).unwrap();
        let (lo, hi) = default_scan_range(&d, Space::R).unwrap();
        let mut rng = stream_rng(derive_seed(3, i), 1);
        for _ in 0..1000 {
            let r = (lo.ln() + (hi.ln() - lo.ln()) * uniform_open(&mut rng)).exp();
            total += 1;
            if r_oracle.contains(r).unwrap() == phi_oracle.contains(d.map_prop1(r)).unwrap() {
                agree += 1;
            }
        }
        instances += 1;
    }
    let share = agree as f64 / total as f64;
    outcome(
        share >= 0.999,
        format!("{agree}/{total} random r values agree across {instances} instances ({:.4}%, need >= 99.9%)", 100.0 * share),
    )
}

/// `F(d1, d2)` CDF by composite 8-point Gauss-Legendre quadrature of the
/// density.
fn f_cdf_quadrature(t: f64, d1: f64, d2: f64) -> f64 {
    const NODES: [(f64, f64); 4] = [
        (0.183_434_642_495_65, 0.362_683_783_378_362),
        (0.525_532_409_916_329, 0.313_706_645_877_887_3),
        (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
        (0.960_289_856_497_536_2, 0.101_228_536_290_376_3),
    ];
    let ln_norm = ln_gamma((d1 + d2) / 2.0) - ln_gamma(d1 / 2.0) - ln_gamma(d2 / 2.0) + 0.5 * d1 * (d1 / d2).ln();
    let pdf = |x: f64| {
        if x <= 0.0 {
            return if d1 == 2.0 { ln_norm.exp() } else { 0.0 };
        }
        (ln_norm + (0.5 * d1 - 1.0) * x.ln() - 0.5 * (d1 + d2) * (1.0 + d1 * x / d2).ln()).exp()
    };
    let panels = 4000;
    let h = t / panels as f64;
    (0..panels)
        .map(|p| {
            let mid = (p as f64 + 0.5) * h;
            NODES
                .iter()
                .map(|&(x, w)| w * (pdf(mid - 0.5 * h * x) + pdf(mid + 0.5 * h * x)))
                .sum::<f64>()
                * 0.5
                * h
        })
        .sum()
}

fn li_approximation() -> Outcome {
    let (k, l) = (2usize, 56usize);
    let mut worst = (0.0f64, 0.0f64);
    for i in 0..=400 {
        let t = 20.0 * i as f64 / 400.0;
        let err = (f_cdf_li(t, k, l) - f_cdf_quadrature(t, k as f64, l as f64)).abs();
        if err > worst.0 {
            worst = (err, t);
        }
    }
    outcome(
        worst.0 <= 1e-3,
        format!("sup |Li - quadrature| on [0, 20] for (2, 56) = {:.2e} at t = {} (need <= 1e-3)", worst.0, worst.1),
    )
}

fn power_ordering() -> Outcome {
    let methods = [SimMethod::Proposed, SimMethod::GaoTrue, SimMethod::GaoAll, SimMethod::GaoClustered];
    let records = run_experiment(&experiment(Scenario::PowerSetting1, 300, 4, &methods)).expect("power study runs");
    // At delta = 0 every null holds and the rejection rate stands in for power.
    let level = |m: SimMethod, delta: f64| {
        let at: Vec<TrialRecord> = records.iter().filter(|r| r.delta == delta).cloned().collect();
        empirical_power(&at, m, ALPHA).unwrap_or_else(|_| rate(&at, m))
    };
    let curve = |m: SimMethod| (0..8).map(|d| level(m, f64::from(d))).collect::<Vec<_>>();
    let (proposed, all, clustered) = (curve(SimMethod::Proposed), curve(SimMethod::GaoAll), curve(SimMethod::GaoClustered));
    let monotone = proposed.windows(2).all(|w| w[1] >= w[0] - 0.05);
    let beats_all = proposed.iter().zip(&all).all(|(p, a)| *p >= a - 0.07);
    let below_clustered = clustered.iter().zip(&proposed).all(|(c, p)| c >= p);
    let band = 0.02f64.max(1.96 * (ALPHA * (1.0 - ALPHA) / 300.0).sqrt());
    let null_rate = |m: SimMethod| level(m, 0.0);
    let calibrated = |m: SimMethod| (null_rate(m) - ALPHA).abs() <= band;
    let null_pattern = calibrated(SimMethod::Proposed)
        && calibrated(SimMethod::GaoTrue)
        && calibrated(SimMethod::GaoAll)
        && !calibrated(SimMethod::GaoClustered);
    let fmt = |v: &[f64]| v.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join(" ");
    outcome(
        monotone && beats_all && below_clustered && null_pattern,
        format!(
            "monotone {monotone}, >= gao_all - 0.07 {beats_all}, <= gao_clustered {below_clustered}, \
             delta=0 band pattern {null_pattern} (band +/-{band:.3}; gao_true {:.3}, gao_clustered {:.3}); \
             proposed [{}], gao_all [{}], gao_clustered [{}]",
            null_rate(SimMethod::GaoTrue),
            null_rate(SimMethod::GaoClustered),
            fmt(&proposed),
            fmt(&all),
            fmt(&clustered)
        ),
    )
}

fn unconditional_f_law() -> Outcome {
    let labels: Vec<usize> = (0..30).map(|i| usize::from(i >= 15)).collect();
    let part = ClusterPartition::from_labels(&labels).unwrap();
    let pair = ClusterPair::new(0, 1).unwrap();
    let draws: Vec<f64> = (0..10_000u64)
        .map(|i| {
            let (x, _) = gen_mixture(&MixtureSpec::null(30, 2, 1.0), derive_seed(6, i)).unwrap();
            build_decomposition(&x, &part, pair).unwrap().statistic_r()
        })
        .collect();
    let f = FisherSnedecor::new(2.0, 56.0).unwrap();
    let ks = ks_test(&draws, |r| f.cdf(r)).unwrap();
    outcome(
        ks.p_value > 0.01,
        format!("KS of 10^4 draws of R against F(2, 56): D = {:.4}, p = {:.3} (need > 0.01)", ks.statistic, ks.p_value),
    )
}

/// Reference p-values for the female penguins, indexed by cluster size so
/// that the check does not depend on how clusters are numbered.
/// Columns: sizes of the two clusters, proposed, gao_all, gao_clustered.
const PENGUIN_REFERENCE: [((usize, usize), [f64; 3]); 3] = [
    ((66, 13), [0.5, 0.85, 0.31]),
    ((66, 27), [0.0045, 0.13, 1.6e-7]),
    ((58, 27), [1.5e-8, 0.0014, 4.2e-22]),
];

fn penguins() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/penguins_female.csv");
    let x = standardize(&load_csv(&path, true).expect("penguin data loads")).unwrap();
    let procedure = Hierarchical::new(Linkage::AverageSquared, 5);
    let part = hclust(&x, Linkage::AverageSquared, 5).unwrap();
    let sizes = part.sizes();
    let find = |s: usize| sizes.iter().position(|&t| t == s).expect("cluster of reference size");
    let mut pass = true;
    let mut parts = Vec::new();
    for ((sa, sb), reference) in PENGUIN_REFERENCE {
        let (a, b) = (find(sa), find(sb));
        let pair = ClusterPair::new(a.min(b), a.max(b)).unwrap();
        let scan = ScanConfig::default();
        let ours = [
            p_value_importance(&x, &part, pair, &procedure, &ISConfig::default()).unwrap().p,
            p_value_gao(&x, &part, pair, &procedure, sigma_hat_all(&x).unwrap(), &scan).unwrap().p,
            p_value_gao(&x, &part, pair, &procedure, sigma_hat_clustered(&x, &part).unwrap(), &scan).unwrap().p,
        ];
        let decisions = ours.iter().zip(&reference).all(|(o, r)| (*o <= ALPHA) == (*r <= ALPHA));
        let magnitude = (ours[0].log10() - reference[0].log10()).abs() <= 2.0;
        pass &= decisions && magnitude;
        parts.push(format!(
            "clusters {}&{} (sizes {sa},{sb}): proposed {:.2e} vs {:.1e}, gao_all {:.2e} vs {:.1e}, gao_clustered {:.2e} vs {:.1e}",
            pair.first + 1,
            pair.second + 1,
            ours[0],
            reference[0],
            ours[1],
            reference[1],
            ours[2],
            reference[2]
        ));
    }
    outcome(pass, format!("same decisions, proposed within 100x; {}", parts.join("; ")))
}

fn misspecification() -> Outcome {
    let methods = [SimMethod::Proposed, SimMethod::GaoAll, SimMethod::GaoClustered];
    let t5 = run_experiment(&experiment(Scenario::MisspecT5, 1000, 8, &methods)).expect("t5 runs");
    let t10 = run_experiment(&experiment(Scenario::MisspecT10, 1000, 8, &[SimMethod::Proposed])).expect("t10 runs");
    let [p5, a5, c5] = methods.map(|m| rate(&t5, m));
    let p10 = rate(&t10, SimMethod::Proposed);
    outcome(
        p5 > ALPHA && a5 > ALPHA && c5 > ALPHA && c5 > p5 && p10 < p5,
        format!(
            "t5 rejection at 0.05: proposed {p5:.3}, gao_all {a5:.3}, gao_clustered {c5:.3}; \
             t10 proposed {p10:.3} (1000 trials each)"
        ),
    )
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_clustinf");
    let runs: [&[&str]; 4] = [
        &["--scenario", "type1_k2", "--trials", "40"],
        &["--scenario", "power_setting2", "--trials", "3", "--n-draws", "500"],
        &["--scenario", "misspec_t5", "--trials", "30"],
        &["--scenario", "power_setting1", "--trials", "10", "--methods", "proposed,proposed_is", "--n-draws", "400"],
    ];
    let mut failures = Vec::new();
    for args in runs {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for (i, dir) in dirs.iter().enumerate() {
            let mut cmd = Command::new(bin);
            cmd.arg("simulate").args(args).args(["--seed", "17", "--out"]).arg(dir.path());
            // The third run uses the thread pool; scheduling must not matter.
            if i == 2 {
                cmd.arg("--parallel");
            }
            let status = cmd.env_remove("CLUSTINF_SEED").output().expect("binary runs").status;
            if !status.success() {
                failures.push(format!("{} exited with {status}", args[1]));
            }
        }
        for file in ["pvalues.csv", "power.csv"] {
            let base = std::fs::read(dirs[0].path().join(file)).unwrap_or_default();
            for other in &dirs[1..] {
                if base.is_empty() || std::fs::read(other.path().join(file)).unwrap_or_default() != base {
                    failures.push(format!("{} {file}", args[1]));
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} simulate invocations reproduced byte for byte, sequential and parallel", runs.len())
        } else {
            format!("mismatches: {}", failures.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("calibration", calibration),
        ("exact vs importance sampling", exact_vs_sampling),
        ("ratio/contrast change of variables", change_of_variables),
        ("Li approximation", li_approximation),
        ("power ordering", power_ordering),
        ("unconditional F law", unconditional_f_law),
        ("penguin study", penguins),
        ("misspecification", misspecification),
        ("determinism", determinism),
    ];
    let mut passed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = check();
        passed += usize::from(result.pass);
        println!(
            "criterion {} {name}: {} ({:.1}s) {}",
            i + 1,
            if result.pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            result.detail
        );
    }
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    if passed == criteria.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
