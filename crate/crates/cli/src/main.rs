//! `clustinf`: selective tests for the difference between two hierarchical
//! clusters, truncation-set scans, and the simulation studies.
//!
//! Results go to stdout as JSON (single tests, scans) or to an output
//! directory as CSV (simulations). Exit status is 0 on success, 2 for a bad
//! invocation or configuration and 3 when the data or the sampler make the
//! requested quantity impossible to compute; failures print a JSON error
//! object on stdout.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use clustinf::data::{load_csv, standardize};
use clustinf::decomp::{sigma_hat_all, sigma_hat_clustered};
use clustinf::infer::{
    p_value_exact_k2, p_value_gao, p_value_importance, scan_truncation, MembershipOracle, ScanRoute,
};
use clustinf::sim::{
    power_table, run_experiment, uniformity_report, write_power_csv, write_pvalues_csv, ExperimentConfig, Scenario,
    SimMethod,
};
use clustinf::{
    build_decomposition, hclust, ClusterPair, DataMatrix, Distribution, Error, ExactConfig, Hierarchical, ISConfig,
    Linkage, MixtureSpec, PValueReport, ScanConfig, SigmaEstimate, Space,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");
const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "clustinf", version, about = "Selective inference after hierarchical clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test whether two estimated clusters have different means.
    Test(TestArgs),
    /// Run a simulation study and write CSV tables.
    Simulate(SimulateArgs),
    /// Print the truncation set of the statistic for one pair of clusters.
    Scan(ScanArgs),
}

#[derive(Args, Debug, Serialize)]
struct DataArgs {
    /// Numeric CSV file, one observation per row.
    #[arg(long)]
    data: PathBuf,
    /// Skip the first row of the CSV.
    #[arg(long)]
    header: bool,
    /// Center and scale every column before clustering.
    #[arg(long)]
    standardize: bool,
    /// Number of clusters to cut the dendrogram at.
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value_t = LinkageArg::Average)]
    linkage: LinkageArg,
    /// 1-based cluster pair, e.g. `1,2`.
    #[arg(long, value_parser = parse_pair)]
    pair: Option<(usize, usize)>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum LinkageArg {
    #[value(alias = "avg")]
    Average,
    Complete,
    Single,
    /// Average linkage on squared Euclidean distances.
    AverageSq,
}

impl From<LinkageArg> for Linkage {
    fn from(l: LinkageArg) -> Self {
        match l {
            LinkageArg::Average => Linkage::Average,
            LinkageArg::Complete => Linkage::Complete,
            LinkageArg::Single => Linkage::Single,
            LinkageArg::AverageSq => Linkage::AverageSquared,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    Exact,
    Is,
    GaoAll,
    GaoClustered,
    GaoTrue,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SpaceArg {
    R,
    Phi,
}

#[derive(Args, Debug, Serialize)]
struct TestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
    method: MethodArg,
    /// Known noise standard deviation; required by `gao-true`.
    #[arg(long)]
    sigma: Option<f64>,
    /// Importance-sampling draws.
    #[arg(long, default_value_t = 8000)]
    n_draws: usize,
    #[arg(long, env = "CLUSTINF_SEED", default_value_t = 0)]
    seed: u64,
    /// Scan grid size for the exact and known-variance methods.
    #[arg(long, default_value_t = 2048)]
    grid: usize,
    /// Space scanned by the exact method.
    #[arg(long, value_enum, default_value_t = SpaceArg::R)]
    route: SpaceArg,
}

#[derive(Args, Debug, Serialize)]
struct ScanArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = SpaceArg::R)]
    space: SpaceArg,
    #[arg(long, default_value_t = 2048)]
    grid: usize,
    /// Relative tolerance of boundary bisection.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// One of type1_k2, type1_k3, power_setting1..3, misspec_t5,
    /// misspec_t10, misspec_noniso, custom.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated signal strengths for the power scenarios.
    #[arg(long, value_delimiter = ',')]
    delta_grid: Option<Vec<f64>>,
    /// Comma-separated subset of proposed, proposed_is, gao_true, gao_all,
    /// gao_clustered.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Clusters to cut at; defaults to the scenario's.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, env = "CLUSTINF_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n_draws: Option<usize>,
    #[arg(long)]
    grid: Option<usize>,
    /// JSON mixture for the custom scenario: {"means", "sizes", "sigma", "delta"}.
    #[arg(long)]
    mixture: Option<PathBuf>,
    /// Run trials on all available cores.
    #[arg(long)]
    parallel: bool,
    #[arg(long)]
    out: PathBuf,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `k,k'`, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|e| format!("bad cluster index {a:?}: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("bad cluster index {b:?}: {e}"))?;
    if a == 0 || b == 0 {
        return Err("cluster indices are 1-based".into());
    }
    if a == b {
        return Err("the two clusters must differ".into());
    }
    Ok((a, b))
}

/// Why a command failed, mapped to the exit status.
enum Failure {
    Config(String),
    Statistical(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_statistical() {
            Failure::Statistical(e)
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    config: Value,
    seed: Option<u64>,
    version: &'static str,
    schema_version: u32,
    duration_secs: f64,
}

impl RunManifest {
    fn new(command: &'static str, config: Value, seed: Option<u64>, started: Instant) -> Self {
        Self {
            command,
            config,
            seed,
            version: VERSION,
            schema_version: SCHEMA_VERSION,
            duration_secs: started.elapsed().as_secs_f64(),
        }
    }
}

/// Pretty JSON on stdout. A closed pipe is not an error worth reporting.
fn emit(value: &Value) {
    let text = serde_json::to_string_pretty(value).expect("JSON output");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let body = json!({ "error": { "kind": "usage", "message": e.to_string() }, "exit_code": 2 });
            emit(&body);
            return ExitCode::from(2);
        }
    };
    let started = Instant::now();
    let result = match &cli.command {
        Command::Test(args) => cmd_test(args, started),
        Command::Simulate(args) => cmd_simulate(args, started),
        Command::Scan(args) => cmd_scan(args, started),
    };
    match result {
        Ok(out) => {
            emit(&out);
            ExitCode::SUCCESS
        }
        Err(failure) => {
            let (code, kind, message) = match failure {
                Failure::Config(m) => (2u8, "config", m),
                Failure::Statistical(e) => (3u8, "statistical", e.to_string()),
            };
            let body = json!({ "error": { "kind": kind, "message": message }, "exit_code": code });
            emit(&body);
            ExitCode::from(code)
        }
    }
}

struct Prepared {
    x: DataMatrix,
    procedure: Hierarchical,
    part: clustinf::ClusterPartition,
    pair: ClusterPair,
}

fn prepare(args: &DataArgs) -> Result<Prepared, Failure> {
    let mut x = load_csv(&args.data, args.header)?;
    if args.standardize {
        x = standardize(&x)?;
    }
    if args.k < 2 || args.k > x.n() {
        return Err(Failure::Config(format!("--k must lie in 2..={}, got {}", x.n(), args.k)));
    }
    let (a, b) = args.pair.unwrap_or((1, 2));
    if a > args.k || b > args.k {
        return Err(Failure::Config(format!("--pair {a},{b} exceeds K = {}", args.k)));
    }
    let procedure = Hierarchical::new(args.linkage.into(), args.k);
    let part = hclust(&x, procedure.linkage, procedure.k)?;
    let pair = ClusterPair::new(a.min(b) - 1, a.max(b) - 1)?;
    Ok(Prepared { x, procedure, part, pair })
}

fn report_json(report: &PValueReport, sizes: (usize, usize)) -> Value {
    let mut v = serde_json::to_value(report).expect("report serializes");
    v["pair"] = json!([report.pair.first + 1, report.pair.second + 1]);
    v["cluster_sizes"] = json!([sizes.0, sizes.1]);
    v
}

fn cmd_test(args: &TestArgs, started: Instant) -> Result<Value, Failure> {
    if args.method == MethodArg::GaoTrue && args.sigma.is_none() {
        return Err(Failure::Config("--method gao-true requires --sigma".into()));
    }
    let prep = prepare(&args.data)?;
    let scan = ScanConfig {
        grid_points: args.grid,
        ..ScanConfig::default()
    };
    let is_cfg = ISConfig {
        n_draws: args.n_draws,
        seed: args.seed,
        ..ISConfig::default()
    };
    let (x, part, pair, procedure) = (&prep.x, &prep.part, prep.pair, &prep.procedure);
    let report = match args.method {
        MethodArg::Exact if part.num_clusters() == 2 => {
            let cfg = ExactConfig {
                scan,
                route: match args.route {
                    SpaceArg::R => ScanRoute::RSpace,
                    SpaceArg::Phi => ScanRoute::PhiSpace,
                },
                ..ExactConfig::default()
            };
            p_value_exact_k2(x, part, procedure, &cfg)?
        }
        MethodArg::Exact => {
            let mut r = p_value_importance(x, part, pair, procedure, &is_cfg)?;
            r.diagnostics.warnings.insert(
                0,
                format!(
                    "exact computation needs K = 2; used importance sampling for K = {}",
                    part.num_clusters()
                ),
            );
            r
        }
        MethodArg::Is => p_value_importance(x, part, pair, procedure, &is_cfg)?,
        MethodArg::GaoAll => p_value_gao(x, part, pair, procedure, sigma_hat_all(x)?, &scan)?,
        MethodArg::GaoClustered => p_value_gao(x, part, pair, procedure, sigma_hat_clustered(x, part)?, &scan)?,
        MethodArg::GaoTrue => {
            let sigma = SigmaEstimate::known(args.sigma.expect("checked above"))?;
            p_value_gao(x, part, pair, procedure, sigma, &scan)?
        }
    };
    let sizes = (part.size(pair.first), part.size(pair.second));
    let mut out = report_json(&report, sizes);
    let seed = matches!(args.method, MethodArg::Is | MethodArg::Exact).then_some(args.seed);
    out["manifest"] = serde_json::to_value(RunManifest::new(
        "test",
        serde_json::to_value(args).expect("args serialize"),
        seed,
        started,
    ))
    .expect("manifest serializes");
    Ok(out)
}

fn cmd_scan(args: &ScanArgs, started: Instant) -> Result<Value, Failure> {
    let prep = prepare(&args.data)?;
    let cfg = ScanConfig {
        grid_points: args.grid,
        refine_tol: args.tol,
        ..ScanConfig::default()
    };
    cfg.validate()?;
    let space = match args.space {
        SpaceArg::R => Space::R,
        SpaceArg::Phi => Space::Phi,
    };
    let decomp = build_decomposition(&prep.x, &prep.part, prep.pair)?;
    let set = scan_truncation(&decomp, &prep.part, &prep.procedure, space, &cfg)?;
    let observed = MembershipOracle::new(&decomp, &prep.procedure, &prep.part, space)?.observed();
    let ln_mass = match space {
        Space::R => Some(set.ln_mass(&decomp.f_distribution())),
        _ => None,
    };
    let (d1, d2) = decomp.degrees_of_freedom();
    Ok(json!({
        "space": space,
        "pair": [prep.pair.first + 1, prep.pair.second + 1],
        "observed": observed,
        "containing_interval": set.containing_interval(observed),
        "interval_count": set.len(),
        "intervals": set.intervals(),
        "null_distribution": match space {
            Space::R => serde_json::to_value(Distribution::f(d1, d2)).expect("serializes"),
            _ => Value::Null,
        },
        "ln_null_mass": ln_mass,
        "manifest": RunManifest::new("scan", serde_json::to_value(args).expect("args serialize"), None, started),
    }))
}

fn cmd_simulate(args: &SimulateArgs, started: Instant) -> Result<Value, Failure> {
    let scenario: Scenario = args.scenario.parse().map_err(|e: Error| Failure::Config(e.to_string()))?;
    let mut cfg = ExperimentConfig::for_scenario(scenario);
    cfg.seed = args.seed;
    cfg.parallel = args.parallel;
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(grid) = &args.delta_grid {
        cfg.delta_grid = grid.clone();
    }
    if let Some(methods) = &args.methods {
        cfg.methods = methods
            .iter()
            .map(|m| m.trim().parse::<SimMethod>())
            .collect::<Result<_, _>>()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(n) = args.n_draws {
        cfg.n_draws = n;
    }
    if let Some(g) = args.grid {
        cfg.scan.grid_points = g;
    }
    if let Some(path) = &args.mixture {
        let text = fs::read_to_string(path)?;
        let spec: MixtureSpec =
            serde_json::from_str(&text).map_err(|e| Failure::Config(format!("bad mixture file: {e}")))?;
        cfg.n = spec.n();
        cfg.q = spec.q();
        cfg.sigma = spec.sigma;
        cfg.mixture = Some(spec);
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;

    let records = run_experiment(&cfg)?;
    let rows = power_table(&records, &cfg.methods, cfg.alpha_level);
    fs::create_dir_all(&args.out)?;
    write_csv_file(&args.out.join("pvalues.csv"), |f| write_pvalues_csv(&records, f))?;
    write_csv_file(&args.out.join("power.csv"), |f| write_power_csv(&rows, f))?;

    let failed = records.iter().filter(|r| r.failure.is_some()).count();
    let uniformity: Vec<Value> = if records.iter().all(|r| r.null_true) {
        cfg.methods
            .iter()
            .filter_map(|&m| uniformity_report(&records, m).ok())
            .map(|u| serde_json::to_value(u).expect("serializes"))
            .collect()
    } else {
        Vec::new()
    };
    let manifest = RunManifest::new(
        "simulate",
        serde_json::to_value(&cfg).expect("config serializes"),
        Some(cfg.seed),
        started,
    );
    fs::write(
        args.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(json!({
        "out": args.out,
        "records": records.len(),
        "failed_trials": failed,
        "power": rows,
        "uniformity": uniformity,
        "manifest": manifest,
    }))
}

fn write_csv_file(
    path: &Path,
    write: impl FnOnce(std::io::BufWriter<fs::File>) -> clustinf::Result<()>,
) -> Result<(), Failure> {
    let file = fs::File::create(path)?;
    write(std::io::BufWriter::new(file)).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}
