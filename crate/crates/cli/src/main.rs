mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use synthcause_core::data::{self, Standardizer};
use synthcause_core::dgp::{self, BenchmarkConfig, Regime};
use synthcause_core::diagnostics::{self, TstrOptions};
use synthcause_core::estimators::{estimate_many, Estimator, EstimatorConfig, IpwFlavor};
use synthcause_core::generate::{
    self, fit_generator, GeneratorKind, GeneratorOptions, HybridConfig, JointKind, OutcomeMode,
};
use synthcause_core::nuisance::{NuisanceOptions, NuisancePair, Truncation};
use synthcause_core::parallel::Execution;
use synthcause_core::positivity::{self, PositivityConfig, Scenario, TailMode};
use synthcause_core::simengine::{self, Environment, HybridNuisances, MetricTable, SeedData, SimConfig, SimReport};

use config::{kebab, ConfigFile, Output};

/// Identity tolerance for `check-theory`.
const IDENTITY_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "synthcause", version, about = "Causal synthetic-data workbench")]
struct Cli {
    /// TOML config with one table per subcommand; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for replication loops (1 runs serially).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Directory for artifacts written without an explicit `--out`.
    #[arg(long, global = true, env = "SYNTHCAUSE_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the benchmark DGP to an exchange CSV.
    DgpSample(DgpSampleArgs),
    /// Monte Carlo value of the benchmark's true ATE.
    DgpTruth(DgpTruthArgs),
    /// Hybrid or fully joint synthetic data from a seed table.
    Generate(GenerateArgs),
    /// Fit nuisances on a table and report ATE estimates as JSON.
    Estimate(EstimateArgs),
    /// Distance to closest record and train-on-synthetic AUC.
    Diagnose(DiagnoseArgs),
    /// Randomized checks of the bound, identity and Pinsker results.
    CheckTheory(CheckTheoryArgs),
    /// Positivity-repair experiment; writes a scenario x estimator MSE table.
    Positivity(PositivityArgs),
    /// Replication study in a DGP or hybrid environment.
    Simulate(SimulateArgs),
    /// Compare the metric tables of two `simulate` runs.
    Fidelity(FidelityArgs),
}

#[derive(clap::Args)]
struct DgpSampleArgs {
    #[arg(long, value_parser = kebab::<Regime>)]
    regime: Option<Regime>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct DgpSampleSettings {
    regime: Regime,
    n: usize,
    seed: u64,
}

impl Default for DgpSampleSettings {
    fn default() -> Self {
        DgpSampleSettings {
            regime: Regime::Randomized,
            n: 1000,
            seed: 1,
        }
    }
}

#[derive(clap::Args)]
struct DgpTruthArgs {
    #[arg(long)]
    mc_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write a JSON record here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct DgpTruthSettings {
    mc_size: usize,
    seed: u64,
}

impl Default for DgpTruthSettings {
    fn default() -> Self {
        DgpTruthSettings {
            mc_size: dgp::DEFAULT_TRUTH_MC_SIZE,
            seed: dgp::DEFAULT_TRUTH_SEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum GenerateMode {
    #[default]
    Hybrid,
    Full,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    mode: Option<GenerateMode>,
    /// Generator kind, or a path to a covariate CSV for the external-file
    /// generator.
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    seed_data: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = kebab::<OutcomeMode>)]
    outcome_mode: Option<OutcomeMode>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct GenerateSettings {
    mode: GenerateMode,
    generator: String,
    seed_data: Option<PathBuf>,
    n: usize,
    seed: u64,
    outcome_mode: OutcomeMode,
    generator_options: GeneratorOptions,
    nuisance: NuisanceOptions,
}

impl Default for GenerateSettings {
    fn default() -> Self {
        GenerateSettings {
            mode: GenerateMode::Hybrid,
            generator: "gaussian-copula".into(),
            seed_data: None,
            n: 1000,
            seed: 1,
            outcome_mode: OutcomeMode::Sample,
            generator_options: GeneratorOptions::default(),
            nuisance: NuisanceOptions::default(),
        }
    }
}

#[derive(clap::Args)]
struct EstimateArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Comma-separated subset of or,ipw,aipw,tmle.
    #[arg(long)]
    estimators: Option<String>,
    #[arg(long, value_parser = kebab::<IpwFlavor>)]
    ipw_flavor: Option<IpwFlavor>,
    /// Propensity truncation as `lo,hi`.
    #[arg(long)]
    truncation: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct EstimateSettings {
    input: Option<PathBuf>,
    estimators: Vec<Estimator>,
    estimator: EstimatorConfig,
    nuisance: NuisanceOptions,
}

impl Default for EstimateSettings {
    fn default() -> Self {
        EstimateSettings {
            input: None,
            estimators: Estimator::ALL.to_vec(),
            estimator: EstimatorConfig::default(),
            nuisance: NuisanceOptions::default(),
        }
    }
}

#[derive(clap::Args)]
struct DiagnoseArgs {
    #[arg(long)]
    real: Option<PathBuf>,
    #[arg(long)]
    syn: Option<PathBuf>,
    /// Held-out real rows for TSTR; omitted skips TSTR.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct DiagnoseSettings {
    real: Option<PathBuf>,
    syn: Option<PathBuf>,
    test: Option<PathBuf>,
    tstr: TstrOptions,
}

#[derive(clap::Args)]
struct CheckTheoryArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Random instances per check.
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct CheckTheorySettings {
    seed: u64,
    instances: usize,
}

impl Default for CheckTheorySettings {
    fn default() -> Self {
        CheckTheorySettings {
            seed: 1,
            instances: 1000,
        }
    }
}

#[derive(clap::Args)]
struct PositivityArgs {
    /// TOML (`[[scenarios]]`) or JSON (array) scenario list.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    /// Synthetic rows paired with each flagged unit.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long, value_parser = kebab::<TailMode>)]
    tail: Option<TailMode>,
    #[arg(long, value_parser = kebab::<IpwFlavor>)]
    ipw_flavor: Option<IpwFlavor>,
    #[arg(long)]
    truth_mc_size: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EnvArg {
    DgpRandomized,
    DgpObservational,
    Hybrid,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    env: Option<EnvArg>,
    /// Seed table for `--env hybrid`.
    #[arg(long)]
    seed_data: Option<PathBuf>,
    #[arg(long, value_parser = kebab::<GeneratorKind>)]
    generator: Option<GeneratorKind>,
    #[arg(long, value_parser = kebab::<HybridNuisances>)]
    nuisances: Option<HybridNuisances>,
    #[arg(long)]
    ref_size: Option<usize>,
    /// One size, or an ascending comma-separated list for a sweep.
    #[arg(long, value_delimiter = ',')]
    rep_size: Vec<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    estimators: Option<String>,
    #[arg(long)]
    truth_mc_size: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct FidelityArgs {
    #[arg(long)]
    real: Option<PathBuf>,
    #[arg(long)]
    syn: Option<PathBuf>,
    /// Replication size to compare; defaults to the largest one both runs share.
    #[arg(long)]
    rep_size: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct FidelitySettings {
    real: Option<PathBuf>,
    syn: Option<PathBuf>,
    rep_size: Option<usize>,
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn required(p: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    match p {
        Some(p) => Ok(p),
        None => bail!(synthcause_core::Error::InvalidArgument(format!("missing `--{flag}`"))),
    }
}

fn parse_truncation(s: &str) -> Result<Truncation> {
    let parts: Vec<&str> = s.split(',').collect();
    let [lo, hi] = parts.as_slice() else {
        bail!(synthcause_core::Error::InvalidArgument(format!("truncation `{s}` is not `lo,hi`")));
    };
    let lo: f64 = lo.trim().parse().with_context(|| format!("truncation bound `{lo}`"))?;
    let hi: f64 = hi.trim().parse().with_context(|| format!("truncation bound `{hi}`"))?;
    Ok(Truncation::new(lo, hi)?)
}

fn json_line<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn dgp_sample(cfg: &ConfigFile, out: &Output, args: DgpSampleArgs) -> Result<()> {
    let mut s: DgpSampleSettings = cfg.section("dgp-sample")?;
    set(&mut s.regime, args.regime);
    set(&mut s.n, args.n);
    set(&mut s.seed, args.seed);
    let ds = dgp::sample_dataset(&BenchmarkConfig {
        regime: s.regime,
        n: s.n,
        seed: s.seed,
    })?;
    let mut buf = Vec::new();
    data::write_table_to(&ds, &mut buf)?;
    let path = out.path(args.out, "dgp_sample.csv");
    out.write(&path, &String::from_utf8(buf)?, "dgp-sample", Some(s.seed), &s)
}

fn dgp_truth(cfg: &ConfigFile, out: &Output, args: DgpTruthArgs) -> Result<()> {
    let mut s: DgpTruthSettings = cfg.section("dgp-truth")?;
    set(&mut s.mc_size, args.mc_size);
    set(&mut s.seed, args.seed);
    let psi = dgp::true_ate_with(s.mc_size, s.seed, Execution::Serial)?;
    println!("{psi:.6}");
    if let Some(path) = args.out {
        let rec = json!({ "psi": psi, "mc_size": s.mc_size, "seed": s.seed });
        out.write(&path, &json_line(&rec)?, "dgp-truth", Some(s.seed), &s)?;
    }
    Ok(())
}

fn generate(cfg: &ConfigFile, out: &Output, args: GenerateArgs) -> Result<()> {
    let mut s: GenerateSettings = cfg.section("generate")?;
    set(&mut s.mode, args.mode);
    set(&mut s.generator, args.generator);
    set(&mut s.n, args.n);
    set(&mut s.seed, args.seed);
    set(&mut s.outcome_mode, args.outcome_mode);
    if args.seed_data.is_some() {
        s.seed_data = args.seed_data;
    }
    if s.n == 0 {
        bail!(synthcause_core::Error::InvalidArgument("--n must be at least 1".into()));
    }
    let seed_path = required(s.seed_data.clone(), "seed-data")?;
    let seed_ds = data::load_table_inferred(&seed_path)?;

    let syn = match s.mode {
        GenerateMode::Full => {
            let kind: JointKind = s.generator.parse()?;
            generate::full_generate(kind, &seed_ds, s.n, s.seed)?
        }
        GenerateMode::Hybrid => {
            // anything that is not a generator name is an external covariate file
            let kind = match s.generator.parse::<GeneratorKind>() {
                Ok(k) => k,
                Err(_) => {
                    s.generator_options.external_path = Some(PathBuf::from(&s.generator));
                    GeneratorKind::ExternalFile
                }
            };
            let gen = fit_generator(kind, seed_ds.covariates(), seed_ds.schema().covariates(), &s.generator_options)?;
            let pair = NuisancePair::fit(&seed_ds, &s.nuisance)?;
            let mut hc = HybridConfig::from_pair(&gen, &pair, seed_ds.schema().clone(), s.n, s.seed);
            hc.outcome_mode = s.outcome_mode;
            generate::hybrid_generate(&hc)?
        }
    };
    let mut buf = Vec::new();
    data::write_table_to(&syn, &mut buf)?;
    let path = out.path(args.out, "synthetic.csv");
    out.write(&path, &String::from_utf8(buf)?, "generate", Some(s.seed), &s)
}

fn estimate(cfg: &ConfigFile, out: &Output, args: EstimateArgs) -> Result<()> {
    let mut s: EstimateSettings = cfg.section("estimate")?;
    if args.input.is_some() {
        s.input = args.input;
    }
    if let Some(list) = args.estimators {
        s.estimators = Estimator::parse_list(&list)?;
    }
    set(&mut s.estimator.ipw_flavor, args.ipw_flavor);
    if let Some(t) = args.truncation {
        s.estimator.truncation = parse_truncation(&t)?;
    }
    // one truncation governs both the fitted pair and the estimators
    s.nuisance.truncation = s.estimator.truncation;
    let ds = data::load_table_inferred(required(s.input.clone(), "in")?)?;
    let pair = NuisancePair::fit(&ds, &s.nuisance)?;

    let mut estimates = Vec::new();
    let mut first_err = None;
    for (e, r) in estimate_many(&ds, &pair.outcome, &pair.propensity, &s.estimators, &s.estimator) {
        match r {
            Ok(est) => estimates.push(est),
            Err(err) => {
                eprintln!("{}", json!({ "error": { "estimator": e, "kind": kind_of(&err), "message": err.to_string() } }));
                first_err.get_or_insert(err);
            }
        }
    }
    let body = json_line(&estimates)?;
    match args.out {
        Some(path) => out.write(&path, &body, "estimate", None, &s)?,
        None => print!("{body}"),
    }
    match first_err {
        Some(err) => Err(err.into()),
        None => Ok(()),
    }
}

fn diagnose(cfg: &ConfigFile, out: &Output, args: DiagnoseArgs) -> Result<()> {
    let mut s: DiagnoseSettings = cfg.section("diagnose")?;
    for (slot, flag) in [(&mut s.real, args.real), (&mut s.syn, args.syn), (&mut s.test, args.test)] {
        if flag.is_some() {
            *slot = flag;
        }
    }
    let real = data::load_table_inferred(required(s.real.clone(), "real")?)?;
    let syn = data::load_table_inferred(required(s.syn.clone(), "syn")?)?;
    let std = Standardizer::fit(&real);
    let dcr = diagnostics::dcr(&real, &syn, &std, Execution::Serial)?;
    let tstr = match &s.test {
        Some(p) => Some(diagnostics::tstr(&syn, &data::load_table_inferred(p)?, &s.tstr)?),
        None => None,
    };
    let report = json!({
        "dcr": {
            "metric": dcr.metric,
            "n_real": real.n(),
            "n_syn": syn.n(),
            "mean": dcr.mean,
            "q05": dcr.q05,
            "q50": dcr.q50,
            "q95": dcr.q95,
        },
        "tstr_auc": tstr.as_ref().map(|t| t.auc),
        "tstr": tstr,
    });
    let body = json_line(&report)?;
    match args.out {
        Some(path) => out.write(&path, &body, "diagnose", None, &s),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn check_theory(cfg: &ConfigFile, out: &Output, args: CheckTheoryArgs) -> Result<()> {
    let mut s: CheckTheorySettings = cfg.section("check-theory")?;
    set(&mut s.seed, args.seed);
    set(&mut s.instances, args.instances);
    let report = diagnostics::check_theory(s.seed, s.instances)?;
    let body = json_line(&report)?;
    match args.out {
        Some(path) => out.write(&path, &body, "check-theory", Some(s.seed), &s)?,
        None => print!("{body}"),
    }
    if report.passed(IDENTITY_TOL) {
        Ok(())
    } else {
        Err(synthcause_core::Error::BoundViolated(format!(
            "{} bound and {} Pinsker violations, identity deviation {:e}",
            report.bound_violations, report.pinsker_violations, report.identity_max_deviation
        ))
        .into())
    }
}

#[derive(Deserialize)]
struct ScenarioFile {
    scenarios: Vec<Scenario>,
}

fn load_scenarios(path: &std::path::Path) -> Result<Vec<Scenario>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let scenarios = if is_json {
        serde_json::from_str::<Vec<Scenario>>(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        toml::from_str::<ScenarioFile>(&text)
            .with_context(|| format!("parsing {}", path.display()))?
            .scenarios
    };
    if scenarios.is_empty() {
        bail!(synthcause_core::Error::InvalidArgument(format!("{} lists no scenarios", path.display())));
    }
    Ok(scenarios)
}

fn positivity_cmd(cfg: &ConfigFile, out: &Output, exec: Execution, args: PositivityArgs) -> Result<()> {
    let mut c: PositivityConfig = cfg.section("positivity")?;
    if let Some(p) = &args.scenarios {
        c.scenarios = load_scenarios(p)?;
    }
    set(&mut c.reps, args.reps);
    set(&mut c.seed, args.seed);
    set(&mut c.n, args.n);
    set(&mut c.k, args.k);
    set(&mut c.pool_size, args.pool_size);
    set(&mut c.tail, args.tail);
    set(&mut c.estimator.ipw_flavor, args.ipw_flavor);
    set(&mut c.truth_mc_size, args.truth_mc_size);
    let table = positivity::run_positivity_experiment(&c, exec)?;
    let path = out.path(args.out, "positivity.csv");
    out.write(&path, &table.to_csv(), "positivity", Some(c.seed), &c)
}

fn simulate_cmd(cfg: &ConfigFile, out: &Output, exec: Execution, args: SimulateArgs) -> Result<()> {
    let mut c: SimConfig = cfg.section("simulate")?;
    if let Some(env) = args.env {
        c.environment = match env {
            EnvArg::DgpRandomized => Environment::DgpTruth {
                regime: Regime::Randomized,
            },
            EnvArg::DgpObservational => Environment::DgpTruth {
                regime: Regime::Observational,
            },
            EnvArg::Hybrid => match (&c.environment, &args.seed_data) {
                (_, Some(p)) => Environment::Hybrid {
                    seed_data: SeedData::File { path: p.clone() },
                    generator: GeneratorKind::default(),
                    generator_options: GeneratorOptions::default(),
                    nuisances: HybridNuisances::default(),
                    outcome_mode: OutcomeMode::default(),
                },
                (env @ Environment::Hybrid { .. }, None) => env.clone(),
                _ => bail!(synthcause_core::Error::InvalidArgument("`--env hybrid` needs `--seed-data`".into())),
            },
        };
    } else if let (Some(p), Environment::Hybrid { seed_data, .. }) = (&args.seed_data, &mut c.environment) {
        *seed_data = SeedData::File { path: p.clone() };
    }
    match &mut c.environment {
        Environment::Hybrid {
            generator, nuisances, ..
        } => {
            set(generator, args.generator);
            set(nuisances, args.nuisances);
        }
        Environment::DgpTruth { .. } => {
            if args.seed_data.is_some() || args.generator.is_some() || args.nuisances.is_some() {
                bail!(synthcause_core::Error::InvalidArgument(
                    "`--seed-data`, `--generator` and `--nuisances` apply to the hybrid environment only".into()
                ));
            }
        }
    }
    set(&mut c.reference_size, args.ref_size);
    if !args.rep_size.is_empty() {
        c.rep_sizes = args.rep_size;
    }
    set(&mut c.reps, args.reps);
    set(&mut c.seed, args.seed);
    set(&mut c.truth_mc_size, args.truth_mc_size);
    if let Some(list) = args.estimators {
        c.estimators = Estimator::parse_list(&list)?;
    }
    let report = simengine::simulate(&c, exec)?;
    let path = out.path(args.out, "metrics.json");
    out.write(&path, &json_line(&report)?, "simulate", Some(c.seed), &c)
}

fn load_report(path: &std::path::Path) -> Result<SimReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a simulate report", path.display()))
}

fn fidelity(cfg: &ConfigFile, out: &Output, args: FidelityArgs) -> Result<()> {
    let mut s: FidelitySettings = cfg.section("fidelity")?;
    if args.real.is_some() {
        s.real = args.real;
    }
    if args.syn.is_some() {
        s.syn = args.syn;
    }
    if args.rep_size.is_some() {
        s.rep_size = args.rep_size;
    }
    let real = load_report(&required(s.real.clone(), "real")?)?;
    let syn = load_report(&required(s.syn.clone(), "syn")?)?;
    let size = match s.rep_size {
        Some(n) => n,
        None => real
            .tables
            .iter()
            .map(|t| t.rep_size)
            .filter(|n| syn.tables.iter().any(|t| t.rep_size == *n))
            .max()
            .ok_or_else(|| synthcause_core::Error::InvalidArgument("the two runs share no replication size".into()))?,
    };
    fn pick<'a>(r: &'a SimReport, which: &str, size: usize) -> Result<&'a MetricTable> {
        r.tables.iter().find(|t| t.rep_size == size).ok_or_else(|| {
            synthcause_core::Error::InvalidArgument(format!("{which} run has no table at replication size {size}")).into()
        })
    }
    let report = simengine::fidelity_compare(pick(&real, "real", size)?, pick(&syn, "synthetic", size)?)?;
    s.rep_size = Some(size);
    let path = out.path(args.out, "fidelity.csv");
    out.write(&path, &report.to_csv(), "fidelity", None, &s)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    let out = Output { dir: cli.out_dir };
    let exec = Execution::from_jobs(cli.jobs);
    match cli.command {
        Command::DgpSample(a) => dgp_sample(&cfg, &out, a),
        Command::DgpTruth(a) => dgp_truth(&cfg, &out, a),
        Command::Generate(a) => generate(&cfg, &out, a),
        Command::Estimate(a) => estimate(&cfg, &out, a),
        Command::Diagnose(a) => diagnose(&cfg, &out, a),
        Command::CheckTheory(a) => check_theory(&cfg, &out, a),
        Command::Positivity(a) => positivity_cmd(&cfg, &out, exec, a),
        Command::Simulate(a) => simulate_cmd(&cfg, &out, exec, a),
        Command::Fidelity(a) => fidelity(&cfg, &out, a),
    }
}

fn kind_of(err: &synthcause_core::Error) -> &'static str {
    if err.is_numerical() {
        "numerical"
    } else {
        "validation"
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => {
            // --help and --version
            let _ = err.print();
            return ExitCode::SUCCESS;
        }
        Err(err) => {
            let message = err.to_string();
            let message = message.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": { "kind": "validation", "message": message, "chain": [message] } }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let core = err.chain().find_map(|c| c.downcast_ref::<synthcause_core::Error>());
            let kind = core.map_or("validation", kind_of);
            let chain: Vec<String> = err.chain().map(|c| c.to_string()).collect();
            eprintln!("{}", json!({ "error": { "kind": kind, "message": err.to_string(), "chain": chain } }));
            ExitCode::from(if kind == "numerical" { 3 } else { 2 })
        }
    }
}
