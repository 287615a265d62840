//! Command-line front end.
//!
//! Every run writes `manifest.json` next to its outputs. The manifest holds
//! the fully resolved command (a `--seed random` is replaced by the seed that
//! was actually used), so `abcmeta replay manifest.json` reruns it exactly.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::baselines::wan_s3;
use crate::distributions::{default_priors, Family, FamilyParams, PriorBank};
use crate::engine::{run_abc_bma, run_abc_sd, AbcConfig, EstimateResult, EstimatorMode};
use crate::error::{Error, Result};
use crate::experiments::{
    run_design, sensitivity_table2, write_are_csv, write_model_probs_csv, write_sensitivity_csv,
    write_trials_csv, ExperimentDesign, Method, MethodSpec, PriorCombo, SensitivityInput,
    SensitivityRow, DEFAULT_COMBOS, FULL_SIZES,
};
use crate::plot::{are_chart, model_prob_chart};
use crate::rng::splitmix64;
use crate::summaries::{DistanceScaling, Field, QuantileRule, SummaryScenario, SummaryStats};

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "abcmeta",
    version,
    about = "Estimate sample mean and SD from reported summary statistics"
)]
pub struct Cli {
    /// Worker threads for the simulation engine (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
pub enum Command {
    /// Estimate mean and SD for one study.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study over sample sizes and repetitions.
    Simulate(SimulateArgs),
    /// Prior-sensitivity study on a Beta(9,4) sample of size 400.
    Sensitivity(SensitivityArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

/// `u64` or `random`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeedArg {
    Fixed(u64),
    Random,
}

impl FromStr for SeedArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("random") {
            return Ok(SeedArg::Random);
        }
        s.parse::<u64>()
            .map(SeedArg::Fixed)
            .map_err(|_| format!("`{s}` is neither an unsigned integer nor `random`"))
    }
}

impl SeedArg {
    fn resolve(self) -> u64 {
        match self {
            SeedArg::Fixed(s) => s,
            SeedArg::Random => {
                let nanos = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_nanos() as u64)
                    .unwrap_or(0);
                splitmix64(nanos ^ (u64::from(std::process::id()) << 32))
            }
        }
    }
}

/// Engine settings shared by the subcommands.
#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct EngineArgs {
    /// Fraction of iterations kept as accepted draws.
    #[arg(long, default_value_t = 0.001)]
    pub acceptance: f64,

    /// Fixed distance tolerance instead of the acceptance fraction.
    #[arg(long)]
    pub tolerance: Option<f64>,

    /// Iterations between model-weight updates (ABC-BMA).
    #[arg(long, default_value_t = 1000)]
    pub adapt_every: usize,

    /// Lower bound on each family's selection weight (ABC-BMA).
    #[arg(long, default_value_t = 0.01)]
    pub weight_floor: f64,

    /// `simulation` (average pseudo-data statistics) or `plug-in` (moments at the mean accepted parameters).
    #[arg(long, default_value = "simulation", value_parser = parse_with::<EstimatorMode>)]
    pub estimator: EstimatorMode,

    /// Sample quantile convention: `type7` or `type6`.
    #[arg(long, default_value = "type7", value_parser = parse_with::<QuantileRule>)]
    pub quantile_rule: QuantileRule,

    /// Distance scaling: `raw` or `relative`.
    #[arg(long, default_value = "raw", value_parser = parse_with::<DistanceScaling>)]
    pub scaling: DistanceScaling,
}

impl EngineArgs {
    fn config(&self, iterations: usize, seed: u64) -> AbcConfig {
        AbcConfig {
            iterations,
            acceptance_fraction: self.acceptance,
            tolerance: self.tolerance,
            adaptation_interval: self.adapt_every,
            weight_floor: self.weight_floor,
            seed,
            estimator: self.estimator,
            quantile_rule: self.quantile_rule,
            scaling: self.scaling,
        }
    }
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    /// `abc-sd:<family>`, `abc-bma` or `wan`.
    #[arg(long, value_parser = parse_with::<EstimateMethod>)]
    pub method: EstimateMethod,

    /// S1, S2 or S3; inferred from the supplied statistics when omitted.
    #[arg(long, value_parser = parse_with::<SummaryScenario>)]
    pub scenario: Option<SummaryScenario>,

    /// Study sample size.
    #[arg(long)]
    pub n: Option<usize>,

    #[arg(long, allow_hyphen_values = true)]
    pub min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub q1: Option<f64>,
    #[arg(long, alias = "q2", allow_hyphen_values = true)]
    pub median: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub q3: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mean: Option<f64>,
    #[arg(long)]
    pub sd: Option<f64>,

    /// Whole study as one record, e.g. "scenario=S3 n=111 q1=1.2 median=2.1 q3=4.6".
    #[arg(long, conflicts_with_all = ["scenario", "n", "min", "q1", "median", "q3", "max", "mean", "sd"])]
    pub record: Option<String>,

    #[arg(long, default_value_t = 100_000)]
    pub iterations: usize,

    /// Candidate families for abc-bma, comma separated (default: all five).
    #[arg(long, value_delimiter = ',', value_parser = parse_with::<Family>)]
    pub families: Option<Vec<Family>>,

    /// Prior file: one line per family, `family [lo, hi] [lo, hi] weight=w`.
    #[arg(long)]
    pub priors: Option<PathBuf>,

    /// Known data bounds `lo,hi`; statistics are mapped to [0,1] before
    /// estimation and results mapped back.
    #[arg(long, value_parser = parse_bounds, allow_hyphen_values = true)]
    pub bounds: Option<(f64, f64)>,

    #[arg(long, default_value = "20151061", value_parser = parse_with::<SeedArg>)]
    pub seed: SeedArg,

    /// Also write the accepted draws to draws.csv.
    #[arg(long)]
    pub draws: bool,

    #[arg(long, env = "ABCMETA_OUT", default_value = "abcmeta-out")]
    pub out: PathBuf,

    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EstimateMethod {
    Wan,
    AbcSd(Family),
    AbcBma,
}

impl FromStr for EstimateMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "wan" => Ok(EstimateMethod::Wan),
            "abc-bma" | "bma" => Ok(EstimateMethod::AbcBma),
            _ => match s.strip_prefix("abc-sd:").or_else(|| s.strip_prefix("sd:")) {
                Some(f) => Ok(EstimateMethod::AbcSd(f.parse()?)),
                None => Err(Error::Parse(format!(
                    "unknown method `{s}` (expected abc-sd:<family>, abc-bma or wan)"
                ))),
            },
        }
    }
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Generating family.
    #[arg(long, value_parser = parse_with::<Family>, required_unless_present = "design")]
    pub family: Option<Family>,

    /// Generating parameters in the family's order, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Option<Vec<f64>>,

    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub shape: Option<f64>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub mean: Option<f64>,

    #[arg(long, default_value = "S1", value_parser = parse_with::<SummaryScenario>)]
    pub scenario: SummaryScenario,

    #[arg(long, default_value_t = crate::experiments::DESK_REPS)]
    pub reps: usize,

    /// Sample sizes, comma separated (default: 10,40,80,100,150,200,300,400,500,600).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,

    /// 200 repetitions over the full size grid.
    #[arg(long)]
    pub full_scale: bool,

    /// Methods, comma separated: `abc-sd` (generating family), `abc-sd:<family>`, `abc-bma`.
    #[arg(long, value_delimiter = ',', default_value = "abc-sd,abc-bma")]
    pub methods: Vec<String>,

    /// Candidate families for abc-bma (default: all five).
    #[arg(long, value_delimiter = ',', value_parser = parse_with::<Family>)]
    pub families: Option<Vec<Family>>,

    #[arg(long, default_value_t = 20_000)]
    pub iterations_sd: usize,

    #[arg(long, default_value_t = 50_000)]
    pub iterations_bma: usize,

    /// Fixed prior file for every trial instead of per-trial defaults.
    #[arg(long)]
    pub priors: Option<PathBuf>,

    /// `table2` for the prior-sensitivity study, or a design file (.toml or .json).
    #[arg(long)]
    pub design: Option<String>,

    #[arg(long, default_value = "20151061", value_parser = parse_with::<SeedArg>)]
    pub seed: SeedArg,

    /// Skip the SVG charts.
    #[arg(long)]
    pub no_plots: bool,

    #[arg(long, env = "ABCMETA_OUT", default_value = "abcmeta-out")]
    pub out: PathBuf,

    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SensitivityArgs {
    /// Upper bound of the Beta shape priors; repeat together with --sigma-upper for several combinations.
    #[arg(long, requires = "sigma_upper")]
    pub beta_upper: Vec<f64>,

    /// Upper bound of the Normal sigma prior.
    #[arg(long, requires = "beta_upper")]
    pub sigma_upper: Vec<f64>,

    #[arg(long, default_value_t = 20_000)]
    pub iterations_sd: usize,

    #[arg(long, default_value_t = 50_000)]
    pub iterations_bma: usize,

    #[arg(long, default_value = "20151061", value_parser = parse_with::<SeedArg>)]
    pub seed: SeedArg,

    #[arg(long, env = "ABCMETA_OUT", default_value = "abcmeta-out")]
    pub out: PathBuf,

    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,

    /// Output directory for the rerun (default: the recorded one).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    /// Contents of the prior file, when one was given.
    pub prior_file: Option<String>,
    /// Resolved priors actually used (defaults included), for reference.
    pub priors: Option<String>,
    /// Resolved study design (simulate only).
    pub design: Option<ExperimentDesign>,
    pub input: Option<String>,
    pub wall_clock_seconds: f64,
}

fn parse_with<T>(s: &str) -> std::result::Result<T, String>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

fn parse_bounds(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|_| format!("bad upper bound `{hi}`"))?;
    Ok((lo, hi))
}

/// `x` with six significant digits, trailing zeros dropped.
pub fn fmt6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..6).contains(&exp) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_RUNTIME;
        }
    };
    match pool.install(|| execute(cli.command, None)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn execute(command: Command, replay: Option<RunManifest>) -> Result<()> {
    match command {
        Command::Estimate(args) => cmd_estimate(args, replay),
        Command::Simulate(args) => cmd_simulate(args, replay),
        Command::Sensitivity(args) => cmd_sensitivity(args),
        Command::Replay(args) => cmd_replay(args),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Io(e.to_string()))?;
    write_text(&dir.join("manifest.json"), &(json + "\n"))
}

fn manifest(command: Command, seed: u64, started: Instant) -> RunManifest {
    RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command,
        seed,
        prior_file: None,
        priors: None,
        design: None,
        input: None,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    }
}

/// Builds the study statistics from either `--record` or the field flags.
pub fn stats_from_args(args: &EstimateArgs) -> Result<SummaryStats> {
    if let Some(record) = &args.record {
        return SummaryStats::from_record(record);
    }
    let n = args
        .n
        .ok_or_else(|| Error::InvalidStats("the sample size --n is required".into()))?;
    let given: Vec<(Field, f64)> = [
        (Field::Min, args.min),
        (Field::Q1, args.q1),
        (Field::Median, args.median),
        (Field::Q3, args.q3),
        (Field::Max, args.max),
        (Field::Mean, args.mean),
        (Field::Sd, args.sd),
    ]
    .into_iter()
    .filter_map(|(f, v)| v.map(|v| (f, v)))
    .collect();
    if given.is_empty() {
        return Err(Error::InvalidStats("no summary statistics given".into()));
    }
    let scenario = match &args.scenario {
        Some(s) => s.clone(),
        None => {
            let fields: Vec<Field> = given.iter().map(|(f, _)| *f).collect();
            [
                SummaryScenario::S1,
                SummaryScenario::S2,
                SummaryScenario::S3,
            ]
            .into_iter()
            .find(|s| s.fields() == fields.as_slice())
            .map_or_else(|| SummaryScenario::custom(fields), Ok)?
        }
    };
    SummaryStats::new(scenario, n, given)
}

fn load_priors(path: Option<&Path>, replay: Option<&RunManifest>) -> Result<Option<String>> {
    if let Some(text) = replay.and_then(|m| m.prior_file.clone()) {
        return Ok(Some(text));
    }
    path.map(read_text).transpose()
}

fn print_kv(key: &str, value: impl std::fmt::Display) {
    println!("{key:<20}{value}");
}

fn print_result(label: &str, r: &EstimateResult) {
    print_kv("method", label);
    print_kv("mean", fmt6(r.mean_hat));
    print_kv("sd", fmt6(r.sd_hat));
    print_kv("tolerance", fmt6(r.effective_tolerance));
    print_kv("accepted", r.accepted.len());
    print_kv("iterations", r.diagnostics.iterations);
    if r.diagnostics.discarded_nonfinite > 0 {
        print_kv("discarded", r.diagnostics.discarded_nonfinite);
    }
    print_kv("seed", r.config.seed);
    if r.model_probs.len() > 1 {
        for (f, p) in &r.model_probs {
            print_kv(&format!("p({f})"), fmt6(*p));
        }
    }
}

fn cmd_estimate(mut args: EstimateArgs, replay: Option<RunManifest>) -> Result<()> {
    let started = Instant::now();
    let stats = stats_from_args(&args)?;
    let seed = args.seed.resolve();
    args.seed = SeedArg::Fixed(seed);
    ensure_dir(&args.out)?;
    let mut m = manifest(Command::Estimate(args.clone()), seed, started);
    m.input = Some(stats.to_record());

    let family_list: Vec<Family> = match &args.method {
        EstimateMethod::Wan => {
            let (mean, sd) = wan_s3(&stats)?;
            print_kv("method", "Wan (quartiles)");
            print_kv("mean", fmt6(mean));
            print_kv("sd", fmt6(sd));
            let mut w = csv::Writer::from_writer(create_file(&args.out.join("estimate.csv"))?);
            w.write_record(["method", "mean_hat", "sd_hat"])?;
            w.write_record(["wan".to_string(), mean.to_string(), sd.to_string()])?;
            w.flush()?;
            m.wall_clock_seconds = started.elapsed().as_secs_f64();
            return write_manifest(&args.out, &m);
        }
        EstimateMethod::AbcSd(f) => vec![*f],
        EstimateMethod::AbcBma => args
            .families
            .clone()
            .unwrap_or_else(|| Family::ALL.to_vec()),
    };

    let working = match args.bounds {
        Some((lo, hi)) => stats.rescale(lo, hi)?,
        None => stats.clone(),
    };
    let prior_text = load_priors(args.priors.as_deref(), replay.as_ref())?;
    let bank = match &prior_text {
        Some(text) => PriorBank::from_config_str(text)?,
        None => default_priors(&working, &family_list)?,
    };
    for w in bank.warnings() {
        eprintln!("warning: {w}");
    }
    m.prior_file = prior_text;
    m.priors = Some(bank.to_config_string());

    let cfg = args.engine.config(args.iterations, seed);
    let (label, result) = match &args.method {
        EstimateMethod::AbcSd(f) => (
            format!("ABC-SD({f})"),
            run_abc_sd(*f, &working, &bank, &cfg)?,
        ),
        _ => (
            "ABC-BMA".to_string(),
            run_abc_bma(&family_list, &working, &bank, &cfg)?,
        ),
    };
    let result = match args.bounds {
        Some((lo, hi)) => result.unscale(lo, hi),
        None => result,
    };
    print_result(&label, &result);

    let mut w = csv::Writer::from_writer(create_file(&args.out.join("estimate.csv"))?);
    w.serialize(result.record(&label))?;
    w.flush()?;
    if args.draws {
        let mut w = csv::Writer::from_writer(create_file(&args.out.join("draws.csv"))?);
        for d in result.draw_records() {
            w.serialize(d)?;
        }
        w.flush()?;
    }
    m.wall_clock_seconds = started.elapsed().as_secs_f64();
    write_manifest(&args.out, &m)
}

fn generator(args: &SimulateArgs) -> Result<FamilyParams> {
    let family = args
        .family
        .ok_or_else(|| Error::InvalidConfig("--family is required without --design".into()))?;
    if let Some(p) = &args.params {
        return FamilyParams::new(family, p);
    }
    let named: &[(Option<f64>, &str)] = match family {
        Family::Normal | Family::LogNormal => &[(args.mu, "--mu"), (args.sigma, "--sigma")],
        Family::Weibull => &[(args.shape, "--shape"), (args.scale, "--scale")],
        Family::Beta => &[(args.alpha, "--alpha"), (args.beta, "--beta")],
        Family::Exponential => &[(args.mean, "--mean")],
    };
    let values = named
        .iter()
        .map(|(v, flag)| {
            v.ok_or_else(|| Error::InvalidConfig(format!("{family} needs {flag} (or --params)")))
        })
        .collect::<Result<Vec<f64>>>()?;
    FamilyParams::new(family, &values)
}

fn build_design(
    args: &SimulateArgs,
    seed: u64,
    prior_text: Option<&str>,
) -> Result<ExperimentDesign> {
    if let Some(path) = &args.design {
        let text = read_text(Path::new(path))?;
        let mut design: ExperimentDesign = if path.ends_with(".json") {
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{path}: {e}")))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{path}: {e}")))?
        };
        design.master_seed = seed;
        return Ok(design);
    }
    let gen = generator(args)?;
    let mut design = ExperimentDesign::new(gen, args.scenario.clone());
    design.master_seed = seed;
    if args.full_scale {
        design = design.full_scale();
    } else {
        design.reps = args.reps;
        design.sizes = args.sizes.clone().unwrap_or_else(|| FULL_SIZES.to_vec());
    }
    if args.full_scale && args.sizes.is_some() {
        design.sizes = args.sizes.clone().unwrap_or_default();
    }
    let bank_families = args
        .families
        .clone()
        .unwrap_or_else(|| Family::ALL.to_vec());
    design.methods = args
        .methods
        .iter()
        .map(|m| {
            let m = m.trim().to_ascii_lowercase();
            let method = match m.as_str() {
                "abc-sd" | "sd" => Method::AbcSd(gen.family()),
                "abc-bma" | "bma" => Method::AbcBma(bank_families.clone()),
                other => match other
                    .strip_prefix("abc-sd:")
                    .or_else(|| other.strip_prefix("sd:"))
                {
                    Some(f) => Method::AbcSd(f.parse()?),
                    None => {
                        return Err(Error::Parse(format!(
                            "unknown method `{other}` (expected abc-sd, abc-sd:<family> or abc-bma)"
                        )))
                    }
                },
            };
            let iterations = match method {
                Method::AbcSd(_) => args.iterations_sd,
                Method::AbcBma(_) => args.iterations_bma,
            };
            Ok(MethodSpec {
                method,
                config: args.engine.config(iterations, seed),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(text) = prior_text {
        design.priors = Some(PriorBank::from_config_str(text)?);
    }
    design.validate()?;
    Ok(design)
}

fn cmd_simulate(mut args: SimulateArgs, replay: Option<RunManifest>) -> Result<()> {
    if args.design.as_deref() == Some("table2") {
        let sens = SensitivityArgs {
            beta_upper: Vec::new(),
            sigma_upper: Vec::new(),
            iterations_sd: args.iterations_sd,
            iterations_bma: args.iterations_bma,
            seed: args.seed,
            out: args.out.clone(),
            engine: args.engine.clone(),
        };
        return cmd_sensitivity(sens);
    }
    let started = Instant::now();
    let seed = args.seed.resolve();
    args.seed = SeedArg::Fixed(seed);
    let prior_text = load_priors(args.priors.as_deref(), replay.as_ref())?;
    let design = match replay.as_ref().and_then(|m| m.design.clone()) {
        Some(d) => d,
        None => build_design(&args, seed, prior_text.as_deref())?,
    };
    ensure_dir(&args.out)?;
    let output = run_design(&design)?;

    write_trials_csv(create_file(&args.out.join("trials.csv"))?, &output.trials)?;
    write_are_csv(create_file(&args.out.join("are.csv"))?, &output.report)?;
    write_model_probs_csv(
        create_file(&args.out.join("model_probs.csv"))?,
        &output.report,
    )?;
    if !args.no_plots {
        let what = format!("{} under {}", design.generator, design.scenario);
        write_text(
            &args.out.join("are_sd.svg"),
            &are_chart(&output.report, &format!("ARE of SD, {what}"), true).to_svg(),
        )?;
        write_text(
            &args.out.join("are_mean.svg"),
            &are_chart(&output.report, &format!("ARE of mean, {what}"), false).to_svg(),
        )?;
        for spec in &design.methods {
            if let Method::AbcBma(_) = spec.method {
                let label = spec.method.label();
                let chart = model_prob_chart(
                    &output.report,
                    &label,
                    &format!("Model probabilities, {what}"),
                );
                write_text(&args.out.join("model_probs.svg"), &chart.to_svg())?;
            }
        }
    }

    println!(
        "{:<22}{:>6}{:>6}{:>8} {:>12} {:>12}",
        "method", "n", "reps", "failed", "ARE mean", "ARE sd"
    );
    for r in &output.report.rows {
        println!(
            "{:<22}{:>6}{:>6}{:>8} {:>12} {:>12}",
            r.method,
            r.n,
            r.reps,
            r.failed,
            fmt6(r.are_mean),
            fmt6(r.are_sd)
        );
    }
    for (rep, n, reason) in &output.failures {
        eprintln!("warning: trial rep={rep} n={n} failed: {reason}");
    }

    let mut m = manifest(Command::Simulate(args.clone()), seed, started);
    m.prior_file = prior_text;
    m.design = Some(design);
    m.wall_clock_seconds = started.elapsed().as_secs_f64();
    write_manifest(&args.out, &m)
}

fn combos_from_args(args: &SensitivityArgs) -> Result<Vec<PriorCombo>> {
    if args.beta_upper.len() != args.sigma_upper.len() {
        return Err(Error::InvalidConfig(format!(
            "{} --beta-upper values but {} --sigma-upper values",
            args.beta_upper.len(),
            args.sigma_upper.len()
        )));
    }
    if args.beta_upper.is_empty() {
        return Ok(DEFAULT_COMBOS.to_vec());
    }
    Ok(args
        .beta_upper
        .iter()
        .zip(&args.sigma_upper)
        .map(|(&beta_upper, &sigma_upper)| PriorCombo {
            beta_upper,
            sigma_upper,
        })
        .collect())
}

fn print_sensitivity(rows: &[SensitivityRow]) {
    println!(
        "{:<10}{:<10}{:>9}{:>9} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "beta",
        "sigma",
        "P(beta)",
        "P(norm)",
        "REm SD-B",
        "REm SD-N",
        "REm BMA",
        "REs SD-B",
        "REs SD-N",
        "REs BMA"
    );
    for r in rows {
        println!(
            "{:<10}{:<10}{:>9}{:>9} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
            format!("U(0,{})", r.combo.beta_upper),
            format!("U(0,{})", r.combo.sigma_upper),
            fmt6(r.p_beta),
            fmt6(r.p_normal),
            fmt6(r.re_mean_sd_beta),
            fmt6(r.re_mean_sd_normal),
            fmt6(r.re_mean_bma),
            fmt6(r.re_sd_sd_beta),
            fmt6(r.re_sd_sd_normal),
            fmt6(r.re_sd_bma)
        );
    }
}

fn cmd_sensitivity(mut args: SensitivityArgs) -> Result<()> {
    let started = Instant::now();
    let combos = combos_from_args(&args)?;
    let seed = args.seed.resolve();
    args.seed = SeedArg::Fixed(seed);
    ensure_dir(&args.out)?;
    let sd_cfg = args.engine.config(args.iterations_sd, seed);
    let bma_cfg = args.engine.config(args.iterations_bma, seed);
    let rows = sensitivity_table2(
        &SensitivityInput::default(),
        &combos,
        &sd_cfg,
        &bma_cfg,
        seed,
    )?;
    print_sensitivity(&rows);
    write_sensitivity_csv(create_file(&args.out.join("sensitivity.csv"))?, &rows)?;
    let mut m = manifest(Command::Sensitivity(args.clone()), seed, started);
    m.input = Some(SensitivityInput::default().stats.to_record());
    write_manifest(&args.out, &m)
}

fn cmd_replay(args: ReplayArgs) -> Result<()> {
    let text = read_text(&args.manifest)?;
    let m: RunManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", args.manifest.display())))?;
    let mut command = m.command.clone();
    if let Some(out) = args.out {
        match &mut command {
            Command::Estimate(a) => a.out = out,
            Command::Simulate(a) => a.out = out,
            Command::Sensitivity(a) => a.out = out,
            Command::Replay(_) => {}
        }
    }
    if let Command::Replay(_) = command {
        return Err(Error::InvalidConfig(
            "a manifest cannot record a replay".into(),
        ));
    }
    execute(command, Some(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::FULL_REPS;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("abcmeta").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt6(2.633333333), "2.63333");
        assert_eq!(fmt6(2.5537935), "2.55379");
        assert_eq!(fmt6(100000.0), "100000");
        assert_eq!(fmt6(0.5), "0.5");
        assert_eq!(fmt6(-0.0186), "-0.0186");
        assert_eq!(fmt6(0.0), "0");
        assert_eq!(fmt6(1.23456789e-7), "1.23457e-7");
        assert_eq!(fmt6(9.9999999), "10");
    }

    #[test]
    fn method_names() {
        assert_eq!(
            "wan".parse::<EstimateMethod>().unwrap(),
            EstimateMethod::Wan
        );
        assert_eq!(
            "abc-bma".parse::<EstimateMethod>().unwrap(),
            EstimateMethod::AbcBma
        );
        assert_eq!(
            "abc-sd:lognormal".parse::<EstimateMethod>().unwrap(),
            EstimateMethod::AbcSd(Family::LogNormal)
        );
        assert!("abc-sd".parse::<EstimateMethod>().is_err());
        assert!("abc-sd:gamma".parse::<EstimateMethod>().is_err());
    }

    #[test]
    fn seeds() {
        assert_eq!("7".parse::<SeedArg>().unwrap(), SeedArg::Fixed(7));
        assert_eq!("random".parse::<SeedArg>().unwrap(), SeedArg::Random);
        assert!("-1".parse::<SeedArg>().is_err());
    }

    #[test]
    fn scenario_is_inferred_from_flags() {
        let cli = parse(&[
            "estimate", "--method", "wan", "--n", "111", "--q1", "1.2", "--median", "2.1", "--q3",
            "4.6",
        ]);
        let Command::Estimate(args) = cli.command else {
            panic!()
        };
        assert_eq!(
            stats_from_args(&args).unwrap().scenario(),
            &SummaryScenario::S3
        );

        let cli = parse(&[
            "estimate", "--method", "wan", "--n", "20", "--median", "3", "--mean", "3.5",
        ]);
        let Command::Estimate(args) = cli.command else {
            panic!()
        };
        assert_eq!(
            stats_from_args(&args).unwrap().scenario(),
            &SummaryScenario::Custom(vec![Field::Median, Field::Mean])
        );
    }

    #[test]
    fn explicit_scenario_must_match_fields() {
        let cli = parse(&[
            "estimate",
            "--method",
            "wan",
            "--scenario",
            "S1",
            "--n",
            "111",
            "--q1",
            "1.2",
            "--median",
            "2.1",
            "--q3",
            "4.6",
        ]);
        let Command::Estimate(args) = cli.command else {
            panic!()
        };
        assert!(stats_from_args(&args).unwrap_err().is_validation());
    }

    #[test]
    fn record_conflicts_with_field_flags() {
        let r = Cli::try_parse_from([
            "abcmeta",
            "estimate",
            "--method",
            "wan",
            "--record",
            "n=5 median=1",
            "--q1",
            "1",
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn sensitivity_bounds_come_in_pairs() {
        assert!(Cli::try_parse_from(["abcmeta", "sensitivity", "--beta-upper", "30"]).is_err());
        let cli = parse(&["sensitivity", "--beta-upper", "30", "--sigma-upper", "0.8"]);
        let Command::Sensitivity(args) = cli.command else {
            panic!()
        };
        assert_eq!(
            combos_from_args(&args).unwrap(),
            vec![PriorCombo {
                beta_upper: 30.0,
                sigma_upper: 0.8
            }]
        );
        let cli = parse(&["sensitivity"]);
        let Command::Sensitivity(args) = cli.command else {
            panic!()
        };
        assert_eq!(combos_from_args(&args).unwrap().len(), 4);
    }

    #[test]
    fn simulate_design_from_flags() {
        let cli = parse(&[
            "simulate", "--family", "normal", "--mu", "50", "--sigma", "17", "--reps", "5",
            "--sizes", "10,100",
        ]);
        let Command::Simulate(args) = cli.command else {
            panic!()
        };
        let d = build_design(&args, 1, None).unwrap();
        assert_eq!(d.generator, FamilyParams::normal(50.0, 17.0).unwrap());
        assert_eq!(d.sizes, vec![10, 100]);
        assert_eq!(d.reps, 5);
        assert_eq!(d.methods.len(), 2);
        assert_eq!(d.methods[0].config.iterations, 20_000);
        assert_eq!(d.methods[1].config.iterations, 50_000);

        let cli = parse(&[
            "simulate",
            "--family",
            "weibull",
            "--shape",
            "2",
            "--full-scale",
        ]);
        let Command::Simulate(args) = cli.command else {
            panic!()
        };
        assert!(build_design(&args, 1, None)
            .unwrap_err()
            .to_string()
            .contains("--scale"));

        let cli = parse(&[
            "simulate",
            "--family",
            "beta",
            "--params",
            "9,4",
            "--full-scale",
        ]);
        let Command::Simulate(args) = cli.command else {
            panic!()
        };
        let d = build_design(&args, 1, None).unwrap();
        assert_eq!((d.reps, d.sizes.len()), (FULL_REPS, 10));
    }

    #[test]
    fn design_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let design = ExperimentDesign::new(
            FamilyParams::exponential(10.0).unwrap(),
            SummaryScenario::S3,
        );
        let path = dir.path().join("d.toml");
        fs::write(&path, toml::to_string(&design).unwrap()).unwrap();
        let cli = parse(&[
            "simulate",
            "--design",
            path.to_str().unwrap(),
            "--seed",
            "9",
        ]);
        let Command::Simulate(args) = cli.command else {
            panic!()
        };
        let loaded = build_design(&args, 9, None).unwrap();
        assert_eq!(
            loaded,
            ExperimentDesign {
                master_seed: 9,
                ..design
            }
        );
    }
}
