//! `gamsmooth`: batch front end for fitting, banding, sampling and Gibbs runs.

mod commands;
mod error;
mod model;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "gamsmooth", version, about = "Penalized additive models with Bayesian smoothing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the four-covariate test data set.
    Simulate(SimulateArgs),
    /// Fit a model by REML and write the model file, report and term bands.
    Fit(FitArgs),
    /// Pointwise credible bands for each smooth term of a saved model.
    Band(BandArgs),
    /// Posterior simulation from a saved model.
    Sample(SampleArgs),
    /// Fully Bayesian Gibbs sampler.
    Gibbs(GibbsArgs),
    /// Compare empirical-Bayes, corrected and sampled covariance matrices.
    CompareCov(CompareCovArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub seed: u64,
    /// Output CSV. With `--replicates`, `{r}` is replaced by the replicate index.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of replicate data sets; replicate r uses seed + r.
    #[arg(long)]
    pub replicates: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Select {
    None,
    Shrinkage,
    Double,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovChoice {
    Eb,
    Corrected,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Summary {
    None,
    Quantiles,
    Sum,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Link,
    Response,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    BetaLambdaTau,
    BetaTauLambda,
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Data CSV. With `--replicates`, `{r}` is replaced by the replicate index.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Override the nullspace treatment of every smooth in the spec.
    #[arg(long, value_enum)]
    pub select: Option<Select>,
    /// Also compute the smoothing-parameter-corrected covariance and band with it.
    #[arg(long)]
    pub correct_cov: bool,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
    /// Fit R replicates in parallel; replicate r uses seed + r.
    #[arg(long)]
    pub replicates: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct BandArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "eb")]
    pub cov: CovChoice,
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Data CSV to use instead of the path recorded in the model file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub draws: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "none")]
    pub summary: Summary,
    /// Simulate one smooth term on its grid instead of the fitted data rows.
    #[arg(long)]
    pub term: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
    #[arg(long, value_enum, default_value = "link")]
    pub scale: Scale,
    #[arg(long, value_enum, default_value = "eb")]
    pub cov: CovChoice,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct GibbsArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum)]
    pub select: Option<Select>,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 2_000)]
    pub burn: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[arg(long, value_enum, default_value = "beta-lambda-tau")]
    pub order: Order,
    #[arg(long, default_value_t = 0.05)]
    pub lambda_shape: f64,
    #[arg(long, default_value_t = 0.005)]
    pub lambda_rate: f64,
    #[arg(long, default_value_t = 0.001)]
    pub tau_shape: f64,
    #[arg(long, default_value_t = 0.001)]
    pub tau_rate: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct CompareCovArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Chains CSV from `gibbs`; adds the sampled panel.
    #[arg(long)]
    pub chains: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("GAMSMOOTH_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("GAMSMOOTH_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn run(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a, &argv),
        Command::Fit(a) => commands::fit(&a, &argv),
        Command::Band(a) => commands::band(&a, &argv),
        Command::Sample(a) => commands::sample(&a, &argv),
        Command::Gibbs(a) => commands::gibbs(&a, &argv),
        Command::CompareCov(a) => commands::compare_cov(&a, &argv),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gamsmooth: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
