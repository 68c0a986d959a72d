//! Command-line grammar. The parsed [`RunConfig`] is echoed verbatim in every report.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[command(name = "scoretest", version, about = "Score, Wald and likelihood-ratio tests with robust and spatial variants")]
pub struct RunConfig {
    /// Report format written to stdout or --output.
    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    pub format: Format,

    /// Write the report to this file instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Maximum likelihood fit, optionally under a restriction.
    Fit(ModelArgs),
    /// Hypothesis tests on a model or a regression diagnostic.
    Test(TestArgs),
    /// Score diagnostics for spatial lag and spatial error dependence.
    SpatialTest(SpatialArgs),
    /// Calibrate and optionally run a sequential one-sided score test.
    Sequential(SequentialArgs),
    /// Empirical size and null quantiles of a statistic.
    McSize(McArgs),
    /// Empirical rejection rates under one or more alternatives.
    McPower(McArgs),
    /// Check the exact identities the engine relies on.
    Selftest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Normal,
    Cauchy,
    Bernoulli,
    Multinomial,
    Ols,
    Bp,
    Koenker,
    Jb,
    SkewRobust,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: ModelName,

    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,

    /// Known variance for the normal model; its mean is then the only parameter.
    #[arg(long)]
    pub sigma2: Option<f64>,

    /// Regressor columns (default: every column other than y and --z).
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<String>,

    /// Variance covariate columns for bp and koenker.
    #[arg(long, value_delimiter = ',')]
    pub z: Vec<String>,

    /// Leave the intercept out of the regression design.
    #[arg(long)]
    pub no_intercept: bool,

    /// Fixed parameters as name=value or index=value pairs, e.g. mu=0,sigma2=1.
    #[arg(long)]
    pub restrict: Option<String>,

    /// Multinomial null: "uniform" or comma-separated class probabilities.
    #[arg(long)]
    pub null: Option<String>,

    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,

    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestStat {
    Rs,
    Wald,
    Lr,
    Lm,
    RsStarD,
    WaldStar,
    OneSided,
    RsPsi,
    RsStarP,
    RsStarDp,
    Pearson,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoArg {
    Expected,
    Observed,
    Opg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionArg {
    Greater,
    Less,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,

    /// Statistics to report (default: rs, wald, lr, lm).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub stat: Vec<TestStat>,

    /// Information estimate for the quadratic forms (default: the model's analytic choice).
    #[arg(long, value_enum)]
    pub info: Option<InfoArg>,

    /// Restricted parameters treated as the locally misspecified block.
    #[arg(long, value_delimiter = ',')]
    pub phi: Vec<String>,

    /// Alternative side for the one-sided score test.
    #[arg(long, value_enum, default_value_t = DirectionArg::Greater)]
    pub direction: DirectionArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpatialStat {
    Psi,
    PsiStar,
    Phi,
    PhiStar,
    Joint,
    All,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SpatialArgs {
    /// CSV with a header and a single response column.
    #[arg(long)]
    pub y: PathBuf,

    /// CSV with a header; every column is a regressor.
    #[arg(long)]
    pub x: PathBuf,

    /// Weights: dense n x n CSV, or an i,j,weight coordinate CSV (0-based) with that header.
    #[arg(long)]
    pub w: PathBuf,

    #[arg(long, value_enum, default_value_t = SpatialStat::All)]
    pub stat: SpatialStat,

    /// Leave the intercept out of the design.
    #[arg(long)]
    pub no_intercept: bool,

    /// Row-standardize W before use.
    #[arg(long)]
    pub row_standardize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequentialModel {
    Normal,
    Bernoulli,
    Cauchy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleArg {
    Raw,
    Standardized,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SequentialArgs {
    #[arg(long, value_enum)]
    pub model: SequentialModel,

    #[arg(long, allow_negative_numbers = true)]
    pub theta0: f64,

    #[arg(long)]
    pub n_max: usize,

    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    #[arg(long, default_value_t = 100_000)]
    pub calibrate_reps: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Known variance of the normal model.
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,

    #[arg(long, value_enum, default_value_t = DirectionArg::Greater)]
    pub direction: DirectionArg,

    #[arg(long, value_enum, default_value_t = ScaleArg::Raw)]
    pub scale: ScaleArg,

    /// CSV with a y column to run the calibrated test on.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Parameter values at which to compare sequential and fixed-sample power.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub power_at: Vec<f64>,

    #[arg(long, default_value_t = 10_000)]
    pub power_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct McArgs {
    /// Data generator, e.g. "normal:mean=0,sd=1" or "spatial-t:df=5,psi=0.3". Repeatable for mc-power.
    #[arg(long, required = true)]
    pub dgp: Vec<String>,

    /// Statistic, e.g. "jb" or "rs-normal-mean:theta0=0".
    #[arg(long)]
    pub statistic: String,

    #[arg(long)]
    pub n: usize,

    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,

    #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.05, 0.1])]
    pub alpha: Vec<f64>,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Test(_) => "test",
            Command::SpatialTest(_) => "spatial-test",
            Command::Sequential(_) => "sequential",
            Command::McSize(_) => "mc-size",
            Command::McPower(_) => "mc-power",
            Command::Selftest => "selftest",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Sequential(a) => Some(a.seed),
            Command::McSize(a) | Command::McPower(a) => Some(a.seed),
            _ => None,
        }
    }
}
