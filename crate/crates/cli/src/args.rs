use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "panreg", version, about = "Personalized angle (PAN) and PAN-ridge regression")]
pub struct Cli {
    /// Settings file (key = value lines, [section] per subcommand)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Write the report here instead of stdout
    #[arg(long, short, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,

    /// Worker threads (results do not depend on this)
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Random seed; generated and echoed when absent
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one method for a single target x0 and report coefficients
    Fit(FitArgs),
    /// Personalized predictions for several targets
    Predict(PredictArgs),
    /// Parametric bootstrap search over (lambda1, lambda2)
    Tune(TuneArgs),
    /// Leave-one-out prediction errors
    Cv(CvArgs),
    /// Monte-Carlo comparison of the estimators
    Simulate(SimulateArgs),
    /// Asymptotic quantities for given (x0, beta, sigma, n)
    Theory(TheoryArgs),
    /// Shrinkage factor against cosine similarity, as CSV
    ShrinkCurve(ShrinkArgs),
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Input CSV with a header row
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,

    /// Outcome column (default: last column)
    #[arg(long)]
    pub outcome: Option<String>,

    /// Covariate columns, comma separated (default: all others)
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,

    /// Keep covariates on their original scale instead of unit variance
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Args, Clone)]
pub struct SolverArgs {
    /// cartesian or hyperspherical
    #[arg(long)]
    pub parametrization: Option<String>,

    #[arg(long)]
    pub max_iterations: Option<usize>,

    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// ols, ridge, pan or pan-ridge
    #[arg(long)]
    pub method: Option<String>,

    #[arg(long, allow_hyphen_values = true)]
    pub lambda1: Option<f64>,

    #[arg(long, allow_hyphen_values = true)]
    pub lambda2: Option<f64>,

    /// Target given as a 1-based data row
    #[arg(long, conflicts_with_all = ["x0", "x0_file"])]
    pub row: Option<usize>,

    /// Target given as comma-separated covariate values
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "x0_file")]
    pub x0: Option<Vec<f64>>,

    /// Target read from the first row of a CSV with covariate columns
    #[arg(long, value_name = "PATH")]
    pub x0_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    #[arg(long)]
    pub method: Option<String>,

    #[arg(long, allow_hyphen_values = true)]
    pub lambda1: Option<f64>,

    #[arg(long, allow_hyphen_values = true)]
    pub lambda2: Option<f64>,

    /// CSV of targets with covariate columns (default: every data row)
    #[arg(long, value_name = "PATH")]
    pub targets: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// ridge, pan, pan-ridge or pan-given-lambda1
    #[arg(long)]
    pub method: Option<String>,

    /// lambda1 held fixed by pan-given-lambda1
    #[arg(long, allow_hyphen_values = true)]
    pub lambda1: Option<f64>,

    /// Bootstrap replicates
    #[arg(long)]
    pub b: Option<usize>,

    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambda1_grid: Option<Vec<f64>>,

    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambda2_grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Fits as method:lambda1:lambda2, comma separated
    #[arg(long, value_delimiter = ',')]
    pub fits: Option<Vec<String>>,

    /// Also report the k rows with smallest and largest |cos(x_i, b_ols)|
    #[arg(long)]
    pub per_observation: Option<usize>,

    /// lambda2 used by the per-observation report
    #[arg(long, allow_hyphen_values = true)]
    pub report_lambda2: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Run every (p, beta) configuration of the standard study
    #[arg(long, conflicts_with_all = ["p", "beta"])]
    pub study: bool,

    #[arg(long)]
    pub p: Option<usize>,

    /// Common value of every true coefficient
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,

    #[arg(long)]
    pub n: Option<usize>,

    #[arg(long)]
    pub sigma: Option<f64>,

    #[arg(long)]
    pub replications: Option<usize>,

    #[arg(long)]
    pub b: Option<usize>,

    #[arg(long)]
    pub test_size: Option<usize>,

    /// Subset of methods, comma separated
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,

    /// text, json or csv
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    /// Share of random directions with |cos| below this value
    #[arg(long)]
    pub proportion: Option<f64>,

    /// Dimension for --proportion
    #[arg(long)]
    pub p: Option<usize>,

    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,

    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,

    #[arg(long)]
    pub sigma: Option<f64>,

    #[arg(long)]
    pub n: Option<usize>,

    #[arg(long)]
    pub lambda1: Option<f64>,

    /// Monte-Carlo MSE at these lambda2 values
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub mc_lambda2: Option<Vec<f64>>,

    #[arg(long)]
    pub replications: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ShrinkArgs {
    /// Length of the unpenalized estimate
    #[arg(long)]
    pub beta_norm: Option<f64>,

    /// Curves as lambda1:lambda2, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub pairs: Option<Vec<String>>,

    /// Grid points on [-1, 1]
    #[arg(long)]
    pub points: Option<usize>,
}
