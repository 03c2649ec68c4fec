use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Privacy-preserving TSO-DSO optimal power flow pipeline.
#[derive(Debug, Parser)]
#[command(name = "gridveil", version, about)]
pub struct Cli {
    /// Log filter (error, warn, info, debug, trace or env_logger syntax).
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label LHS samples of a distribution system's operating space.
    Sample(SampleArgs),
    /// Train the feasibility classifier (polytope) on a dataset.
    TrainFr(TrainFrArgs),
    /// Fit the quadratic PCC-flow regressors on a dataset.
    TrainPq(TrainPqArgs),
    /// Assemble the surrogate bundle a DSO shares with the TSO.
    Bundle(BundleArgs),
    /// Solve the standard integrated OPF or the privacy-preserving OPF.
    Solve(SolveArgs),
    /// Check a privacy-preserving dispatch against the integrated network.
    Verify(VerifyArgs),
    /// Paired benchmark over random cost draws.
    Bench(BenchArgs),
    /// Recompute and print the summary of a benchmark report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Jobs {
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "GRIDVEIL_JOBS", default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Distribution system case file.
    #[arg(long)]
    pub case: PathBuf,
    /// Number of samples.
    #[arg(long)]
    pub n: usize,
    /// Random seed.
    #[arg(long)]
    pub seed: u64,
    /// Output CSV (a `.meta.json` sidecar is written next to it).
    #[arg(long)]
    pub out: PathBuf,
    /// Also split the samples: `--out` receives this fraction, `--test-out` the rest.
    #[arg(long, requires = "test_out")]
    pub split: Option<f64>,
    /// Output CSV for the held-out rows.
    #[arg(long, requires = "split")]
    pub test_out: Option<PathBuf>,
    /// Lower end of the DS voltage band, p.u.
    #[arg(long, default_value_t = 0.95)]
    pub v_min: f64,
    /// Upper end of the DS voltage band, p.u.
    #[arg(long, default_value_t = 1.05)]
    pub v_max: f64,
    #[command(flatten)]
    pub jobs: Jobs,
}

#[derive(Debug, Args)]
pub struct TrainFrArgs {
    /// Training dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Optional test dataset CSV for reported metrics.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Random seed.
    #[arg(long)]
    pub seed: u64,
    /// Model JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Hidden units (facets).
    #[arg(long, default_value_t = 20)]
    pub n_h: usize,
    /// Weight on infeasible samples.
    #[arg(long, default_value_t = 1.0)]
    pub w10: f64,
    /// Weight on feasible samples.
    #[arg(long, default_value_t = 1.0)]
    pub w01: f64,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Maximum training epochs.
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    /// Mini-batch size.
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    /// Fraction of the training data held out for early stopping.
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 30)]
    pub patience: usize,
}

#[derive(Debug, Args)]
pub struct TrainPqArgs {
    /// Training dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Optional test dataset CSV for reported metrics.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Distribution system case file (for its MVA base).
    #[arg(long)]
    pub case: PathBuf,
    /// Regressor JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BundleArgs {
    /// Distribution system case file.
    #[arg(long)]
    pub case: PathBuf,
    /// Classifier produced by `train-fr`.
    #[arg(long)]
    pub fr: PathBuf,
    /// Regressors produced by `train-pq`.
    #[arg(long)]
    pub pq: PathBuf,
    /// Bundle JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Lower end of the DS voltage band, p.u.
    #[arg(long, default_value_t = 0.95)]
    pub v_min: f64,
    /// Upper end of the DS voltage band, p.u.
    #[arg(long, default_value_t = 1.05)]
    pub v_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Standard,
    Pp,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Formulation to solve.
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Transmission case file.
    #[arg(long)]
    pub case: PathBuf,
    /// Distribution system case files (standard mode).
    #[arg(long = "ds", required_if_eq("mode", "standard"))]
    pub ds: Vec<PathBuf>,
    /// Surrogate bundles, one per distribution system (pp mode).
    #[arg(long = "bundle", required_if_eq("mode", "pp"))]
    pub bundle: Vec<PathBuf>,
    /// Skip the PQ-chart rows of polygon DGs.
    #[arg(long)]
    pub no_charts: bool,
    /// Solution JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Interior-point iteration cap.
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Transmission case file.
    #[arg(long)]
    pub case: PathBuf,
    /// Distribution system case files.
    #[arg(long = "ds", required = true)]
    pub ds: Vec<PathBuf>,
    /// Bundles the PP solution was computed with.
    #[arg(long = "bundle", required = true)]
    pub bundle: Vec<PathBuf>,
    /// Solution produced by `solve --mode pp`.
    #[arg(long)]
    pub solution: PathBuf,
    /// Verification report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Limit tolerance (p.u. voltage, MVA).
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Transmission case file.
    #[arg(long)]
    pub case: PathBuf,
    /// Distribution system case files.
    #[arg(long = "ds", required = true)]
    pub ds: Vec<PathBuf>,
    /// Surrogate bundles, one per distribution system.
    #[arg(long = "bundle", required = true)]
    pub bundle: Vec<PathBuf>,
    /// Number of random cost trials.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Random seed.
    #[arg(long)]
    pub seed: u64,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Histogram CSV.
    #[arg(long)]
    pub hist: Option<PathBuf>,
    /// Histogram bins per series.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Range of quadratic cost coefficients, $/MW²h.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.01, 0.05])]
    pub cost_a: Vec<f64>,
    /// Range of linear cost coefficients, $/MWh.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [5.0, 50.0])]
    pub cost_b: Vec<f64>,
    /// Limit tolerance in verification (p.u. voltage, MVA).
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[command(flatten)]
    pub jobs: Jobs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON produced by `bench`.
    #[arg(long)]
    pub report: PathBuf,
    /// Re-emit the histogram CSV.
    #[arg(long)]
    pub hist: Option<PathBuf>,
    /// Histogram bins per series.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}
