use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ddm", version, about = "Experimental designs with unequal assignment probabilities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate ‖Cov(Bz)‖ for each design over a grid of p
    DdmSweep(SweepArgs),
    /// Estimate the MSE of the Horvitz-Thompson estimator over a grid of p
    MseSweep(MseArgs),
    /// Write a generated or ingested matrix, or covariates with outcomes
    GenData(GenArgs),
    /// Build the set-splitting gadgets and check their identities
    HardnessDemo(HardnessArgs),
    /// Render a results CSV as an SVG line plot
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Master seed; every task derives its own stream from it
    #[arg(long)]
    pub seed: Option<u64>,
    /// Flat TOML file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output path (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DesignArgs {
    /// Comma list or start:stop:step
    #[arg(long = "p-grid")]
    pub p_grid: Option<String>,
    /// Comma list from mwu,gsw,bernoulli,complete,block,rerand
    #[arg(long)]
    pub designs: Option<String>,
    /// Comma list of augmented-matrix parameters
    #[arg(long)]
    pub phi: Option<String>,
    /// MWU and oracle error parameter
    #[arg(long)]
    pub eps: Option<f64>,
    /// MWU iterations T
    #[arg(long)]
    pub iters: Option<usize>,
    /// Oracle samples per MWU iteration N
    #[arg(long = "cov-samples")]
    pub cov_samples: Option<usize>,
    /// Replications: matrices for ddm-sweep, assignments for mse-sweep
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long = "krylov-budget")]
    pub krylov_budget: Option<usize>,
    #[arg(long = "block-size")]
    pub block_size: Option<usize>,
    /// Rerandomization acceptance probability
    #[arg(long = "accept-prob")]
    pub accept_prob: Option<f64>,
    /// Draws used to set the rerandomization threshold
    #[arg(long = "pilot-draws")]
    pub pilot_draws: Option<usize>,
    /// Run every task on the calling thread
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub design: DesignArgs,
    /// random, augmented or csv
    #[arg(long)]
    pub source: Option<String>,
    /// Covariate CSV for --source csv
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Rows of the random matrix
    #[arg(long)]
    pub m: Option<usize>,
    /// Units
    #[arg(long)]
    pub n: Option<usize>,
    /// Covariates of the augmented source
    #[arg(long)]
    pub d: Option<usize>,
    /// Monte-Carlo samples per objective estimate
    #[arg(long = "eval-samples")]
    pub eval_samples: Option<usize>,
    /// Noise added to ingested covariates
    #[arg(long = "noise-sd")]
    pub noise_sd: Option<f64>,
    /// Units kept from the CSV
    #[arg(long)]
    pub subsample: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct MseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub design: DesignArgs,
    /// linear, quadratic, lin-quad or lin-quad-cubic
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Outcome noise sd
    #[arg(long = "noise-sd")]
    pub noise_sd: Option<f64>,
    /// Independently generated datasets
    #[arg(long)]
    pub instances: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// random, augmented, covariates or ingest
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long = "noise-sd")]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub subsample: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct HardnessArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Instance file; a planted random instance if omitted
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma list of ±1, one per element
    #[arg(long)]
    pub witness: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Elements of the built-in instance
    #[arg(long)]
    pub universe: Option<usize>,
    /// Sets beyond the covering ones in the built-in instance
    #[arg(long = "extra-sets")]
    pub extra_sets: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Results CSV
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Metric to plot (the first one in the file by default)
    #[arg(long)]
    pub metric: Option<String>,
}
