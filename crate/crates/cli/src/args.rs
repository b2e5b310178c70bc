use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctfa_core::synth::SynthConfig;

/// Seed used by every command when `--seed` is absent.
pub const DEFAULT_SEED: u64 = 20240601;

#[derive(Debug, Parser)]
#[command(name = "ctfa", version, about = "Two-phase target and feature aggregation for multi-task linear regression")]
pub struct Cli {
    /// Worker threads for `sweep` and `verify` (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Suppress the human-readable summary.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster the targets of a CSV dataset and aggregate features per cluster.
    Aggregate(AggregateArgs),
    /// Generate a synthetic train/test pair.
    Synth(SynthArgs),
    /// Vary one parameter over a list of values and tabulate the metrics.
    Sweep(SweepArgs),
    /// Run Monte-Carlo verification checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    /// Shared features, two phases.
    Shared,
    /// Per-task features named `<feature>@<target>`, single phase.
    Homogeneous,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Input CSV with a header row.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Target columns, comma separated; every other column is a feature.
    #[arg(long, value_delimiter = ',', conflicts_with = "schema")]
    pub targets: Vec<String>,
    /// Columns to skip, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "schema")]
    pub ignore: Vec<String>,
    /// JSON column-role schema instead of --targets/--ignore.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub epsilon1: f64,
    #[arg(long, default_value_t = 1e-4, allow_negative_numbers = true)]
    pub epsilon2: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = VariantArg::Shared)]
    pub variant: VariantArg,
    /// Output directory (created if missing).
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Generator settings; flags override the JSON config, which overrides
/// the ten-task benchmark defaults.
#[derive(Debug, Args, Clone)]
pub struct GeneratorArgs {
    /// JSON generator config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of tasks L.
    #[arg(long)]
    pub tasks: Option<usize>,
    /// Number of features D.
    #[arg(long)]
    pub features: Option<usize>,
    /// Training rows n.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Test rows (default: same as --samples).
    #[arg(long)]
    pub test_samples: Option<usize>,
    /// Noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Feature standard deviation.
    #[arg(long)]
    pub feature_std: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon2: Option<f64>,
    /// Seeds per configuration.
    #[arg(long)]
    pub repeats: Option<usize>,
}

impl GeneratorArgs {
    pub fn resolve(&self) -> anyhow::Result<SynthConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| crate::exit::io(path, e))?;
                serde_json::from_str(&text).map_err(|e| crate::exit::Validation(format!("{}: {e}", path.display())))?
            }
            None => SynthConfig::default(),
        };
        if let Some(v) = self.tasks {
            c.tasks = v;
        }
        if let Some(v) = self.features {
            c.features = v;
        }
        if let Some(v) = self.samples {
            c.n_train = v;
        }
        if self.test_samples.is_some() {
            c.n_test = self.test_samples;
        }
        if let Some(v) = self.sigma {
            c.sigma = v;
        }
        if let Some(v) = self.feature_std {
            c.feature_std = v;
        }
        if let Some(v) = self.epsilon1 {
            c.epsilon1 = v;
        }
        if let Some(v) = self.epsilon2 {
            c.epsilon2 = v;
        }
        if let Some(v) = self.repeats {
            c.n_repeats = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output directory for train.csv, test.csv, truth.json, config.json.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    /// n_train, D, L, sigma, epsilon1 or epsilon2.
    #[arg(long)]
    pub axis: String,
    /// Values, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub values: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output CSV (default: stdout).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Checks to run, comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    pub checks: Vec<String>,
    /// Reduced budgets for a fast smoke run.
    #[arg(long)]
    pub quick: bool,
    /// Override the replicate count of bias/variance estimates.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Override the generator draws of the guarantee checks.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Report JSON (default: stdout).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}
