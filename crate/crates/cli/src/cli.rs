use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "tmsprt", version, about = "Sequential tests of practical significance")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one sequential test on newline-delimited observations.
    Test(TestArgs),
    /// Run a Monte Carlo grid and write CSV plus a manifest.
    Simulate(SimulateArgs),
    /// Monte Carlo estimate of the base-case expectation E(Λ_1).
    Expectation(ExpectationArgs),
    /// Monte Carlo estimate of the one-step factor E(Λ_{n+1}/Λ_n | prefix).
    Martingale(MartingaleArgs),
    /// Compare closed-form log ratios with direct quadrature.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    ClassicSprt,
    Msprt,
    TruncNested,
    TruncDisjoint,
    OneSidedNaive,
    OneSidedCorrectSup,
    OneSidedCorrectInf,
}

impl VariantArg {
    pub fn name(self) -> &'static str {
        match self {
            VariantArg::ClassicSprt => "classic-sprt",
            VariantArg::Msprt => "msprt",
            VariantArg::TruncNested => "trunc-nested",
            VariantArg::TruncDisjoint => "trunc-disjoint",
            VariantArg::OneSidedNaive => "one-sided-naive",
            VariantArg::OneSidedCorrectSup => "one-sided-correct-sup",
            VariantArg::OneSidedCorrectInf => "one-sided-correct-inf",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Test variant.
    #[arg(long, value_enum, default_value = "trunc-nested")]
    pub variant: VariantArg,
    /// ROPE half-width δ [data units]; required by the truncated variants.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Mixing standard deviation τ [data units].
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub tau: f64,
    /// Known data standard deviation σ [data units].
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub sigma: f64,
    /// Null mean θ0 of the SPRT and mSPRT [data units].
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta0: f64,
    /// Alternative mean θ1 of the classic SPRT [data units].
    #[arg(long, allow_hyphen_values = true)]
    pub theta1: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Type I error budget α [probability in (0, 1)].
    #[arg(long, value_parser = probability)]
    pub alpha: f64,
    /// Maximum number of observations M [count ≥ 1].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_n: u64,
    /// Type II budget β of the two-boundary classic SPRT [probability in (0, 1)].
    /// Omit for the power-one SPRT.
    #[arg(long, value_parser = probability)]
    pub beta: Option<f64>,
    /// Read observations from this file instead of standard input.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Print n, log Λ_n and p_n to standard error after every observation.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    TwoSidedNull,
    TwoSidedAlt,
    Disjoint,
    OneSidedNaive,
    OneSidedCorrect,
    Misspec,
    /// The two-sided alternative grid run through both the nested truncated
    /// test and the mSPRT on common streams.
    MsprtComparison,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in grid.
    #[arg(long, value_enum, required_unless_present = "config", conflicts_with = "config")]
    pub preset: Option<PresetArg>,
    /// TOML file with a `[[scenario]]` table per grid cell.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Factor applied to replicate counts B and horizons M [ratio > 0].
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub scale: f64,
    /// Desk-sized grid: B = 500, M ∈ {100, 1000}, δ/τ ∈ {0.1, 1, 3}.
    #[arg(long)]
    pub desk: bool,
    /// Compare each configured scenario against the mSPRT instead of running it alone.
    #[arg(long, requires = "config")]
    pub compare: bool,
    /// Master seed for every random stream [64-bit integer].
    #[arg(long)]
    pub seed: u64,
    /// Output CSV path; the manifest is written next to it as `<out>.manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads [count; 0 = all cores].
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    ClosedForm,
    NestedSampling,
}

#[derive(Debug, Args)]
pub struct ExpectationArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// True means θ0 to evaluate [data units, comma-separated].
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub true_mean: Vec<f64>,
    /// Estimator.
    #[arg(long, value_enum, default_value = "closed-form")]
    pub mode: ModeArg,
    /// Outer draws of x_1 [count ≥ 1].
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_draws: u64,
    /// Inner θ draws per mixing distribution in nested-sampling mode [count ≥ 1].
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_inner: u64,
    /// Seed [64-bit integer].
    #[arg(long)]
    pub seed: u64,
    /// Output CSV path (standard output when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MartingaleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// True means θ0 to evaluate [data units, comma-separated].
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub true_mean: Vec<f64>,
    /// Prefix length n [count].
    #[arg(long, default_value_t = 0)]
    pub prefix_n: u64,
    /// Prefix sum Σx [data units]; ignored with --simulate-prefix.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub prefix_sum: f64,
    /// Draw the prefix from N(θ0, σ²) instead of using --prefix-sum.
    #[arg(long)]
    pub simulate_prefix: bool,
    /// Estimate the one-step expected posterior tail/ROPE ratio instead.
    #[arg(long)]
    pub tail_ratio: bool,
    /// Draws of x_{n+1} [count ≥ 1].
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_draws: u64,
    /// Seed [64-bit integer].
    #[arg(long)]
    pub seed: u64,
    /// Output CSV path (standard output when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Random configurations per variant [count ≥ 1].
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,
    /// Seed [64-bit integer].
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Restrict to one variant.
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Largest accepted |log Λ_closed − log Λ_quadrature| [nats].
    #[arg(long, default_value_t = 1e-6, value_parser = positive)]
    pub tolerance: f64,
}

fn probability(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie strictly between 0 and 1, got {v}"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive and finite, got {v}"))
    }
}
