use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use cvrelay::AttackKind;

use crate::grid::GridSpec;
use crate::output::Format;

/// Key rates, thresholds and simulations for symmetric relay-based CV-QKD.
#[derive(Debug, Parser)]
#[command(name = "cvrelay", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Key rate for one attack and one channel.
    Rate(RateArgs),
    /// Security threshold omega(tau) or omega(d) for one attack.
    Threshold(ThresholdArgs),
    /// Classify the (g, g') plane and evaluate the rate on it.
    Plane(PlaneArgs),
    /// Key rates over grids of tau or distance, omega and mu.
    Sweep(SweepArgs),
    /// Monte Carlo run of the protocol with empirical estimators.
    Simulate(SimulateArgs),
    /// Key rate over a modulation grid and its argmax.
    OptimalMu(OptimalMuArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutputArgs {
    /// csv or json
    #[arg(long)]
    pub format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `key = value` file with defaults; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DetectorArgs {
    /// Efficiency of the q detector.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Efficiency of the p detector.
    #[arg(long)]
    pub etap: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AttackArgs {
    /// collective, sep-plus, sep-minus, sep-qcorr, sep-pcorr, epr-positive, epr-negative
    #[arg(long)]
    pub attack: Option<AttackKind>,
    /// Free correlation g; needs --gp and overrides --attack.
    #[arg(long, allow_hyphen_values = true)]
    pub g: Option<f64>,
    /// Free correlation g'; needs --g and overrides --attack.
    #[arg(long, allow_hyphen_values = true)]
    pub gp: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct RateArgs {
    #[arg(long)]
    pub tau: Option<f64>,
    /// Distance in km, instead of --tau.
    #[arg(long)]
    pub distance: Option<f64>,
    /// Thermal noise of Eve's ancillas.
    #[arg(long)]
    pub omega: Option<f64>,
    #[command(flatten)]
    pub attack: AttackArgs,
    #[command(flatten)]
    pub detectors: DetectorArgs,
    /// Reconciliation efficiency.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Modulation; omitted means the asymptotic limit.
    #[arg(long)]
    pub mu: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub attack: Option<AttackKind>,
    /// Transmissivity grid, `start:stop:step` or a comma list.
    #[arg(long)]
    pub tau: Option<GridSpec>,
    /// Distance grid in km, instead of --tau.
    #[arg(long)]
    pub distance: Option<GridSpec>,
    #[command(flatten)]
    pub detectors: DetectorArgs,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Upper end of the omega scan.
    #[arg(long)]
    pub omega_max: Option<f64>,
    /// Number of scan points before bisection.
    #[arg(long)]
    pub scan_points: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PlaneArgs {
    #[arg(long)]
    pub omega: Option<f64>,
    /// Cells per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Transmissivity for the rate column (default 0.9).
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub distance: Option<f64>,
    #[command(flatten)]
    pub detectors: DetectorArgs,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// One or more attack names separated by commas.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackList(pub Vec<AttackKind>);

impl FromStr for AttackList {
    type Err = cvrelay::Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim() == "all" {
            return Ok(AttackList(AttackKind::ALL.to_vec()));
        }
        s.split(',')
            .map(AttackKind::from_str)
            .collect::<Result<_, _>>()
            .map(AttackList)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Attack names separated by commas, or `all`.
    #[arg(long)]
    pub attack: Option<AttackList>,
    #[arg(long, allow_hyphen_values = true)]
    pub g: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub gp: Option<f64>,
    #[arg(long)]
    pub tau: Option<GridSpec>,
    #[arg(long)]
    pub distance: Option<GridSpec>,
    #[arg(long)]
    pub omega: Option<GridSpec>,
    /// Modulation grid; omitted means the asymptotic limit.
    #[arg(long)]
    pub mu: Option<GridSpec>,
    #[command(flatten)]
    pub detectors: DetectorArgs,
    #[arg(long)]
    pub beta: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub distance: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[command(flatten)]
    pub attack: AttackArgs,
    #[command(flatten)]
    pub detectors: DetectorArgs,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Number of protocol rounds (default 1000000).
    #[arg(long)]
    pub rounds: Option<u64>,
    /// RNG seed (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write every round to this CSV file.
    #[arg(long)]
    pub dump_samples: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OptimalMuArgs {
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub distance: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub attack: Option<AttackKind>,
    #[command(flatten)]
    pub detectors: DetectorArgs,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Modulation grid (default 10:1000:10).
    #[arg(long)]
    pub mu_grid: Option<GridSpec>,
    #[command(flatten)]
    pub output: OutputArgs,
}
