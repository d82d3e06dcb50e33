use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ichloc", version, about = "Weakly supervised hemorrhage localization pipeline")]
pub struct Cli {
    /// Worker threads for per-file stages (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scenes (maps + boxes) and optionally MIL bags.
    Synth(SynthArgs),
    /// Build the 3-channel windowed, standardized input from HU slices.
    Window(WindowArgs),
    /// Turn a bag and head parameters into a likelihood map.
    Attend(AttendArgs),
    /// Train a gated attention head on labelled bags.
    TrainHead(TrainHeadArgs),
    /// Detect peaks in likelihood maps.
    Detect(DetectArgs),
    /// Match detections against boxes and report PPV / Se / Dice.
    Evaluate(EvaluateArgs),
    /// Tune detector parameters by Bayesian optimization.
    Optimize(OptimizeArgs),
    /// Run the configured pipeline end to end.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of scenes.
    #[arg(long, default_value_t = 20)]
    pub count: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scene configuration JSON; fields left out keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write this many positive bags under `<out>/bags`.
    #[arg(long, default_value_t = 0)]
    pub bags_pos: usize,
    #[arg(long, default_value_t = 0)]
    pub bags_neg: usize,
    /// Bag configuration JSON.
    #[arg(long)]
    pub bag_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    /// HU matrix file or directory of `.amap` / `.csv` files.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Standardization statistics JSON; computed from the inputs when absent.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Compute one set of statistics per channel instead of a shared one.
    #[arg(long)]
    pub per_channel: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Pooling,
    Attention,
}

#[derive(Debug, Args)]
pub struct AttendArgs {
    /// Bag `.amap` file with its `.json` sidecar.
    #[arg(long)]
    pub bag: PathBuf,
    /// Directory of trained head parameters (attention head only).
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Head::Attention)]
    pub head: Head,
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub cols: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainHeadArgs {
    /// Directory of labelled bags.
    #[arg(long)]
    pub bags: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Map file or directory of maps.
    #[arg(long)]
    pub maps: PathBuf,
    /// Detector JSON `{h, T, d, footprint_radius}`.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub boxes: PathBuf,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-slice counts as CSV.
    #[arg(long)]
    pub per_slice: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub maps: PathBuf,
    #[arg(long)]
    pub boxes: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Search space JSON; defaults to the built-in detector space.
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub footprint_radius: usize,
    /// Directory receiving `history.csv` and `best_params.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub maps: Option<PathBuf>,
    #[arg(long)]
    pub boxes: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub budget: Option<usize>,
}
