//! `memvo`: synthetic data, training, inference and evaluation from the
//! command line. Every subcommand is deterministic given its inputs, config
//! file and seed.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use memvo_core::eval::{Aggregation, SaliencyMode};
use memvo_core::model::Preset;

#[derive(Debug, Parser)]
#[command(name = "memvo", version, about = "Memory-guided visual odometry experiments")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a seeded synthetic dataset into a sequence container.
    SynthData(SynthDataArgs),
    /// Train a model and write its checkpoint plus the loss history.
    Train(TrainArgs),
    /// Estimate a trajectory with sliding-window inference (KITTI format).
    Infer(InferArgs),
    /// Compare an estimated trajectory with ground truth and write metrics.
    Eval(EvalArgs),
    /// Write per-frame saliency maps for one window.
    Saliency(SaliencyArgs),
    /// Write error-vs-length and error-vs-speed tables.
    PlotData(PlotDataArgs),
}

#[derive(Debug, Args)]
struct SynthDataArgs {
    /// Dataset spec (JSON); omitted fields take their defaults.
    #[arg(long, visible_alias = "spec")]
    config: Option<PathBuf>,
    /// Output directory for the container.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training config (JSON); omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset or single-sequence container.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint directory; also receives loss.csv and config.json.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed (initialization and window sampling).
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's model preset.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Overrides the config's window length.
    #[arg(long)]
    window: Option<usize>,
    /// Overrides the config's iteration count.
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Debug, Args)]
struct ModelInput {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Training config supplying the memory policy; defaults to the
    /// checkpoint's config.json, then to built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset or single-sequence container.
    #[arg(long)]
    data: PathBuf,
    /// Which sequence of a dataset to use.
    #[arg(long, default_value_t = 0)]
    sequence: usize,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[command(flatten)]
    input: ModelInput,
    /// Output trajectory (KITTI pose format).
    #[arg(long)]
    out: PathBuf,
    /// Window length; defaults to the config's window length.
    #[arg(long)]
    window: Option<usize>,
    /// Window stride; defaults to window − 1.
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Trajectory file format of both inputs.
    #[arg(long, value_enum)]
    format: Format,
    /// Estimated trajectory.
    #[arg(long)]
    est: PathBuf,
    /// Ground-truth trajectory.
    #[arg(long)]
    gt: PathBuf,
    /// Metric CSV.
    #[arg(long)]
    out: PathBuf,
    /// Subsegment aggregation (KITTI only).
    #[arg(long, value_enum, default_value_t = AggregationArg::Mean)]
    aggregation: AggregationArg,
    /// Comma-separated subsegment lengths in meters (KITTI only); defaults
    /// to 100,200,…,800.
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct SaliencyArgs {
    #[command(flatten)]
    input: ModelInput,
    /// Output directory for one VOTB map per window frame.
    #[arg(long)]
    out: PathBuf,
    /// First frame of the window.
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Window length; defaults to the config's window length.
    #[arg(long)]
    window: Option<usize>,
    /// Step within the window whose pose is explained (1 ≤ target < window).
    #[arg(long)]
    target: usize,
    /// Explain the refined absolute pose, or only the tracking relative pose.
    #[arg(long, value_enum, default_value_t = ModeArg::Refined)]
    mode: ModeArg,
}

#[derive(Debug, Args)]
struct PlotDataArgs {
    /// Estimated trajectory (KITTI pose format).
    #[arg(long)]
    est: PathBuf,
    /// Ground-truth trajectory (KITTI pose format).
    #[arg(long)]
    gt: PathBuf,
    /// Output directory for error_vs_length.csv and error_vs_speed.csv.
    #[arg(long)]
    out: PathBuf,
    /// Width of the speed bins in m/s.
    #[arg(long, default_value_t = 2.0)]
    speed_bin: f64,
    /// Frame rate used to convert subsegment durations into speeds.
    #[arg(long, default_value_t = 10.0)]
    frame_rate: f64,
    /// Subsegment aggregation.
    #[arg(long, value_enum, default_value_t = AggregationArg::Mean)]
    aggregation: AggregationArg,
    /// Comma-separated subsegment lengths in meters; defaults to
    /// 100,200,…,800.
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    KittiShape,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::KittiShape => Preset::KittiShape,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Kitti,
    Tum,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AggregationArg {
    Mean,
    Rmse,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Mean => Aggregation::Mean,
            AggregationArg::Rmse => Aggregation::Rmse,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Refined,
    TrackingOnly,
}

impl From<ModeArg> for SaliencyMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Refined => SaliencyMode::Refined,
            ModeArg::TrackingOnly => SaliencyMode::TrackingOnly,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::SynthData(a) => commands::synth_data(a),
        Command::Train(a) => commands::train(a),
        Command::Infer(a) => commands::infer(a),
        Command::Eval(a) => commands::eval(a),
        Command::Saliency(a) => commands::saliency(a),
        Command::PlotData(a) => commands::plot_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
