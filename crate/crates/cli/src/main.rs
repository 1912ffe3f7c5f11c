//! `evtpr`: batch front end for event simulation, representations,
//! sample planning, the toy super-resolution pipeline and evaluation.

mod commands;
mod support;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "evtpr", version, about = "Event-guided space-time video super-resolution toolkit")]
struct Cli {
    /// Worker threads; outputs do not depend on this value.
    #[arg(long, global = true, env = "EVTPR_THREADS")]
    threads: Option<usize>,

    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate events from a clip directory of pixmaps and timestamps.txt.
    Simulate(SimulateArgs),
    /// Accumulate events into a voxel grid tensor.
    Voxelize(VoxelizeArgs),
    /// Build a temporal pyramid tensor or print its time granularity.
    Tpr(TprArgs),
    /// Integrate events onto a frame up to a later time.
    Reconstruct(ReconstructArgs),
    /// Write the sliding-window sample manifest for a video.
    Plan(PlanArgs),
    /// Run the seeded forward pipeline and write output pixmaps.
    Pipeline(PipelineArgs),
    /// PSNR/SSIM of predicted frames against ground truth.
    Metrics(MetricsArgs),
    /// Measure representation throughput.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Directory with pixmaps (sorted by name) and timestamps.txt.
    pub frames: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub threshold: f64,
    #[arg(long, default_value_t = evtpr_core::event_model::DEFAULT_LOG_EPS)]
    pub eps: f64,
    /// Output event file; a `.csv` extension selects the text codec.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct VoxelizeArgs {
    pub events: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub bins: usize,
    /// Window start (seconds, `p/q`, or with a `us` suffix); stream start by default.
    #[arg(long)]
    pub t0: Option<String>,
    #[arg(long)]
    pub t1: Option<String>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct TprArgs {
    /// Event file; not needed with --print-granularity alone.
    pub events: Option<PathBuf>,
    #[arg(long = "L", default_value_t = 7)]
    pub levels: usize,
    #[arg(long = "Mp", default_value_t = 2)]
    pub moments: usize,
    #[arg(long, default_value = "3")]
    pub r: String,
    /// Half window Δt; half the stream span by default.
    #[arg(long)]
    pub half_window: Option<String>,
    /// Pyramid centre; the stream midpoint by default.
    #[arg(long)]
    pub center: Option<String>,
    #[arg(long)]
    pub print_granularity: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    pub frame: PathBuf,
    pub events: PathBuf,
    /// Target time.
    #[arg(long)]
    pub at: String,
    /// Timestamp of the reference frame; the event stream start by default.
    #[arg(long)]
    pub frame_time: Option<String>,
    #[arg(long, default_value_t = 0.2)]
    pub threshold: f64,
    #[arg(long, default_value_t = evtpr_core::event_model::DEFAULT_LOG_EPS)]
    pub eps: f64,
    /// Output PGM.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also write the reconstructed log field as a tensor.
    #[arg(long)]
    pub log_tensor: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[arg(long)]
    pub frames: usize,
    #[arg(long)]
    pub nin: usize,
    #[arg(long)]
    pub skip: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Manifest path; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    pub frames: PathBuf,
    pub events: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Comma-separated output times in [0, 1].
    #[arg(long, default_value = "0")]
    pub times: String,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Load parameters from a directory instead of seeding them.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Save the parameters used to a directory.
    #[arg(long)]
    pub save_params: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub voxel_bins: usize,
    #[arg(long = "L", default_value_t = 7)]
    pub levels: usize,
    #[arg(long = "Mp", default_value_t = 2)]
    pub moments: usize,
    #[arg(long, default_value_t = 3.0)]
    pub r: f64,
    #[arg(long, default_value_t = 8)]
    pub regional_channels: usize,
    #[arg(long, default_value_t = 640)]
    pub temporal_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub compressed_dim: usize,
    #[arg(long, default_value_t = 4)]
    pub window: usize,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 64)]
    pub decoder_hidden: usize,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    pub pred: PathBuf,
    pub gt: PathBuf,
    /// Evaluate on BT.601 luma only.
    #[arg(long)]
    pub y_only: bool,
    #[arg(long, default_value_t = 0)]
    pub border_crop: usize,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Repr {
    Voxel,
    Tpr,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Event file; use --synthetic to generate one instead.
    pub events: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Repr::Voxel)]
    pub repr: Repr,
    #[arg(long, default_value_t = 5)]
    pub repeat: usize,
    /// Generate this many random events on a 346x260 sensor.
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub bins: usize,
    /// Write the representation of the last repeat here.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("usage error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot configure {n} threads: {e}");
            return ExitCode::from(4);
        }
    }
    let seed = cli.seed;
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Voxelize(a) => commands::voxelize(&a),
        Command::Tpr(a) => commands::tpr(&a),
        Command::Reconstruct(a) => commands::reconstruct(&a),
        Command::Plan(a) => commands::plan(&a),
        Command::Pipeline(a) => commands::pipeline(&a, seed),
        Command::Metrics(a) => commands::metrics(&a),
        Command::Bench(a) => commands::bench(&a, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("evtpr: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
