use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "laneforge", version, about = "LiDAR lane annotation and evaluation toolkit")]
pub struct Cli {
    /// Worker threads for multi-frame runs. Overrides LANEFORGE_THREADS;
    /// defaults to the number of available cores.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scenes: cloud, dense ground-truth lanes and sparse manual lanes.
    Gen(GenArgs),
    /// Densify sparse manual lanes against their point clouds.
    Annotate(AnnotateArgs),
    /// Pillarize a cloud and dump the grid as a plain graymap plus JSON stats.
    Bev(BevArgs),
    /// Match predicted lanes to ground truth and report P/R/F1 and Chamfer distances.
    Eval(EvalArgs),
    /// Histogram lane positions, heights, curvature and slope.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Run configuration JSON; omitted sections take their defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Override scene.seed. Frame i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output cloud per frame; the file stem becomes the frame id.
    #[arg(long, value_name = "FILE", required = true, num_args = 1..)]
    pub out_cloud: Vec<PathBuf>,
    /// Dense ground-truth lanes per frame.
    #[arg(long, value_name = "FILE", required = true, num_args = 1..)]
    pub out_lanes: Vec<PathBuf>,
    /// Sparse manual-annotation lanes per frame.
    #[arg(long, value_name = "FILE", num_args = 1..)]
    pub out_sparse: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Point cloud per frame.
    #[arg(long, value_name = "FILE", required = true, num_args = 1..)]
    pub cloud: Vec<PathBuf>,
    /// Manual lanes per frame.
    #[arg(long, value_name = "FILE", required = true, num_args = 1..)]
    pub lanes: Vec<PathBuf>,
    /// Densified lanes per frame.
    #[arg(long, value_name = "FILE", required = true, num_args = 1..)]
    pub out: Vec<PathBuf>,
    /// Pipeline report per frame [default: <out stem>.report.json].
    #[arg(long, value_name = "FILE", num_args = 1..)]
    pub report: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BevArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Point cloud to pillarize.
    #[arg(long, value_name = "FILE")]
    pub cloud: PathBuf,
    /// Region of interest [default: rasterize.roi].
    #[arg(long, num_args = 4, value_names = ["X_MIN", "X_MAX", "Y_MIN", "Y_MAX"], allow_negative_numbers = true)]
    pub roi: Option<Vec<f64>>,
    /// Cell size in meters [default: rasterize.bev_resolution].
    #[arg(long)]
    pub res: Option<f64>,
    /// Plain graymap of per-cell point counts.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// JSON stats payload [default: <out stem>.stats.json].
    #[arg(long, value_name = "FILE")]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Predicted lanes per frame.
    #[arg(long, value_name = "FILE", required = true, num_args = 1..)]
    pub pred: Vec<PathBuf>,
    /// Ground-truth lanes per frame, paired with --pred by position.
    #[arg(long, value_name = "FILE", required = true, num_args = 1..)]
    pub gt: Vec<PathBuf>,
    /// Match threshold on mean lane distance in meters [default: metrics.match_threshold].
    #[arg(long)]
    pub tau: Option<f64>,
    /// Resampling spacing in meters [default: metrics.resample_spacing].
    #[arg(long)]
    pub spacing: Option<f64>,
    /// EvalReport JSON.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Lane files to pool.
    #[arg(long, value_name = "FILE", required = true, num_args = 1..)]
    pub lanes: Vec<PathBuf>,
    /// StatsReport JSON; CSV histograms are written beside it as <stem>_<name>.csv.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}
