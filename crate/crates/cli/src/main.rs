mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "stereo-xct", version, about = "Stereo X-ray feature tomography", arg_required_else_help = true)]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true, env = "STEREO_XCT_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a random or stepped-prism phantom (attenuation + edge volumes).
    GenPhantom(GenPhantomArgs),
    /// Generate 2D detector training blocks from random phantoms.
    #[command(name = "gen-2d-dataset")]
    Gen2dDataset(Gen2dArgs),
    /// Generate back-projection/edge volume pairs from a rotation sweep.
    #[command(name = "gen-3d-dataset")]
    Gen3dDataset(Gen3dArgs),
    /// Train the 2D pixel classifier.
    #[command(name = "train-2d")]
    Train2d(TrainArgs),
    /// Train the 3D volume classifier.
    #[command(name = "train-3d")]
    Train3d(TrainArgs),
    /// Detect features in one projection, block-wise.
    Detect(DetectArgs),
    /// Relative pose of two views from point matches.
    Calibrate(CalibrateArgs),
    /// Refine the object pose against two binary feature maps.
    RefinePose(RefinePoseArgs),
    /// Back-project two feature maps into a volume.
    Backproject(BackprojectArgs),
    /// 3D feature localization from back-projected evidence.
    Localize(LocalizeArgs),
    /// Feature points from a binary volume.
    ExtractPoints(ExtractArgs),
    /// Position error report against reference points.
    Evaluate(EvaluateArgs),
    /// Run the whole experiment from one JSON config.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct GenPhantomArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// `random` or `stepped`.
    #[arg(long, default_value = "random")]
    pub kind: String,
    /// PhantomSpec JSON; overrides `--kind random`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.24)]
    pub pitch: f64,
}

#[derive(Debug, Args)]
pub struct Gen2dArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub phantoms: usize,
    #[arg(long, default_value_t = 1)]
    pub views: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 96)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.33)]
    pub pitch: f64,
    /// Detector side in pixels.
    #[arg(long, default_value_t = 128)]
    pub detector: usize,
    #[arg(long, default_value_t = 1.0)]
    pub pixel_pitch: f64,
    #[arg(long, default_value_t = 32)]
    pub block: usize,
    #[arg(long, default_value_t = 4)]
    pub blocks_per_side: usize,
}

#[derive(Debug, Args)]
pub struct Gen3dArgs {
    /// Binary edge volume (raw f32 with JSON sidecar).
    #[arg(long)]
    pub edges: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 360)]
    pub count: usize,
    #[arg(long, default_value_t = 1.0)]
    pub step_deg: f64,
    #[arg(long, num_args = 2, default_values_t = [-30.0, 30.0], allow_negative_numbers = true)]
    pub views: Vec<f64>,
    /// Cone-beam geometry JSON (desk geometry when absent).
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long)]
    pub ramp_filter: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory with `index.json`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 12)]
    pub base: usize,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Positive-class weight (default: class ratio, capped).
    #[arg(long)]
    pub pos_weight: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Trained 2D classifier; the Hessian baseline is used when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub block: Option<usize>,
    /// Blocks per side.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Write a binary map thresholded at this probability.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 99.5)]
    pub percentile: f64,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// JSON array of `[u1, v1, u2, v2]`.
    #[arg(long)]
    pub matches: PathBuf,
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long, num_args = 2, default_values_t = [-29.0, 32.0], allow_negative_numbers = true)]
    pub views: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RefinePoseArgs {
    /// Edge points of the object model (points JSON).
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long)]
    pub left: PathBuf,
    #[arg(long)]
    pub right: PathBuf,
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long, num_args = 2, default_values_t = [-29.0, 32.0], allow_negative_numbers = true)]
    pub views: Vec<f64>,
    #[arg(long, default_value_t = 5.0)]
    pub angle_bound: f64,
    #[arg(long, default_value_t = 10.0)]
    pub shift_bound: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BackprojectArgs {
    #[arg(long)]
    pub left: PathBuf,
    #[arg(long)]
    pub right: PathBuf,
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long, num_args = 2, default_values_t = [-29.0, 32.0], allow_negative_numbers = true)]
    pub views: Vec<f64>,
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.24)]
    pub pitch: f64,
    #[arg(long)]
    pub ramp_filter: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// Left single-view back-projection (coincidence rule).
    #[arg(long, requires = "right", conflicts_with_all = ["model", "input"])]
    pub left: Option<PathBuf>,
    #[arg(long, requires = "left")]
    pub right: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Trained 3D classifier applied to `--input`.
    #[arg(long, requires = "input")]
    pub model: Option<PathBuf>,
    /// Summed stereo back-projection.
    #[arg(long, requires = "model")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub min_cluster: usize,
    /// Skeleton endpoints and junctions instead of component centroids.
    #[arg(long)]
    pub corners: bool,
    #[arg(long, default_value_t = 0)]
    pub prune_len: usize,
    #[arg(long, default_value_t = 0.0)]
    pub merge_radius: f64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub estimated: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub max_dist: f64,
    #[arg(long, default_value_t = 0.24)]
    pub pitch: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "pipeline-out")]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let argv: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::GenPhantom(a) => commands::gen_phantom(&a, &argv),
        Command::Gen2dDataset(a) => commands::gen_2d_dataset(&a, &argv),
        Command::Gen3dDataset(a) => commands::gen_3d_dataset(&a, &argv),
        Command::Train2d(a) => commands::train_2d(&a, &argv),
        Command::Train3d(a) => commands::train_3d(&a, &argv),
        Command::Detect(a) => commands::detect(&a, &argv),
        Command::Calibrate(a) => commands::calibrate(&a, &argv),
        Command::RefinePose(a) => commands::refine(&a, &argv),
        Command::Backproject(a) => commands::backproject(&a, &argv),
        Command::Localize(a) => commands::localize(&a, &argv),
        Command::ExtractPoints(a) => commands::extract_points(&a, &argv),
        Command::Evaluate(a) => commands::evaluate(&a, &argv),
        Command::Pipeline(a) => commands::pipeline(&a, &argv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
