mod commands;
mod convert;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use roigrasp::dataset_io::Transform;

#[derive(Parser)]
#[command(name = "roigrasp", version, about = "Grasp dataset conversion, synthesis and evaluation")]
struct Cli {
    /// Worker threads for per-image work (0 picks one per core)
    #[arg(long, global = true, env = "GRASP_EVAL_JOBS", default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score detections against a ground-truth dataset
    Eval(EvalArgs),
    /// Convert grasp files between vertex and (x, y, w, h, theta) forms
    Convert(ConvertArgs),
    /// Generate a synthetic dataset with planted detections
    Synth(SynthArgs),
    /// Suppress overlapping grasps and boxes in a detection file
    Nms(NmsArgs),
    /// Turn detected grasps into 3-D grasp points and approach vectors
    Grasp3d(Grasp3dArgs),
    /// Apply a rigid transform and/or rescale a dataset
    Augment(AugmentArgs),
    /// Dump the oriented anchors of an RoI
    Anchors(AnchorsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ApModeArg {
    AllPoint,
    ElevenPoint,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Dataset root holding `index` and `annotations/`
    #[arg(long)]
    pub gt: PathBuf,
    /// Detection file (JSON lines)
    #[arg(long)]
    pub dets: PathBuf,
    /// Output directory for `report` and `curve.csv`
    #[arg(long)]
    pub out: PathBuf,
    /// Image id list to evaluate on; detections of other images are ignored
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, default_value_t = 0.25)]
    pub jaccard_thresh: f64,
    #[arg(long, default_value_t = 30.0)]
    pub angle_thresh: f64,
    #[arg(long, default_value_t = 0.5)]
    pub box_iou_thresh: f64,
    /// Skip grasps flagged hard when checking the top-1 grasp
    #[arg(long)]
    pub ignore_hard: bool,
    /// Drop detections scoring below this value
    #[arg(long)]
    pub score_floor: Option<f64>,
    #[arg(long, value_enum, default_value_t = ApModeArg::AllPoint)]
    pub ap_mode: ApModeArg,
    /// Grasp NMS threshold applied inside each detection before scoring
    #[arg(long)]
    pub nms_grasp: Option<f64>,
    /// Per-class box NMS threshold applied per image before scoring
    #[arg(long)]
    pub nms_box: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum GraspForm {
    Rect,
    Vertices,
}

#[derive(Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Target representation
    #[arg(long, value_enum)]
    pub to: GraspForm,
    /// Relative tolerance for accepting a quadrilateral as a rectangle
    #[arg(long, default_value_t = roigrasp::geometry::DEFAULT_RECT_TOL)]
    pub rect_tol: f64,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Generator configuration (JSON); defaults apply to missing fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the configuration
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct NmsArgs {
    #[arg(long)]
    pub dets: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = roigrasp::suppression::DEFAULT_GRASP_NMS)]
    pub nms_grasp: f64,
    #[arg(long, default_value_t = roigrasp::suppression::DEFAULT_BOX_NMS)]
    pub nms_box: f64,
}

#[derive(Args)]
pub struct Grasp3dArgs {
    #[arg(long)]
    pub dets: PathBuf,
    /// Directory of `<image_id>.png` (16-bit mm) or `<image_id>.txt` depth maps
    #[arg(long)]
    pub depth_dir: PathBuf,
    /// JSON file with fx, fy, cx, cy
    #[arg(long)]
    pub intrinsics: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Half-size of the normal estimation window, pixels
    #[arg(long, default_value_t = roigrasp::depth_grasp::DEFAULT_NORMAL_RADIUS)]
    pub radius: usize,
    /// Use the candidate nearest the box center scoring above 0.5 instead of the top-1 grasp
    #[arg(long)]
    pub nearest_center: bool,
}

#[derive(Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub transform: Option<Transform>,
    /// Rescale so the shorter image side has this length
    #[arg(long)]
    pub short_side: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct AnchorsArgs {
    /// RoI as x_min,y_min,x_max,y_max
    #[arg(long, value_delimiter = ',', required = true)]
    pub roi: Vec<f64>,
    #[arg(long, default_value_t = 7)]
    pub grid_w: usize,
    #[arg(long, default_value_t = 7)]
    pub grid_h: usize,
    #[arg(long, default_value_t = roigrasp::anchor_codec::DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = roigrasp::anchor_codec::DEFAULT_ANCHOR_SIZE)]
    pub anchor_size: f64,
    /// Output CSV file (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .expect("global thread pool is configured once");
    }
    let result = match cli.command {
        Command::Eval(a) => commands::eval(&a),
        Command::Convert(a) => convert::run(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Nms(a) => commands::nms(&a),
        Command::Grasp3d(a) => commands::grasp3d(&a),
        Command::Augment(a) => commands::augment(&a),
        Command::Anchors(a) => commands::anchors(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
