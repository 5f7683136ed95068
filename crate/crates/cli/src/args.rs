use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Floor-plan localization from window observations.
///
/// Relative output paths are resolved against `--out-dir` (or `COMPASS_OUT_DIR`).
/// Exit codes: 0 success, 1 usage or configuration error, 2 empty result, 3 I/O failure.
#[derive(Debug, Parser)]
#[command(name = "compass", version, about, long_about)]
pub struct Cli {
    /// Directory for relative output paths.
    #[arg(long, global = true, env = "COMPASS_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    /// TOML file with [raycast], [matching], [detector], [attitude], [noise], [plan] and [eval] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Suppress informational output on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ray-cast descriptors on a grid over a floor plan and write the binary database.
    BuildDb(BuildDbArgs),
    /// Compute the descriptor at one pose.
    Describe(DescribeArgs),
    /// Rank database candidates against a query descriptor.
    Match(MatchArgs),
    /// Detect windows in one camera image.
    DetectWindows(DetectArgs),
    /// Turn window detections into a hit-type query descriptor.
    VisualDescriptor(VisualArgs),
    /// Estimate roll and pitch from vertical vanishing points.
    Attitude(AttitudeArgs),
    /// Generate a synthetic floor plan (PNG plus JSON sidecar).
    GeneratePlan(GeneratePlanArgs),
    /// Run the synthetic localization benchmark.
    Eval(EvalArgs),
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct PlanArgs {
    /// Floor plan image. Metadata comes from the `.json` sidecar unless --resolution is given.
    #[arg(long)]
    pub plan: PathBuf,
    /// Meters per pixel; overrides the sidecar.
    #[arg(long)]
    pub resolution: Option<f64>,
    /// World coordinates of the plan's top-left corner, `X,Y` in meters.
    #[arg(long, value_delimiter = ',', num_args = 2, allow_negative_numbers = true)]
    pub origin: Option<Vec<f64>>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct RaycastArgs {
    /// Rays per descriptor.
    #[arg(long)]
    pub n_bins: Option<usize>,
    /// Maximum ray length, meters.
    #[arg(long)]
    pub r_max: Option<f64>,
    /// Marching step, meters.
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BuildDbArgs {
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub raycast: RaycastArgs,
    /// Grid spacing, meters.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub grid_step: f64,
    /// Minimum distance from any structure pixel for a grid point to be kept, meters.
    #[arg(long, default_value_t = 0.3)]
    pub clearance: f64,
    /// Heading at which database descriptors are cast, degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub yaw_anchor_deg: f64,
    #[arg(long, short, default_value = "db.cmpd")]
    pub out: PathBuf,
    /// Also write the JSON export.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DescribeArgs {
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub raycast: RaycastArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub x: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub y: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub yaw_deg: f64,
    /// Descriptor in the database record format (usable as a match query).
    #[arg(long, short, default_value = "descriptor.cmpd")]
    pub out: PathBuf,
    /// Per-bin table of all channels.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Channel strips and polar range plot.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct MatchOptions {
    /// Score the hit-type channel only.
    #[arg(long)]
    pub hit_type_only: bool,
    /// Five comma-separated channel weights summing to 1.
    #[arg(long, value_delimiter = ',', num_args = 5)]
    pub weights: Option<Vec<f64>>,
    /// Transition-count pre-filter tolerance.
    #[arg(long)]
    pub prefilter: Option<u32>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Use one cosine over the concatenated channels instead of per-channel scores.
    #[arg(long)]
    pub flattened: bool,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Query descriptor file (database record format, first record is used).
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub db: PathBuf,
    #[command(flatten)]
    pub options: MatchOptions,
    /// Ranked candidates CSV.
    #[arg(long, short, default_value = "ranking.csv")]
    pub out: PathBuf,
    /// Correlation curve of the best candidate, one row per shift.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long)]
    pub curve_svg: Option<PathBuf>,
    /// Per-bin hit-type agreement with the best candidate at its best shift.
    #[arg(long)]
    pub agreement: Option<PathBuf>,
    #[arg(long)]
    pub agreement_svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, default_value = "front")]
    pub camera_id: String,
    /// Rig config; enables the field-of-view periphery filter for `--camera-id`.
    #[arg(long)]
    pub rig: Option<PathBuf>,
    /// Import segments (`x1,y1,x2,y2`) instead of running the built-in detector.
    #[arg(long)]
    pub segments: Option<PathBuf>,
    #[arg(long, short, default_value = "detections.csv")]
    pub out: PathBuf,
    /// Overlay with segments, window band and boxes.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Write the segments used.
    #[arg(long)]
    pub segments_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VisualArgs {
    #[arg(long)]
    pub rig: PathBuf,
    /// Detections CSV files; rows name their camera.
    #[arg(long, required = true, num_args = 1..)]
    pub detections: Vec<PathBuf>,
    #[arg(long, default_value_t = 360)]
    pub n_bins: usize,
    #[arg(long, short, default_value = "query.cmpd")]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttitudeArgs {
    #[arg(long)]
    pub rig: PathBuf,
    /// Segment CSV for one camera, `ID=PATH`; repeatable.
    #[arg(long, value_parser = parse_keyed)]
    pub segments: Vec<(String, PathBuf)>,
    /// Image for one camera, `ID=PATH`; segments are detected first. Repeatable.
    #[arg(long, value_parser = parse_keyed)]
    pub image: Vec<(String, PathBuf)>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Inlier tolerance, degrees.
    #[arg(long)]
    pub tolerance_deg: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, short, default_value = "attitude.csv")]
    pub out: PathBuf,
    /// Sphere diagnostic; the camera id is appended to the file stem.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct PlanSpecArgs {
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub height: Option<f64>,
    /// Meters per pixel of the generated plan.
    #[arg(long = "plan-resolution")]
    pub resolution: Option<f64>,
    /// Recursive partition depth.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub window_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GeneratePlanArgs {
    #[command(flatten)]
    pub spec: PlanSpecArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short, default_value = "plan.png")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Evaluate on this plan instead of a generated one.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[command(flatten)]
    pub spec: PlanSpecArgs,
    #[arg(long, default_value_t = 0)]
    pub plan_seed: u64,
    #[command(flatten)]
    pub raycast: RaycastArgs,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub grid_step: f64,
    #[arg(long, default_value_t = 0.3)]
    pub clearance: f64,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Probability of missing a whole window.
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Per-window bearing jitter, degrees.
    #[arg(long)]
    pub jitter_deg: Option<f64>,
    /// Expected spurious windows per observation.
    #[arg(long)]
    pub spurious_rate: Option<f64>,
    /// Bins added to (negative: removed from) each side of a window.
    #[arg(long, allow_negative_numbers = true)]
    pub dilation_bins: Option<i32>,
    /// Simulate exact geometric channels alongside the noisy hit type.
    #[arg(long)]
    pub all_channels: bool,
    /// Draw headings uniformly instead of on bin centers.
    #[arg(long)]
    pub uniform_yaw: bool,
    #[command(flatten)]
    pub matching: MatchOptions,
    #[arg(long, short, default_value = "eval.csv")]
    pub out: PathBuf,
}

fn parse_keyed(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() && !v.is_empty() => Ok((k.to_string(), PathBuf::from(v))),
        _ => Err(format!("expected ID=PATH, got '{s}'")),
    }
}
