//! Synthetic plans, observations, image corpora and end-to-end evaluation.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attitude::gravity_from_roll_pitch;
use crate::database::Database;
use crate::descriptor::{HitType, RadialDescriptor, ALL_CHANNELS, CHANNELS, CH_HIT_TYPE};
use crate::detection::LineSegment;
use crate::error::{CompassError, Result};
use crate::fisheye::{spans_to_hit_type, AzimuthSpan, CameraModel};
use crate::floorplan::{normalize_angle, Cell, FloorPlanRaster, Pose2D};
use crate::matching::{correlation_curve, score_all, MatchConfig};
use crate::raycast::{compute_descriptor, RaycastConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthPlanSpec {
    /// Outer width and height, meters.
    pub width: f64,
    pub height: f64,
    /// Meters per pixel.
    pub resolution: f64,
    pub wall_thickness: f64,
    /// Recursive partition depth; 0 gives a single room.
    pub max_depth: usize,
    /// Rooms are not split below this side length, meters.
    pub min_room: f64,
    pub door_width: f64,
    /// Fraction of each exterior facade covered by glazing.
    pub window_fraction: f64,
    pub min_window_width: f64,
    pub max_window_width: f64,
}

impl Default for SynthPlanSpec {
    fn default() -> Self {
        Self {
            width: 16.0,
            height: 12.0,
            resolution: 0.05,
            wall_thickness: 0.2,
            max_depth: 2,
            min_room: 3.0,
            door_width: 1.0,
            window_fraction: 0.3,
            min_window_width: 0.8,
            max_window_width: 2.0,
        }
    }
}

impl SynthPlanSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CompassError::InvalidConfig(m));
        if !(self.width > 0.0 && self.height > 0.0) {
            return bad(format!("plan dimensions must be positive, got {} x {}", self.width, self.height));
        }
        if !(self.resolution > 0.0) || !(self.wall_thickness > 0.0) {
            return bad("resolution and wall thickness must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.window_fraction) {
            return bad(format!("window fraction must be in [0, 1], got {}", self.window_fraction));
        }
        if !(self.min_window_width > 0.0) || self.min_window_width > self.max_window_width {
            return bad("window widths must satisfy 0 < min <= max".into());
        }
        if !(self.door_width > 0.0) || !(self.min_room > self.door_width) {
            return bad("door width must be positive and smaller than the minimum room".into());
        }
        Ok(())
    }
}

struct Painter {
    w: usize,
    h: usize,
    res: f64,
    top: f64,
    wall: Vec<bool>,
    window: Vec<bool>,
}

impl Painter {
    /// Sets pixels whose centers lie in `[x0, x1) × [y0, y1)` (world meters).
    fn fill(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, window: bool) {
        let c0 = (x0 / self.res - 0.5).ceil().max(0.0) as usize;
        let c1 = ((x1 / self.res - 0.5).ceil().max(0.0) as usize).min(self.w);
        let r0 = ((self.top - y1) / self.res - 0.5).ceil().max(0.0) as usize;
        let r1 = (((self.top - y0) / self.res - 0.5).ceil().max(0.0) as usize).min(self.h);
        for r in r0..r1 {
            for c in c0..c1 {
                let i = r * self.w + c;
                if window {
                    self.window[i] = true;
                } else {
                    self.wall[i] = true;
                }
            }
        }
    }
}

/// Window widths summing to `target` within one width.
fn window_widths(target: f64, spec: &SynthPlanSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut widths = Vec::new();
    let mut total = 0.0;
    while total < target {
        let w = rng.random_range(spec.min_window_width..=spec.max_window_width);
        if total + w - target > w / 2.0 && !widths.is_empty() {
            break;
        }
        widths.push(w);
        total += w;
    }
    widths
}

/// Deterministic plan for `(spec, seed)`. World origin is the bottom-left
/// corner; the raster's top-left pixel corner sits at `(0, height)`.
pub fn generate_plan(spec: &SynthPlanSpec, seed: u64) -> Result<FloorPlanRaster> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (
        (spec.width / spec.resolution).round() as usize,
        (spec.height / spec.resolution).round() as usize,
    );
    let mut p = Painter {
        w,
        h,
        res: spec.resolution,
        top: spec.height,
        wall: vec![false; w * h],
        window: vec![false; w * h],
    };
    let (ww, hh, t) = (spec.width, spec.height, spec.wall_thickness);
    p.fill(0.0, 0.0, ww, t, false);
    p.fill(0.0, hh - t, ww, hh, false);
    p.fill(0.0, 0.0, t, hh, false);
    p.fill(ww - t, 0.0, ww, hh, false);

    partition(&mut p, spec, [t, t, ww - t, hh - t], 0, &mut rng);

    if spec.window_fraction > 0.0 {
        // (length, paint) for bottom, top, left, right facades
        let facades: [(f64, Box<dyn Fn(&mut Painter, f64, f64)>); 4] = [
            (ww, Box::new(move |p: &mut Painter, a, b| p.fill(a, 0.0, b, t, true))),
            (ww, Box::new(move |p: &mut Painter, a, b| p.fill(a, hh - t, b, hh, true))),
            (hh, Box::new(move |p: &mut Painter, a, b| p.fill(0.0, a, t, b, true))),
            (hh, Box::new(move |p: &mut Painter, a, b| p.fill(ww - t, a, ww, b, true))),
        ];
        for (len, paint) in facades.iter() {
            let usable = len - 2.0 * t;
            if spec.max_window_width > usable {
                return Err(CompassError::InfeasiblePlan(format!(
                    "window width up to {} m exceeds facade span {usable:.2} m",
                    spec.max_window_width
                )));
            }
            let widths = window_widths(spec.window_fraction * len, spec, &mut rng);
            let total: f64 = widths.iter().sum();
            if total > usable {
                return Err(CompassError::InfeasiblePlan(format!(
                    "{total:.2} m of windows do not fit a {usable:.2} m facade"
                )));
            }
            let gap = (usable - total) / (widths.len() + 1) as f64;
            let mut at = t;
            for wdt in &widths {
                at += gap;
                let jitter = rng.random_range(-0.4..=0.4) * gap;
                paint(&mut p, at + jitter, at + jitter + wdt);
                at += wdt;
            }
        }
    }
    FloorPlanRaster::new(w, h, p.wall, p.window, spec.resolution, [0.0, spec.height])
}

fn partition(p: &mut Painter, spec: &SynthPlanSpec, r: [f64; 4], depth: usize, rng: &mut ChaCha8Rng) {
    if depth >= spec.max_depth {
        return;
    }
    let t = spec.wall_thickness;
    let (dx, dy) = (r[2] - r[0], r[3] - r[1]);
    let vertical = dx >= dy;
    let (lo, hi) = if vertical { (r[0], r[2]) } else { (r[1], r[3]) };
    let (olo, ohi) = if vertical { (r[1], r[3]) } else { (r[0], r[2]) };
    if hi - lo < 2.0 * spec.min_room + t || ohi - olo < spec.door_width + 2.0 * t {
        return;
    }
    let c = rng.random_range(lo + spec.min_room..=hi - spec.min_room - t);
    let d = rng.random_range(olo + t..=ohi - spec.door_width - t);
    let e = d + spec.door_width;
    if vertical {
        p.fill(c, olo, c + t, d, false);
        p.fill(c, e, c + t, ohi, false);
        partition(p, spec, [r[0], r[1], c, r[3]], depth + 1, rng);
        partition(p, spec, [c + t, r[1], r[2], r[3]], depth + 1, rng);
    } else {
        p.fill(olo, c, d, c + t, false);
        p.fill(e, c, ohi, c + t, false);
        partition(p, spec, [r[0], r[1], r[2], c], depth + 1, rng);
        partition(p, spec, [r[0], c + t, r[2], r[3]], depth + 1, rng);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservationNoise {
    /// Probability that a whole window span is missed.
    pub dropout: f64,
    /// Expected spurious window spans per frame.
    pub spurious_rate: f64,
    /// Width range of spurious spans, degrees.
    pub spurious_width_deg: [f64; 2],
    /// Standard deviation of a per-span bearing offset, degrees.
    pub jitter_deg: f64,
    /// Bins added to (or, when negative, removed from) each side of a span.
    pub dilation_bins: i32,
}

impl Default for ObservationNoise {
    fn default() -> Self {
        Self {
            dropout: 0.0,
            spurious_rate: 0.0,
            spurious_width_deg: [3.0, 15.0],
            jitter_deg: 0.0,
            dilation_bins: 0,
        }
    }
}

impl ObservationNoise {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(CompassError::InvalidConfig(format!("dropout must be in [0, 1], got {}", self.dropout)));
        }
        if !(self.spurious_rate >= 0.0) || !(self.jitter_deg >= 0.0) {
            return Err(CompassError::InvalidConfig("spurious rate and jitter must be non-negative".into()));
        }
        let [a, b] = self.spurious_width_deg;
        if !(a >= 0.0 && a <= b) {
            return Err(CompassError::InvalidConfig("spurious widths must satisfy 0 <= min <= max".into()));
        }
        Ok(())
    }

    fn is_zero(&self) -> bool {
        self.dropout == 0.0 && self.spurious_rate == 0.0 && self.jitter_deg == 0.0 && self.dilation_bins == 0
    }
}

/// Which channels a simulated observation carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    /// Hit-type only, like a camera-built descriptor.
    #[default]
    HitType,
    /// Noisy hit type plus exact geometric channels from the plan.
    AllChannels,
}

/// Circular runs of window bins as spans in descriptor-bin bearings.
pub fn window_spans(hit_row: &[f64]) -> Vec<AzimuthSpan> {
    let n = hit_row.len();
    let is_win = |j: usize| HitType::from_value(hit_row[j % n]) == HitType::Window;
    let bin = TAU / n as f64;
    if (0..n).all(is_win) {
        return vec![AzimuthSpan { start: 0.0, width: TAU }];
    }
    let Some(start) = (0..n).find(|&j| !is_win(j)) else {
        return Vec::new();
    };
    let mut spans = Vec::new();
    let mut j = start;
    while j < start + n {
        if is_win(j) {
            let a = j;
            while j < start + n && is_win(j) {
                j += 1;
            }
            spans.push(AzimuthSpan {
                start: normalize_angle((a as f64 - 0.5) * bin),
                width: (j - a) as f64 * bin,
            });
        } else {
            j += 1;
        }
    }
    spans
}

/// Simulated camera descriptor at `pose`: ray-cast hit types with open bins
/// read as wall, then span-level noise.
pub fn simulate_observation(
    raster: &FloorPlanRaster,
    pose: Pose2D,
    cfg: &RaycastConfig,
    noise: &ObservationNoise,
    mode: ObservationMode,
    rng: &mut ChaCha8Rng,
) -> Result<RadialDescriptor> {
    noise.validate()?;
    if raster.cell_at_world(pose.position()) != Cell::Free {
        return Err(CompassError::PoseInStructure { x: pose.t_x, y: pose.t_y });
    }
    let truth = compute_descriptor(raster, pose, cfg)?;
    let n = cfg.n_bins;
    let bin = TAU / n as f64;
    let row = if noise.is_zero() {
        truth
            .row(CH_HIT_TYPE)
            .iter()
            .map(|&v| if HitType::from_value(v) == HitType::Window { v } else { HitType::Wall.value() })
            .collect()
    } else {
        let mut spans = Vec::new();
        for s in window_spans(truth.row(CH_HIT_TYPE)) {
            if rng.random::<f64>() < noise.dropout {
                continue;
            }
            let mut s = s;
            if noise.jitter_deg > 0.0 {
                let off = Normal::new(0.0, noise.jitter_deg.to_radians()).expect("finite std").sample(rng);
                s.start = normalize_angle(s.start + off);
            }
            if noise.dilation_bins != 0 && s.width < TAU {
                let d = noise.dilation_bins as f64 * bin;
                let width = s.width + 2.0 * d;
                if width < 0.0 {
                    continue;
                }
                s = AzimuthSpan { start: normalize_angle(s.start - d), width: width.min(TAU) };
            }
            spans.push(s);
        }
        if noise.spurious_rate > 0.0 {
            let k = Poisson::new(noise.spurious_rate).expect("positive rate").sample(rng) as usize;
            let [a, b] = noise.spurious_width_deg;
            for _ in 0..k {
                let start = rng.random_range(0.0..TAU);
                let width = rng.random_range(a..=b).to_radians();
                spans.push(AzimuthSpan { start, width });
            }
        }
        spans_to_hit_type(&spans, n)
    };
    match mode {
        ObservationMode::HitType => RadialDescriptor::from_hit_type_row(row),
        ObservationMode::AllChannels => {
            let rows: [Vec<f64>; CHANNELS] =
                std::array::from_fn(|c| if c == CH_HIT_TYPE { row.clone() } else { truth.row(c).to_vec() });
            RadialDescriptor::from_rows(rows, ALL_CHANNELS)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub trials: usize,
    pub seed: u64,
    pub noise: ObservationNoise,
    pub mode: ObservationMode,
    /// Headings are multiples of the bin width; otherwise uniform in [0, 2π).
    pub bin_aligned_yaw: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            seed: 0,
            noise: ObservationNoise::default(),
            mode: ObservationMode::HitType,
            bin_aligned_yaw: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub true_cell: usize,
    pub true_pose: Pose2D,
    pub estimated_pose: Pose2D,
    /// 1-based rank of the true cell; `None` if the pre-filter removed it.
    pub rank: Option<usize>,
    pub yaw_error_deg: f64,
    pub position_error: f64,
    pub score: f64,
    /// Yaw error of the best shift at the true cell.
    pub true_cell_yaw_error_deg: f64,
    /// The noiseless hit-type row matches exactly one (cell, shift) pair.
    pub unique: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub trials: usize,
    pub unique_trials: usize,
    pub rank1_rate: f64,
    pub rank1_rate_unique: f64,
    pub yaw_within_0_5_rate: f64,
    pub yaw_within_2_rate: f64,
    pub true_cell_yaw_within_2_rate: f64,
    pub oracle_success_rate_unique: f64,
    pub median_yaw_error_deg: f64,
    pub median_position_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub records: Vec<TrialRecord>,
    pub summary: EvalSummary,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn yaw_diff_deg(a: f64, b: f64) -> f64 {
    let d = normalize_angle(a - b);
    d.min(TAU - d).to_degrees()
}

fn rate(records: &[&TrialRecord], pred: impl Fn(&TrialRecord) -> bool) -> f64 {
    if records.is_empty() {
        return f64::NAN;
    }
    records.iter().filter(|r| pred(r)).count() as f64 / records.len() as f64
}

impl EvalSummary {
    fn compute(records: &[TrialRecord]) -> Self {
        let all: Vec<&TrialRecord> = records.iter().collect();
        let unique: Vec<&TrialRecord> = records.iter().filter(|r| r.unique).collect();
        Self {
            trials: records.len(),
            unique_trials: unique.len(),
            rank1_rate: rate(&all, |r| r.rank == Some(1)),
            rank1_rate_unique: rate(&unique, |r| r.rank == Some(1)),
            yaw_within_0_5_rate: rate(&all, |r| r.yaw_error_deg < 0.5),
            yaw_within_2_rate: rate(&all, |r| r.yaw_error_deg < 2.0),
            true_cell_yaw_within_2_rate: rate(&all, |r| r.true_cell_yaw_error_deg < 2.0),
            oracle_success_rate_unique: rate(&unique, |r| r.rank == Some(1) && r.yaw_error_deg < 0.5),
            median_yaw_error_deg: median(records.iter().map(|r| r.yaw_error_deg).collect()),
            median_position_error: median(records.iter().map(|r| r.position_error).collect()),
        }
    }
}

/// Whether the noiseless hit-type row at `pose` scores ≥ 1 − 1e-9 for exactly
/// one (candidate, shift) pair.
fn hit_row_unique(query: &RadialDescriptor, db: &Database) -> Result<bool> {
    let cfg = MatchConfig::hit_type_only();
    let mut hits = 0;
    for e in &db.entries {
        let curve = correlation_curve(query, &e.descriptor, &cfg)?;
        hits += curve.iter().filter(|&&s| s >= 1.0 - 1e-9).count();
        if hits > 1 {
            return Ok(false);
        }
    }
    Ok(hits == 1)
}

/// Samples database cells and headings, simulates observations and matches
/// them. Each trial draws from its own stream of the master seed, so results
/// do not depend on scheduling.
pub fn run_localization_eval(
    raster: &FloorPlanRaster,
    db: &Database,
    match_cfg: &MatchConfig,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if db.is_empty() {
        return Err(CompassError::EmptyDatabase);
    }
    cfg.noise.validate()?;
    match_cfg.validate()?;
    let n = db.n_bins();
    let bin = TAU / n as f64;
    let records = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(trial as u64);
            let cell = rng.random_range(0..db.len());
            let [x, y] = db.entries[cell].position;
            let yaw = if cfg.bin_aligned_yaw {
                db.grid.yaw_anchor + bin * rng.random_range(0..n) as f64
            } else {
                rng.random_range(0.0..TAU)
            };
            let pose = Pose2D::new(x, y, yaw);
            let noiseless = simulate_observation(raster, pose, &db.cfg, &ObservationNoise::none(), ObservationMode::HitType, &mut rng)?;
            let unique = hit_row_unique(&noiseless, db)?;
            let query = simulate_observation(raster, pose, &db.cfg, &cfg.noise, cfg.mode, &mut rng)?;
            let ranking = match score_all(&query, db, match_cfg) {
                Ok(r) => r,
                Err(CompassError::EmptyAfterFilter { .. }) => Vec::new(),
                Err(e) => return Err(e),
            };
            let rank = ranking.iter().position(|r| r.candidate_index == cell).map(|i| i + 1);
            let true_curve = correlation_curve(&query, &db.entries[cell].descriptor, match_cfg)?;
            let (true_shift, _) = crate::matching::argmax_first(&true_curve);
            let true_cell_yaw = db.grid.yaw_anchor + bin * true_shift as f64;
            let (estimated_pose, score) = match ranking.first() {
                Some(top) => (Pose2D::new(top.position[0], top.position[1], top.yaw_estimate), top.score),
                None => (Pose2D::new(f64::NAN, f64::NAN, f64::NAN), f64::NAN),
            };
            Ok(TrialRecord {
                trial,
                true_cell: cell,
                true_pose: pose,
                estimated_pose,
                rank,
                yaw_error_deg: if estimated_pose.psi.is_nan() { 180.0 } else { yaw_diff_deg(estimated_pose.psi, yaw) },
                position_error: if estimated_pose.t_x.is_nan() {
                    f64::INFINITY
                } else {
                    (estimated_pose.t_x - x).hypot(estimated_pose.t_y - y)
                },
                score,
                true_cell_yaw_error_deg: yaw_diff_deg(true_cell_yaw, yaw),
                unique,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = EvalSummary::compute(&records);
    Ok(EvalReport { config: *cfg, records, summary })
}

impl EvalReport {
    pub const CSV_COLUMNS: &'static str = "trial,true_cell,true_x,true_y,true_yaw_deg,est_x,est_y,est_yaw_deg,rank,yaw_error_deg,position_error_m,score,true_cell_yaw_error_deg,unique";

    /// Per-trial rows; floats at fixed precision so equal reports give equal bytes.
    pub fn to_csv(&self, header_comment: &str) -> String {
        let mut out = String::new();
        for line in header_comment.lines() {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "{}", Self::CSV_COLUMNS);
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6},{:.6},{:.9},{:.6},{}",
                r.trial,
                r.true_cell,
                r.true_pose.t_x,
                r.true_pose.t_y,
                r.true_pose.psi.to_degrees(),
                r.estimated_pose.t_x,
                r.estimated_pose.t_y,
                r.estimated_pose.psi.to_degrees(),
                r.rank.map_or("NA".to_string(), |k| k.to_string()),
                r.yaw_error_deg,
                r.position_error,
                r.score,
                r.true_cell_yaw_error_deg,
                r.unique as u8,
            );
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        let _ = writeln!(out, "trials: {} ({} unique)", s.trials, s.unique_trials);
        let _ = writeln!(out, "rank-1 rate: {:.4} (unique: {:.4})", s.rank1_rate, s.rank1_rate_unique);
        let _ = writeln!(out, "yaw error < 0.5 deg: {:.4}", s.yaw_within_0_5_rate);
        let _ = writeln!(out, "yaw error < 2 deg: {:.4}", s.yaw_within_2_rate);
        let _ = writeln!(out, "true-cell yaw error < 2 deg: {:.4}", s.true_cell_yaw_within_2_rate);
        let _ = writeln!(out, "unique poses at rank 1 with yaw < 0.5 deg: {:.4}", s.oracle_success_rate_unique);
        let _ = writeln!(out, "median yaw error: {:.4} deg", s.median_yaw_error_deg);
        let _ = writeln!(out, "median position error: {:.4} m", s.median_position_error);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttitudeScene {
    pub roll: f64,
    pub pitch: f64,
    pub n_vertical: usize,
    pub n_horizontal: usize,
    /// Share of random segments in the final set.
    pub outlier_fraction: f64,
    /// Gaussian endpoint noise, pixels.
    pub pixel_noise: f64,
    pub min_pixel_length: f64,
}

impl Default for AttitudeScene {
    fn default() -> Self {
        Self {
            roll: 0.0,
            pitch: 0.0,
            n_vertical: 60,
            n_horizontal: 30,
            outlier_fraction: 0.0,
            pixel_noise: 0.0,
            min_pixel_length: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SegmentLabel {
    Vertical,
    Horizontal,
    Outlier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSegments {
    pub segments: Vec<LineSegment>,
    pub labels: Vec<SegmentLabel>,
    pub gravity: [f64; 3],
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn in_image(cam: &CameraModel, p: [f64; 2]) -> bool {
    let [w, h] = cam.image_size.map(f64::from);
    p[0] >= 0.0 && p[1] >= 0.0 && p[0] < w && p[1] < h
}

/// Projected segment of a 3D line through a random visible point.
fn line_segment_along(cam: &CameraModel, d: [f64; 3], spec: &AttitudeScene, rng: &mut ChaCha8Rng) -> Option<LineSegment> {
    let noise = Normal::new(0.0, spec.pixel_noise.max(0.0)).expect("finite std");
    for _ in 0..200 {
        let theta = rng.random_range(0.0..0.85 * cam.theta_max.min(1.5));
        let phi = rng.random_range(0.0..TAU);
        let dist = rng.random_range(2.0..6.0);
        let half = rng.random_range(0.3..1.5);
        let u = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
        let e = |s: f64| unit([dist * u[0] + s * d[0], dist * u[1] + s * d[1], dist * u[2] + s * d[2]]);
        let (Ok(a), Ok(b)) = (cam.project(e(-half)), cam.project(e(half))) else {
            continue;
        };
        if !in_image(cam, a) || !in_image(cam, b) {
            continue;
        }
        let jit = |p: [f64; 2], rng: &mut ChaCha8Rng| {
            if spec.pixel_noise > 0.0 {
                [p[0] + noise.sample(rng), p[1] + noise.sample(rng)]
            } else {
                p
            }
        };
        let seg = LineSegment::new(jit(a, rng), jit(b, rng));
        if seg.length() >= spec.min_pixel_length {
            return Some(seg);
        }
    }
    None
}

/// Segments of vertical and two horizontal line families for a camera with
/// the given roll and pitch, plus random outliers.
pub fn attitude_scene(cam: &CameraModel, spec: &AttitudeScene, rng: &mut ChaCha8Rng) -> SceneSegments {
    let g = gravity_from_roll_pitch(spec.roll, spec.pitch);
    let seed_axis = if g[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let h1 = unit([
        g[1] * seed_axis[2] - g[2] * seed_axis[1],
        g[2] * seed_axis[0] - g[0] * seed_axis[2],
        g[0] * seed_axis[1] - g[1] * seed_axis[0],
    ]);
    let h2 = [
        g[1] * h1[2] - g[2] * h1[1],
        g[2] * h1[0] - g[0] * h1[2],
        g[0] * h1[1] - g[1] * h1[0],
    ];
    let a = rng.random_range(0.0..TAU);
    let (s, c) = a.sin_cos();
    let dirs = [
        [c * h1[0] + s * h2[0], c * h1[1] + s * h2[1], c * h1[2] + s * h2[2]],
        [-s * h1[0] + c * h2[0], -s * h1[1] + c * h2[1], -s * h1[2] + c * h2[2]],
    ];
    let mut segments = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..spec.n_vertical {
        if let Some(seg) = line_segment_along(cam, g, spec, rng) {
            segments.push(seg);
            labels.push(SegmentLabel::Vertical);
        }
    }
    for k in 0..spec.n_horizontal {
        if let Some(seg) = line_segment_along(cam, dirs[k % 2], spec, rng) {
            segments.push(seg);
            labels.push(SegmentLabel::Horizontal);
        }
    }
    let f = spec.outlier_fraction.clamp(0.0, 0.95);
    let n_out = (f / (1.0 - f) * segments.len() as f64).round() as usize;
    let r_max = 0.9 * cam.fov_radius();
    let mut added = 0;
    while added < n_out {
        let r = r_max * rng.random::<f64>().sqrt();
        let t = rng.random_range(0.0..TAU);
        let p = [cam.principal_point[0] + r * t.cos(), cam.principal_point[1] + r * t.sin()];
        let len = rng.random_range(30.0..200.0);
        let dir = rng.random_range(0.0..TAU);
        let q = [p[0] + len * dir.cos(), p[1] + len * dir.sin()];
        if in_image(cam, p) && in_image(cam, q) {
            segments.push(LineSegment::new(p, q));
            labels.push(SegmentLabel::Outlier);
            added += 1;
        }
    }
    SceneSegments { segments, labels, gravity: g }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowCorpusSpec {
    pub width: u32,
    pub height: u32,
    pub min_windows: usize,
    pub max_windows: usize,
    pub distractors: usize,
}

impl Default for WindowCorpusSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            min_windows: 2,
            max_windows: 4,
            distractors: 8,
        }
    }
}

/// One synthetic frame: bright textured rectangles on a textured dark wall,
/// with thin line distractors kept off the windows. Returns ground-truth boxes.
pub fn window_corpus_image(spec: &WindowCorpusSpec, seed: u64) -> (GrayImage, Vec<[f64; 4]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (spec.width as i64, spec.height as i64);
    let wall_base = rng.random_range(35.0..85.0);
    let tex = Normal::new(0.0, 5.0).expect("finite std");
    let mut img: Vec<f64> = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            wall_base + 6.0 * (x / 37.0).sin() * (y / 53.0).cos() + tex.sample(&mut rng)
        })
        .collect();

    let band_top = rng.random_range(h as f64 * 0.2..h as f64 * 0.35) as i64;
    let band_h = rng.random_range(h as f64 * 0.25..h as f64 * 0.4) as i64;
    let n_win = rng.random_range(spec.min_windows..=spec.max_windows);
    let mut boxes: Vec<[i64; 4]> = Vec::new();
    let slot = (w - 40) / n_win as i64;
    for k in 0..n_win as i64 {
        let bw = rng.random_range(45..(slot - 35).clamp(46, 130));
        let x0 = 20 + k * slot + rng.random_range(0..=(slot - bw - 30).max(0));
        let y0 = band_top + rng.random_range(-8..=8);
        let bh = band_h + rng.random_range(-10..=10);
        boxes.push([x0, y0, bw, bh]);
    }
    let glass = Normal::new(0.0, 9.0).expect("finite std");
    for b in &boxes {
        let level = rng.random_range(170.0..225.0);
        let tilt = rng.random_range(-0.15..0.15);
        for y in b[1]..b[1] + b[3] {
            for x in b[0]..b[0] + b[2] {
                img[(y * w + x) as usize] = level + tilt * (y - b[1]) as f64 + glass.sample(&mut rng);
            }
        }
    }

    let near_window = |x: f64, y: f64| {
        boxes.iter().any(|b| {
            x > (b[0] - 14) as f64 && x < (b[0] + b[2] + 14) as f64 && y > (b[1] - 14) as f64 && y < (b[1] + b[3] + 14) as f64
        })
    };
    let mut placed = 0;
    let mut attempts = 0;
    while placed < spec.distractors && attempts < 1000 {
        attempts += 1;
        let kind = rng.random_range(0..3);
        let x0 = rng.random_range(0.0..w as f64);
        let y0 = rng.random_range(0.0..h as f64);
        let (len, ang) = match kind {
            0 => (rng.random_range(20.0..90.0), std::f64::consts::FRAC_PI_2),
            1 => (rng.random_range(60.0..300.0), 0.0),
            _ => (rng.random_range(30.0..120.0), rng.random_range(0.3..1.2)),
        };
        let (x1, y1) = (x0 + len * ang.cos(), y0 + len * ang.sin());
        let steps = (len * 2.0) as usize;
        let pts: Vec<(f64, f64)> = (0..=steps)
            .map(|i| {
                let t = i as f64 / steps as f64;
                (x0 + t * (x1 - x0), y0 + t * (y1 - y0))
            })
            .collect();
        if pts.iter().any(|&(x, y)| near_window(x, y) || x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64) {
            continue;
        }
        let level = wall_base + rng.random_range(25.0..60.0);
        let thick = rng.random_range(1..=2);
        for (x, y) in pts {
            for dy in 0..thick {
                for dx in 0..thick {
                    let (px, py) = (x as i64 + dx, y as i64 + dy);
                    if px < w && py < h {
                        img[(py * w + px) as usize] = level;
                    }
                }
            }
        }
        placed += 1;
    }

    let gray = GrayImage::from_fn(spec.width, spec.height, |x, y| {
        Luma([img[(y as i64 * w + x as i64) as usize].round().clamp(0.0, 255.0) as u8])
    });
    let truth = boxes.iter().map(|b| [b[0] as f64, b[1] as f64, b[2] as f64, b[3] as f64]).collect();
    (gray, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::database::{build_database, Clearance};
    use crate::matching::MatchConfig;

    fn small() -> SynthPlanSpec {
        SynthPlanSpec {
            width: 10.0,
            height: 8.0,
            max_depth: 1,
            ..SynthPlanSpec::default()
        }
    }

    #[test]
    fn single_room_without_windows_is_a_wall_rectangle() {
        let spec = SynthPlanSpec { max_depth: 0, window_fraction: 0.0, ..small() };
        let r = generate_plan(&spec, 1).unwrap();
        assert_eq!(r.count(Cell::Window), 0);
        // 4 px thick border around a 200 x 160 raster
        assert_eq!(r.count(Cell::Wall), 200 * 160 - 192 * 152);
        assert_eq!(r.cell(0, 0), Cell::Wall);
        assert_eq!(r.cell(100, 80), Cell::Free);
    }

    #[test]
    fn plans_are_deterministic() {
        assert_eq!(generate_plan(&SynthPlanSpec::default(), 5).unwrap(), generate_plan(&SynthPlanSpec::default(), 5).unwrap());
        assert_ne!(generate_plan(&SynthPlanSpec::default(), 5).unwrap(), generate_plan(&SynthPlanSpec::default(), 6).unwrap());
    }

    #[test]
    fn facade_window_fraction() {
        let spec = SynthPlanSpec { width: 20.0, height: 8.0, max_depth: 0, window_fraction: 0.3, ..SynthPlanSpec::default() };
        for seed in 0..10 {
            let r = generate_plan(&spec, seed).unwrap();
            // bottom facade: last pixel row
            let row = r.height() - 1;
            let painted = (0..r.width()).filter(|&c| r.cell(c, row) == Cell::Window).count() as f64 * spec.resolution;
            assert!((painted - 6.0).abs() <= spec.max_window_width + spec.resolution, "seed {seed}: {painted}");
        }
    }

    #[test]
    fn infeasible_windows() {
        let spec = SynthPlanSpec { width: 2.0, height: 2.0, max_depth: 0, max_window_width: 3.0, min_room: 1.5, ..SynthPlanSpec::default() };
        assert!(matches!(generate_plan(&spec, 0), Err(CompassError::InfeasiblePlan(_))));
        let bad = SynthPlanSpec { window_fraction: 1.5, ..SynthPlanSpec::default() };
        assert!(matches!(generate_plan(&bad, 0), Err(CompassError::InvalidConfig(_))));
    }

    #[test]
    fn window_spans_round_trip() {
        let mut row = vec![1.0; 360];
        for j in (10..20).chain(350..360).chain(0..3) {
            row[j] = 0.5;
        }
        let spans = window_spans(&row);
        assert_eq!(spans.len(), 2);
        assert_eq!(spans_to_hit_type(&spans, 360), row);
    }

    fn cfg() -> RaycastConfig {
        RaycastConfig::default()
    }

    #[test]
    fn noiseless_observation_matches_plan_row() {
        let r = generate_plan(&small(), 2).unwrap();
        let pose = Pose2D::new(3.1, 4.2, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = simulate_observation(&r, pose, &cfg(), &ObservationNoise::none(), ObservationMode::HitType, &mut rng).unwrap();
        let truth = compute_descriptor(&r, pose, &cfg()).unwrap();
        let expect: Vec<f64> = truth.row(CH_HIT_TYPE).iter().map(|&v| if v == 0.0 { 1.0 } else { v }).collect();
        assert_eq!(obs.row(CH_HIT_TYPE), &expect[..]);
        assert_eq!(obs.active(), crate::descriptor::HIT_TYPE_ONLY);
    }

    #[test]
    fn full_dropout_gives_wall_row() {
        let r = generate_plan(&small(), 2).unwrap();
        let noise = ObservationNoise { dropout: 1.0, ..ObservationNoise::none() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = simulate_observation(&r, Pose2D::new(3.1, 4.2, 0.0), &cfg(), &noise, ObservationMode::HitType, &mut rng).unwrap();
        assert!(obs.row(CH_HIT_TYPE).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn pose_in_wall_is_rejected() {
        let r = generate_plan(&small(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            simulate_observation(&r, Pose2D::new(0.05, 4.0, 0.0), &cfg(), &ObservationNoise::none(), ObservationMode::HitType, &mut rng),
            Err(CompassError::PoseInStructure { .. })
        ));
    }

    #[test]
    fn jitter_keeps_window_bins_close() {
        let r = generate_plan(&small(), 2).unwrap();
        let pose = Pose2D::new(3.1, 4.2, 0.0);
        let clean = compute_descriptor(&r, pose, &cfg()).unwrap();
        let clean_win: Vec<usize> = (0..360).filter(|&j| clean.row(CH_HIT_TYPE)[j] == 0.5).collect();
        assert!(!clean_win.is_empty());
        let noise = ObservationNoise { jitter_deg: 1.0, ..ObservationNoise::none() };
        let (mut near, mut total) = (0, 0);
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let obs = simulate_observation(&r, pose, &cfg(), &noise, ObservationMode::HitType, &mut rng).unwrap();
            for j in (0..360).filter(|&j| obs.row(CH_HIT_TYPE)[j] == 0.5) {
                total += 1;
                let d = clean_win.iter().map(|&k| { let d = j.abs_diff(k); d.min(360 - d) }).min().unwrap();
                if d <= 2 {
                    near += 1;
                }
            }
        }
        assert!(near as f64 >= 0.98 * total as f64, "{near}/{total}");
    }

    #[test]
    fn eval_is_deterministic_and_oracle_holds() {
        let r = generate_plan(&small(), 3).unwrap();
        let db = build_database(&r, 1.0, 0.0, &cfg(), &Clearance::default()).unwrap();
        let ecfg = EvalConfig { trials: 30, seed: 11, ..EvalConfig::default() };
        let a = run_localization_eval(&r, &db, &MatchConfig::hit_type_only(), &ecfg).unwrap();
        let b = run_localization_eval(&r, &db, &MatchConfig::hit_type_only(), &ecfg).unwrap();
        assert_eq!(a.to_csv("x"), b.to_csv("x"));
        for rec in a.records.iter().filter(|r| r.unique) {
            assert_eq!(rec.rank, Some(1));
            assert!((rec.score - 1.0).abs() < 1e-9);
            assert!(rec.yaw_error_deg < 0.5);
        }
        assert!(a.summary.unique_trials > 0);
    }

    #[test]
    fn attitude_scene_has_requested_outlier_share() {
        let cam = CameraModel::equidistant(300.0, 1000, 1000);
        let spec = AttitudeScene { outlier_fraction: 0.2, ..AttitudeScene::default() };
        let s = attitude_scene(&cam, &spec, &mut ChaCha8Rng::seed_from_u64(1));
        let out = s.labels.iter().filter(|&&l| l == SegmentLabel::Outlier).count() as f64;
        assert!((out / s.segments.len() as f64 - 0.2).abs() < 0.02);
        assert!(s.labels.iter().filter(|&&l| l == SegmentLabel::Vertical).count() >= 55);
    }

    #[test]
    fn corpus_is_deterministic() {
        let spec = WindowCorpusSpec::default();
        let (a, ta) = window_corpus_image(&spec, 4);
        let (b, tb) = window_corpus_image(&spec, 4);
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert!((2..=4).contains(&ta.len()));
    }
}
