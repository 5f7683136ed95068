//! Segment-first window detection on grayscale fisheye frames.
//!
//! Stages: edge-drawing line segments → window band → vertical edge clusters
//! → cluster pairing and photometric verification → suppression and filters.
//! All image coordinates use the pixel-corner convention: pixel `(i, j)`
//! covers `[i, i+1) × [j, j+1)`.

use std::path::Path;

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{CompassError, Result};
use crate::fisheye::CameraModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    pub p1: [f64; 2],
    pub p2: [f64; 2],
}

impl LineSegment {
    pub fn new(p1: [f64; 2], p2: [f64; 2]) -> Self {
        Self { p1, p2 }
    }

    pub fn length(&self) -> f64 {
        (self.p2[0] - self.p1[0]).hypot(self.p2[1] - self.p1[1])
    }

    /// Angle from the image horizontal in `[0, π/2]`.
    pub fn angle_from_horizontal(&self) -> f64 {
        let dx = (self.p2[0] - self.p1[0]).abs();
        let dy = (self.p2[1] - self.p1[1]).abs();
        dy.atan2(dx)
    }

    pub fn midpoint(&self) -> [f64; 2] {
        [
            (self.p1[0] + self.p2[0]) / 2.0,
            (self.p1[1] + self.p2[1]) / 2.0,
        ]
    }

    pub fn y_range(&self) -> [f64; 2] {
        [self.p1[1].min(self.p2[1]), self.p1[1].max(self.p2[1])]
    }
}

/// Rows `[y_top, y_bot]` where windows concentrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowBand {
    pub y_top: usize,
    pub y_bot: usize,
}

impl WindowBand {
    pub fn contains(&self, y: f64) -> bool {
        y >= self.y_top as f64 && y <= self.y_bot as f64 + 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCluster {
    /// Indices into the segment list.
    pub members: Vec<usize>,
    /// Mean midpoint x of the members.
    pub x: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl EdgeCluster {
    fn overlap(&self, y: [f64; 2]) -> f64 {
        self.y_max.min(y[1]) - self.y_min.max(y[0])
    }

    pub fn extent(&self) -> f64 {
        self.y_max - self.y_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowDetection {
    /// `(b_x, b_y, b_w, b_h)` in pixels.
    pub bbox: [f64; 4],
    pub brightness_score: f64,
    pub contrast_score: f64,
    pub texture_score: f64,
    pub camera_id: String,
    /// Segments of the two edge clusters that formed this detection.
    #[serde(default)]
    pub segment_indices: Vec<usize>,
}

impl WindowDetection {
    pub fn new(camera_id: &str, bbox: [f64; 4]) -> Self {
        Self {
            bbox,
            brightness_score: 0.0,
            contrast_score: 0.0,
            texture_score: 0.0,
            camera_id: camera_id.to_string(),
            segment_indices: Vec::new(),
        }
    }

    pub fn center(&self) -> [f64; 2] {
        [self.bbox[0] + self.bbox[2] / 2.0, self.bbox[1] + self.bbox[3] / 2.0]
    }
}

/// Intersection over union of two `(x, y, w, h)` boxes.
pub fn iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let ix = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let iy = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a[2] * a[3] + b[2] * b[3] - inter)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    /// Segments shorter than this are dropped, pixels.
    pub min_length: f64,
    /// Gradient magnitude (intensity levels per pixel) a pixel needs to join a chain.
    pub gradient_threshold: f64,
    /// Anchors need this magnitude.
    pub anchor_threshold: f64,
    /// Gaussian pre-smoothing, pixels.
    pub blur_sigma: f64,
    /// A chain is split where a point deviates more than this from its fitted line.
    pub max_deviation: f64,
    /// Collinear pieces whose facing ends are closer than this are joined, pixels.
    pub merge_gap: f64,
    /// Largest direction difference for joining, radians.
    pub merge_angle: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            min_length: 20.0,
            gradient_threshold: 8.0,
            anchor_threshold: 16.0,
            blur_sigma: 1.0,
            max_deviation: 1.5,
            merge_gap: 6.0,
            merge_angle: 3f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandConfig {
    /// Pixels above this brightness percentile count as bright.
    pub brightness_percentile: f64,
    /// Moving-average window, rows.
    pub smoothing_rows: usize,
    /// Rows scoring above this fraction of the maximum form the band.
    pub threshold_fraction: f64,
    /// Shorter runs trigger the fallback band.
    pub min_rows: usize,
    /// Fallback band as fractions of the image height.
    pub fallback: [f64; 2],
    /// Segments steeper than this count toward vertical density, radians.
    pub vertical_angle: f64,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            brightness_percentile: 85.0,
            smoothing_rows: 31,
            threshold_fraction: 0.5,
            min_rows: 20,
            fallback: [0.2, 0.8],
            vertical_angle: 30f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    /// Segments must be steeper than this, radians.
    pub min_angle: f64,
    pub min_length: f64,
    /// Maximum horizontal distance to a cluster, pixels.
    pub gap: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            min_angle: 30f64.to_radians(),
            min_length: 20.0,
            gap: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub min_separation: f64,
    pub max_separation: f64,
    /// Shared vertical extent over the shorter cluster extent.
    pub min_overlap_ratio: f64,
    /// Interior mean must exceed the flanking wall mean by this (0–255 scale).
    pub contrast_margin: f64,
    /// Interior standard deviation floor.
    pub texture_floor: f64,
    /// Interiors brighter than this pass without the texture test.
    pub bright_sky: f64,
    /// Width of the wall strips sampled beside the box, pixels.
    pub wall_strip: usize,
    /// Pixels skipped between the box edge and a wall strip, and inset of the interior.
    pub edge_margin: usize,
    /// Reject boxes whose interior contains a contiguous run of wall-dark
    /// columns at least this long relative to the box width...
    pub max_dark_run_fraction: f64,
    /// ...and at least this many pixels.
    pub min_dark_run: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            min_separation: 20.0,
            max_separation: 400.0,
            min_overlap_ratio: 0.4,
            contrast_margin: 20.0,
            texture_floor: 8.0,
            bright_sky: 200.0,
            wall_strip: 12,
            edge_margin: 3,
            max_dark_run_fraction: 0.08,
            min_dark_run: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub iou_threshold: f64,
    /// Boxes centered beyond this fraction of the field-of-view radius are dropped.
    pub periphery_factor: f64,
    /// Red dominance ratio over green and blue.
    pub red_ratio: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.4,
            periphery_factor: 0.92,
            red_ratio: 1.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct DetectorConfig {
    pub segments: SegmentConfig,
    pub band: BandConfig,
    pub cluster: ClusterConfig,
    pub verify: VerifyConfig,
    pub filter: FilterConfig,
}

/// Float image with a border-clamped accessor.
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Plane {
    fn from_gray(img: &GrayImage) -> Self {
        Self {
            w: img.width() as usize,
            h: img.height() as usize,
            data: img.as_raw().iter().map(|&v| v as f32).collect(),
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.w + x]
    }

    fn gaussian(&self, sigma: f64) -> Plane {
        if sigma <= 0.0 {
            return Plane { w: self.w, h: self.h, data: self.data.clone() };
        }
        let r = (3.0 * sigma).ceil() as i64;
        let kernel: Vec<f32> = (-r..=r)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp() as f32)
            .collect();
        let ksum: f32 = kernel.iter().sum();
        let (w, h) = (self.w as i64, self.h as i64);
        let pass = |src: &[f32], horizontal: bool| -> Vec<f32> {
            let mut out = vec![0.0f32; src.len()];
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (k, kv) in kernel.iter().enumerate() {
                        let o = k as i64 - r;
                        let (sx, sy) = if horizontal {
                            ((x + o).clamp(0, w - 1), y)
                        } else {
                            (x, (y + o).clamp(0, h - 1))
                        };
                        acc += kv * src[(sy * w + sx) as usize];
                    }
                    out[(y * w + x) as usize] = acc / ksum;
                }
            }
            out
        };
        let tmp = pass(&self.data, true);
        Plane { w: self.w, h: self.h, data: pass(&tmp, false) }
    }
}

/// Sobel gradients divided by 8, so a unit-slope ramp has magnitude 1.
struct Gradient {
    w: usize,
    h: usize,
    mag: Vec<f32>,
    /// `true` where |gx| ≥ |gy| (edge runs vertically).
    vertical: Vec<bool>,
}

impl Gradient {
    fn compute(p: &Plane) -> Self {
        let (w, h) = (p.w, p.h);
        let mut mag = vec![0.0f32; w * h];
        let mut vertical = vec![false; w * h];
        for y in 1..h.saturating_sub(1) {
            for x in 1..w.saturating_sub(1) {
                let gx = (p.at(x + 1, y - 1) + 2.0 * p.at(x + 1, y) + p.at(x + 1, y + 1))
                    - (p.at(x - 1, y - 1) + 2.0 * p.at(x - 1, y) + p.at(x - 1, y + 1));
                let gy = (p.at(x - 1, y + 1) + 2.0 * p.at(x, y + 1) + p.at(x + 1, y + 1))
                    - (p.at(x - 1, y - 1) + 2.0 * p.at(x, y - 1) + p.at(x + 1, y - 1));
                let i = y * w + x;
                mag[i] = (gx * gx + gy * gy).sqrt() / 8.0;
                vertical[i] = gx.abs() >= gy.abs();
            }
        }
        Self { w, h, mag, vertical }
    }

    #[inline]
    fn m(&self, x: usize, y: usize) -> f32 {
        self.mag[y * self.w + x]
    }

    fn is_anchor(&self, x: usize, y: usize, threshold: f32) -> bool {
        if x == 0 || y == 0 || x + 1 >= self.w || y + 1 >= self.h {
            return false;
        }
        let m = self.m(x, y);
        if m < threshold {
            return false;
        }
        if self.vertical[y * self.w + x] {
            m > self.m(x - 1, y) && m >= self.m(x + 1, y)
        } else {
            m > self.m(x, y - 1) && m >= self.m(x, y + 1)
        }
    }

    /// Sub-pixel ridge position across the edge, in pixel-corner coordinates.
    fn refine(&self, x: usize, y: usize) -> [f64; 2] {
        let parabola = |a: f32, b: f32, c: f32| {
            let denom = a - 2.0 * b + c;
            if denom.abs() < 1e-6 {
                0.0
            } else {
                (0.5 * (a - c) / denom).clamp(-0.5, 0.5) as f64
            }
        };
        let (mut fx, mut fy) = (x as f64 + 0.5, y as f64 + 0.5);
        if x == 0 || y == 0 || x + 1 >= self.w || y + 1 >= self.h {
            return [fx, fy];
        }
        if self.vertical[y * self.w + x] {
            fx += parabola(self.m(x - 1, y), self.m(x, y), self.m(x + 1, y));
        } else {
            fy += parabola(self.m(x, y - 1), self.m(x, y), self.m(x, y + 1));
        }
        [fx, fy]
    }
}

const DIRS: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

fn trace(
    g: &Gradient,
    visited: &mut [bool],
    start: (usize, usize),
    mut dir: usize,
    threshold: f32,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let (mut x, mut y) = (start.0 as i64, start.1 as i64);
    loop {
        let mut best: Option<(f32, usize, i64, i64)> = None;
        for turn in [0usize, 1, 7] {
            let d = (dir + turn) % 8;
            let (nx, ny) = (x + DIRS[d].0, y + DIRS[d].1);
            if nx < 1 || ny < 1 || nx >= g.w as i64 - 1 || ny >= g.h as i64 - 1 {
                continue;
            }
            let i = ny as usize * g.w + nx as usize;
            if visited[i] || g.mag[i] < threshold {
                continue;
            }
            if best.is_none_or(|b| g.mag[i] > b.0) {
                best = Some((g.mag[i], d, nx, ny));
            }
        }
        let Some((_, d, nx, ny)) = best else { break };
        dir = d;
        x = nx;
        y = ny;
        mark(g, visited, x as usize, y as usize, dir);
        out.push((x as usize, y as usize));
    }
    out
}

/// Marks a chain pixel and its two neighbors across the travel direction.
fn mark(g: &Gradient, visited: &mut [bool], x: usize, y: usize, dir: usize) {
    visited[y * g.w + x] = true;
    for side in [2usize, 6] {
        let (dx, dy) = DIRS[(dir + side) % 8];
        let (sx, sy) = (x as i64 + dx, y as i64 + dy);
        if sx >= 0 && sy >= 0 && (sx as usize) < g.w && (sy as usize) < g.h {
            visited[sy as usize * g.w + sx as usize] = true;
        }
    }
}

/// Total least-squares line through points: (centroid, unit direction).
fn fit_line(pts: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p[0] - cx, p[1] - cy);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    ([cx, cy], [angle.cos(), angle.sin()])
}

/// Index of the point farthest from the first-to-last chord, or from the
/// first point when the chain closes on itself.
fn farthest_from_chord(pts: &[[f64; 2]]) -> usize {
    let (a, b) = (pts[0], pts[pts.len() - 1]);
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = dx.hypot(dy);
    let dist = |p: &[f64; 2]| {
        if len < 1.0 {
            (p[0] - a[0]).hypot(p[1] - a[1])
        } else {
            ((p[0] - a[0]) * dy - (p[1] - a[1]) * dx).abs() / len
        }
    };
    let mut best = (0, f64::MIN);
    for (i, p) in pts.iter().enumerate() {
        let d = dist(p);
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

fn split_fit(pts: &[[f64; 2]], cfg: &SegmentConfig, out: &mut Vec<LineSegment>) {
    if pts.len() < 2 {
        return;
    }
    let (lo, hi) = pts.iter().fold(([f64::MAX; 2], [f64::MIN; 2]), |(lo, hi), p| {
        ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
    });
    if (hi[0] - lo[0]).hypot(hi[1] - lo[1]) + 1.0 < cfg.min_length {
        return;
    }
    let (c, d) = fit_line(pts);
    let dev = |p: &[f64; 2]| ((p[0] - c[0]) * d[1] - (p[1] - c[1]) * d[0]).abs();
    let max_dev = pts.iter().map(dev).fold(0.0, f64::max);
    if max_dev > cfg.max_deviation && pts.len() > 2 {
        let cut = farthest_from_chord(pts).clamp(1, pts.len() - 2);
        split_fit(&pts[..cut], cfg, out);
        split_fit(&pts[cut..], cfg, out);
        return;
    }
    let project = |p: &[f64; 2]| {
        let t = (p[0] - c[0]) * d[0] + (p[1] - c[1]) * d[1];
        [c[0] + t * d[0], c[1] + t * d[1]]
    };
    let seg = LineSegment::new(project(&pts[0]), project(&pts[pts.len() - 1]));
    if seg.length() >= cfg.min_length {
        out.push(seg);
    }
}

/// Simplified edge-drawing segment detector. Deterministic for a given input.
pub fn detect_segments(image: &GrayImage, cfg: &SegmentConfig) -> Vec<LineSegment> {
    let plane = Plane::from_gray(image).gaussian(cfg.blur_sigma);
    let g = Gradient::compute(&plane);
    let (w, h) = (g.w, g.h);
    let mut anchors: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| g.is_anchor(x, y, cfg.anchor_threshold as f32))
        .collect();
    anchors.sort_by(|a, b| g.m(b.0, b.1).total_cmp(&g.m(a.0, a.1)).then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0)));

    let threshold = cfg.gradient_threshold as f32;
    let mut visited = vec![false; w * h];
    let mut segments = Vec::new();
    for (ax, ay) in anchors {
        if visited[ay * w + ax] {
            continue;
        }
        // walk along the edge: vertical edges go up/down, horizontal left/right
        let (fwd, back) = if g.vertical[ay * w + ax] { (2, 6) } else { (0, 4) };
        mark(&g, &mut visited, ax, ay, fwd);
        let mut chain = trace(&g, &mut visited, (ax, ay), back, threshold);
        chain.reverse();
        chain.push((ax, ay));
        chain.extend(trace(&g, &mut visited, (ax, ay), fwd, threshold));
        let pts: Vec<[f64; 2]> = chain.iter().map(|&(x, y)| g.refine(x, y)).collect();
        split_fit(&pts, cfg, &mut segments);
    }
    merge_collinear(segments, cfg)
}

/// Joins pieces of one edge that tracing or splitting broke apart.
fn merge_collinear(mut segs: Vec<LineSegment>, cfg: &SegmentConfig) -> Vec<LineSegment> {
    let joinable = |a: &LineSegment, b: &LineSegment| -> Option<LineSegment> {
        let da = [a.p2[0] - a.p1[0], a.p2[1] - a.p1[1]];
        let db = [b.p2[0] - b.p1[0], b.p2[1] - b.p1[1]];
        let (la, lb) = (a.length(), b.length());
        let cos = ((da[0] * db[0] + da[1] * db[1]) / (la * lb)).abs();
        if cos < cfg.merge_angle.cos() {
            return None;
        }
        // farthest pair of endpoints spans the joined segment
        let ends = [a.p1, a.p2, b.p1, b.p2];
        let mut span = (ends[0], ends[1], 0.0);
        for i in 0..4 {
            for j in i + 1..4 {
                let d = (ends[i][0] - ends[j][0]).hypot(ends[i][1] - ends[j][1]);
                if d > span.2 {
                    span = (ends[i], ends[j], d);
                }
            }
        }
        if span.2 > la + lb + cfg.merge_gap {
            return None;
        }
        let (p, q, len) = span;
        let off = |r: [f64; 2]| ((r[0] - p[0]) * (q[1] - p[1]) - (r[1] - p[1]) * (q[0] - p[0])).abs() / len;
        if ends.iter().any(|&r| off(r) > cfg.max_deviation) {
            return None;
        }
        Some(LineSegment::new(p, q))
    };
    loop {
        let mut merged = false;
        'outer: for i in 0..segs.len() {
            for j in i + 1..segs.len() {
                if let Some(m) = joinable(&segs[i], &segs[j]) {
                    segs[i] = m;
                    segs.remove(j);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            return segs;
        }
    }
}

fn moving_average(v: &[f64], window: usize) -> Vec<f64> {
    let r = (window / 2) as i64;
    let n = v.len() as i64;
    (0..n)
        .map(|i| {
            let (lo, hi) = ((i - r).max(0), (i + r).min(n - 1));
            v[lo as usize..=hi as usize].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

fn normalize_max(v: &mut [f64]) {
    let m = v.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x /= m);
    }
}

/// Value at the given percentile of an 8-bit image.
fn percentile_u8(img: &GrayImage, pct: f64) -> u8 {
    let mut hist = [0usize; 256];
    for &v in img.as_raw() {
        hist[v as usize] += 1;
    }
    let target = (pct / 100.0 * img.as_raw().len() as f64).ceil() as usize;
    let mut acc = 0;
    for (v, &c) in hist.iter().enumerate() {
        acc += c;
        if acc >= target.max(1) {
            return v as u8;
        }
    }
    255
}

/// Row band where bright pixels and vertical segment midpoints concentrate.
pub fn estimate_window_band(image: &GrayImage, segments: &[LineSegment], cfg: &BandConfig) -> WindowBand {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let fallback = || {
        let top = ((h as f64 * cfg.fallback[0]).floor() as usize).min(h.saturating_sub(2));
        let bot = ((h as f64 * cfg.fallback[1]).ceil() as usize).clamp(top + 1, h - 1);
        WindowBand { y_top: top, y_bot: bot }
    };
    if w == 0 || h < 2 {
        return WindowBand { y_top: 0, y_bot: h.saturating_sub(1).max(1) };
    }
    let cut = percentile_u8(image, cfg.brightness_percentile);
    let raw = image.as_raw();
    let floor = raw.iter().copied().min().unwrap_or(0);
    let mut bright: Vec<f64> = (0..h)
        .map(|y| raw[y * w..(y + 1) * w].iter().filter(|&&v| v >= cut && v > floor).count() as f64)
        .collect();
    bright = moving_average(&bright, cfg.smoothing_rows);
    normalize_max(&mut bright);
    let mut density = vec![0.0; h];
    for s in segments.iter().filter(|s| s.angle_from_horizontal() > cfg.vertical_angle) {
        let [y0, y1] = s.y_range();
        let lo = y0.round().max(0.0) as usize;
        let hi = (y1.round().max(-1.0) + 1.0).min(h as f64) as usize;
        for d in density.iter_mut().take(hi).skip(lo) {
            *d += 1.0;
        }
    }
    density = moving_average(&density, cfg.smoothing_rows);
    normalize_max(&mut density);
    let combined: Vec<f64> = bright.iter().zip(&density).map(|(b, d)| 0.5 * b + 0.5 * d).collect();
    let max = combined.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return fallback();
    }
    let thr = cfg.threshold_fraction * max;
    let (mut best, mut run_start) = ((0, 0), None);
    for y in 0..=h {
        let above = y < h && combined[y] > thr;
        match (above, run_start) {
            (true, None) => run_start = Some(y),
            (false, Some(s)) => {
                if y - s > best.1 - best.0 {
                    best = (s, y);
                }
                run_start = None;
            }
            _ => {}
        }
    }
    if best.1 - best.0 <= cfg.min_rows {
        return fallback();
    }
    WindowBand { y_top: best.0, y_bot: best.1 - 1 }
}

/// Greedy left-to-right clustering of steep in-band segments.
pub fn cluster_vertical_edges(
    segments: &[LineSegment],
    band: WindowBand,
    cfg: &ClusterConfig,
) -> Vec<EdgeCluster> {
    let mut keep: Vec<usize> = (0..segments.len())
        .filter(|&i| {
            let s = &segments[i];
            band.contains(s.midpoint()[1])
                && s.angle_from_horizontal() > cfg.min_angle
                && s.length() >= cfg.min_length
        })
        .collect();
    keep.sort_by(|&a, &b| segments[a].midpoint()[0].total_cmp(&segments[b].midpoint()[0]).then(a.cmp(&b)));
    let mut clusters: Vec<EdgeCluster> = Vec::new();
    for i in keep {
        let s = &segments[i];
        let x = s.midpoint()[0];
        let yr = s.y_range();
        let nearest = clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| (c.x - x).abs() <= cfg.gap && c.overlap(yr) >= 1.0)
            .min_by(|a, b| (a.1.x - x).abs().total_cmp(&(b.1.x - x).abs()))
            .map(|(k, _)| k);
        match nearest {
            Some(k) => {
                let c = &mut clusters[k];
                c.members.push(i);
                let n = c.members.len() as f64;
                c.x += (x - c.x) / n;
                c.y_min = c.y_min.min(yr[0]);
                c.y_max = c.y_max.max(yr[1]);
            }
            None => clusters.push(EdgeCluster {
                members: vec![i],
                x,
                y_min: yr[0],
                y_max: yr[1],
            }),
        }
    }
    clusters.sort_by(|a, b| a.x.total_cmp(&b.x));
    clusters
}

#[derive(Default)]
struct Stats {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Stats {
    fn add(&mut self, v: f64) {
        self.n += 1.0;
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n
    }

    fn std(&self) -> f64 {
        (self.sum_sq / self.n - self.mean().powi(2)).max(0.0).sqrt()
    }
}

/// Photometric scores of a candidate box, `None` when it cannot be sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxScores {
    pub interior_mean: f64,
    pub interior_std: f64,
    pub wall_mean: f64,
    pub longest_dark_run: usize,
}

impl BoxScores {
    pub fn measure(image: &GrayImage, bbox: [f64; 4], cfg: &VerifyConfig) -> Option<Self> {
        let (w, h) = (image.width() as i64, image.height() as i64);
        let m = cfg.edge_margin as i64;
        let x0 = bbox[0].round() as i64;
        let x1 = (bbox[0] + bbox[2]).round() as i64;
        let y0 = (bbox[1].round() as i64).max(0);
        let y1 = ((bbox[1] + bbox[3]).round() as i64).min(h);
        let (ix0, ix1) = ((x0 + m).max(0), (x1 - m).min(w));
        let (iy0, iy1) = (y0 + m, y1 - m);
        if ix1 <= ix0 || iy1 <= iy0 {
            return None;
        }
        let px = |x: i64, y: i64| image.get_pixel(x as u32, y as u32).0[0] as f64;
        let mut interior = Stats::default();
        let mut columns = Vec::with_capacity((ix1 - ix0) as usize);
        for x in ix0..ix1 {
            let mut col = Stats::default();
            for y in iy0..iy1 {
                let v = px(x, y);
                interior.add(v);
                col.add(v);
            }
            columns.push(col.mean());
        }
        let mut wall = Stats::default();
        let strip = cfg.wall_strip as i64;
        for (a, b) in [(x0 - m - strip, x0 - m), (x1 + m, x1 + m + strip)] {
            for x in a.max(0)..b.min(w) {
                for y in iy0..iy1 {
                    wall.add(px(x, y));
                }
            }
        }
        if wall.n == 0.0 {
            return None;
        }
        let dark = wall.mean() + cfg.contrast_margin / 2.0;
        let (mut run, mut longest) = (0usize, 0usize);
        for &c in &columns {
            run = if c < dark { run + 1 } else { 0 };
            longest = longest.max(run);
        }
        Some(Self {
            interior_mean: interior.mean(),
            interior_std: interior.std(),
            wall_mean: wall.mean(),
            longest_dark_run: longest,
        })
    }

    /// All verification predicates.
    pub fn passes(&self, box_width: f64, cfg: &VerifyConfig) -> bool {
        let dark_limit = (cfg.max_dark_run_fraction * box_width).max(cfg.min_dark_run as f64);
        self.interior_mean >= self.wall_mean + cfg.contrast_margin
            && (self.interior_std >= cfg.texture_floor || self.interior_mean >= cfg.bright_sky)
            && (self.longest_dark_run as f64) < dark_limit
    }
}

/// Pairs edge clusters into boxes and keeps those passing verification.
pub fn pair_and_verify(
    clusters: &[EdgeCluster],
    image: &GrayImage,
    camera_id: &str,
    cfg: &VerifyConfig,
) -> Vec<WindowDetection> {
    let mut out = Vec::new();
    for (i, a) in clusters.iter().enumerate() {
        for b in &clusters[i + 1..] {
            let sep = b.x - a.x;
            if sep < cfg.min_separation || sep > cfg.max_separation {
                continue;
            }
            let top = a.y_min.max(b.y_min);
            let bot = a.y_max.min(b.y_max);
            let shorter = a.extent().min(b.extent());
            if bot - top <= 0.0 || shorter <= 0.0 || (bot - top) / shorter < cfg.min_overlap_ratio {
                continue;
            }
            let bbox = [a.x, top, sep, bot - top];
            let Some(scores) = BoxScores::measure(image, bbox, cfg) else {
                continue;
            };
            if !scores.passes(sep, cfg) {
                continue;
            }
            let mut segment_indices: Vec<usize> = a.members.iter().chain(&b.members).copied().collect();
            segment_indices.sort_unstable();
            out.push(WindowDetection {
                bbox,
                brightness_score: scores.interior_mean / 255.0,
                contrast_score: (scores.interior_mean - scores.wall_mean) / 255.0,
                texture_score: scores.interior_std,
                camera_id: camera_id.to_string(),
                segment_indices,
            });
        }
    }
    out
}

/// Greedy NMS by brightness, then periphery and red-dominance rejection.
pub fn suppress_and_filter(
    dets: Vec<WindowDetection>,
    camera: Option<&CameraModel>,
    color: Option<&RgbImage>,
    cfg: &FilterConfig,
) -> Vec<WindowDetection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .brightness_score
            .total_cmp(&dets[a].brightness_score)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&k| iou(dets[k].bbox, dets[i].bbox) <= cfg.iou_threshold) {
            kept.push(i);
        }
    }
    kept.into_iter()
        .map(|i| dets[i].clone())
        .filter(|d| {
            camera.is_none_or(|cam| {
                let c = d.center();
                let r = (c[0] - cam.principal_point[0]).hypot(c[1] - cam.principal_point[1]);
                r <= cfg.periphery_factor * cam.fov_radius()
            })
        })
        .filter(|d| color.is_none_or(|img| !is_red_dominant(img, d.bbox, cfg.red_ratio)))
        .collect()
}

fn is_red_dominant(img: &RgbImage, bbox: [f64; 4], ratio: f64) -> bool {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = (bbox[0].round() as i64).clamp(0, w);
    let x1 = ((bbox[0] + bbox[2]).round() as i64).clamp(0, w);
    let y0 = (bbox[1].round() as i64).clamp(0, h);
    let y1 = ((bbox[1] + bbox[3]).round() as i64).clamp(0, h);
    let mut sum = [0.0f64; 3];
    let mut n = 0.0;
    for y in y0..y1 {
        for x in x0..x1 {
            let p = img.get_pixel(x as u32, y as u32).0;
            for c in 0..3 {
                sum[c] += p[c] as f64;
            }
            n += 1.0;
        }
    }
    n > 0.0 && sum[0] > ratio * sum[1] && sum[0] > ratio * sum[2]
}

/// Everything the pipeline produced for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionOutput {
    pub segments: Vec<LineSegment>,
    pub band: WindowBand,
    pub clusters: Vec<EdgeCluster>,
    pub detections: Vec<WindowDetection>,
}

/// Runs the stages after segment detection; use this with imported segments.
pub fn detect_windows_from_segments(
    image: &GrayImage,
    segments: Vec<LineSegment>,
    color: Option<&RgbImage>,
    camera: Option<&CameraModel>,
    camera_id: &str,
    cfg: &DetectorConfig,
) -> DetectionOutput {
    let band = estimate_window_band(image, &segments, &cfg.band);
    let clusters = cluster_vertical_edges(&segments, band, &cfg.cluster);
    let candidates = pair_and_verify(&clusters, image, camera_id, &cfg.verify);
    let detections = suppress_and_filter(candidates, camera, color, &cfg.filter);
    DetectionOutput {
        segments,
        band,
        clusters,
        detections,
    }
}

/// Full pipeline on one frame.
pub fn detect_windows(
    image: &GrayImage,
    color: Option<&RgbImage>,
    camera: Option<&CameraModel>,
    camera_id: &str,
    cfg: &DetectorConfig,
) -> DetectionOutput {
    let segments = detect_segments(image, &cfg.segments);
    detect_windows_from_segments(image, segments, color, camera, camera_id, cfg)
}

fn csv_open_error(path: &Path, e: csv::Error) -> CompassError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CompassError::io(path, io),
        other => CompassError::Parse(format!("{}: {other:?}", path.display())),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionRow {
    camera_id: String,
    b_x: f64,
    b_y: f64,
    b_w: f64,
    b_h: f64,
    score: f64,
}

/// CSV `camera_id,b_x,b_y,b_w,b_h,score` with `#` comment lines allowed.
pub fn write_detections_csv<W: std::io::Write>(
    w: W,
    header_comment: &str,
    dets: &[WindowDetection],
) -> Result<()> {
    let mut w = w;
    for line in header_comment.lines() {
        writeln!(w, "# {line}").map_err(|e| CompassError::io("<detections>", e))?;
    }
    let mut csv = csv::Writer::from_writer(w);
    for d in dets {
        csv.serialize(DetectionRow {
            camera_id: d.camera_id.clone(),
            b_x: d.bbox[0],
            b_y: d.bbox[1],
            b_w: d.bbox[2],
            b_h: d.bbox[3],
            score: d.brightness_score,
        })
        .map_err(|e| CompassError::Parse(e.to_string()))?;
    }
    csv.flush().map_err(|e| CompassError::io("<detections>", e))
}

pub fn read_detections_csv(path: &Path) -> Result<Vec<WindowDetection>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_open_error(path, e))?;
    rdr.deserialize::<DetectionRow>()
        .map(|row| {
            let r = row.map_err(|e| CompassError::Parse(format!("{}: {e}", path.display())))?;
            let mut d = WindowDetection::new(&r.camera_id, [r.b_x, r.b_y, r.b_w, r.b_h]);
            d.brightness_score = r.score;
            Ok(d)
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentRow {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

pub fn write_segments_csv<W: std::io::Write>(w: W, header_comment: &str, segs: &[LineSegment]) -> Result<()> {
    let mut w = w;
    for line in header_comment.lines() {
        writeln!(w, "# {line}").map_err(|e| CompassError::io("<segments>", e))?;
    }
    let mut csv = csv::Writer::from_writer(w);
    for s in segs {
        csv.serialize(SegmentRow { x1: s.p1[0], y1: s.p1[1], x2: s.p2[0], y2: s.p2[1] })
            .map_err(|e| CompassError::Parse(e.to_string()))?;
    }
    csv.flush().map_err(|e| CompassError::io("<segments>", e))
}

/// Reads `x1,y1,x2,y2` rows, e.g. from an external segment detector.
pub fn read_segments_csv(path: &Path) -> Result<Vec<LineSegment>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_open_error(path, e))?;
    rdr.deserialize::<SegmentRow>()
        .map(|row| {
            let r = row.map_err(|e| CompassError::Parse(format!("{}: {e}", path.display())))?;
            Ok(LineSegment::new([r.x1, r.y1], [r.x2, r.y2]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;

    fn vseg(x: f64, y0: f64, y1: f64) -> LineSegment {
        LineSegment::new([x, y0], [x, y1])
    }

    #[test]
    fn uniform_image_has_no_segments() {
        let img = GrayImage::from_pixel(120, 80, Luma([90]));
        assert!(detect_segments(&img, &SegmentConfig::default()).is_empty());
    }

    #[test]
    fn vertical_step_edge_gives_one_segment() {
        let img = GrayImage::from_fn(200, 200, |x, _| Luma([if x < 100 { 40 } else { 200 }]));
        let segs = detect_segments(&img, &SegmentConfig::default());
        assert_eq!(segs.len(), 1, "{segs:?}");
        let s = segs[0];
        assert!((s.p1[0] - 100.0).abs() < 1.0 && (s.p2[0] - 100.0).abs() < 1.0);
        assert!(s.length() > 190.0);
        assert!((s.angle_from_horizontal().to_degrees() - 90.0).abs() < 0.5);
    }

    #[test]
    fn broken_edge_pieces_are_joined() {
        let cfg = SegmentConfig::default();
        let joined = merge_collinear(vec![vseg(50.0, 10.0, 100.0), vseg(50.3, 104.0, 180.0)], &cfg);
        assert_eq!(joined.len(), 1, "{joined:?}");
        assert!((joined[0].length() - 170.0).abs() < 0.5);
        // too far apart, parallel but offset, and crossing at an angle all stay separate
        for other in [vseg(50.0, 120.0, 180.0), vseg(56.0, 100.0, 180.0), LineSegment::new([40.0, 100.0], [60.0, 180.0])] {
            assert_eq!(merge_collinear(vec![vseg(50.0, 10.0, 100.0), other], &cfg).len(), 2);
        }
    }

    #[test]
    fn band_spans_tall_windows() {
        // bright rows 100..300 with edges covering the same rows: midpoints at 200 only
        let img = GrayImage::from_fn(400, 400, |x, y| {
            Luma([if (100..300).contains(&y) && (x / 50) % 2 == 1 { 200 } else { 40 }])
        });
        let segs: Vec<_> = (1..8).map(|k| vseg(50.0 * k as f64, 100.0, 299.0)).collect();
        let band = estimate_window_band(&img, &segs, &BandConfig::default());
        assert!(band.y_top <= 120 && band.y_bot >= 280, "{band:?}");
        assert!(band.contains(200.0));
    }

    #[test]
    fn detection_is_deterministic() {
        let img = GrayImage::from_fn(160, 120, |x, y| Luma([((x * 7 + y * 13) % 50 + if (40..90).contains(&x) { 150 } else { 30 }) as u8]));
        let cfg = DetectorConfig::default();
        assert_eq!(
            detect_windows(&img, None, None, "front", &cfg),
            detect_windows(&img, None, None, "front", &cfg)
        );
    }

    #[test]
    fn band_follows_bright_stripe() {
        let (top, bot) = (150usize, 250usize);
        let img = GrayImage::from_fn(300, 400, |_, y| {
            Luma([if (top as u32..bot as u32).contains(&y) { 230 } else { 40 }])
        });
        let segs: Vec<_> = (0..12)
            .map(|k| {
                let y = 155.0 + 30.0 * (k % 3) as f64;
                vseg(20.0 + 20.0 * k as f64, y, y + 30.0)
            })
            .collect();
        let band = estimate_window_band(&img, &segs, &BandConfig::default());
        assert!(band.y_top + 15 >= top && band.y_top <= top + 15, "{band:?}");
        assert!(band.y_bot <= bot + 15 && band.y_bot + 15 >= bot, "{band:?}");
    }

    #[test]
    fn dark_image_falls_back() {
        let img = GrayImage::from_pixel(100, 200, Luma([10]));
        let band = estimate_window_band(&img, &[], &BandConfig::default());
        assert_eq!(band, WindowBand { y_top: 40, y_bot: 160 });
    }

    #[test]
    fn band_ignores_segments_outside_it() {
        let img = GrayImage::from_fn(300, 400, |_, y| Luma([if (150..250).contains(&y) { 230 } else { 40 }]));
        let inside: Vec<_> = (0..6).map(|k| vseg(20.0 + 40.0 * k as f64, 160.0, 240.0)).collect();
        let base = estimate_window_band(&img, &inside, &BandConfig::default());
        let mut more = inside.clone();
        more.push(vseg(10.0, 10.0, 40.0));
        assert_eq!(estimate_window_band(&img, &more, &BandConfig::default()), base);
    }

    #[test]
    fn clustering_rules() {
        let band = WindowBand { y_top: 0, y_bot: 400 };
        let cfg = ClusterConfig::default();
        let near = [vseg(100.0, 50.0, 150.0), vseg(105.0, 100.0, 200.0)];
        assert_eq!(cluster_vertical_edges(&near, band, &cfg).len(), 1);
        let far = [vseg(100.0, 50.0, 150.0), vseg(120.0, 100.0, 200.0)];
        assert_eq!(cluster_vertical_edges(&far, band, &cfg).len(), 2);
        let disjoint = [vseg(100.0, 50.0, 90.0), vseg(103.0, 120.0, 200.0)];
        assert_eq!(cluster_vertical_edges(&disjoint, band, &cfg).len(), 2);
        let flat = [LineSegment::new([10.0, 100.0], [200.0, 110.0])];
        assert!(cluster_vertical_edges(&flat, band, &cfg).is_empty());
        let c = &cluster_vertical_edges(&near, band, &cfg)[0];
        assert_eq!((c.y_min, c.y_max), (50.0, 200.0));
        assert!((c.x - 102.5).abs() < 1e-12);
    }

    fn window_image() -> GrayImage {
        GrayImage::from_fn(300, 240, |x, y| {
            let noise = ((x * 31 + y * 17) % 23) as u8;
            if (100..180).contains(&x) && (60..180).contains(&y) {
                Luma([200 + noise])
            } else {
                Luma([50 + noise])
            }
        })
    }

    fn cluster(x: f64, y0: f64, y1: f64) -> EdgeCluster {
        EdgeCluster { members: vec![0], x, y_min: y0, y_max: y1 }
    }

    #[test]
    fn bright_rectangle_is_verified() {
        let img = window_image();
        let dets = pair_and_verify(&[cluster(100.0, 60.0, 180.0), cluster(180.0, 60.0, 180.0)], &img, "front", &VerifyConfig::default());
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, [100.0, 60.0, 80.0, 120.0]);
        assert!(dets[0].contrast_score > 0.5);
    }

    #[test]
    fn dark_interior_is_rejected() {
        let img = GrayImage::from_fn(300, 240, |x, _| Luma([if (100..180).contains(&x) { 20 } else { 120 }]));
        let dets = pair_and_verify(&[cluster(100.0, 60.0, 180.0), cluster(180.0, 60.0, 180.0)], &img, "front", &VerifyConfig::default());
        assert!(dets.is_empty());
    }

    #[test]
    fn no_vertical_overlap_no_pair() {
        let img = window_image();
        let dets = pair_and_verify(&[cluster(100.0, 10.0, 50.0), cluster(180.0, 60.0, 180.0)], &img, "front", &VerifyConfig::default());
        assert!(dets.is_empty());
    }

    #[test]
    fn end_to_end_on_one_window() {
        let out = detect_windows(&window_image(), None, None, "front", &DetectorConfig::default());
        assert_eq!(out.detections.len(), 1, "{:?}", out.detections);
        let truth = [100.0, 60.0, 80.0, 120.0];
        assert!(iou(out.detections[0].bbox, truth) > 0.8, "{:?}", out.detections[0].bbox);
    }

    #[test]
    fn nms_and_filters() {
        let mk = |bbox, s| WindowDetection { brightness_score: s, ..WindowDetection::new("front", bbox) };
        let same = vec![mk([10.0, 10.0, 50.0, 50.0], 0.8), mk([10.0, 10.0, 50.0, 50.0], 0.9)];
        let kept = suppress_and_filter(same, None, None, &FilterConfig::default());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].brightness_score, 0.9);
        let disjoint = vec![mk([10.0, 10.0, 50.0, 50.0], 0.8), mk([100.0, 10.0, 50.0, 50.0], 0.9)];
        assert_eq!(suppress_and_filter(disjoint, None, None, &FilterConfig::default()).len(), 2);

        let cam = CameraModel::equidistant(100.0, 400, 400);
        let r = cam.fov_radius();
        let edge = vec![mk([200.0 + 0.95 * r - 5.0, 195.0, 10.0, 10.0], 0.9), mk([195.0, 195.0, 10.0, 10.0], 0.9)];
        let kept = suppress_and_filter(edge, Some(&cam), None, &FilterConfig::default());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].bbox[0], 195.0);

        let mut color = RgbImage::from_pixel(400, 400, image::Rgb([200, 200, 200]));
        for y in 10..60 {
            for x in 10..60 {
                color.put_pixel(x, y, image::Rgb([220, 40, 40]));
            }
        }
        let dets = vec![mk([10.0, 10.0, 50.0, 50.0], 0.9), mk([100.0, 10.0, 50.0, 50.0], 0.9)];
        let kept = suppress_and_filter(dets, None, Some(&color), &FilterConfig::default());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].bbox[0], 100.0);
    }

    #[test]
    fn iou_values() {
        assert_eq!(iou([0.0, 0.0, 10.0, 10.0], [0.0, 0.0, 10.0, 10.0]), 1.0);
        assert_eq!(iou([0.0, 0.0, 10.0, 10.0], [20.0, 0.0, 10.0, 10.0]), 0.0);
        assert!((iou([0.0, 0.0, 10.0, 10.0], [5.0, 0.0, 10.0, 10.0]) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut d = WindowDetection::new("back", [1.0, 2.0, 3.0, 4.5]);
        d.brightness_score = 0.75;
        write_detections_csv(std::fs::File::create(&path).unwrap(), "tool x\ncfg y", &[d.clone()]).unwrap();
        let back = read_detections_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].bbox, d.bbox);
        assert_eq!(back[0].camera_id, "back");
        let spath = dir.path().join("s.csv");
        let segs = vec![vseg(1.0, 2.0, 30.0)];
        write_segments_csv(std::fs::File::create(&spath).unwrap(), "hdr", &segs).unwrap();
        assert_eq!(read_segments_csv(&spath).unwrap(), segs);
    }
}
