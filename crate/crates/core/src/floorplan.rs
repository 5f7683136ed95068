//! Floor plans as a pair of binary raster masks (walls and glazing) with a
//! metric world↔pixel mapping.
//!
//! Coordinate convention: fractional pixel coordinates are `(col, row)` with
//! `(0, 0)` at the top-left corner of pixel `(0, 0)`, which sits at the world
//! point `origin`. World `+x` maps to increasing column, world `+y` maps to
//! *decreasing* row:
//!
//! ```text
//! col = (x - origin.x) / resolution
//! row = (origin.y - y) / resolution
//! ```
//!
//! The flip lives here and only here; ray marching works in pixel space.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{CompassError, Result};

/// Structural class of a raster cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Cell {
    Free = 0,
    Wall = 1,
    Window = 2,
}

/// Planar pose: position in meters, heading in radians normalized to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub t_x: f64,
    pub t_y: f64,
    pub psi: f64,
}

impl Pose2D {
    pub fn new(t_x: f64, t_y: f64, psi: f64) -> Self {
        Self {
            t_x,
            t_y,
            psi: normalize_angle(psi),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.t_x, self.t_y]
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Pixel color predicate used while loading a plan image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColorRule {
    /// Luminance (BT.601) strictly below `threshold`.
    DarkerThan { threshold: f64 },
    /// Red channel dominant: `R > min_red`, `R > ratio·G` and `R > ratio·B`.
    RedDominant { min_red: f64, ratio: f64 },
}

impl ColorRule {
    pub const DEFAULT_WALL: ColorRule = ColorRule::DarkerThan { threshold: 100.0 };
    pub const DEFAULT_WINDOW: ColorRule = ColorRule::RedDominant {
        min_red: 150.0,
        ratio: 1.5,
    };

    pub fn matches(&self, px: Rgb<u8>) -> bool {
        let [r, g, b] = px.0.map(f64::from);
        match *self {
            ColorRule::DarkerThan { threshold } => 0.299 * r + 0.587 * g + 0.114 * b < threshold,
            ColorRule::RedDominant { min_red, ratio } => {
                r > min_red && r > ratio * g && r > ratio * b
            }
        }
    }
}

/// Sidecar metadata stored next to a plan image (`plan.png` → `plan.json`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanMetadata {
    /// Meters per pixel.
    pub resolution: f64,
    /// World coordinates of the top-left corner of pixel (0, 0).
    pub origin: [f64; 2],
}

impl PlanMetadata {
    pub fn sidecar_path(image_path: &Path) -> PathBuf {
        image_path.with_extension("json")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CompassError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CompassError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("metadata serializes");
        std::fs::write(path, text).map_err(|e| CompassError::io(path, e))
    }
}

/// Immutable floor plan raster. Row-major, `height × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorPlanRaster {
    width: usize,
    height: usize,
    wall_mask: Vec<bool>,
    window_mask: Vec<bool>,
    cells: Vec<Cell>,
    resolution: f64,
    origin: [f64; 2],
}

impl FloorPlanRaster {
    pub fn new(
        width: usize,
        height: usize,
        wall_mask: Vec<bool>,
        window_mask: Vec<bool>,
        resolution: f64,
        origin: [f64; 2],
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CompassError::InvalidPlan("zero-area raster".into()));
        }
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(CompassError::InvalidPlan(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        let n = width * height;
        if wall_mask.len() != n || window_mask.len() != n {
            return Err(CompassError::InvalidPlan(format!(
                "mask sizes {} / {} do not match {width}x{height}",
                wall_mask.len(),
                window_mask.len()
            )));
        }
        // glazing is drawn over wall lines, so window wins
        let cells = wall_mask
            .iter()
            .zip(&window_mask)
            .map(|(&wall, &window)| match (wall, window) {
                (_, true) => Cell::Window,
                (true, false) => Cell::Wall,
                _ => Cell::Free,
            })
            .collect();
        Ok(Self {
            width,
            height,
            wall_mask,
            window_mask,
            cells,
            resolution,
            origin,
        })
    }

    /// An all-free raster.
    pub fn empty(width: usize, height: usize, resolution: f64, origin: [f64; 2]) -> Result<Self> {
        let n = width * height;
        Self::new(width, height, vec![false; n], vec![false; n], resolution, origin)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn wall_mask(&self) -> &[bool] {
        &self.wall_mask
    }

    pub fn window_mask(&self) -> &[bool] {
        &self.window_mask
    }

    /// World extent as `([x_min, x_max], [y_min, y_max])`.
    pub fn extent(&self) -> ([f64; 2], [f64; 2]) {
        let w = self.width as f64 * self.resolution;
        let h = self.height as f64 * self.resolution;
        (
            [self.origin[0], self.origin[0] + w],
            [self.origin[1] - h, self.origin[1]],
        )
    }

    pub fn world_to_pixel(&self, p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] - self.origin[0]) / self.resolution,
            (self.origin[1] - p[1]) / self.resolution,
        ]
    }

    pub fn pixel_to_world(&self, px: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + px[0] * self.resolution,
            self.origin[1] - px[1] * self.resolution,
        ]
    }

    /// World coordinates of the center of pixel `(col, row)`.
    pub fn pixel_center(&self, col: usize, row: usize) -> [f64; 2] {
        self.pixel_to_world([col as f64 + 0.5, row as f64 + 0.5])
    }

    #[inline]
    pub fn cell(&self, col: usize, row: usize) -> Cell {
        self.cells[row * self.width + col]
    }

    /// Classifies a fractional pixel coordinate. Anything outside the raster
    /// is [`Cell::Free`].
    #[inline]
    pub fn cell_at_pixel(&self, col: f64, row: f64) -> Cell {
        if col < 0.0 || row < 0.0 {
            return Cell::Free;
        }
        let (c, r) = (col as usize, row as usize);
        if c >= self.width || r >= self.height {
            return Cell::Free;
        }
        self.cells[r * self.width + c]
    }

    pub fn cell_at_world(&self, p: [f64; 2]) -> Cell {
        let [c, r] = self.world_to_pixel(p);
        self.cell_at_pixel(c, r)
    }

    pub fn contains_world(&self, p: [f64; 2]) -> bool {
        let [c, r] = self.world_to_pixel(p);
        c >= 0.0 && r >= 0.0 && (c as usize) < self.width && (r as usize) < self.height
    }

    pub fn count(&self, kind: Cell) -> usize {
        self.cells.iter().filter(|&&c| c == kind).count()
    }

    /// Distance from `p` to the nearest structure pixel center, searched up
    /// to `limit` meters. Returns `None` when nothing lies within `limit`.
    pub fn structure_distance_within(&self, p: [f64; 2], limit: f64) -> Option<f64> {
        let [c, r] = self.world_to_pixel(p);
        let reach = (limit / self.resolution).ceil() as i64 + 1;
        let (c0, r0) = (c.floor() as i64, r.floor() as i64);
        let mut best: Option<f64> = None;
        for row in (r0 - reach).max(0)..=(r0 + reach).min(self.height as i64 - 1) {
            for col in (c0 - reach).max(0)..=(c0 + reach).min(self.width as i64 - 1) {
                if self.cell(col as usize, row as usize) == Cell::Free {
                    continue;
                }
                let q = self.pixel_center(col as usize, row as usize);
                let d = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
                if d <= limit && best.is_none_or(|b| d < b) {
                    best = Some(d);
                }
            }
        }
        best
    }

    /// Renders the plan as RGB: walls black, glazing red, free space white.
    pub fn to_rgb_image(&self) -> RgbImage {
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            match self.cell(x as usize, y as usize) {
                Cell::Free => Rgb([255, 255, 255]),
                Cell::Wall => Rgb([0, 0, 0]),
                Cell::Window => Rgb([220, 20, 20]),
            }
        })
    }

    /// Writes the PNG and its metadata sidecar.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb_image()
            .save(path)
            .map_err(|e| CompassError::Decode {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        PlanMetadata {
            resolution: self.resolution,
            origin: self.origin,
        }
        .save(&PlanMetadata::sidecar_path(path))
    }
}

/// Classifies every pixel of an RGB image with the two color rules.
pub fn raster_from_rgb(
    img: &RgbImage,
    wall_rule: ColorRule,
    window_rule: ColorRule,
    resolution: f64,
    origin: [f64; 2],
) -> Result<FloorPlanRaster> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut wall = Vec::with_capacity(w * h);
    let mut window = Vec::with_capacity(w * h);
    for px in img.pixels() {
        let is_window = window_rule.matches(*px);
        window.push(is_window);
        wall.push(!is_window && wall_rule.matches(*px));
    }
    FloorPlanRaster::new(w, h, wall, window, resolution, origin)
}

/// Loads a plan image and classifies its pixels.
pub fn load_floorplan(
    image_path: &Path,
    wall_rule: ColorRule,
    window_rule: ColorRule,
    resolution: f64,
    origin: [f64; 2],
) -> Result<FloorPlanRaster> {
    if !(resolution > 0.0) {
        return Err(CompassError::InvalidPlan(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    let bytes = std::fs::read(image_path).map_err(|e| CompassError::io(image_path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| CompassError::Decode {
        path: image_path.to_path_buf(),
        message: e.to_string(),
    })?;
    if img.width() == 0 || img.height() == 0 {
        return Err(CompassError::InvalidPlan(format!(
            "{} has zero area",
            image_path.display()
        )));
    }
    raster_from_rgb(&img.to_rgb8(), wall_rule, window_rule, resolution, origin)
}

/// Loads a plan image together with its JSON sidecar, using the default color rules.
pub fn load_floorplan_with_sidecar(image_path: &Path) -> Result<FloorPlanRaster> {
    let meta = PlanMetadata::load(&PlanMetadata::sidecar_path(image_path))?;
    load_floorplan(
        image_path,
        ColorRule::DEFAULT_WALL,
        ColorRule::DEFAULT_WINDOW,
        meta.resolution,
        meta.origin,
    )
}
