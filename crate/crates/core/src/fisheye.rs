//! Fisheye camera model, bearings and conversion of window detections into
//! hit-type evidence.
//!
//! Camera frame: `x` right, `y` down, `z` along the optical axis. The image
//! radius follows the Kannala–Brandt polynomial
//! `r = f · (θ + k1θ³ + k2θ⁵ + k3θ⁷ + k4θ⁹)`, which reduces to the equidistant
//! model `r = fθ` with zero coefficients.
//!
//! Camera azimuth `α = atan2(b_x, b_z)` grows clockwise seen from above, while
//! descriptor bins grow counter-clockwise. [`CameraRig`] holds the conversion.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::descriptor::{HitType, RadialDescriptor};
use crate::detection::WindowDetection;
use crate::error::{CompassError, Result};
use crate::floorplan::normalize_angle;

const NEWTON_MAX_ITERS: usize = 10;
const NEWTON_TOL: f64 = 1e-10;
const DEGENERATE_AZIMUTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Focal length, pixels.
    pub focal: f64,
    pub principal_point: [f64; 2],
    /// Maximum incidence angle, radians.
    pub theta_max: f64,
    /// k1..k4 of the odd polynomial; zeros give the equidistant model.
    pub distortion: [f64; 4],
    /// Width and height, pixels.
    pub image_size: [u32; 2],
}

impl CameraModel {
    /// Equidistant camera centered in the image with a 190° field of view.
    pub fn equidistant(focal: f64, width: u32, height: u32) -> Self {
        Self {
            focal,
            principal_point: [width as f64 / 2.0, height as f64 / 2.0],
            theta_max: 95f64.to_radians(),
            distortion: [0.0; 4],
            image_size: [width, height],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) {
            return Err(CompassError::InvalidConfig("focal must be positive".into()));
        }
        if !(self.theta_max > 0.0 && self.theta_max <= PI) {
            return Err(CompassError::InvalidConfig("theta_max must be in (0, π]".into()));
        }
        if self.image_size[0] == 0 || self.image_size[1] == 0 {
            return Err(CompassError::InvalidConfig("image size must be positive".into()));
        }
        // unproject inverts the polynomial, so it must increase over the whole field of view
        let samples = 1000;
        if let Some(k) = (0..=samples).find(|&k| self.poly_deriv(self.theta_max * k as f64 / samples as f64) <= 0.0) {
            return Err(CompassError::InvalidConfig(format!(
                "distortion polynomial is not increasing at theta = {:.3} rad",
                self.theta_max * k as f64 / samples as f64
            )));
        }
        Ok(())
    }

    fn poly(&self, theta: f64) -> f64 {
        let [k1, k2, k3, k4] = self.distortion;
        let t2 = theta * theta;
        theta * (1.0 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4))))
    }

    fn poly_deriv(&self, theta: f64) -> f64 {
        let [k1, k2, k3, k4] = self.distortion;
        let t2 = theta * theta;
        1.0 + t2 * (3.0 * k1 + t2 * (5.0 * k2 + t2 * (7.0 * k3 + t2 * 9.0 * k4)))
    }

    /// Radius of the field-of-view circle in pixels.
    pub fn fov_radius(&self) -> f64 {
        self.focal * self.poly(self.theta_max)
    }

    /// Incidence angle for a normalized radius `r / f`, clamped to `theta_max`.
    fn incidence(&self, rd: f64) -> f64 {
        if rd >= self.poly(self.theta_max) {
            return self.theta_max;
        }
        if self.distortion == [0.0; 4] {
            return rd;
        }
        let mut theta = rd;
        for _ in 0..NEWTON_MAX_ITERS {
            let step = (self.poly(theta) - rd) / self.poly_deriv(theta);
            theta -= step;
            if step.abs() < NEWTON_TOL {
                break;
            }
        }
        theta.clamp(0.0, self.theta_max)
    }

    /// Pixel to unit bearing. Pixels beyond the field-of-view circle clamp
    /// to `theta_max`.
    pub fn unproject(&self, pixel: [f64; 2]) -> [f64; 3] {
        let dx = pixel[0] - self.principal_point[0];
        let dy = pixel[1] - self.principal_point[1];
        let r = dx.hypot(dy);
        let theta = self.incidence(r / self.focal);
        let phi = dy.atan2(dx);
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    pub fn project(&self, b: [f64; 3]) -> Result<[f64; 2]> {
        let n = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
        if !(n > 0.0) {
            return Err(CompassError::Degenerate("zero bearing".into()));
        }
        let theta = (b[2] / n).clamp(-1.0, 1.0).acos();
        if theta > self.theta_max + 1e-12 {
            return Err(CompassError::OutOfFov {
                theta,
                theta_max: self.theta_max,
            });
        }
        let phi = b[1].atan2(b[0]);
        let r = self.focal * self.poly(theta);
        Ok([
            self.principal_point[0] + r * phi.cos(),
            self.principal_point[1] + r * phi.sin(),
        ])
    }
}

/// Camera azimuth `atan2(b_x, b_z)` in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Azimuth {
    pub radians: f64,
    /// The bearing is nearly parallel to the vertical axis, so the azimuth
    /// carries no information.
    pub degenerate: bool,
}

pub fn azimuth_of(b: [f64; 3]) -> Azimuth {
    Azimuth {
        radians: normalize_angle(b[0].atan2(b[2])),
        degenerate: b[0].abs() < DEGENERATE_AZIMUTH && b[2].abs() < DEGENERATE_AZIMUTH,
    }
}

/// Rotation about the camera's vertical (`y`) axis that adds `angle` to the
/// azimuth. At `π` this is `(x, y, z) → (−x, y, −z)`.
pub fn rotate_about_vertical(b: [f64; 3], angle: f64) -> [f64; 3] {
    if angle == PI {
        return [-b[0], b[1], -b[2]];
    }
    let (s, c) = angle.sin_cos();
    [b[0] * c + b[2] * s, b[1], -b[0] * s + b[2] * c]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigCamera {
    pub id: String,
    pub model: CameraModel,
    /// Azimuth of the optical axis in the body frame (front 0, back π).
    pub yaw_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub cameras: Vec<RigCamera>,
    /// Added to every body azimuth before conversion to descriptor bearings.
    pub map_yaw_offset: f64,
    /// Camera azimuths grow clockwise seen from above; descriptor bins grow
    /// counter-clockwise. When set, bearings are negated on conversion.
    pub clockwise_azimuth: bool,
}

impl CameraRig {
    /// Front/back pair with identical intrinsics.
    pub fn dual(model: CameraModel) -> Self {
        Self {
            cameras: vec![
                RigCamera {
                    id: "front".into(),
                    model,
                    yaw_offset: 0.0,
                },
                RigCamera {
                    id: "back".into(),
                    model,
                    yaw_offset: PI,
                },
            ],
            map_yaw_offset: 0.0,
            clockwise_azimuth: true,
        }
    }

    pub fn camera(&self, id: &str) -> Result<&RigCamera> {
        self.cameras
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| CompassError::InvalidConfig(format!("rig has no camera '{id}'")))
    }

    /// Camera bearing rotated into the body frame.
    pub fn body_bearing(&self, cam: &RigCamera, b: [f64; 3]) -> [f64; 3] {
        rotate_about_vertical(b, normalize_angle(cam.yaw_offset))
    }

    /// Body-frame azimuth to counter-clockwise descriptor bearing.
    pub fn descriptor_bearing(&self, body_azimuth: f64) -> f64 {
        let a = if self.clockwise_azimuth {
            -body_azimuth
        } else {
            body_azimuth
        };
        normalize_angle(a + self.map_yaw_offset)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: RigFile =
            toml::from_str(text).map_err(|e| CompassError::Parse(format!("rig config: {e}")))?;
        file.into_rig()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CompassError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(&RigFile::from_rig(self)).expect("rig serializes")
    }
}

/// Text form of the rig config (angles in degrees).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RigFile {
    #[serde(default)]
    map_yaw_offset_deg: f64,
    #[serde(default = "default_true")]
    clockwise_azimuth: bool,
    camera: Vec<CameraEntry>,
}

fn default_true() -> bool {
    true
}

fn default_theta_max_deg() -> f64 {
    95.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CameraEntry {
    id: String,
    f: f64,
    c_x: f64,
    c_y: f64,
    #[serde(default)]
    k1: f64,
    #[serde(default)]
    k2: f64,
    #[serde(default)]
    k3: f64,
    #[serde(default)]
    k4: f64,
    #[serde(default = "default_theta_max_deg")]
    theta_max_deg: f64,
    #[serde(default)]
    yaw_offset_deg: f64,
    width: u32,
    height: u32,
}

impl RigFile {
    fn into_rig(self) -> Result<CameraRig> {
        if self.camera.is_empty() {
            return Err(CompassError::InvalidConfig("rig has no cameras".into()));
        }
        let cameras = self
            .camera
            .into_iter()
            .map(|c| {
                let model = CameraModel {
                    focal: c.f,
                    principal_point: [c.c_x, c.c_y],
                    theta_max: c.theta_max_deg.to_radians(),
                    distortion: [c.k1, c.k2, c.k3, c.k4],
                    image_size: [c.width, c.height],
                };
                model.validate()?;
                Ok(RigCamera {
                    id: c.id,
                    model,
                    yaw_offset: normalize_angle(c.yaw_offset_deg.to_radians()),
                })
            })
            .collect::<Result<_>>()?;
        Ok(CameraRig {
            cameras,
            map_yaw_offset: self.map_yaw_offset_deg.to_radians(),
            clockwise_azimuth: self.clockwise_azimuth,
        })
    }

    fn from_rig(rig: &CameraRig) -> Self {
        Self {
            map_yaw_offset_deg: rig.map_yaw_offset.to_degrees(),
            clockwise_azimuth: rig.clockwise_azimuth,
            camera: rig
                .cameras
                .iter()
                .map(|c| CameraEntry {
                    id: c.id.clone(),
                    f: c.model.focal,
                    c_x: c.model.principal_point[0],
                    c_y: c.model.principal_point[1],
                    k1: c.model.distortion[0],
                    k2: c.model.distortion[1],
                    k3: c.model.distortion[2],
                    k4: c.model.distortion[3],
                    theta_max_deg: c.model.theta_max.to_degrees(),
                    yaw_offset_deg: c.yaw_offset.to_degrees(),
                    width: c.model.image_size[0],
                    height: c.model.image_size[1],
                })
                .collect(),
        }
    }
}

/// Counter-clockwise arc of descriptor bearings starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AzimuthSpan {
    pub start: f64,
    pub width: f64,
}

impl AzimuthSpan {
    /// The shorter arc between two bearings.
    pub fn between(a: f64, b: f64) -> Self {
        let d = normalize_angle(b - a);
        if d <= PI {
            Self { start: normalize_angle(a), width: d }
        } else {
            Self { start: normalize_angle(b), width: TAU - d }
        }
    }

    pub fn end(&self) -> f64 {
        normalize_angle(self.start + self.width)
    }

    pub fn contains(&self, a: f64) -> bool {
        normalize_angle(a - self.start) <= self.width
    }
}

/// Angular span of a detection's left and right box edges.
pub fn detection_to_span(rig: &CameraRig, det: &WindowDetection) -> Result<AzimuthSpan> {
    let cam = rig.camera(&det.camera_id)?;
    let [bx, by, bw, bh] = det.bbox;
    if !(bw > 0.0) || !(bh > 0.0) {
        return Err(CompassError::Degenerate(format!(
            "detection box has zero extent ({bw} x {bh})"
        )));
    }
    let [w, h] = cam.model.image_size.map(f64::from);
    if bx < 0.0 || by < 0.0 || bx + bw > w || by + bh > h {
        return Err(CompassError::Degenerate(format!(
            "detection box {:?} exceeds image {w} x {h}",
            det.bbox
        )));
    }
    let mid_y = by + bh / 2.0;
    let edge = |x: f64| {
        let b = rig.body_bearing(cam, cam.model.unproject([x, mid_y]));
        rig.descriptor_bearing(azimuth_of(b).radians)
    };
    Ok(AzimuthSpan::between(edge(bx), edge(bx + bw)))
}

fn snap(u: f64) -> f64 {
    let r = u.round();
    if (u - r).abs() < 1e-9 {
        r
    } else {
        u
    }
}

/// Bin `j` covers `[2πj/N − π/N, 2πj/N + π/N)`. A bin becomes window when any
/// span overlaps it with positive length; a zero-width span marks the bin
/// containing it (boundaries go to the upper bin).
pub fn spans_to_hit_type(spans: &[AzimuthSpan], n_bins: usize) -> Vec<f64> {
    let mut row = vec![HitType::Wall.value(); n_bins];
    let bin = TAU / n_bins as f64;
    for span in spans {
        if span.width >= TAU - 1e-12 {
            row.iter_mut().for_each(|v| *v = HitType::Window.value());
            continue;
        }
        let us = snap(span.start / bin + 0.5);
        let ue = snap(us + span.width / bin);
        let first = us.floor() as i64;
        let last = if span.width > 0.0 {
            ue.ceil() as i64 - 1
        } else {
            first
        };
        for j in first..=last.max(first) {
            row[j.rem_euclid(n_bins as i64) as usize] = HitType::Window.value();
        }
    }
    row
}

/// Hit-type-only descriptor from window detections of any rig camera.
pub fn build_visual_descriptor(
    rig: &CameraRig,
    detections: &[WindowDetection],
    n_bins: usize,
) -> Result<RadialDescriptor> {
    if n_bins < 8 {
        return Err(CompassError::InvalidConfig(format!("n_bins must be >= 8, got {n_bins}")));
    }
    let spans = detections
        .iter()
        .map(|d| detection_to_span(rig, d))
        .collect::<Result<Vec<_>>>()?;
    RadialDescriptor::from_hit_type_row(spans_to_hit_type(&spans, n_bins))
}
