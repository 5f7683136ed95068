//! Roll and pitch from vanishing points of fisheye line segments.
//!
//! Each segment lifts to a great circle on the unit bearing sphere. Parallel
//! 3D lines give circles through a common direction, the vanishing point. The
//! vertical one is gravity in the camera frame.

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::LineSegment;
use crate::error::{CompassError, Result};
use crate::fisheye::{rotate_about_vertical, CameraModel, CameraRig, RigCamera};
use crate::floorplan::normalize_angle;

type V3 = [f64; 3];

fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Angle between two directions, ignoring sign.
pub fn axis_angle_between(a: V3, b: V3) -> f64 {
    (dot(a, b).abs() / (norm(a) * norm(b))).clamp(0.0, 1.0).acos()
}

/// Plane through the camera center containing a segment's bearings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreatCircle {
    pub normal: V3,
}

pub fn segment_to_great_circle(cam: &CameraModel, seg: &LineSegment) -> Result<GreatCircle> {
    let n = cross(cam.unproject(seg.p1), cam.unproject(seg.p2));
    let len = norm(n);
    if len < 1e-9 {
        return Err(CompassError::Degenerate(format!(
            "segment ({:.2}, {:.2})-({:.2}, {:.2}) has parallel endpoint bearings",
            seg.p1[0], seg.p1[1], seg.p2[0], seg.p2[1]
        )));
    }
    Ok(GreatCircle { normal: scale(n, 1.0 / len) })
}

/// Picks the representative of `±v` with `y ≥ 0`, then `z ≥ 0`, then `x ≥ 0`.
pub fn canonicalize(v: V3) -> V3 {
    let flip = if v[1] != 0.0 {
        v[1] < 0.0
    } else if v[2] != 0.0 {
        v[2] < 0.0
    } else {
        v[0] < 0.0
    };
    if flip {
        scale(v, -1.0)
    } else {
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingPoint {
    /// Canonical unit direction.
    pub direction: V3,
    /// Indices into the circle list passed to RANSAC.
    pub inliers: Vec<usize>,
}

impl VanishingPoint {
    pub fn inlier_count(&self) -> usize {
        self.inliers.len()
    }

    /// Angle to the image-down axis `(0, 1, 0)`.
    pub fn tilt(&self) -> f64 {
        axis_angle_between(self.direction, [0.0, 1.0, 0.0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub angular_tolerance: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            angular_tolerance: 2f64.to_radians(),
            iterations: 200,
            seed: 0,
        }
    }
}

fn inliers_of(circles: &[GreatCircle], pool: &[usize], vp: V3, sin_tol: f64) -> Vec<usize> {
    pool.iter()
        .copied()
        .filter(|&i| dot(circles[i].normal, vp).abs() < sin_tol)
        .collect()
}

/// Smallest-eigenvalue eigenvector of the inlier normals' scatter matrix.
fn refine(circles: &[GreatCircle], inliers: &[usize], fallback: V3) -> V3 {
    let mut m = Matrix3::<f64>::zeros();
    for &i in inliers {
        let n = nalgebra::Vector3::from(circles[i].normal);
        m += n * n.transpose();
    }
    let eig = SymmetricEigen::new(m);
    let k = eig.eigenvalues.imin();
    let v = eig.eigenvectors.column(k);
    let v = [v[0], v[1], v[2]];
    let len = norm(v);
    if !len.is_finite() || len < 1e-12 {
        return fallback;
    }
    let v = scale(v, 1.0 / len);
    // keep the eigen solver's sign choice out of the result
    if dot(v, fallback) < 0.0 {
        scale(v, -1.0)
    } else {
        v
    }
}

/// Walks from `h` toward the least-squares direction `v` and stops at the
/// last point along the arc that still keeps every inlier of `h`.
fn keep_consensus(circles: &[GreatCircle], inl: &[usize], h: V3, v: V3, sin_tol: f64) -> V3 {
    let keeps = |d: V3| inl.iter().all(|&i| dot(circles[i].normal, d).abs() < sin_tol);
    if keeps(v) {
        return v;
    }
    let angle = dot(h, v).clamp(-1.0, 1.0).acos();
    if angle < 1e-15 {
        return h;
    }
    let slerp = |t: f64| {
        let (a, b) = (((1.0 - t) * angle).sin(), (t * angle).sin());
        let s = angle.sin();
        let d = [
            (a * h[0] + b * v[0]) / s,
            (a * h[1] + b * v[1]) / s,
            (a * h[2] + b * v[2]) / s,
        ];
        scale(d, 1.0 / norm(d))
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if keeps(slerp(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        h
    } else {
        slerp(lo)
    }
}

/// Truncated quadratic cost: inliers pay their squared residual, others the
/// squared tolerance. Among equal inlier counts this prefers tighter fits.
fn msac_cost(circles: &[GreatCircle], pool: &[usize], vp: V3, sin_tol: f64) -> f64 {
    let t2 = sin_tol * sin_tol;
    pool.iter().map(|&i| dot(circles[i].normal, vp).powi(2).min(t2)).sum()
}

fn ransac_pool(
    circles: &[GreatCircle],
    pool: &[usize],
    cfg: &RansacConfig,
    rng: &mut ChaCha8Rng,
) -> Result<VanishingPoint> {
    ransac_core(circles, pool, cfg, rng).map(|(_, refined)| refined)
}

/// Returns the lowest-cost pair hypothesis and its refinement.
fn ransac_core(
    circles: &[GreatCircle],
    pool: &[usize],
    cfg: &RansacConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(VanishingPoint, VanishingPoint)> {
    if pool.len() < 2 {
        return Err(CompassError::Degenerate(format!(
            "vanishing point needs at least 2 great circles, got {}",
            pool.len()
        )));
    }
    let sin_tol = cfg.angular_tolerance.sin();
    let mut best: Option<(V3, Vec<usize>, f64)> = None;
    for _ in 0..cfg.iterations.max(1) {
        let a = rng.random_range(0..pool.len());
        let mut b = rng.random_range(0..pool.len() - 1);
        if b >= a {
            b += 1;
        }
        let h = cross(circles[pool[a]].normal, circles[pool[b]].normal);
        let len = norm(h);
        if len < 1e-12 {
            continue;
        }
        let h = canonicalize(scale(h, 1.0 / len));
        let inl = inliers_of(circles, pool, h, sin_tol);
        let cost = msac_cost(circles, pool, h, sin_tol);
        if best.as_ref().is_none_or(|(_, _, bc)| cost < *bc) {
            best = Some((h, inl, cost));
        }
    }
    let Some((h, inl, _)) = best else {
        return Err(CompassError::Degenerate("all sampled great circles coincide".into()));
    };
    if inl.len() < 2 {
        return Err(CompassError::Degenerate(format!(
            "best vanishing point has {} inliers",
            inl.len()
        )));
    }
    let v = canonicalize(keep_consensus(circles, &inl, h, refine(circles, &inl, h), sin_tol));
    let inliers = inliers_of(circles, pool, v, sin_tol);
    Ok((
        VanishingPoint { direction: h, inliers: inl },
        VanishingPoint { direction: v, inliers },
    ))
}

/// Single RANSAC vanishing point over all circles. Deterministic in `cfg.seed`.
pub fn ransac_vanishing_point(circles: &[GreatCircle], cfg: &RansacConfig) -> Result<VanishingPoint> {
    let pool: Vec<usize> = (0..circles.len()).collect();
    ransac_pool(circles, &pool, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

/// Like [`ransac_vanishing_point`] but also returns the unrefined best
/// hypothesis, so consensus before and after refinement can be compared.
pub fn ransac_with_hypothesis(
    circles: &[GreatCircle],
    cfg: &RansacConfig,
) -> Result<(VanishingPoint, VanishingPoint)> {
    let pool: Vec<usize> = (0..circles.len()).collect();
    ransac_core(circles, &pool, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttitudeConfig {
    pub ransac: RansacConfig,
    /// Vertical VP must lie within this angle of `(0, 1, 0)`.
    pub max_vertical_angle: f64,
    /// Vanishing points extracted per camera by sequential RANSAC.
    pub max_vanishing_points: usize,
    /// Sequential extraction stops below this many inliers.
    pub min_inliers: usize,
}

impl Default for AttitudeConfig {
    fn default() -> Self {
        Self {
            ransac: RansacConfig::default(),
            max_vertical_angle: 30f64.to_radians(),
            max_vanishing_points: 3,
            min_inliers: 5,
        }
    }
}

/// Sequential RANSAC: each round removes the previous consensus set.
pub fn detect_vanishing_points(
    circles: &[GreatCircle],
    cfg: &AttitudeConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<VanishingPoint> {
    let mut pool: Vec<usize> = (0..circles.len()).collect();
    let mut out = Vec::new();
    while out.len() < cfg.max_vanishing_points {
        let Ok(vp) = ransac_pool(circles, &pool, &cfg.ransac, rng) else {
            break;
        };
        if vp.inlier_count() < cfg.min_inliers.max(2) {
            break;
        }
        pool.retain(|i| !vp.inliers.contains(i));
        out.push(vp);
    }
    out
}

/// The near-vertical candidate with the most inliers.
pub fn select_vertical(vps: &[VanishingPoint], max_angle: f64) -> Option<usize> {
    vps.iter()
        .enumerate()
        .filter(|(_, v)| v.tilt() <= max_angle)
        .max_by(|a, b| a.1.inlier_count().cmp(&b.1.inlier_count()).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttitudeEstimate {
    pub roll: f64,
    pub pitch: f64,
    /// Unit gravity direction in the body frame.
    pub gravity: V3,
    pub inlier_count: usize,
    /// Only one camera contributed.
    pub single_source: bool,
}

impl AttitudeEstimate {
    pub fn from_gravity(g: V3, inlier_count: usize) -> Result<Self> {
        let len = norm(g);
        if !(len > 0.0) {
            return Err(CompassError::Degenerate("zero gravity vector".into()));
        }
        let g = canonicalize(scale(g, 1.0 / len));
        if g[1] <= 0.0 {
            return Err(CompassError::UnsupportedAttitude(
                "vertical vanishing point is at least 90° from image-down".into(),
            ));
        }
        Ok(Self {
            roll: (-g[0]).atan2(g[1].hypot(g[2])),
            pitch: g[2].atan2(g[1]),
            gravity: g,
            inlier_count,
            single_source: true,
        })
    }
}

/// Gravity in the camera frame for a roll and pitch; inverse of the attitude formulas.
pub fn gravity_from_roll_pitch(roll: f64, pitch: f64) -> V3 {
    [-roll.sin(), roll.cos() * pitch.cos(), roll.cos() * pitch.sin()]
}

/// Roll and pitch from a vertical VP seen by a camera mounted at `yaw_offset`.
pub fn roll_pitch_from_gravity(vertical: &VanishingPoint, yaw_offset: f64) -> Result<AttitudeEstimate> {
    let g = rotate_about_vertical(canonicalize(vertical.direction), normalize_angle(yaw_offset));
    AttitudeEstimate::from_gravity(g, vertical.inlier_count())
}

/// Per-camera outcome: all vanishing points plus the vertical pick.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraAttitude {
    pub camera_id: String,
    pub vanishing_points: Vec<VanishingPoint>,
    /// Index into `vanishing_points`.
    pub vertical: usize,
    pub estimate: AttitudeEstimate,
    /// Segment index for each great circle (degenerate segments are skipped).
    pub circle_segments: Vec<usize>,
}

pub fn estimate_camera_attitude(
    cam: &RigCamera,
    segments: &[LineSegment],
    cfg: &AttitudeConfig,
    rng: &mut ChaCha8Rng,
) -> Result<CameraAttitude> {
    let mut circles = Vec::with_capacity(segments.len());
    let mut circle_segments = Vec::with_capacity(segments.len());
    for (i, s) in segments.iter().enumerate() {
        if let Ok(c) = segment_to_great_circle(&cam.model, s) {
            circles.push(c);
            circle_segments.push(i);
        }
    }
    let vps = detect_vanishing_points(&circles, cfg, rng);
    let vertical = select_vertical(&vps, cfg.max_vertical_angle).ok_or_else(|| {
        CompassError::NoAttitude(format!(
            "camera '{}': no vanishing point within {:.1}° of vertical",
            cam.id,
            cfg.max_vertical_angle.to_degrees()
        ))
    })?;
    let estimate = roll_pitch_from_gravity(&vps[vertical], cam.yaw_offset)?;
    Ok(CameraAttitude {
        camera_id: cam.id.clone(),
        vanishing_points: vps,
        vertical,
        estimate,
        circle_segments,
    })
}

/// Fused rig attitude with per-camera detail.
#[derive(Debug)]
pub struct RigAttitude {
    pub fused: AttitudeEstimate,
    pub cameras: Vec<Result<CameraAttitude>>,
}

/// Runs each camera with its own seeded stream (stream = camera index), then
/// fuses body-frame gravities by inlier-weighted vector sum.
pub fn estimate_attitude_rig(
    rig: &CameraRig,
    segments: &[Vec<LineSegment>],
    cfg: &AttitudeConfig,
) -> Result<RigAttitude> {
    if segments.len() != rig.cameras.len() {
        return Err(CompassError::InvalidConfig(format!(
            "{} segment sets for {} rig cameras",
            segments.len(),
            rig.cameras.len()
        )));
    }
    let cameras: Vec<Result<CameraAttitude>> = rig
        .cameras
        .par_iter()
        .zip(segments.par_iter())
        .enumerate()
        .map(|(k, (cam, segs))| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.ransac.seed);
            rng.set_stream(k as u64);
            estimate_camera_attitude(cam, segs, cfg, &mut rng)
        })
        .collect();
    let ok: Vec<&AttitudeEstimate> = cameras.iter().filter_map(|c| c.as_ref().ok()).map(|c| &c.estimate).collect();
    let fused = match ok.as_slice() {
        [] => {
            let reasons: Vec<String> = cameras
                .iter()
                .filter_map(|c| c.as_ref().err())
                .map(|e| e.to_string())
                .collect();
            return Err(CompassError::NoAttitude(reasons.join("; ")));
        }
        [one] => (*one).clone(),
        many => {
            let mut sum = [0.0; 3];
            let mut inliers = 0;
            for e in many {
                let w = e.inlier_count as f64;
                for k in 0..3 {
                    sum[k] += w * e.gravity[k];
                }
                inliers += e.inlier_count;
            }
            let mut est = AttitudeEstimate::from_gravity(sum, inliers)?;
            est.single_source = false;
            est
        }
    };
    Ok(RigAttitude { fused, cameras })
}

/// Front/back convenience wrapper over the first two rig cameras.
pub fn estimate_attitude_dual(
    front: &[LineSegment],
    back: &[LineSegment],
    rig: &CameraRig,
    cfg: &AttitudeConfig,
) -> Result<AttitudeEstimate> {
    if rig.cameras.len() < 2 {
        return Err(CompassError::InvalidConfig("dual attitude needs two rig cameras".into()));
    }
    let pair = CameraRig {
        cameras: rig.cameras[..2].to_vec(),
        ..rig.clone()
    };
    estimate_attitude_rig(&pair, &[front.to_vec(), back.to_vec()], cfg).map(|r| r.fused)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{attitude_scene, AttitudeScene};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn cam() -> CameraModel {
        CameraModel::equidistant(300.0, 1000, 1000)
    }

    fn circle_through(d: V3, other: V3) -> GreatCircle {
        let n = cross(d, other);
        GreatCircle { normal: scale(n, 1.0 / norm(n)) }
    }

    #[test]
    fn vertical_segment_through_center_has_x_normal() {
        let c = segment_to_great_circle(&cam(), &LineSegment::new([500.0, 300.0], [500.0, 700.0])).unwrap();
        assert!((c.normal[0].abs() - 1.0).abs() < 1e-12);
        assert!(c.normal[1].abs() < 1e-12 && c.normal[2].abs() < 1e-12);
    }

    #[test]
    fn normal_is_orthogonal_to_bearings() {
        let m = cam();
        let s = LineSegment::new([320.0, 410.0], [640.0, 180.0]);
        let c = segment_to_great_circle(&m, &s).unwrap();
        assert!(dot(c.normal, m.unproject(s.p1)).abs() < 1e-9);
        assert!(dot(c.normal, m.unproject(s.p2)).abs() < 1e-9);
        assert!((norm(c.normal) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coincident_endpoints_are_degenerate() {
        let s = LineSegment::new([320.0, 410.0], [320.0, 410.0]);
        assert!(matches!(segment_to_great_circle(&cam(), &s), Err(CompassError::Degenerate(_))));
    }

    #[test]
    fn two_circles_intersect_exactly() {
        let d = [0.2, 0.9, 0.1];
        let d = scale(d, 1.0 / norm(d));
        let circles = [circle_through(d, [1.0, 0.0, 0.0]), circle_through(d, [0.0, 0.0, 1.0])];
        let vp = ransac_vanishing_point(&circles, &RansacConfig::default()).unwrap();
        assert!(axis_angle_between(vp.direction, d) < 1e-9);
        assert_eq!(vp.inliers, vec![0, 1]);
    }

    #[test]
    fn too_few_circles() {
        let c = [circle_through([0.0, 1.0, 0.0], [1.0, 0.0, 0.0])];
        assert!(ransac_vanishing_point(&c, &RansacConfig::default()).is_err());
        assert!(ransac_vanishing_point(&[], &RansacConfig::default()).is_err());
    }

    #[test]
    fn canonical_forms() {
        assert_eq!(canonicalize([0.1, -0.9, 0.2]), [-0.1, 0.9, -0.2]);
        assert_eq!(canonicalize([0.3, 0.0, -1.0]), [-0.3, 0.0, 1.0]);
        assert_eq!(canonicalize([-1.0, 0.0, 0.0]), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn gravity_examples() {
        let level = AttitudeEstimate::from_gravity([0.0, 1.0, 0.0], 1).unwrap();
        assert_eq!((level.roll, level.pitch), (0.0, 0.0));
        let p = 5f64.to_radians();
        let e = AttitudeEstimate::from_gravity([0.0, p.cos(), p.sin()], 1).unwrap();
        assert!((e.pitch - p).abs() < 1e-12 && e.roll.abs() < 1e-12);
        let r = 3f64.to_radians();
        let e = AttitudeEstimate::from_gravity([-r.sin(), r.cos(), 0.0], 1).unwrap();
        assert!((e.roll - r).abs() < 1e-12 && e.pitch.abs() < 1e-12);
        assert!(matches!(
            AttitudeEstimate::from_gravity([1.0, 0.0, 0.0], 1),
            Err(CompassError::UnsupportedAttitude(_))
        ));
    }

    #[test]
    fn back_camera_flips_roll_and_pitch() {
        let g = gravity_from_roll_pitch(0.05, -0.08);
        let vp = VanishingPoint { direction: g, inliers: vec![0, 1] };
        let e = roll_pitch_from_gravity(&vp, PI).unwrap();
        assert!((e.roll + 0.05).abs() < 1e-12 && (e.pitch - 0.08).abs() < 1e-12);
    }

    fn scene(roll: f64, pitch: f64, outliers: f64, noise: f64, seed: u64) -> Vec<LineSegment> {
        let spec = AttitudeScene {
            roll,
            pitch,
            outlier_fraction: outliers,
            pixel_noise: noise,
            ..AttitudeScene::default()
        };
        attitude_scene(&cam(), &spec, &mut ChaCha8Rng::seed_from_u64(seed)).segments
    }

    #[test]
    fn noiseless_scene_recovers_attitude() {
        let (r, p) = (7f64.to_radians(), -11f64.to_radians());
        let segs = scene(r, p, 0.0, 0.0, 3);
        let rig_cam = RigCamera { id: "front".into(), model: cam(), yaw_offset: 0.0 };
        let out = estimate_camera_attitude(&rig_cam, &segs, &AttitudeConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!((out.estimate.roll - r).abs() < 1e-4, "{:?}", out.estimate);
        assert!((out.estimate.pitch - p).abs() < 1e-4, "{:?}", out.estimate);
        assert!(out.vanishing_points.len() >= 2);
    }

    #[test]
    fn ransac_is_deterministic() {
        let segs = scene(0.1, 0.05, 0.2, 0.5, 9);
        let circles: Vec<_> = segs.iter().filter_map(|s| segment_to_great_circle(&cam(), s).ok()).collect();
        let cfg = RansacConfig { seed: 42, ..RansacConfig::default() };
        assert_eq!(ransac_vanishing_point(&circles, &cfg).unwrap(), ransac_vanishing_point(&circles, &cfg).unwrap());
    }

    #[test]
    fn refinement_keeps_consensus() {
        let mut superset = 0;
        for seed in 0..40 {
            let segs = scene(0.1, -0.1, 0.2, 0.5, seed);
            let circles: Vec<_> = segs.iter().filter_map(|s| segment_to_great_circle(&cam(), s).ok()).collect();
            let cfg = RansacConfig { seed, ..RansacConfig::default() };
            let (hyp, refined) = ransac_with_hypothesis(&circles, &cfg).unwrap();
            if hyp.inliers.iter().all(|i| refined.inliers.contains(i)) {
                superset += 1;
            }
        }
        assert!(superset >= 38, "{superset}/40");
    }

    #[test]
    fn dual_agreement_and_fallback() {
        let rig = CameraRig::dual(cam());
        let (r, p) = (0.04, -0.06);
        let front = scene(r, p, 0.0, 0.0, 1);
        // back camera sees the same body attitude with roll and pitch negated
        let back = scene(-r, -p, 0.0, 0.0, 2);
        let cfg = AttitudeConfig::default();
        let fused = estimate_attitude_dual(&front, &back, &rig, &cfg).unwrap();
        assert!(!fused.single_source);
        assert!((fused.roll - r).abs() < 1e-6 && (fused.pitch - p).abs() < 1e-6, "{fused:?}");

        let only_front = estimate_attitude_dual(&front, &[], &rig, &cfg).unwrap();
        assert!(only_front.single_source);
        assert!((only_front.roll - r).abs() < 1e-4);
        assert!(matches!(
            estimate_attitude_dual(&[], &[], &rig, &cfg),
            Err(CompassError::NoAttitude(_))
        ));
    }

    #[test]
    fn identical_gravity_fuses_to_itself() {
        let g = gravity_from_roll_pitch(0.02, 0.03);
        let a = AttitudeEstimate::from_gravity(g, 10).unwrap();
        let b = AttitudeEstimate::from_gravity(g, 30).unwrap();
        let sum: V3 = std::array::from_fn(|k| 10.0 * a.gravity[k] + 30.0 * b.gravity[k]);
        let f = AttitudeEstimate::from_gravity(sum, 40).unwrap();
        assert!((f.roll - a.roll).abs() < 1e-9 && (f.pitch - a.pitch).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn antipodal_normals_give_same_vp(seed in 0u64..200, flips in prop::collection::vec(any::<bool>(), 64)) {
            let segs = scene(0.05, 0.02, 0.2, 0.3, seed);
            let circles: Vec<_> = segs.iter().filter_map(|s| segment_to_great_circle(&cam(), s).ok()).collect();
            let flipped: Vec<_> = circles
                .iter()
                .enumerate()
                .map(|(i, c)| if flips[i % flips.len()] { GreatCircle { normal: scale(c.normal, -1.0) } } else { *c })
                .collect();
            let cfg = RansacConfig { seed, ..RansacConfig::default() };
            let a = ransac_vanishing_point(&circles, &cfg).unwrap();
            let b = ransac_vanishing_point(&flipped, &cfg).unwrap();
            prop_assert_eq!(&a.inliers, &b.inliers);
            prop_assert!(axis_angle_between(a.direction, b.direction) < 1e-9);
            prop_assert!(a.direction[1] >= 0.0 && b.direction[1] >= 0.0);
        }
    }
}
