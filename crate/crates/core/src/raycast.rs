//! Fixed-step ray marching on the plan raster and the five-channel encoding.
//!
//! Rays are sampled at `k · step` for `k = 1, 2, …` while `k · step < r_max`.
//! At `step = 0.02 m` on a `0.01 m/pixel` plan every other pixel is probed, so
//! a one-pixel wall hit only diagonally can be stepped over. Draw walls at
//! least `step / resolution` pixels thick.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::descriptor::{
    RadialDescriptor, ALL_CHANNELS, CHANNELS, CH_GRADIENT, CH_HIT_TYPE, CH_INV_RANGE, CH_RANGE,
    CH_VARIANCE,
};
use crate::descriptor::HitType;
use crate::error::{CompassError, Result};
use crate::floorplan::{Cell, FloorPlanRaster, Pose2D};

/// Sub-bin heading resolution: headings are snapped to `2π / (N_s · 2^20)`.
const HEADING_SUBDIV_BITS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RaycastConfig {
    /// Azimuth bins (rays) per descriptor.
    pub n_bins: usize,
    /// Maximum ray length, meters.
    pub r_max: f64,
    /// Marching step, meters.
    pub step: f64,
    /// Gradient clip, meters per bin.
    pub r_clip: f64,
    /// Local standard-deviation clip, meters.
    pub sigma_clip: f64,
    /// Half-width of the local variance neighborhood, bins.
    pub var_halfwidth: usize,
}

impl Default for RaycastConfig {
    fn default() -> Self {
        Self {
            n_bins: 360,
            r_max: 30.0,
            step: 0.02,
            r_clip: 5.0,
            sigma_clip: 10.0,
            var_halfwidth: 5,
        }
    }
}

impl RaycastConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CompassError::InvalidConfig(m));
        if self.n_bins < 8 {
            return bad(format!("n_bins must be >= 8, got {}", self.n_bins));
        }
        if !(self.step > 0.0 && self.step <= self.r_max && self.r_max.is_finite()) {
            return bad(format!(
                "need 0 < step <= r_max, got step {} r_max {}",
                self.step, self.r_max
            ));
        }
        if !(self.r_clip > 0.0) || !(self.sigma_clip > 0.0) {
            return bad("r_clip and sigma_clip must be positive".into());
        }
        if self.var_halfwidth < 1 {
            return bad("var_halfwidth must be >= 1".into());
        }
        Ok(())
    }

    /// Highest sample index `k` with `k · step < r_max`.
    pub fn max_samples(&self) -> usize {
        ((self.r_max / self.step) - 1e-9).ceil() as usize - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub range: f64,
    pub hit_type: HitType,
}

/// Marches one ray. `bearing` is measured counter-clockwise from world `+x`.
pub fn cast_ray(
    raster: &FloorPlanRaster,
    origin: [f64; 2],
    bearing: f64,
    cfg: &RaycastConfig,
) -> RayHit {
    let (dir_y, dir_x) = bearing.sin_cos();
    march(raster, raster.world_to_pixel(origin), dir_x, dir_y, cfg).0
}

/// Returns the hit and the number of raster probes spent.
#[inline]
fn march(
    raster: &FloorPlanRaster,
    start_px: [f64; 2],
    dir_x: f64,
    dir_y: f64,
    cfg: &RaycastConfig,
) -> (RayHit, u64) {
    let hit = |cell: Cell, range: f64| match cell {
        Cell::Window => Some(RayHit {
            range,
            hit_type: HitType::Window,
        }),
        Cell::Wall => Some(RayHit {
            range,
            hit_type: HitType::Wall,
        }),
        Cell::Free => None,
    };
    if let Some(h) = hit(raster.cell_at_pixel(start_px[0], start_px[1]), cfg.step) {
        return (h, 1);
    }
    let px_step = cfg.step / raster.resolution();
    // world +y is decreasing row
    let (dc, dr) = (dir_x * px_step, -dir_y * px_step);
    let n = cfg.max_samples();
    for k in 1..=n {
        let kf = k as f64;
        let cell = raster.cell_at_pixel(start_px[0] + kf * dc, start_px[1] + kf * dr);
        if let Some(h) = hit(cell, kf * cfg.step) {
            return (h, k as u64 + 1);
        }
    }
    (
        RayHit {
            range: cfg.r_max,
            hit_type: HitType::Open,
        },
        n as u64 + 1,
    )
}

/// Absolute bearings of the `n_bins` rays for a heading. The heading is
/// snapped to a `2^-20` bin grid and split into a whole-bin index plus a
/// fraction, so headings differing by whole bins produce bit-identical
/// bearing sets (rotated).
pub fn ray_bearings(psi: f64, n_bins: usize) -> Vec<f64> {
    let subdiv = 1u64 << HEADING_SUBDIV_BITS;
    let total = n_bins as u64 * subdiv;
    let quantum = TAU / total as f64;
    let ticks = (psi / quantum).round().rem_euclid(total as f64) as u64 % total;
    let whole = (ticks >> HEADING_SUBDIV_BITS) as usize;
    let frac = (ticks & (subdiv - 1)) as f64 * quantum;
    (0..n_bins)
        .map(|j| TAU * ((whole + j) % n_bins) as f64 / n_bins as f64 + frac)
        .collect()
}

/// Casts all rays for a pose and encodes them.
pub fn compute_descriptor(
    raster: &FloorPlanRaster,
    pose: Pose2D,
    cfg: &RaycastConfig,
) -> Result<RadialDescriptor> {
    Ok(compute_descriptor_counted(raster, pose, cfg)?.0)
}

/// [`compute_descriptor`] plus the number of raster probes performed.
pub fn compute_descriptor_counted(
    raster: &FloorPlanRaster,
    pose: Pose2D,
    cfg: &RaycastConfig,
) -> Result<(RadialDescriptor, u64)> {
    cfg.validate()?;
    let start = raster.world_to_pixel(pose.position());
    let mut probes = 0;
    let hits: Vec<RayHit> = ray_bearings(pose.psi, cfg.n_bins)
        .into_iter()
        .map(|b| {
            let (s, c) = b.sin_cos();
            let (h, p) = march(raster, start, c, s, cfg);
            probes += p;
            h
        })
        .collect();
    Ok((encode_hits(&hits, cfg), probes))
}

/// Fills the five channels from per-bin ray hits.
pub fn encode_hits(hits: &[RayHit], cfg: &RaycastConfig) -> RadialDescriptor {
    let n = hits.len();
    let ranges: Vec<f64> = hits.iter().map(|h| h.range).collect();
    let mut data = vec![0.0; CHANNELS * n];
    let w = cfg.var_halfwidth as i64;
    let span = (2 * w + 1) as f64;
    for j in 0..n {
        let r = ranges[j];
        let at = |off: i64| ranges[(j as i64 + off).rem_euclid(n as i64) as usize];
        data[CH_RANGE * n + j] = r / cfg.r_max;
        data[CH_HIT_TYPE * n + j] = hits[j].hit_type.value();
        let grad = (at(1) - at(-1)) / 2.0;
        data[CH_GRADIENT * n + j] = (grad.abs() / cfg.r_clip).min(1.0);
        data[CH_INV_RANGE * n + j] = 1.0 / (1.0 + r);
        let mean = (-w..=w).map(at).sum::<f64>() / span;
        let var = (-w..=w).map(|k| (at(k) - mean).powi(2)).sum::<f64>() / span;
        data[CH_VARIANCE * n + j] = (var.sqrt() / cfg.sigma_clip).min(1.0);
    }
    RadialDescriptor::from_flat(n, data, ALL_CHANNELS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::CH_HIT_TYPE;

    /// Square room whose inner faces are the lines x, y ∈ {0, 10}; 4 px
    /// walls outside them at 0.01 m/px.
    fn square_room(window_east: bool) -> FloorPlanRaster {
        let n = 1008;
        let mut wall = vec![false; n * n];
        let mut window = vec![false; n * n];
        for r in 0..n {
            for c in 0..n {
                let border = r < 4 || c < 4 || r >= n - 4 || c >= n - 4;
                wall[r * n + c] = border;
                if window_east && c >= n - 4 && (404..604).contains(&r) {
                    window[r * n + c] = true;
                }
            }
        }
        FloorPlanRaster::new(n, n, wall, window, 0.01, [-0.04, 10.04]).unwrap()
    }

    /// Distance from `p` along `dir` to the inner face of the square room.
    fn analytic_range(p: [f64; 2], bearing: f64, inner: [f64; 2]) -> f64 {
        let (s, c) = bearing.sin_cos();
        let mut best = f64::INFINITY;
        for (d, start) in [(c, p[0]), (s, p[1])] {
            if d.abs() < 1e-12 {
                continue;
            }
            for face in inner {
                let t = (face - start) / d;
                if t > 0.0 {
                    best = best.min(t);
                }
            }
        }
        best
    }

    #[test]
    fn empty_raster_is_open() {
        let plan = FloorPlanRaster::empty(50, 50, 0.1, [0.0, 5.0]).unwrap();
        let cfg = RaycastConfig::default();
        for b in [0.0, 1.0, 3.0, 5.5] {
            let h = cast_ray(&plan, [2.5, 2.5], b, &cfg);
            assert_eq!(h.hit_type, HitType::Open);
            assert_eq!(h.range, cfg.r_max);
        }
    }

    #[test]
    fn square_room_ranges_match_analytic_oracle() {
        let plan = square_room(false);
        let cfg = RaycastConfig::default();
        let inner = [0.0, 10.0];
        let p = [5.0, 5.0];
        let h = cast_ray(&plan, p, 0.0, &cfg);
        assert_eq!(h.hit_type, HitType::Wall);
        assert!((h.range - 5.0).abs() <= cfg.step, "range {}", h.range);
        for k in 0..36 {
            let b = k as f64 * TAU / 36.0 + 0.013;
            let h = cast_ray(&plan, p, b, &cfg);
            let expect = analytic_range(p, b, inner);
            assert_eq!(h.hit_type, HitType::Wall);
            // first sample inside the wall lies within one step past the face
            assert!(h.range >= expect - 1e-9 && h.range <= expect + cfg.step + 1e-9);
        }
    }

    #[test]
    fn window_on_east_wall_is_reported() {
        let plan = square_room(true);
        let cfg = RaycastConfig::default();
        let h = cast_ray(&plan, [5.0, 5.0], 0.0, &cfg);
        assert_eq!(h.hit_type, HitType::Window);
        assert!((h.range - 5.0).abs() <= cfg.step);
        // north is still wall
        assert_eq!(cast_ray(&plan, [5.0, 5.0], TAU / 4.0, &cfg).hit_type, HitType::Wall);
    }

    #[test]
    fn origin_inside_wall_hits_at_first_step() {
        let plan = square_room(false);
        let cfg = RaycastConfig::default();
        let h = cast_ray(&plan, [-0.02, 5.0], 1.0, &cfg);
        assert_eq!(h, RayHit { range: cfg.step, hit_type: HitType::Wall });
    }

    #[test]
    fn empty_raster_descriptor_is_constant() {
        let plan = FloorPlanRaster::empty(20, 20, 0.1, [0.0, 2.0]).unwrap();
        let cfg = RaycastConfig::default();
        let d = compute_descriptor(&plan, Pose2D::new(1.0, 1.0, 0.3), &cfg).unwrap();
        assert!(d.row(0).iter().all(|&v| v == 1.0));
        assert!(d.row(CH_HIT_TYPE).iter().all(|&v| v == 0.0));
        assert!(d.row(2).iter().all(|&v| v == 0.0));
        assert!(d.row(3).iter().all(|&v| v == 1.0 / 31.0));
        assert!(d.row(4).iter().all(|&v| v == 0.0));
        assert_eq!(d.transition_count(), 0);
    }

    #[test]
    fn zero_range_gives_unit_inverse_range() {
        let cfg = RaycastConfig::default();
        let hits = vec![RayHit { range: 0.0, hit_type: HitType::Wall }; 8];
        let d = encode_hits(&hits, &cfg);
        assert_eq!(d.get(3, 0), 1.0);
    }

    #[test]
    fn gradient_and_variance_follow_formulas() {
        let cfg = RaycastConfig { var_halfwidth: 1, ..RaycastConfig::default() };
        let ranges = [1.0, 2.0, 4.0, 8.0, 16.0, 4.0, 2.0, 1.0];
        let hits: Vec<_> =
            ranges.iter().map(|&range| RayHit { range, hit_type: HitType::Wall }).collect();
        let d = encode_hits(&hits, &cfg);
        // bin 2: (8 - 2)/2 = 3 m/bin -> 0.6
        assert!((d.get(2, 2) - 0.6).abs() < 1e-12);
        // bin 4: (4 - 8)/2 -> |−2| / 5
        assert!((d.get(2, 4) - 0.4).abs() < 1e-12);
        // bin 0 wraps: (2 - 1)/2 = 0.5 -> 0.1
        assert!((d.get(2, 0) - 0.1).abs() < 1e-12);
        // population std of {8,16,4}
        let m: f64 = 28.0 / 3.0;
        let sd = (((8.0 - m).powi(2) + (16.0 - m).powi(2) + (4.0 - m).powi(2)) / 3.0).sqrt();
        assert!((d.get(4, 4) - sd / 10.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(RaycastConfig::default().validate().is_ok());
        for bad in [
            RaycastConfig { n_bins: 7, ..Default::default() },
            RaycastConfig { step: 0.0, ..Default::default() },
            RaycastConfig { step: 31.0, ..Default::default() },
            RaycastConfig { r_clip: 0.0, ..Default::default() },
            RaycastConfig { sigma_clip: -1.0, ..Default::default() },
            RaycastConfig { var_halfwidth: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert_eq!(RaycastConfig::default().max_samples(), 1499);
    }

    #[test]
    fn bearings_rotate_exactly_by_whole_bins() {
        let psi = 1.234_567;
        let base = ray_bearings(psi, 360);
        for k in [1i64, 7, 359, 360, 1000] {
            let rotated = ray_bearings(psi + k as f64 * TAU / 360.0, 360);
            for j in 0..360 {
                assert_eq!(rotated[j].to_bits(), base[(j + k as usize) % 360].to_bits());
            }
        }
    }

    #[test]
    fn halving_step_never_lengthens_rays() {
        let plan = square_room(true);
        let cfg = RaycastConfig::default();
        let fine = RaycastConfig { step: cfg.step / 2.0, ..cfg };
        for k in 0..90 {
            let b = k as f64 * TAU / 90.0 + 0.001;
            let p = [2.7, 6.1];
            let coarse = cast_ray(&plan, p, b, &cfg).range;
            let refined = cast_ray(&plan, p, b, &fine).range;
            assert!(refined <= coarse + 1e-12);
            assert!(coarse - refined <= cfg.step + 1e-12);
        }
    }
}
