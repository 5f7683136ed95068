//! The `C × N_s` radial descriptor shared by the floor-plan and visual sides.

use serde::{Deserialize, Serialize};

use crate::error::{CompassError, Result};

/// Number of descriptor channels.
pub const CHANNELS: usize = 5;

pub const CH_RANGE: usize = 0;
pub const CH_HIT_TYPE: usize = 1;
pub const CH_GRADIENT: usize = 2;
pub const CH_INV_RANGE: usize = 3;
pub const CH_VARIANCE: usize = 4;

pub const CHANNEL_NAMES: [&str; CHANNELS] =
    ["range", "hit_type", "gradient", "inv_range", "variance"];

/// Structural class of the first surface met along a ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitType {
    Wall,
    Window,
    Open,
}

impl HitType {
    /// Channel-1 encoding.
    pub fn value(self) -> f64 {
        match self {
            HitType::Wall => 1.0,
            HitType::Window => 0.5,
            HitType::Open => 0.0,
        }
    }

    /// Decodes a channel-1 value, snapping to the nearest of {0, 0.5, 1}.
    pub fn from_value(v: f64) -> HitType {
        if v >= 0.75 {
            HitType::Wall
        } else if v >= 0.25 {
            HitType::Window
        } else {
            HitType::Open
        }
    }

    pub fn short(self) -> char {
        match self {
            HitType::Wall => 'W',
            HitType::Window => 'G',
            HitType::Open => 'O',
        }
    }
}

/// Which channels carry evidence. Visual descriptors only fill channel 1.
pub type ChannelMask = [bool; CHANNELS];

pub const ALL_CHANNELS: ChannelMask = [true; CHANNELS];
pub const HIT_TYPE_ONLY: ChannelMask = [false, true, false, false, false];

/// Column-major-by-channel radial descriptor. Column `j` corresponds to
/// relative bearing `2πj/N_s`, counter-clockwise from the heading.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialDescriptor {
    n_bins: usize,
    data: Vec<f64>,
    active: ChannelMask,
    transition_count: u32,
}

impl RadialDescriptor {
    /// Builds a descriptor from `CHANNELS` rows of length `n_bins`.
    pub fn from_rows(rows: [Vec<f64>; CHANNELS], active: ChannelMask) -> Result<Self> {
        let n_bins = rows[0].len();
        if n_bins == 0 {
            return Err(CompassError::ShapeMismatch("descriptor has zero bins".into()));
        }
        if rows.iter().any(|r| r.len() != n_bins) {
            return Err(CompassError::ShapeMismatch(
                "descriptor rows differ in length".into(),
            ));
        }
        Ok(Self::from_flat(n_bins, rows.concat(), active))
    }

    /// `data` is `CHANNELS × n_bins`, row-major.
    pub(crate) fn from_flat(n_bins: usize, data: Vec<f64>, active: ChannelMask) -> Self {
        debug_assert_eq!(data.len(), CHANNELS * n_bins);
        let transition_count = count_transitions(&data[CH_HIT_TYPE * n_bins..][..n_bins]);
        Self {
            n_bins,
            data,
            active,
            transition_count,
        }
    }

    /// A visual-style descriptor: channel 1 populated, all others zero and inactive.
    pub fn from_hit_type_row(row: Vec<f64>) -> Result<Self> {
        let n = row.len();
        Self::from_rows(
            [vec![0.0; n], row, vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            HIT_TYPE_ONLY,
        )
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn row(&self, channel: usize) -> &[f64] {
        &self.data[channel * self.n_bins..(channel + 1) * self.n_bins]
    }

    pub fn get(&self, channel: usize, bin: usize) -> f64 {
        self.data[channel * self.n_bins + bin]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn active(&self) -> ChannelMask {
        self.active
    }

    pub fn transition_count(&self) -> u32 {
        self.transition_count
    }

    pub fn hit_types(&self) -> Vec<HitType> {
        self.row(CH_HIT_TYPE).iter().map(|&v| HitType::from_value(v)).collect()
    }

    /// Column-cyclic shift: `out[c][j] = self[c][(j + k) mod N_s]`. This is
    /// the descriptor seen after turning the heading by `+k` bins.
    pub fn shifted(&self, k: i64) -> RadialDescriptor {
        let n = self.n_bins;
        let k = k.rem_euclid(n as i64) as usize;
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..CHANNELS {
            let row = self.row(c);
            data.extend_from_slice(&row[k..]);
            data.extend_from_slice(&row[..k]);
        }
        Self {
            n_bins: n,
            data,
            active: self.active,
            transition_count: self.transition_count,
        }
    }

    pub fn with_active(mut self, active: ChannelMask) -> Self {
        self.active = active;
        self
    }
}

/// Circular label-change count of a channel-1 row.
pub fn count_transitions(hit_row: &[f64]) -> u32 {
    let n = hit_row.len();
    (0..n)
        .filter(|&j| HitType::from_value(hit_row[j]) != HitType::from_value(hit_row[(j + 1) % n]))
        .count() as u32
}

/// Number of positions `j` whose hit-type label differs from the label at
/// `(j + 1) mod N_s`. Rotation-invariant.
pub fn transition_signature(d: &RadialDescriptor) -> u32 {
    count_transitions(d.row(CH_HIT_TYPE))
}

/// Summary numbers reported for a descriptor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescriptorStats {
    pub n_bins: usize,
    pub wall_bins: usize,
    pub window_bins: usize,
    pub open_bins: usize,
    /// Min and max range in meters (`channel 0 · r_max`), when channel 0 is active.
    pub range_min: Option<f64>,
    pub range_max: Option<f64>,
    pub mean_gradient: Option<f64>,
    pub transition_count: u32,
    /// Contiguous same-label arcs around the circle.
    pub segments: usize,
}

impl DescriptorStats {
    pub fn compute(d: &RadialDescriptor, r_max: f64) -> Self {
        let labels = d.hit_types();
        let count = |t: HitType| labels.iter().filter(|&&l| l == t).count();
        let active = d.active();
        let (range_min, range_max) = if active[CH_RANGE] {
            let ranges = d.row(CH_RANGE).iter().map(|v| v * r_max);
            (
                Some(ranges.clone().fold(f64::INFINITY, f64::min)),
                Some(ranges.fold(f64::NEG_INFINITY, f64::max)),
            )
        } else {
            (None, None)
        };
        let mean_gradient = active[CH_GRADIENT]
            .then(|| d.row(CH_GRADIENT).iter().sum::<f64>() / d.n_bins() as f64);
        let transitions = d.transition_count();
        Self {
            n_bins: d.n_bins(),
            wall_bins: count(HitType::Wall),
            window_bins: count(HitType::Window),
            open_bins: count(HitType::Open),
            range_min,
            range_max,
            mean_gradient,
            transition_count: transitions,
            segments: if transitions == 0 { 1 } else { transitions as usize },
        }
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "bins: {}  wall: {}  window: {}  open: {}\ntransitions: {}  segments: {}\n",
            self.n_bins,
            self.wall_bins,
            self.window_bins,
            self.open_bins,
            self.transition_count,
            self.segments
        );
        if let (Some(lo), Some(hi)) = (self.range_min, self.range_max) {
            s.push_str(&format!("range: {lo:.2} to {hi:.2} m\n"));
        }
        if let Some(g) = self.mean_gradient {
            s.push_str(&format!("mean gradient: {g:.4}\n"));
        }
        if let Some(sentence) = self.sentence() {
            s.push_str(&sentence);
            s.push('\n');
        }
        s
    }

    /// One-line prose form, e.g. "ranges from 1.76 to 22.36 m with 43
    /// wall-window segments (67 window bins out of 360), mean gradient 0.09".
    /// Needs the range channel.
    pub fn sentence(&self) -> Option<String> {
        let (lo, hi) = (self.range_min?, self.range_max?);
        let mut s = format!(
            "ranges from {lo:.2} to {hi:.2} m with {} wall-window segments ({} window bins out of {})",
            self.segments, self.window_bins, self.n_bins
        );
        if let Some(g) = self.mean_gradient {
            s.push_str(&format!(", mean gradient {g:.2}"));
        }
        Some(s)
    }
}
