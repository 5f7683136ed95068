//! Precomputed floor-plan descriptors over a free-space grid, and their
//! on-disk format.
//!
//! # File format (version 1, little-endian)
//!
//! ```text
//! magic        [u8; 4]   b"CMPD"
//! version      u32       1
//! n_bins       u32
//! channels     u32       5
//! active_mask  u8        bit c set = channel c active
//! r_max        f64
//! step         f64
//! r_clip       f64
//! sigma_clip   f64
//! var_halfw    u32
//! grid_step    f64
//! yaw_anchor   f64
//! grid_origin  f64 × 2
//! tool_len     u16, then tool_len bytes of UTF-8 tool/version text
//! n_records    u32
//! record × n_records:
//!     x, y               f64 × 2
//!     transition_count   u32
//!     values             f32 × (channels · n_bins), channel-major
//! ```
//!
//! A single query descriptor is stored as a database with one record.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::{ChannelMask, RadialDescriptor, CHANNELS};
use crate::error::{CompassError, Result};
use crate::floorplan::{Cell, FloorPlanRaster, Pose2D};
use crate::raycast::{compute_descriptor_counted, RaycastConfig};

pub const MAGIC: [u8; 4] = *b"CMPD";
pub const FORMAT_VERSION: u32 = 1;
pub const TOOL_ID: &str = concat!("compass ", env!("CARGO_PKG_VERSION"));

/// Decides whether a grid point is a usable candidate position.
pub trait FreeSpace: Sync {
    fn is_free(&self, raster: &FloorPlanRaster, p: [f64; 2]) -> bool;
}

/// Not on a structure pixel, inside the raster, and at least `clearance`
/// meters from every structure pixel center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clearance(pub f64);

impl Default for Clearance {
    fn default() -> Self {
        Clearance(0.3)
    }
}

impl FreeSpace for Clearance {
    fn is_free(&self, raster: &FloorPlanRaster, p: [f64; 2]) -> bool {
        raster.contains_world(p)
            && raster.cell_at_world(p) == Cell::Free
            && raster.structure_distance_within(p, self.0).is_none_or(|d| d >= self.0)
    }
}

impl<F> FreeSpace for F
where
    F: Fn(&FloorPlanRaster, [f64; 2]) -> bool + Sync,
{
    fn is_free(&self, raster: &FloorPlanRaster, p: [f64; 2]) -> bool {
        self(raster, p)
    }
}

/// Grid points are `origin + (i · step, −j · step)`, `i, j ≥ 0`, covering the
/// raster extent; `origin` is the plan's top-left world corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub step: f64,
    pub origin: [f64; 2],
    pub yaw_anchor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatabaseEntry {
    pub position: [f64; 2],
    pub descriptor: RadialDescriptor,
}

/// Candidate descriptors in deterministic cell order (row-major over the grid).
#[derive(Debug, Clone, PartialEq)]
pub struct Database {
    pub cfg: RaycastConfig,
    pub grid: GridSpec,
    pub entries: Vec<DatabaseEntry>,
    /// Raster probes spent while building (0 when loaded from disk).
    pub probes: u64,
}

impl Database {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_bins(&self) -> usize {
        self.cfg.n_bins
    }

    /// Wraps a single descriptor (e.g. a query) for serialization.
    pub fn single(descriptor: RadialDescriptor, pose: Pose2D, cfg: RaycastConfig) -> Self {
        Self {
            cfg: RaycastConfig {
                n_bins: descriptor.n_bins(),
                ..cfg
            },
            grid: GridSpec {
                step: 0.0,
                origin: pose.position(),
                yaw_anchor: pose.psi,
            },
            entries: vec![DatabaseEntry {
                position: pose.position(),
                descriptor,
            }],
            probes: 0,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mask = self.entries.first().map(|e| e.descriptor.active()).unwrap_or([true; CHANNELS]);
        w.write_all(&MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.cfg.n_bins as u32).to_le_bytes())?;
        w.write_all(&(CHANNELS as u32).to_le_bytes())?;
        w.write_all(&[mask_to_bits(mask)])?;
        for v in [self.cfg.r_max, self.cfg.step, self.cfg.r_clip, self.cfg.sigma_clip] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.cfg.var_halfwidth as u32).to_le_bytes())?;
        for v in [
            self.grid.step,
            self.grid.yaw_anchor,
            self.grid.origin[0],
            self.grid.origin[1],
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(TOOL_ID.len() as u16).to_le_bytes())?;
        w.write_all(TOOL_ID.as_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for e in &self.entries {
            w.write_all(&e.position[0].to_le_bytes())?;
            w.write_all(&e.position[1].to_le_bytes())?;
            w.write_all(&e.descriptor.transition_count().to_le_bytes())?;
            for &v in e.descriptor.data() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CompassError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CompassError::Format(format!("unsupported version {version}")));
        }
        let n_bins = r.u32()? as usize;
        let channels = r.u32()? as usize;
        if channels != CHANNELS {
            return Err(CompassError::Format(format!("expected {CHANNELS} channels, got {channels}")));
        }
        let active = bits_to_mask(r.take(1)?[0]);
        let cfg = RaycastConfig {
            n_bins,
            r_max: r.f64()?,
            step: r.f64()?,
            r_clip: r.f64()?,
            sigma_clip: r.f64()?,
            var_halfwidth: r.u32()? as usize,
        };
        let grid = GridSpec {
            step: r.f64()?,
            yaw_anchor: r.f64()?,
            origin: [r.f64()?, r.f64()?],
        };
        let tool_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        r.take(tool_len)?;
        let n_records = r.u32()? as usize;
        let values = CHANNELS * n_bins;
        if n_bins == 0 || r.remaining() != n_records * (20 + 4 * values) {
            return Err(CompassError::Format(format!(
                "record section has {} bytes, expected {} records of {} bins",
                r.remaining(),
                n_records,
                n_bins
            )));
        }
        let mut entries = Vec::with_capacity(n_records);
        for i in 0..n_records {
            let position = [r.f64()?, r.f64()?];
            let stored_tc = r.u32()?;
            let data = r
                .take(4 * values)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            let descriptor = RadialDescriptor::from_flat(n_bins, data, active);
            if descriptor.transition_count() != stored_tc {
                return Err(CompassError::Format(format!(
                    "record {i}: stored transition count {stored_tc} != {}",
                    descriptor.transition_count()
                )));
            }
            entries.push(DatabaseEntry {
                position,
                descriptor,
            });
        }
        Ok(Self {
            cfg,
            grid,
            entries,
            probes: 0,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| CompassError::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CompassError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| CompassError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Debug export: header fields plus every record as nested arrays.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "format": "compass-descriptor-db",
            "version": FORMAT_VERSION,
            "tool": TOOL_ID,
            "n_bins": self.cfg.n_bins,
            "channels": CHANNELS,
            "raycast": self.cfg,
            "grid": self.grid,
            "records": self.entries.iter().enumerate().map(|(i, e)| serde_json::json!({
                "index": i,
                "x": e.position[0],
                "y": e.position[1],
                "transition_count": e.descriptor.transition_count(),
                "active": e.descriptor.active(),
                "channels": (0..CHANNELS).map(|c| e.descriptor.row(c).to_vec()).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    }
}

fn mask_to_bits(mask: ChannelMask) -> u8 {
    mask.iter().enumerate().fold(0, |acc, (c, &on)| acc | ((on as u8) << c))
}

fn bits_to_mask(bits: u8) -> ChannelMask {
    std::array::from_fn(|c| bits & (1 << c) != 0)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(CompassError::Format("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Grid points covering the raster, row-major from the top-left corner.
pub fn grid_points(raster: &FloorPlanRaster, grid_step: f64) -> Vec<[f64; 2]> {
    let ([x0, x1], [y0, y1]) = raster.extent();
    let nx = ((x1 - x0) / grid_step + 1e-9).floor() as usize + 1;
    let ny = ((y1 - y0) / grid_step + 1e-9).floor() as usize + 1;
    (0..ny)
        .flat_map(|j| (0..nx).map(move |i| [x0 + i as f64 * grid_step, y1 - j as f64 * grid_step]))
        .collect()
}

/// Computes descriptors at `yaw_anchor` for every grid point passing `free`.
pub fn build_database(
    raster: &FloorPlanRaster,
    grid_step: f64,
    yaw_anchor: f64,
    cfg: &RaycastConfig,
    free: &dyn FreeSpace,
) -> Result<Database> {
    if !(grid_step > 0.0) {
        return Err(CompassError::InvalidConfig(format!(
            "grid_step must be positive, got {grid_step}"
        )));
    }
    cfg.validate()?;
    let candidates: Vec<[f64; 2]> = grid_points(raster, grid_step)
        .into_iter()
        .filter(|&p| free.is_free(raster, p))
        .collect();
    if candidates.is_empty() {
        return Err(CompassError::EmptyDatabase);
    }
    let built: Vec<(DatabaseEntry, u64)> = candidates
        .par_iter()
        .map(|&p| {
            let (descriptor, probes) =
                compute_descriptor_counted(raster, Pose2D::new(p[0], p[1], yaw_anchor), cfg)?;
            Ok((
                DatabaseEntry {
                    position: p,
                    descriptor,
                },
                probes,
            ))
        })
        .collect::<Result<_>>()?;
    let probes = built.iter().map(|(_, p)| p).sum();
    Ok(Database {
        cfg: *cfg,
        grid: GridSpec {
            step: grid_step,
            origin: [raster.extent().0[0], raster.extent().1[1]],
            yaw_anchor,
        },
        entries: built.into_iter().map(|(e, _)| e).collect(),
        probes,
    })
}
