//! Text reports: correlation peaks, per-bin agreement, descriptor tables.

use std::fmt::Write as _;

use serde::Serialize;

use crate::descriptor::{HitType, RadialDescriptor, CHANNEL_NAMES, CH_HIT_TYPE};
use crate::error::{CompassError, Result};
use crate::matching::{argmax_first, MatchResult};

pub const TOOL_NAME: &str = "compass";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Comment block for output files: tool version, command and effective config.
pub fn tool_header<C: Serialize + ?Sized>(command: &str, config: &C) -> String {
    let cfg = serde_json::to_string(config).unwrap_or_else(|e| format!("\"<unserializable: {e}>\""));
    format!("{TOOL_NAME} {TOOL_VERSION}\ncommand: {command}\nconfig: {cfg}")
}

fn comment_block(out: &mut String, header: &str) {
    for line in header.lines() {
        let _ = writeln!(out, "# {line}");
    }
}

/// Peak of a circular correlation curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationPeak {
    pub shift: usize,
    pub yaw_deg: f64,
    pub score: f64,
    pub mean: f64,
    /// Best score more than `guard` bins away from the peak.
    pub runner_up: f64,
}

impl CorrelationPeak {
    pub fn from_curve(curve: &[f64], yaw_anchor: f64, guard: usize) -> Self {
        let n = curve.len();
        let (shift, score) = argmax_first(curve);
        let runner_up = (0..n)
            .filter(|&j| {
                let d = j.abs_diff(shift);
                d.min(n - d) > guard
            })
            .map(|j| curve[j])
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            shift,
            yaw_deg: (yaw_anchor + std::f64::consts::TAU * shift as f64 / n as f64)
                .to_degrees()
                .rem_euclid(360.0),
            score,
            mean: curve.iter().sum::<f64>() / n as f64,
            runner_up,
        }
    }

    pub fn summary(&self) -> String {
        format!(
            "peak at shift {} ({:.1} deg) with score {:.4}; mean {:.4}, runner-up {:.4}",
            self.shift, self.yaw_deg, self.score, self.mean, self.runner_up
        )
    }
}

/// `shift,yaw_deg,score` rows followed by nothing else; the peak goes in the header.
pub fn correlation_curve_csv(header: &str, curve: &[f64], yaw_anchor: f64) -> String {
    let n = curve.len();
    let peak = CorrelationPeak::from_curve(curve, yaw_anchor, 10);
    let mut out = String::new();
    comment_block(&mut out, header);
    let _ = writeln!(out, "# {}", peak.summary());
    let _ = writeln!(out, "shift,yaw_deg,score");
    for (s, v) in curve.iter().enumerate() {
        let yaw = (yaw_anchor.to_degrees() + 360.0 * s as f64 / n as f64).rem_euclid(360.0);
        let _ = writeln!(out, "{s},{yaw:.4},{v:.9}");
    }
    out
}

pub fn ranking_csv(header: &str, results: &[MatchResult]) -> String {
    let mut out = String::new();
    comment_block(&mut out, header);
    let _ = writeln!(out, "rank,candidate,x,y,best_shift,yaw_deg,score");
    for (k, r) in results.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.4},{},{:.4},{:.9}",
            k + 1,
            r.candidate_index,
            r.position[0],
            r.position[1],
            r.best_shift,
            r.yaw_estimate.to_degrees(),
            r.score
        );
    }
    out
}

/// One row per bin with all five channels.
pub fn descriptor_csv(header: &str, d: &RadialDescriptor) -> String {
    let n = d.n_bins();
    let mut out = String::new();
    comment_block(&mut out, header);
    let _ = writeln!(out, "bin,bearing_deg,{}", CHANNEL_NAMES.join(","));
    for j in 0..n {
        let _ = write!(out, "{j},{:.4}", 360.0 * j as f64 / n as f64);
        for c in 0..CHANNEL_NAMES.len() {
            let _ = write!(out, ",{:.9}", d.get(c, j));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgreementBin {
    pub bin: usize,
    pub camera: HitType,
    pub map: HitType,
    pub agree: bool,
}

/// Per-bin comparison of a visual descriptor against a (shifted) map descriptor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub shift: i64,
    pub bins: Vec<AgreementBin>,
    pub agree_count: usize,
    pub fraction: f64,
    /// Contiguous disagreement arcs `[start, end)` in degrees of the camera
    /// frame; `end` may be smaller than `start` when the arc wraps.
    pub disagreement_arcs: Vec<[f64; 2]>,
}

pub fn agreement_report(vis: &RadialDescriptor, map: &RadialDescriptor, shift: i64) -> Result<AgreementReport> {
    let n = vis.n_bins();
    if n != map.n_bins() {
        return Err(CompassError::ShapeMismatch(format!("{} vs {} bins", n, map.n_bins())));
    }
    let s = shift.rem_euclid(n as i64) as usize;
    let (rv, rm) = (vis.row(CH_HIT_TYPE), map.row(CH_HIT_TYPE));
    let bins: Vec<AgreementBin> = (0..n)
        .map(|j| {
            let camera = HitType::from_value(rv[j]);
            let map = HitType::from_value(rm[(j + s) % n]);
            AgreementBin { bin: j, camera, map, agree: camera == map }
        })
        .collect();
    let agree_count = bins.iter().filter(|b| b.agree).count();
    let deg = 360.0 / n as f64;
    let mut arcs = Vec::new();
    if agree_count == 0 {
        arcs.push([0.0, 360.0]);
    } else if agree_count < n {
        // start scanning right after an agreeing bin so no arc is split
        let first = (0..n).find(|&j| bins[j].agree).expect("some bin agrees");
        let mut k = 1;
        while k <= n {
            let j = (first + k) % n;
            if !bins[j].agree {
                let a = j;
                let mut len = 0;
                while !bins[(a + len) % n].agree {
                    len += 1;
                }
                arcs.push([a as f64 * deg, ((a + len) % n) as f64 * deg]);
                k += len;
            } else {
                k += 1;
            }
        }
    }
    Ok(AgreementReport {
        shift,
        bins,
        agree_count,
        fraction: agree_count as f64 / n as f64,
        disagreement_arcs: arcs,
    })
}

impl AgreementReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} out of {} bins ({:.0}%) agree at shift {}",
            self.agree_count,
            self.bins.len(),
            100.0 * self.fraction,
            self.shift
        );
        if !self.disagreement_arcs.is_empty() {
            let arcs: Vec<String> = self
                .disagreement_arcs
                .iter()
                .map(|a| format!("{:.0}-{:.0} deg", a[0], a[1]))
                .collect();
            let _ = write!(s, "; disagreement arcs: {}", arcs.join(", "));
        }
        s
    }

    pub fn to_csv(&self, header: &str) -> String {
        let n = self.bins.len();
        let mut out = String::new();
        comment_block(&mut out, header);
        let _ = writeln!(out, "# {}", self.summary());
        let _ = writeln!(out, "bin,bearing_deg,camera,map,agree");
        for b in &self.bins {
            let _ = writeln!(
                out,
                "{},{:.4},{},{},{}",
                b.bin,
                360.0 * b.bin as f64 / n as f64,
                b.camera.short(),
                b.map.short(),
                b.agree as u8
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(windows: &[std::ops::Range<usize>]) -> RadialDescriptor {
        let mut r = vec![1.0; 360];
        for w in windows {
            for j in w.clone() {
                r[j] = 0.5;
            }
        }
        RadialDescriptor::from_hit_type_row(r).unwrap()
    }

    #[test]
    fn identical_rows_agree_everywhere() {
        let a = row(&[10..40, 200..230]);
        let rep = agreement_report(&a, &a, 0).unwrap();
        assert_eq!(rep.agree_count, 360);
        assert_eq!(rep.fraction, 1.0);
        assert!(rep.disagreement_arcs.is_empty());
        assert!(rep.summary().starts_with("360 out of 360 bins (100%) agree"));
    }

    #[test]
    fn disagreement_arcs_in_degrees() {
        let vis = row(&[110..150, 350..360, 0..5]);
        let map = row(&[]);
        let rep = agreement_report(&vis, &map, 0).unwrap();
        assert_eq!(rep.agree_count, 360 - 55);
        assert_eq!(rep.disagreement_arcs, vec![[110.0, 150.0], [350.0, 5.0]]);
        assert!(rep.summary().contains("110-150 deg"));
    }

    #[test]
    fn fraction_summary_format() {
        let vis = row(&[0..129]);
        let map = row(&[]);
        let rep = agreement_report(&vis, &map, 0).unwrap();
        assert_eq!(rep.agree_count, 231);
        assert!(rep.summary().starts_with("231 out of 360 bins (64%) agree"), "{}", rep.summary());
    }

    #[test]
    fn shift_is_applied_to_map() {
        let vis = row(&[10..20]);
        let map = row(&[15..25]);
        assert_eq!(agreement_report(&vis, &map, 5).unwrap().agree_count, 360);
    }

    #[test]
    fn mismatch_errors() {
        let a = RadialDescriptor::from_hit_type_row(vec![1.0; 36]).unwrap();
        assert!(agreement_report(&a, &row(&[]), 0).is_err());
    }

    #[test]
    fn peak_report() {
        let mut curve = vec![0.1; 360];
        curve[42] = 0.9;
        curve[43] = 0.8;
        curve[200] = 0.5;
        let p = CorrelationPeak::from_curve(&curve, 0.0, 10);
        assert_eq!((p.shift, p.score, p.runner_up), (42, 0.9, 0.5));
        assert!((p.yaw_deg - 42.0).abs() < 1e-9);
        let csv = correlation_curve_csv("compass test", &curve, 0.0);
        assert!(csv.starts_with("# compass test\n# peak at shift 42"));
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 361);
    }

    #[test]
    fn header_carries_version_and_config() {
        #[derive(Serialize)]
        struct C {
            n_bins: usize,
        }
        let h = tool_header("describe", &C { n_bins: 360 });
        assert!(h.contains(TOOL_VERSION));
        assert!(h.contains("\"n_bins\":360"));
    }
}
