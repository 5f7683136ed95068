//! Plain-text SVG plots.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use crate::attitude::{GreatCircle, VanishingPoint};
use crate::descriptor::{HitType, RadialDescriptor, CHANNELS, CHANNEL_NAMES, CH_HIT_TYPE, CH_RANGE};
use crate::detection::{LineSegment, WindowBand, WindowDetection};
use crate::report::{AgreementReport, CorrelationPeak};

const WALL: &str = "#404040";
const WINDOW: &str = "#d62728";
const OPEN: &str = "#f0f0f0";
const AGREE: &str = "#2ca02c";

fn hit_color(t: HitType) -> &'static str {
    match t {
        HitType::Wall => WALL,
        HitType::Window => WINDOW,
        HitType::Open => OPEN,
    }
}

fn open_svg(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn gray(v: f64) -> String {
    let g = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
    format!("#{g:02x}{g:02x}{g:02x}")
}

/// Run-length encoded strip of colored cells so a 360-bin row stays compact.
fn strip(out: &mut String, x0: f64, y0: f64, cell_w: f64, h: f64, colors: &[String]) {
    let mut j = 0;
    while j < colors.len() {
        let mut k = j + 1;
        while k < colors.len() && colors[k] == colors[j] {
            k += 1;
        }
        let _ = writeln!(
            out,
            "<rect x=\"{:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"{}\"/>",
            x0 + j as f64 * cell_w,
            (k - j) as f64 * cell_w,
            colors[j]
        );
        j = k;
    }
}

/// Five stacked channel strips plus a polar range plot colored by hit type.
pub fn descriptor_svg(d: &RadialDescriptor, title: &str) -> String {
    let n = d.n_bins();
    let (left, strip_w, strip_h, gap) = (90.0, 720.0, 26.0, 8.0);
    let polar_top = 40.0 + CHANNELS as f64 * (strip_h + gap) + 20.0;
    let radius = 160.0;
    let (w, h) = (left + strip_w + 20.0, polar_top + 2.0 * radius + 40.0);
    let mut out = open_svg(w, h);
    let _ = writeln!(out, "<text x=\"10\" y=\"20\" font-size=\"14\">{}</text>", escape(title));
    let cell = strip_w / n as f64;
    for c in 0..CHANNELS {
        let y = 40.0 + c as f64 * (strip_h + gap);
        let _ = writeln!(out, "<text x=\"10\" y=\"{:.1}\">{}</text>", y + strip_h * 0.65, CHANNEL_NAMES[c]);
        if !d.active()[c] {
            let _ = writeln!(
                out,
                "<rect x=\"{left}\" y=\"{y:.1}\" width=\"{strip_w}\" height=\"{strip_h}\" fill=\"none\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 3\"/>"
            );
            continue;
        }
        let colors: Vec<String> = if c == CH_HIT_TYPE {
            d.hit_types().into_iter().map(|t| hit_color(t).to_string()).collect()
        } else {
            d.row(c).iter().map(|&v| gray(v)).collect()
        };
        strip(&mut out, left, y, cell, strip_h, &colors);
    }
    let (cx, cy) = (w / 2.0, polar_top + radius + 10.0);
    let _ = writeln!(out, "<circle cx=\"{cx:.1}\" cy=\"{cy:.1}\" r=\"{radius}\" fill=\"none\" stroke=\"#cccccc\"/>");
    let ranges: Vec<f64> = if d.active()[CH_RANGE] { d.row(CH_RANGE).to_vec() } else { vec![1.0; n] };
    let types = d.hit_types();
    for j in 0..n {
        let a = TAU * j as f64 / n as f64;
        let r = radius * ranges[j].clamp(0.0, 1.0);
        // counter-clockwise bearings, 0 pointing right, screen y down
        let (x, y) = (cx + r * a.cos(), cy - r * a.sin());
        let _ = writeln!(
            out,
            "<line x1=\"{cx:.1}\" y1=\"{cy:.1}\" x2=\"{x:.2}\" y2=\"{y:.2}\" stroke=\"{}\" stroke-width=\"1\" stroke-opacity=\"0.6\"/>",
            hit_color(types[j])
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Correlation score against shift with the peak marked.
pub fn curve_svg(curve: &[f64], peak: &CorrelationPeak, title: &str) -> String {
    let (w, h, m) = (760.0, 300.0, 45.0);
    let n = curve.len().max(1);
    let lo = curve.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(lo + 1e-9);
    let px = |j: usize| m + (w - 2.0 * m) * j as f64 / (n - 1).max(1) as f64;
    let py = |v: f64| h - m - (h - 2.0 * m) * (v - lo) / (hi - lo);
    let mut out = open_svg(w, h);
    let _ = writeln!(out, "<text x=\"{m}\" y=\"20\" font-size=\"14\">{}</text>", escape(title));
    let _ = writeln!(
        out,
        "<line x1=\"{m}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
        h - m,
        w - m,
        h - m
    );
    let _ = writeln!(out, "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{:.1}\" stroke=\"black\"/>", h - m);
    let pts: Vec<String> = curve.iter().enumerate().map(|(j, &v)| format!("{:.2},{:.2}", px(j), py(v))).collect();
    let _ = writeln!(out, "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"{}\"/>", pts.join(" "));
    let _ = writeln!(
        out,
        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{WINDOW}\"/>\n<text x=\"{:.2}\" y=\"{:.2}\">shift {} ({:.1} deg), score {:.3}</text>",
        px(peak.shift),
        py(peak.score),
        px(peak.shift) + 6.0,
        py(peak.score) - 6.0,
        peak.shift,
        peak.yaw_deg,
        peak.score
    );
    let _ = writeln!(out, "<text x=\"{m}\" y=\"{:.1}\">0</text><text x=\"{:.1}\" y=\"{:.1}\">{}</text>", h - m + 15.0, w - m - 20.0, h - m + 15.0, n - 1);
    let _ = writeln!(out, "<text x=\"5\" y=\"{:.1}\">{hi:.2}</text><text x=\"5\" y=\"{:.1}\">{lo:.2}</text>", m + 4.0, h - m);
    out.push_str("</svg>\n");
    out
}

/// Camera labels, map labels and agree/disagree bar.
pub fn agreement_svg(rep: &AgreementReport, title: &str) -> String {
    let (left, strip_w, strip_h) = (70.0, 720.0, 24.0);
    let n = rep.bins.len().max(1);
    let cell = strip_w / n as f64;
    let mut out = open_svg(left + strip_w + 20.0, 150.0);
    let _ = writeln!(out, "<text x=\"10\" y=\"18\" font-size=\"14\">{}</text>", escape(title));
    let rows: [(&str, Vec<String>); 3] = [
        ("camera", rep.bins.iter().map(|b| hit_color(b.camera).to_string()).collect()),
        ("map", rep.bins.iter().map(|b| hit_color(b.map).to_string()).collect()),
        (
            "agree",
            rep.bins.iter().map(|b| if b.agree { AGREE } else { WINDOW }.to_string()).collect(),
        ),
    ];
    for (k, (label, colors)) in rows.iter().enumerate() {
        let y = 30.0 + k as f64 * (strip_h + 6.0);
        let _ = writeln!(out, "<text x=\"10\" y=\"{:.1}\">{label}</text>", y + 16.0);
        strip(&mut out, left, y, cell, strip_h, colors);
    }
    let _ = writeln!(out, "<text x=\"{left}\" y=\"140\">{}</text>", escape(&rep.summary()));
    out.push_str("</svg>\n");
    out
}

/// Segments (green, window-supporting ones red), detections and the window band.
pub fn detection_overlay_svg(
    size: [u32; 2],
    segments: &[LineSegment],
    band: Option<WindowBand>,
    detections: &[WindowDetection],
) -> String {
    let (w, h) = (size[0] as f64, size[1] as f64);
    let mut out = open_svg(w, h);
    let on_window: std::collections::HashSet<usize> =
        detections.iter().flat_map(|d| d.segment_indices.iter().copied()).collect();
    if let Some(b) = band {
        for y in [b.y_top as f64, b.y_bot as f64 + 1.0] {
            let _ = writeln!(out, "<line x1=\"0\" y1=\"{y:.1}\" x2=\"{w:.0}\" y2=\"{y:.1}\" stroke=\"#1f77b4\" stroke-dasharray=\"6 4\"/>");
        }
    }
    for (i, s) in segments.iter().enumerate() {
        let color = if on_window.contains(&i) { WINDOW } else { AGREE };
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            s.p1[0], s.p1[1], s.p2[0], s.p2[1]
        );
    }
    for d in detections {
        let [x, y, bw, bh] = d.bbox;
        let _ = writeln!(
            out,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{bw:.2}\" height=\"{bh:.2}\" fill=\"none\" stroke=\"#ff7f0e\" stroke-width=\"2\"/>\n<text x=\"{x:.2}\" y=\"{:.2}\" fill=\"#ff7f0e\">{:.2}</text>",
            y - 3.0,
            d.brightness_score
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Orthographic view of the bearing sphere from behind the camera: great
/// circles colored by the vanishing point they support, VPs as dots.
pub fn sphere_svg(circles: &[GreatCircle], vps: &[VanishingPoint], vertical: Option<usize>, title: &str) -> String {
    const PALETTE: [&str; 4] = ["#1f77b4", AGREE, "#ff7f0e", "#9467bd"];
    let (size, r) = (420.0, 180.0);
    let c = size / 2.0;
    let mut out = open_svg(size, size + 20.0);
    let _ = writeln!(out, "<text x=\"10\" y=\"16\" font-size=\"14\">{}</text>", escape(title));
    let _ = writeln!(out, "<circle cx=\"{c}\" cy=\"{c}\" r=\"{r}\" fill=\"none\" stroke=\"#999999\"/>");
    let mut owner = vec![None; circles.len()];
    for (k, vp) in vps.iter().enumerate() {
        for &i in &vp.inliers {
            if i < owner.len() && owner[i].is_none() {
                owner[i] = Some(k);
            }
        }
    }
    let color_of = |k: usize| {
        if Some(k) == vertical {
            PALETTE[0]
        } else {
            PALETTE[1 + k % 3]
        }
    };
    for (i, gc) in circles.iter().enumerate() {
        let n = gc.normal;
        // orthonormal basis of the circle's plane
        let a = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let u = normalize(cross(n, a));
        let v = cross(n, u);
        let pts: Vec<String> = (0..=72)
            .map(|k| TAU * k as f64 / 72.0)
            .map(|t| [u[0] * t.cos() + v[0] * t.sin(), u[1] * t.cos() + v[1] * t.sin(), u[2] * t.cos() + v[2] * t.sin()])
            .filter(|p| p[2] >= 0.0)
            .map(|p| format!("{:.1},{:.1}", c + r * p[0], c + r * p[1]))
            .collect();
        let (color, opacity) = match owner[i] {
            Some(k) => (color_of(k), 0.5),
            None => ("#bbbbbb", 0.3),
        };
        if pts.len() > 1 {
            let _ = writeln!(out, "<polyline fill=\"none\" stroke=\"{color}\" stroke-opacity=\"{opacity}\" points=\"{}\"/>", pts.join(" "));
        }
    }
    for (k, vp) in vps.iter().enumerate() {
        let d = vp.direction;
        // show the hemisphere facing the camera
        let d = if d[2] < 0.0 { [-d[0], -d[1], -d[2]] } else { d };
        let _ = writeln!(
            out,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"5\" fill=\"{}\"/>\n<text x=\"{:.1}\" y=\"{:.1}\">{} inliers</text>",
            c + r * d[0],
            c + r * d[1],
            color_of(k),
            c + r * d[0] + 7.0,
            c + r * d[1] - 7.0,
            vp.inlier_count()
        );
    }
    out.push_str("</svg>\n");
    out
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::agreement_report;

    fn well_formed(svg: &str) {
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<svg").count(), 1);
    }

    #[test]
    fn descriptor_plot_has_strips_and_polar() {
        let mut row = vec![1.0; 360];
        row[10..30].iter_mut().for_each(|v| *v = 0.5);
        let d = RadialDescriptor::from_hit_type_row(row).unwrap();
        let svg = descriptor_svg(&d, "a <test>");
        well_formed(&svg);
        for name in CHANNEL_NAMES {
            assert!(svg.contains(name));
        }
        assert_eq!(svg.matches("<line").count(), 360);
        assert!(svg.contains("a &lt;test&gt;"));
        assert!(svg.contains(WINDOW));
    }

    #[test]
    fn curve_and_agreement_plots() {
        let curve: Vec<f64> = (0..360).map(|j| (j as f64 / 57.0).cos()).collect();
        let peak = CorrelationPeak::from_curve(&curve, 0.0, 10);
        let svg = curve_svg(&curve, &peak, "curve");
        well_formed(&svg);
        assert!(svg.contains("shift 0"));
        let d = RadialDescriptor::from_hit_type_row(vec![1.0; 360]).unwrap();
        let rep = agreement_report(&d, &d, 0).unwrap();
        let svg = agreement_svg(&rep, "agreement");
        well_formed(&svg);
        assert!(svg.contains("360 out of 360"));
    }

    #[test]
    fn overlay_colors_window_segments() {
        let segs = vec![LineSegment::new([1.0, 1.0], [1.0, 50.0]), LineSegment::new([5.0, 1.0], [60.0, 1.0])];
        let mut det = WindowDetection::new("front", [1.0, 1.0, 30.0, 40.0]);
        det.segment_indices = vec![0];
        let svg = detection_overlay_svg([100, 80], &segs, Some(WindowBand { y_top: 5, y_bot: 60 }), &[det]);
        well_formed(&svg);
        assert_eq!(svg.matches(WINDOW).count(), 1);
        assert_eq!(svg.matches(AGREE).count(), 1);
    }
}
