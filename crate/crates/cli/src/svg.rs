//! Static SVG plots on a fixed 800×800 canvas.
//!
//! Data coordinates in `[-extent, extent]²` (first two dimensions) map to the
//! square `[40, 760]²` in pixels, `y` pointing up. Points outside are clipped
//! by the viewport.

use std::fmt::Write as _;

use nfmlab_core::datasets::{true_log_density, DatasetSpec, Label, LabeledBatch};
use nfmlab_core::sampling::Trajectory;

pub const SIZE: f64 = 800.0;
pub const MARGIN: f64 = 40.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Pixel coordinates of a data point.
pub fn to_canvas(x: f64, y: f64, extent: f64) -> (f64, f64) {
    let span = SIZE - 2.0 * MARGIN;
    (
        MARGIN + (x + extent) / (2.0 * extent) * span,
        MARGIN + (extent - y) / (2.0 * extent) * span,
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn color(label: Label) -> &'static str {
    match label {
        Label::Class(i) => PALETTE[i % PALETTE.len()],
        Label::Null => "#000000",
    }
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{w}" height="{w}" fill="none" stroke="#cccccc"/>"##,
        w = SIZE - 2.0 * MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="28" font-family="sans-serif" font-size="16">{}</text>"#,
        escape(title)
    );
    s
}

fn xy(p: &[f64]) -> (f64, f64) {
    (p[0], p.get(1).copied().unwrap_or(0.0))
}

/// Marching-squares iso-lines of the dataset density at fractions of its peak.
fn density_contours(spec: &DatasetSpec, extent: f64) -> String {
    let cells = 120usize;
    let h = 2.0 * extent / cells as f64;
    let n = spec.n;
    let mut grid = vec![0.0; (cells + 1) * (cells + 1)];
    let mut peak = 0.0f64;
    for i in 0..=cells {
        for j in 0..=cells {
            let mut p = vec![0.0; n];
            p[0] = -extent + i as f64 * h;
            if n > 1 {
                p[1] = -extent + j as f64 * h;
            }
            let d = true_log_density(spec, &p).map_or(0.0, f64::exp);
            grid[i * (cells + 1) + j] = d;
            peak = peak.max(d);
        }
    }
    if peak <= 0.0 {
        return String::new();
    }
    let mut out = String::new();
    for frac in [0.05, 0.25, 0.6] {
        let level = frac * peak;
        let mut d = String::new();
        for i in 0..cells {
            for j in 0..cells {
                let v = |a: usize, b: usize| grid[(i + a) * (cells + 1) + j + b];
                let corners = [v(0, 0), v(1, 0), v(1, 1), v(0, 1)];
                let pos = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
                let mut pts = Vec::with_capacity(4);
                for e in 0..4 {
                    let (a, b) = (corners[e], corners[(e + 1) % 4]);
                    if (a >= level) != (b >= level) {
                        let t = (level - a) / (b - a);
                        let (pa, pb) = (pos[e], pos[(e + 1) % 4]);
                        let gx = i as f64 + pa.0 + t * (pb.0 - pa.0);
                        let gy = j as f64 + pa.1 + t * (pb.1 - pa.1);
                        pts.push(to_canvas(-extent + gx * h, -extent + gy * h, extent));
                    }
                }
                for seg in pts.chunks_exact(2) {
                    let _ = write!(d, "M{:.2} {:.2}L{:.2} {:.2}", seg[0].0, seg[0].1, seg[1].0, seg[1].1);
                }
            }
        }
        if !d.is_empty() {
            let _ = writeln!(out, r##"<path d="{d}" fill="none" stroke="#888888" stroke-width="1"/>"##);
        }
    }
    out
}

/// Scatter of labeled points, over density contours when the dataset has a closed form.
pub fn scatter(points: &LabeledBatch, spec: Option<&DatasetSpec>, extent: f64, title: &str) -> String {
    let mut s = open(title);
    if let Some(spec) = spec.filter(|s| s.has_density()) {
        s.push_str(&density_contours(spec, extent));
    }
    let _ = writeln!(s, "<g>");
    for i in 0..points.len() {
        let (x, y) = xy(points.x.row(i));
        let (px, py) = to_canvas(x, y, extent);
        let _ = writeln!(
            s,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="2" fill="{}" fill-opacity="0.7"/>"#,
            color(points.c[i])
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// Solver paths from noise (hollow marker) to sample (filled marker).
pub fn trajectories(trajs: &[Trajectory], spec: Option<&DatasetSpec>, extent: f64, title: &str) -> String {
    let mut s = open(title);
    if let Some(spec) = spec.filter(|s| s.has_density()) {
        s.push_str(&density_contours(spec, extent));
    }
    for tr in trajs {
        let pts: Vec<String> = tr
            .states
            .iter()
            .map(|p| {
                let (x, y) = xy(p);
                let (px, py) = to_canvas(x, y, extent);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let c = color(tr.label);
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1" stroke-opacity="0.6"/>"#,
            pts.join(" ")
        );
        let (sx, sy) = xy(tr.initial());
        let (sx, sy) = to_canvas(sx, sy, extent);
        let (ex, ey) = xy(tr.terminal());
        let (ex, ey) = to_canvas(ex, ey, extent);
        let _ = writeln!(s, r#"<circle cx="{sx:.2}" cy="{sy:.2}" r="2.5" fill="none" stroke="{c}"/>"#);
        let _ = writeln!(s, r#"<circle cx="{ex:.2}" cy="{ey:.2}" r="2.5" fill="{c}"/>"#);
    }
    s.push_str("</svg>\n");
    s
}

/// Moving average over a trailing window.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        acc += v;
        if i >= w {
            acc -= values[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

/// Smoothed loss curves against training step.
pub fn loss_curves(series: &[(&str, &[f64])], title: &str) -> String {
    let mut s = open(title);
    let smoothed: Vec<Vec<f64>> = series.iter().map(|(_, v)| smooth(v, 100)).collect();
    let steps = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(2);
    let finite = smoothed.iter().flatten().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0), lo.max(0.0) + 1.0) };
    let span = SIZE - 2.0 * MARGIN;
    for (idx, ((name, _), ys)) in series.iter().zip(&smoothed).enumerate() {
        let c = PALETTE[idx % PALETTE.len()];
        let pts: Vec<String> = ys
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let px = MARGIN + i as f64 / (steps - 1) as f64 * span;
                let py = MARGIN + (hi - y) / (hi - lo) * span;
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.0}" y="{:.0}" font-family="sans-serif" font-size="14" fill="{c}">{}</text>"#,
            SIZE - 160.0,
            MARGIN + 20.0 + 18.0 * idx as f64,
            escape(name)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{:.0}" font-family="sans-serif" font-size="12">steps 0..{steps}, loss {lo:.4}..{hi:.4}</text>"#,
        SIZE - 12.0
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mapping_corners() {
        assert_eq!(to_canvas(-2.0, 2.0, 2.0), (MARGIN, MARGIN));
        assert_eq!(to_canvas(2.0, -2.0, 2.0), (SIZE - MARGIN, SIZE - MARGIN));
        assert_eq!(to_canvas(0.0, 0.0, 2.0), (400.0, 400.0));
    }

    #[test]
    fn smoothing() {
        assert_eq!(smooth(&[1.0, 3.0, 5.0], 2), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn escapes_title() {
        assert!(open("a<b & c").contains("a&lt;b &amp; c"));
    }
}
