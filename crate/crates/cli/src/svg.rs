//! Minimal SVG histogram overlays.

use std::fmt::Write;

use polyprotect::metrics::histogram_in;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

const W: f64 = 640.0;
const H: f64 = 360.0;
const LEFT: f64 = 50.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 40.0;

/// Density-normalized step outlines of every series over a shared range.
pub fn histogram_overlay(title: &str, series: &[Series<'_>], bins: usize) -> String {
    let all = series.iter().flat_map(|s| s.values.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi.max(lo + 1e-9)) } else { (0.0, 1.0) };
    let bins = bins.max(1);
    let width = (hi - lo) / bins as f64;

    let densities: Vec<Vec<f64>> = series
        .iter()
        .map(|s| {
            if s.values.is_empty() {
                return vec![0.0; bins];
            }
            histogram_in(s.values, bins, lo, hi)
                .expect("bins >= 1")
                .iter()
                .map(|b| b.count as f64 / (s.values.len() as f64 * width))
                .collect()
        })
        .collect();
    let peak = densities.iter().flatten().fold(0.0f64, |a, &b| a.max(b)).max(1e-12);

    let px = |x: f64| LEFT + (x - lo) / (hi - lo) * (W - LEFT - RIGHT);
    let py = |d: f64| H - BOTTOM - d / peak * (H - TOP - BOTTOM);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, escape(title));
    let (x0, x1, y0) = (LEFT, W - RIGHT, H - BOTTOM);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{TOP}" x2="{x0}" y2="{y0}" stroke="black"/>"#);
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let x = px(v);
        let _ = writeln!(svg, r#"<line x1="{x:.1}" y1="{y0}" x2="{x:.1}" y2="{}" stroke="black"/>"#, y0 + 4.0);
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{v:.2}</text>"#, y0 + 16.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">cosine similarity</text>"#, W / 2.0, H - 6.0);

    for (k, (s, dens)) in series.iter().zip(&densities).enumerate() {
        let mut pts = format!("{:.1},{:.1}", px(lo), py(0.0));
        for (i, d) in dens.iter().enumerate() {
            let (a, b) = (lo + i as f64 * width, lo + (i + 1) as f64 * width);
            let _ = write!(pts, " {:.1},{:.1} {:.1},{:.1}", px(a), py(*d), px(b), py(*d));
        }
        let _ = write!(pts, " {:.1},{:.1}", px(hi), py(0.0));
        let _ = writeln!(svg, r#"<polyline points="{pts}" fill="{}" fill-opacity="0.15" stroke="{}"/>"#, s.color, s.color);
        let ly = TOP + 14.0 * k as f64;
        let _ = writeln!(svg, r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/>"#, W - RIGHT - 150.0, ly - 9.0, s.color);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}">{} (n={})</text>"#,
            W - RIGHT - 135.0,
            escape(s.label),
            s.values.len()
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
