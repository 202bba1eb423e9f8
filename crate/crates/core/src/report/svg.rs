use std::f64::consts::PI;
use std::fmt::Write;

use super::ReportError;
use crate::manifest::Label;
use crate::separability::VizPoint;

const SIZE: f64 = 640.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 620.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 590.0;
const MARKER: f64 = 4.0;

fn color(label: Label) -> &'static str {
    match label {
        Label::Real => "#1f77b4",
        Label::Fake => "#d62728",
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Padded axis range; a zero span widens to one unit around the value.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let span = hi - lo;
    if span > 0.0 {
        (lo - 0.05 * span, hi + 0.05 * span)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Marker for cluster `c`: a circle, then polygons with 3, 4, ... vertices.
fn marker(out: &mut String, cluster: usize, x: f64, y: f64, fill: &str) {
    if cluster == 0 {
        let _ = writeln!(
            out,
            r#"<circle class="pt" cx="{x:.2}" cy="{y:.2}" r="{MARKER}" fill="{fill}"/>"#
        );
        return;
    }
    let sides = cluster + 2;
    let points: Vec<String> = (0..sides)
        .map(|k| {
            let a = -PI / 2.0 + 2.0 * PI * k as f64 / sides as f64;
            format!("{:.2},{:.2}", x + MARKER * 1.2 * a.cos(), y + MARKER * 1.2 * a.sin())
        })
        .collect();
    let _ = writeln!(
        out,
        r#"<polygon class="pt" points="{}" fill="{fill}"/>"#,
        points.join(" ")
    );
}

/// Scatter plot of a separability sample: color encodes the ground-truth
/// label, marker shape the cluster.
pub fn render_svg(sample: &[VizPoint], title: &str) -> Result<String, ReportError> {
    if sample.is_empty() {
        return Err(ReportError::EmptySample);
    }
    let (x0, x1) = range(sample.iter().map(|p| p.x));
    let (y0, y1) = range(sample.iter().map(|p| p.y));
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * (RIGHT - LEFT);
    let sy = |y: f64| BOTTOM - (y - y0) / (y1 - y0) * (BOTTOM - TOP);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        SIZE / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        RIGHT - LEFT,
        BOTTOM - TOP
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">PC1</text>"#,
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 30.0
    );
    let _ = writeln!(
        out,
        r#"<text x="20" y="{0}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 20 {0})">PC2</text>"#,
        (TOP + BOTTOM) / 2.0
    );
    for p in sample {
        marker(&mut out, p.cluster, sx(p.x), sy(p.y), color(p.label));
    }

    let mut clusters: Vec<usize> = sample.iter().map(|p| p.cluster).collect();
    clusters.sort_unstable();
    clusters.dedup();
    let mut y = TOP + 16.0;
    let legend_x = RIGHT - 110.0;
    for (label, name) in [(Label::Real, "real"), (Label::Fake, "fake")] {
        let _ = writeln!(
            out,
            r#"<rect x="{legend_x}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{}" y="{y:.2}" font-family="sans-serif" font-size="12">{name}</text>"#,
            y - 9.0,
            color(label),
            legend_x + 16.0
        );
        y += 16.0;
    }
    for c in clusters {
        let mut m = String::new();
        marker(&mut m, c, legend_x + 5.0, y - 4.0, "#444");
        out.push_str(&m.replace(r#" class="pt""#, ""));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{y:.2}" font-family="sans-serif" font-size="12">cluster {c}</text>"#,
            legend_x + 16.0
        );
        y += 16.0;
    }
    out.push_str("</svg>\n");
    Ok(out)
}
