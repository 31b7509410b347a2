//! Minimal static SVG plotter: line and scatter series over shared axes.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 20.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Line,
    Scatter,
}

pub struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    kind: Kind,
}

impl Series {
    pub fn line(label: &str, points: &[(f64, f64)]) -> Self {
        Self::owned_line(label.to_string(), points.to_vec())
    }

    pub fn owned_line(label: String, points: Vec<(f64, f64)>) -> Self {
        Self {
            label,
            points,
            kind: Kind::Line,
        }
    }

    pub fn scatter(label: &str, points: &[(f64, f64)]) -> Self {
        Self {
            label: label.to_string(),
            points: points.to_vec(),
            kind: Kind::Scatter,
        }
    }
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            xs = (xs.0.min(x), xs.1.max(x));
            ys = (ys.0.min(y), ys.1.max(y));
        }
    }
    if !xs.0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    let pad = |lo: f64, hi: f64| {
        let span = (hi - lo).abs().max(1e-12);
        (lo - 0.05 * span, hi + 0.05 * span)
    };
    let (x0, x1) = pad(xs.0, xs.1);
    let (y0, y1) = pad(ys.0, ys.1);
    (x0, x1, y0, y1)
}

/// Render the series into a standalone SVG document.
pub fn line_plot(xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (x0, x1, y0, y1) = bounds(series);
    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y0) / (y1 - y0) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    // axes with five ticks per direction
    let _ = writeln!(
        svg,
        r#"<g stroke="black" fill="none"><path d="M {l} {t} L {l} {b} L {r} {b}"/></g>"#,
        l = MARGIN_L,
        t = MARGIN_T,
        b = HEIGHT - MARGIN_B,
        r = WIDTH - MARGIN_R
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{b}" x2="{x}" y2="{b2}" stroke="black"/><text x="{x}" y="{ty}" font-size="11" text-anchor="middle">{xv:.3}</text>"#,
            x = px(xv),
            b = HEIGHT - MARGIN_B,
            b2 = HEIGHT - MARGIN_B + 5.0,
            ty = HEIGHT - MARGIN_B + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{l}" y1="{y}" x2="{l2}" y2="{y}" stroke="black"/><text x="{tx}" y="{y2}" font-size="11" text-anchor="end">{yv:.3}</text>"#,
            l = MARGIN_L - 5.0,
            l2 = MARGIN_L,
            y = py(yv),
            tx = MARGIN_L - 8.0,
            y2 = py(yv) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{x}" y="{y}" font-size="13" text-anchor="middle">{xlabel}</text>"#,
        x = (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        y = HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{y}" font-size="13" text-anchor="middle" transform="rotate(-90 14 {y})">{ylabel}</text>"#,
        y = (MARGIN_T + HEIGHT - MARGIN_B) / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        match s.kind {
            Kind::Line => {
                let pts: Vec<String> = s
                    .points
                    .iter()
                    .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                    .collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    pts.join(" ")
                );
            }
            Kind::Scatter => {
                for &(x, y) in &s.points {
                    let _ = writeln!(
                        svg,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#,
                        px(x),
                        py(y)
                    );
                }
            }
        }
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{y}" font-size="12" fill="{color}">{}</text>"#,
            s.label,
            x = WIDTH - MARGIN_R - 110.0,
            y = MARGIN_T + 16.0 * (i + 1) as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}
