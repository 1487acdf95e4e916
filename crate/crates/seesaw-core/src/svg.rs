//! Minimal standalone SVG line charts for the exported metric series.
//! Purely cosmetic output; nothing downstream depends on it.

use std::fmt::Write as _;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;

const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"];

/// One named line on a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn bounds(series: &[Series]) -> ((f64, f64), (f64, f64)) {
    let mut xs: Option<(f64, f64)> = None;
    let mut ys: Option<(f64, f64)> = None;
    for s in series {
        for &(x, y) in &s.points {
            xs = Some(xs.map_or((x, x), |(lo, hi)| (lo.min(x), hi.max(x))));
            ys = Some(ys.map_or((y, y), |(lo, hi)| (lo.min(y), hi.max(y))));
        }
    }
    let widen = |range: Option<(f64, f64)>| match range {
        Some((lo, hi)) if hi > lo => (lo, hi),
        Some((lo, _)) => (lo - 0.5, lo + 0.5),
        None => (0.0, 1.0),
    };
    (widen(xs), widen(ys))
}

/// Render a line chart with axes, per-series legend, and one polyline per
/// non-empty series. With no points at all, only the axes are drawn.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let ((x_lo, x_hi), (y_lo, y_hi)) = bounds(series);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| HEIGHT - MARGIN_BOTTOM - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" width=\"{WIDTH}\" height=\"{HEIGHT}\">"
    );
    let _ = writeln!(out, "  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "  <text x=\"{}\" y=\"28\" font-family=\"sans-serif\" font-size=\"18\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );

    // Axes.
    let x_axis_y = HEIGHT - MARGIN_BOTTOM;
    let _ = writeln!(
        out,
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{x_axis_y}\" x2=\"{}\" y2=\"{x_axis_y}\" stroke=\"black\"/>",
        WIDTH - MARGIN_RIGHT
    );
    let _ = writeln!(
        out,
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{MARGIN_TOP}\" x2=\"{MARGIN_LEFT}\" y2=\"{x_axis_y}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        out,
        "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "  <text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    );
    // Range tick labels.
    for (value, x, y, anchor) in [
        (x_lo, MARGIN_LEFT, x_axis_y + 18.0, "middle"),
        (x_hi, WIDTH - MARGIN_RIGHT, x_axis_y + 18.0, "middle"),
        (y_lo, MARGIN_LEFT - 8.0, x_axis_y + 4.0, "end"),
        (y_hi, MARGIN_LEFT - 8.0, MARGIN_TOP + 4.0, "end"),
    ] {
        let _ = writeln!(
            out,
            "  <text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"{anchor}\">{}</text>",
            fmt(value)
        );
    }

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !s.points.is_empty() {
            let points: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", fmt(sx(x)), fmt(sy(y))))
                .collect();
            let _ = writeln!(
                out,
                "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
                points.join(" ")
            );
        }
        // Legend entry.
        let ly = MARGIN_TOP + 8.0 + i as f64 * 20.0;
        let lx = WIDTH - MARGIN_RIGHT - 190.0;
        let _ = writeln!(
            out,
            "  <rect x=\"{lx}\" y=\"{}\" width=\"14\" height=\"14\" fill=\"{color}\"/>",
            ly - 11.0
        );
        let _ = writeln!(
            out,
            "  <text x=\"{}\" y=\"{ly}\" font-family=\"sans-serif\" font-size=\"13\">{}</text>",
            lx + 20.0,
            escape(&s.name)
        );
    }

    out.push_str("</svg>\n");
    out
}

/// One named set of per-category values for a bar chart.
#[derive(Debug, Clone, PartialEq)]
pub struct CategorySeries {
    pub name: String,
    pub values: Vec<f64>,
}

impl CategorySeries {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

/// Grouped bar chart: one bar per (category, series) pair, with a legend
/// entry per series. Series shorter than the category list are padded with
/// zero-height bars.
pub fn bar_chart(title: &str, categories: &[String], series: &[CategorySeries]) -> String {
    let y_max = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_axis_y = HEIGHT - MARGIN_BOTTOM;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" width=\"{WIDTH}\" height=\"{HEIGHT}\">"
    );
    let _ = writeln!(out, "  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "  <text x=\"{}\" y=\"28\" font-family=\"sans-serif\" font-size=\"18\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{x_axis_y}\" x2=\"{}\" y2=\"{x_axis_y}\" stroke=\"black\"/>",
        WIDTH - MARGIN_RIGHT
    );
    let _ = writeln!(
        out,
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{MARGIN_TOP}\" x2=\"{MARGIN_LEFT}\" y2=\"{x_axis_y}\" stroke=\"black\"/>"
    );

    if !categories.is_empty() {
        let slot_w = plot_w / categories.len() as f64;
        let bar_w = (slot_w * 0.7 / series.len().max(1) as f64).max(2.0);
        for (ci, category) in categories.iter().enumerate() {
            let slot_x = MARGIN_LEFT + ci as f64 * slot_w;
            for (si, s) in series.iter().enumerate() {
                let value = s.values.get(ci).copied().unwrap_or(0.0);
                let h = value / y_max * plot_h;
                let x = slot_x + slot_w * 0.15 + si as f64 * bar_w;
                let _ = writeln!(
                    out,
                    "  <rect class=\"bar\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
                    fmt(x),
                    fmt(x_axis_y - h),
                    fmt(bar_w),
                    fmt(h),
                    PALETTE[si % PALETTE.len()]
                );
            }
            let _ = writeln!(
                out,
                "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
                fmt(slot_x + slot_w / 2.0),
                x_axis_y + 18.0,
                escape(category)
            );
        }
    }
    for (si, s) in series.iter().enumerate() {
        let ly = MARGIN_TOP + 8.0 + si as f64 * 20.0;
        let lx = WIDTH - MARGIN_RIGHT - 190.0;
        let _ = writeln!(
            out,
            "  <rect x=\"{lx}\" y=\"{}\" width=\"14\" height=\"14\" fill=\"{}\"/>",
            ly - 11.0,
            PALETTE[si % PALETTE.len()]
        );
        let _ = writeln!(
            out,
            "  <text x=\"{}\" y=\"{ly}\" font-family=\"sans-serif\" font-size=\"13\">{}</text>",
            lx + 20.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
