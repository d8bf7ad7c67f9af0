//! Minimal deterministic SVG charts. Coordinates are printed with two
//! decimals so identical inputs give identical bytes.

use crate::report::xml_escape;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 80.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(usize, f64)>,
}

fn header(out: &mut String, title: &str) {
    out.push_str(&format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    ));
}

fn axes(out: &mut String) {
    let (x0, y0) = (LEFT, HEIGHT - BOTTOM);
    out.push_str(&format!(
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>\n\
         <line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x0:.2}\" y2=\"{TOP:.2}\" stroke=\"black\"/>\n",
        WIDTH - RIGHT
    ));
}

fn y_tick(out: &mut String, y: f64, label: &str) {
    out.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{LEFT:.2}\" y2=\"{y:.2}\" stroke=\"black\"/>\n\
         <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{label}</text>\n",
        LEFT - 4.0,
        LEFT - 6.0,
        y + 4.0
    ));
}

/// Line chart with the y axis fixed to `[0, 1.05]` and one polyline per
/// series; x is the layer index.
pub fn line_chart(title: &str, series: &[Series]) -> String {
    const Y_MAX: f64 = 1.05;
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let layers = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let lo = layers.clone().min().unwrap_or(1) as f64;
    let hi = layers.max().unwrap_or(1) as f64;
    let sx = |layer: usize| {
        if hi > lo {
            LEFT + (layer as f64 - lo) / (hi - lo) * plot_w
        } else {
            LEFT + plot_w / 2.0
        }
    };
    let sy = |v: f64| HEIGHT - BOTTOM - v.clamp(0.0, Y_MAX) / Y_MAX * plot_h;

    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        y_tick(&mut out, sy(tick), &format!("{tick:.2}"));
    }
    let mut ticks: Vec<usize> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    ticks.sort_unstable();
    ticks.dedup();
    for layer in ticks {
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{layer}</text>\n",
            sx(layer),
            HEIGHT - BOTTOM + 16.0
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">layer</text>\n",
        LEFT + plot_w / 2.0,
        HEIGHT - BOTTOM + 36.0
    ));

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(l, v)| format!("{:.2},{:.2}", sx(l), sy(v)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"><title>{}</title></polyline>\n",
            pts.join(" "),
            xml_escape(&s.label)
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            LEFT + 8.0,
            TOP + 14.0 * (k + 1) as f64,
            xml_escape(&s.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// One bar per value, labelled underneath with the matching string.
pub fn bar_chart(title: &str, labels: &[String], values: &[f32]) -> String {
    debug_assert_eq!(labels.len(), values.len());
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let max = values.iter().fold(0.0f64, |m, &v| m.max(v as f64));
    let y_max = if max > 0.0 { max * 1.1 } else { 1.0 };
    let slot = plot_w / values.len().max(1) as f64;
    let bar_w = slot * 0.7;

    for tick in [0.0, 0.5, 1.0] {
        let v = tick * y_max;
        y_tick(
            &mut out,
            HEIGHT - BOTTOM - tick * plot_h,
            &format!("{v:.3e}"),
        );
    }
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let h = (v.max(0.0) as f64) / y_max * plot_h;
        let x = LEFT + slot * i as f64 + (slot - bar_w) / 2.0;
        let cx = LEFT + slot * (i as f64 + 0.5);
        let ly = HEIGHT - BOTTOM + 14.0;
        out.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{bar_w:.2}\" height=\"{h:.2}\" fill=\"{}\"><title>{}</title></rect>\n",
            HEIGHT - BOTTOM - h,
            PALETTE[0],
            crate::report::fmt_sig9(v as f64)
        ));
        out.push_str(&format!(
            "<text x=\"{cx:.2}\" y=\"{ly:.2}\" text-anchor=\"end\" transform=\"rotate(-45 {cx:.2} {ly:.2})\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            xml_escape(label)
        ));
    }
    out.push_str("</svg>\n");
    out
}
