//! Standalone SVG figures: embedding scatter plots and confusion heatmaps.
//! Coordinates are printed with fixed precision so output is byte-stable.

use std::fmt::Write;

pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    /// Index into the legend.
    pub group: usize,
}

pub struct LegendEntry {
    pub label: String,
    pub color: String,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 24.0;
const LEGEND_W: f64 = 140.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(s: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{w:.0}" height="{h:.0}" fill="#ffffff"/>"##);
}

/// Scatter plot of 2-D points, one `<circle>` per point, with a legend of
/// colored `<rect>` swatches.
pub fn scatter(points: &[ScatterPoint], legend: &[LegendEntry], title: &str) -> String {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    if points.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let span_x = if x1 > x0 { x1 - x0 } else { 1.0 };
    let span_y = if y1 > y0 { y1 - y0 } else { 1.0 };
    let plot_w = WIDTH - LEGEND_W - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let mut s = String::new();
    header(&mut s, WIDTH, HEIGHT, title);
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN:.0}" y="{MARGIN:.0}" width="{plot_w:.0}" height="{plot_h:.0}" fill="none" stroke="#bbbbbb"/>"##
    );
    let _ = writeln!(s, r#"<g id="points" fill-opacity="0.75">"#);
    for p in points {
        let cx = MARGIN + (p.x - x0) / span_x * plot_w;
        let cy = MARGIN + plot_h - (p.y - y0) / span_y * plot_h;
        let color = legend.get(p.group).map_or("#000000", |l| l.color.as_str());
        let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{}"/>"#, escape(color));
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g id="legend" font-family="sans-serif" font-size="12">"#);
    let lx = WIDTH - LEGEND_W;
    for (i, l) in legend.iter().enumerate() {
        let y = MARGIN + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.0}" y="{y:.0}" width="12" height="12" fill="{}"/><text x="{:.0}" y="{:.0}">{}</text>"#,
            escape(&l.color),
            lx + 18.0,
            y + 10.0,
            escape(&l.label)
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

/// Confusion matrix heatmap; cell shade is the row-normalized count.
pub fn confusion(labels: &[String], rows: &[Vec<u64>], title: &str) -> String {
    let k = labels.len();
    let cell = 48.0;
    let left = 90.0;
    let top = 60.0;
    let w = left + cell * k as f64 + MARGIN;
    let h = top + cell * k as f64 + MARGIN;
    let mut s = String::new();
    header(&mut s, w, h, title);
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="11" text-anchor="middle">"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="16">predicted</text><text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})">gold</text>"#,
        left + cell * k as f64 / 2.0,
        top + cell * k as f64 / 2.0,
        top + cell * k as f64 / 2.0
    );
    for (j, l) in labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            left + cell * (j as f64 + 0.5),
            top - 8.0,
            escape(l)
        );
    }
    for (i, row) in rows.iter().enumerate() {
        let total: u64 = row.iter().sum();
        let y = top + cell * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + cell / 2.0 + 4.0,
            escape(&labels[i])
        );
        for (j, &c) in row.iter().enumerate() {
            let frac = if total > 0 { c as f64 / total as f64 } else { 0.0 };
            let shade = (255.0 * (1.0 - frac)).round() as u8;
            let x = left + cell * j as f64;
            let text_color = if frac > 0.5 { "#ffffff" } else { "#000000" };
            let _ = writeln!(
                s,
                r##"<rect class="cell" x="{x:.1}" y="{y:.1}" width="{cell:.0}" height="{cell:.0}" fill="#{shade:02x}{shade:02x}ff" stroke="#888888"/><text x="{:.1}" y="{:.1}" fill="{text_color}">{c}</text>"##,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}
