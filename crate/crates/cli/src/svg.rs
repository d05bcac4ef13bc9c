//! Minimal SVG bar charts.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 56.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Vertical bars around a zero baseline. Bars flagged in `marked` get a
/// star above them.
pub fn bar_chart(title: &str, y_label: &str, labels: &[String], values: &[f64], marked: &[bool]) -> String {
    let lo = values.iter().cloned().fold(0.0f64, f64::min);
    let hi = values.iter().cloned().fold(0.0f64, f64::max);
    let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
    let (lo, hi) = (lo - 0.05 * span * f64::from(lo < 0.0), hi + 0.1 * span);
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let y = |v: f64| MARGIN_TOP + (hi - v) / (hi - lo) * plot_h;
    let slot = plot_w / values.len().max(1) as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN_LEFT}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="#dddddd"/>"##,
            WIDTH - MARGIN_RIGHT
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            MARGIN_LEFT - 6.0,
            yy + 4.0
        );
    }
    let y0 = y(0.0);
    for (i, (&v, label)) in values.iter().zip(labels).enumerate() {
        let x = MARGIN_LEFT + slot * (i as f64 + 0.15);
        let w = slot * 0.7;
        let (top, h) = if v >= 0.0 { (y(v), y0 - y(v)) } else { (y0, y(v) - y0) };
        let fill = if marked.get(i).copied().unwrap_or(false) { "#c0392b" } else { "#7f8c8d" };
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{top:.1}" width="{w:.1}" height="{h:.1}" fill="{fill}"/>"#
        );
        let cx = x + w / 2.0;
        if marked.get(i).copied().unwrap_or(false) {
            let _ = writeln!(s, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">*</text>"#, top - 4.0);
        }
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN_BOTTOM + 18.0,
            escape(label)
        );
    }
    let _ = writeln!(
        s,
        r##"<line x1="{MARGIN_LEFT}" y1="{y0:.1}" x2="{:.1}" y2="{y0:.1}" stroke="#000000"/>"##,
        WIDTH - MARGIN_RIGHT
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    );
    s.push_str("</svg>\n");
    s
}
