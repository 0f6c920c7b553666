//! Static SVG rendering: a single time series and a confusion heatmap.

use std::fmt::Write as _;

use gwt_core::evaluation::ConfusionMatrix;

const W: f64 = 800.0;
const H: f64 = 320.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;

/// Fill used for a fully saturated heatmap cell.
pub const MAX_FILL: &str = "rgb(8,48,107)";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Polyline of `samples` against time in milliseconds, with axes and ticks.
pub fn signal_svg(samples: &[f64], sample_rate: f64, title: &str) -> String {
    let n = samples.len().max(2);
    let (mut lo, mut hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(lo.is_finite() && hi.is_finite()) || hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pw = W - MARGIN_L - MARGIN_R;
    let ph = H - MARGIN_T - MARGIN_B;
    let x_of = |i: usize| MARGIN_L + pw * i as f64 / (n - 1) as f64;
    let y_of = |v: f64| MARGIN_T + ph * (hi - v) / (hi - lo);
    let duration_ms = 1000.0 * (n - 1) as f64 / sample_rate;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let (x0, y0, x1, y1) = (MARGIN_L, MARGIN_T, W - MARGIN_R, H - MARGIN_B);
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.1} {y0:.1} L{x0:.1} {y1:.1} L{x1:.1} {y1:.1}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let x = x0 + f * pw;
        let y = y1 - f * ph;
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{y1:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{:.1}</text>"#,
            y1 + 5.0,
            y1 + 18.0,
            f * duration_ms
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{x0:.1}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{:.3}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0,
            lo + f * (hi - lo)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">time (ms)</text>"#,
        x0 + pw / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">whitened strain</text>"#,
        y0 + ph / 2.0,
        y0 + ph / 2.0
    );
    let points: Vec<String> =
        samples.iter().enumerate().map(|(i, &v)| format!("{:.2},{:.2}", x_of(i), y_of(v))).collect();
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="rgb(31,119,180)" stroke-width="1" points="{}"/>"#,
        points.join(" ")
    );
    s.push_str("</svg>\n");
    s
}

/// Blue ramp from white (0) to [`MAX_FILL`] (1).
fn fill(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    if t == 1.0 {
        return MAX_FILL.to_string();
    }
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("rgb({},{},{})", lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
}

/// 8×8 grid shaded by row-normalized counts, with class labels.
pub fn confusion_svg(cm: &ConfusionMatrix, names: &[&str]) -> String {
    let cell = 60.0;
    let left = 170.0;
    let top = 150.0;
    let size = cell * 8.0;
    let (w, h) = (left + size + 20.0, top + size + 40.0);
    let rows = cm.row_sums();
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    for (i, row) in cm.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            let t = if rows[i] > 0 { c as f64 / rows[i] as f64 } else { 0.0 };
            let (x, y) = (left + j as f64 * cell, top + i as f64 * cell);
            let text = if t > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{x:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}" fill="{}" stroke="rgb(200,200,200)"/><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" fill="{text}">{c}</text>"#,
                fill(t),
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    for (k, name) in names.iter().enumerate() {
        let y = top + k as f64 * cell + cell / 2.0 + 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{y:.1}" font-family="sans-serif" font-size="12" text-anchor="end">{}</text>"#,
            left - 8.0,
            escape(name)
        );
        let x = left + k as f64 * cell + cell / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="start" transform="rotate(-60 {x:.1} {:.1})">{}</text>"#,
            top - 8.0,
            top - 8.0,
            escape(name)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">predicted class</text>"#,
        left + size / 2.0,
        top + size + 28.0
    );
    s.push_str("</svg>\n");
    s
}
