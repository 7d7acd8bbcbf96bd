//! Minimal SVG region maps.

use std::fmt::Write as _;

const PALETTE: [&str; 12] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac", "#86bcb6", "#d37295",
];
const INFEASIBLE: &str = "#d9d9d9";

fn colour(k: usize) -> &'static str {
    PALETTE[k % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Horizontal strip of labelled intervals over `[lo, hi]`.
pub fn strip(title: &str, lo: f64, hi: f64, intervals: &[(String, f64, f64)]) -> String {
    let (w, h, pad) = (800.0, 140.0, 40.0);
    let x = |v: f64| pad + (v - lo) / (hi - lo) * (w - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{pad}" y="20" font-size="13">{}</text>"#,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="40" width="{}" height="40" fill="{INFEASIBLE}"/>"#,
        w - 2.0 * pad
    );
    for (k, (label, a, b)) in intervals.iter().enumerate() {
        let (xa, xb) = (x(*a), x(*b));
        let _ = writeln!(
            s,
            r#"<rect x="{xa:.2}" y="40" width="{:.2}" height="40" fill="{}" stroke="white"/>"#,
            (xb - xa).max(0.5),
            colour(k)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            0.5 * (xa + xb),
            if k % 2 == 0 { 95 } else { 108 },
            escape(label)
        );
    }
    for v in [lo, 0.5 * (lo + hi), hi] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="128" text-anchor="middle">{v:.2}</text>"#,
            x(v)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Raster map of a two-dimensional box, coloured by `classify` (`None` is infeasible).
pub fn map2d(
    title: &str,
    bounds: [(f64, f64); 2],
    cells: usize,
    labels: &[String],
    classify: impl Fn(&[f64]) -> Option<usize>,
) -> String {
    let (size, pad) = (520.0, 50.0);
    let cell = size / cells as f64;
    let [(x_lo, x_hi), (y_lo, y_hi)] = bounds;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        size + 2.0 * pad + 120.0,
        size + 2.0 * pad
    );
    let _ = writeln!(
        s,
        r#"<text x="{pad}" y="25" font-size="13">{}</text>"#,
        escape(title)
    );
    for i in 0..cells {
        for j in 0..cells {
            let px = x_lo + (i as f64 + 0.5) / cells as f64 * (x_hi - x_lo);
            let py = y_lo + (j as f64 + 0.5) / cells as f64 * (y_hi - y_lo);
            let fill = classify(&[px, py]).map_or(INFEASIBLE, colour);
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                pad + i as f64 * cell,
                pad + size - (j + 1) as f64 * cell,
                cell + 0.05,
                cell + 0.05
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{size}" height="{size}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">x1</text>"#,
        pad + size / 2.0,
        pad + size + 35.0
    );
    let _ = writeln!(s, r#"<text x="15" y="{:.1}">x2</text>"#, pad + size / 2.0);
    for (v, t) in [(x_lo, 0.0), (x_hi, 1.0)] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.2}</text>"#,
            pad + t * size,
            pad + size + 15.0
        );
    }
    for (v, t) in [(y_lo, 0.0), (y_hi, 1.0)] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            pad - 4.0,
            pad + size - t * size + 4.0
        );
    }
    for (k, label) in labels.iter().enumerate() {
        let y = pad + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{y:.1}" width="12" height="12" fill="{}"/>"#,
            pad + size + 15.0,
            colour(k)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            pad + size + 32.0,
            y + 10.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}
