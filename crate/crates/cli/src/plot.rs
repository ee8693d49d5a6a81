//! Minimal SVG line plots of CSV tables: first column on x, every other
//! column as one series.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        None
    } else if lo == hi {
        Some((lo - 0.5, hi + 0.5))
    } else {
        Some((lo, hi))
    }
}

pub fn svg_from_csv(csv: &str, title: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap_or(f64::NAN)).collect())
        .collect();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, WIDTH / 2.0);

    let xr = bounds(rows.iter().filter_map(|r| r.first().copied()));
    let yr = bounds(rows.iter().flat_map(|r| r.iter().skip(1).copied()));
    let (Some((x0, x1)), Some((y0, y1))) = (xr, yr) else {
        svg.push_str("</svg>\n");
        return svg;
    };
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for (x, anchor, v) in [(MARGIN, "start", x0), (WIDTH - MARGIN, "end", x1)] {
        let _ = writeln!(svg, r#"<text x="{x}" y="{}" text-anchor="{anchor}">{v:.6e}</text>"#, HEIGHT - MARGIN + 16.0);
    }
    for (y, v) in [(HEIGHT - MARGIN, y0), (MARGIN, y1)] {
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" text-anchor="end">{v:.4e}</text>"#, MARGIN - 4.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0,
        header.first().unwrap_or(&"")
    );

    for (k, name) in header.iter().enumerate().skip(1) {
        let color = COLORS[(k - 1) % COLORS.len()];
        // NaN rows break the line into separate segments.
        let mut segments: Vec<Vec<String>> = vec![Vec::new()];
        for r in &rows {
            match (r.first(), r.get(k)) {
                (Some(x), Some(y)) if x.is_finite() && y.is_finite() => {
                    segments.last_mut().unwrap().push(format!("{:.2},{:.2}", sx(*x), sy(*y)))
                }
                _ => segments.push(Vec::new()),
            }
        }
        for seg in segments.iter().filter(|s| !s.is_empty()) {
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                seg.join(" ")
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#,
            WIDTH - MARGIN + 4.0,
            MARGIN + 14.0 * k as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}
