//! Bare-bones SVG line plots: axes, one polyline per series, a legend.

use std::fmt::Write as _;

pub struct PlotSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;

/// Renders `series` into a standalone SVG document. With `log_x`, points
/// with x ≤ 0 are dropped.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[PlotSeries], log_x: bool) -> String {
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(x, y)| (!log_x || *x > 0.0) && x.is_finite() && y.is_finite())
                .map(|&(x, y)| (tx(x), y))
                .collect()
        })
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let (left, right, top, bottom) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="black"/>"#
    );
    let x_tick = |v: f64| if log_x { format!("1e{v:.1}") } else { format!("{v:.3}") };
    let _ = writeln!(s, r#"<text x="{left}" y="{}" text-anchor="middle">{}</text>"#, bottom + 16.0, x_tick(x0));
    let _ = writeln!(s, r#"<text x="{right}" y="{}" text-anchor="middle">{}</text>"#, bottom + 16.0, x_tick(x1));
    let _ = writeln!(s, r#"<text x="{}" y="{bottom}" text-anchor="end">{y0:.4e}</text>"#, left - 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y1:.4e}</text>"#, left - 4.0, top + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (k, (ser, p)) in series.iter().zip(&pts).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = top + 8.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#,
            left + 10.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_polyline_per_series() {
        let series = vec![
            PlotSeries {
                label: "h=0.01".into(),
                points: vec![(0.001, 1.0), (0.1, 5.0), (10.0, 9.0)],
            },
            PlotSeries {
                label: "h=0.1".into(),
                points: vec![(0.0, 1.0), (0.1, 3.0), (10.0, 8.0)],
            },
        ];
        let svg = line_plot_svg("dose <response>", "antigen", "T(7)", &series, true);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("dose &lt;response&gt;"));
    }

    #[test]
    fn empty_series_still_renders() {
        let svg = line_plot_svg("t", "x", "y", &[], false);
        assert!(svg.contains("</svg>"));
    }
}
