//! Precision-recall line charts.

use std::fmt::Write;

use crackseg_core::metrics::PrCurve;

const SIZE: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLOURS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// One polyline per named curve, recall on x and precision on y.
pub fn pr_chart(curves: &[(&str, &PrCurve)]) -> String {
    let full = SIZE + 2.0 * MARGIN;
    let px = |r: f64| MARGIN + r * SIZE;
    let py = |p: f64| MARGIN + (1.0 - p) * SIZE;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{full}" viewBox="0 0 {full} {full}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{full}" height="{full}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{x0} {y0}H{x1}M{x0} {y0}V{y1}" stroke="black" fill="none"/>"#,
        x0 = px(0.0),
        y0 = py(0.0),
        x1 = px(1.0),
        y1 = py(1.0)
    );
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{v}</text>"#,
            px(v),
            py(0.0) + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{v}</text>"#,
            px(0.0) - 8.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">recall</text>"#,
        px(0.5),
        full - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">precision</text>"#,
        py(0.5),
        py(0.5)
    );
    for (k, (name, curve)) in curves.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let mut pts: Vec<(f64, f64)> = curve
            .points
            .iter()
            .map(|p| (p.recall, p.precision))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
        let coords: Vec<String> = pts
            .iter()
            .map(|&(r, p)| format!("{:.2},{:.2}", px(r), py(p)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" stroke="{colour}" stroke-width="2" fill="none"/>"#,
            coords.join(" ")
        );
        let ly = MARGIN + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#,
            px(0.05),
            px(0.12)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            px(0.14),
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crackseg_core::metrics::PrPoint;

    #[test]
    fn one_polyline_per_curve() {
        let c = PrCurve {
            points: vec![
                PrPoint {
                    threshold: 1.0,
                    precision: 1.0,
                    recall: 0.0,
                },
                PrPoint {
                    threshold: 0.0,
                    precision: 0.1,
                    recall: 1.0,
                },
            ],
        };
        let svg = pr_chart(&[("a<b", &c), ("b", &c)]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
