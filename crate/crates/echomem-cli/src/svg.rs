//! Self-contained SVG rendering of the retrieval-efficiency figure: both
//! closed-form curves over αL ∈ [0, 10] (solid backward, dotted forward)
//! with the measured sweep points overlaid.

use echomem::analytic::{efficiency_backward, efficiency_forward};
use echomem::ensemble::SweepTable;
use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 440.0;
const ML: f64 = 72.0;
const MR: f64 = 24.0;
const MT: f64 = 24.0;
const MB: f64 = 64.0;
const X_MAX: f64 = 10.0;
const Y_MAX: f64 = 1.05;

fn x_px(alpha_l: f64) -> f64 {
    ML + (alpha_l / X_MAX) * (W - ML - MR)
}

fn y_px(eta: f64) -> f64 {
    H - MB - (eta / Y_MAX) * (H - MT - MB)
}

fn polyline(f: impl Fn(f64) -> f64) -> String {
    let mut points = String::new();
    for n in 0..=200 {
        let x = X_MAX * n as f64 / 200.0;
        let _ = write!(points, "{:.2},{:.2} ", x_px(x), y_px(f(x)));
    }
    points.trim_end().to_string()
}

pub fn render(table: &SweepTable) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);

    // axes
    let _ = writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="1.5"/>"#,
        ML,
        y_px(0.0),
        W - MR,
        y_px(0.0)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{:.2}" stroke="black" stroke-width="1.5"/>"#,
        y_px(0.0)
    );
    for n in 0..=5 {
        let x = 2.0 * n as f64;
        let px = x_px(x);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#,
            y_px(0.0),
            y_px(0.0) + 6.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{:.2}" font-size="14" text-anchor="middle">{x:.0}</text>"#,
            y_px(0.0) + 22.0
        );
    }
    for n in 0..=4 {
        let y = 0.25 * n as f64;
        let py = y_px(y);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{ML}" y2="{py:.2}" stroke="black"/>"#,
            ML - 6.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="end">{y:.2}</text>"#,
            ML - 10.0,
            py + 5.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="15" text-anchor="middle">optical depth alphaL</text>"#,
        (ML + W - MR) / 2.0,
        H - 18.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" font-size="15" text-anchor="middle" transform="rotate(-90 20 {:.2})">retrieval efficiency</text>"#,
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    );

    // closed-form curves: solid backward, dotted forward
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="black" stroke-width="2"/>"#,
        polyline(efficiency_backward)
    );
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="black" stroke-width="2" stroke-dasharray="3 5"/>"#,
        polyline(efficiency_forward)
    );

    // measured points
    for row in &table.rows {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4.5" fill="none" stroke="crimson" stroke-width="2"/>"#,
            x_px(row.alpha_l),
            y_px(row.measured)
        );
    }

    // legend
    let lx = x_px(4.6);
    let _ = writeln!(
        s,
        r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
        y_px(0.32),
        lx + 40.0,
        y_px(0.32)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="13">backward (1 - e^-aL)^2</text>"#,
        lx + 48.0,
        y_px(0.32) + 4.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2" stroke-dasharray="3 5"/>"#,
        y_px(0.25),
        lx + 40.0,
        y_px(0.25)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="13">forward (aL)^2 e^-aL</text>"#,
        lx + 48.0,
        y_px(0.25) + 4.0
    );
    let _ = writeln!(
        s,
        r#"<circle cx="{:.2}" cy="{:.2}" r="4.5" fill="none" stroke="crimson" stroke-width="2"/>"#,
        lx + 20.0,
        y_px(0.18)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="13">measured</text>"#,
        lx + 48.0,
        y_px(0.18) + 4.0
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use echomem::ensemble::SweepRow;

    #[test]
    fn renders_curves_and_points() {
        let table = SweepTable {
            rows: vec![
                SweepRow { alpha_l: 1.0, measured: 0.39, closed_form: 0.3995 },
                SweepRow { alpha_l: 2.0, measured: 0.74, closed_form: 0.7476 },
            ],
        };
        let svg = render(&table);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("stroke-dasharray"));
        // two data points plus the legend marker
        assert_eq!(svg.matches("<circle").count(), 3);
    }
}
