//! CSV tables and a small dependency-free SVG line plotter.
//!
//! Numbers are written with Rust's shortest round-trip formatting (CSV) or a
//! fixed three decimals (SVG), so outputs are byte-stable for equal inputs.

use std::fmt::Write as _;

use crate::eval::MapReport;
use crate::threshold::ThresholdModel;

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// `image_id,N,O,theta,new_pixels,old_pixels`
pub fn threshold_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a ThresholdModel)>) -> Vec<u8> {
    csv_bytes(
        &["image_id", "N", "O", "theta", "new_pixels", "old_pixels"],
        rows.into_iter().map(|(id, m)| {
            let (np, op) = m.pixel_counts();
            vec![
                id.to_string(),
                m.n_mean().to_string(),
                m.o_mean().to_string(),
                m.theta().to_string(),
                np.to_string(),
                op.to_string(),
            ]
        }),
    )
}

/// One row per class plus a closing `mAP` row whose `ap` column holds the
/// mean and whose counts are totals.
pub fn metrics_csv(report: &MapReport) -> Vec<u8> {
    let mut rows: Vec<Vec<String>> = report
        .classes
        .iter()
        .map(|c| {
            vec![
                c.category.to_string(),
                c.ap.to_string(),
                c.counts.tp.to_string(),
                c.counts.fp.to_string(),
                c.counts.fn_.to_string(),
                c.n_gt.to_string(),
            ]
        })
        .collect();
    let total = |f: fn(&crate::eval::ClassMetrics) -> usize| -> String {
        report.classes.iter().map(f).sum::<usize>().to_string()
    };
    rows.push(vec![
        "mAP".into(),
        report.map.to_string(),
        total(|c| c.counts.tp),
        total(|c| c.counts.fp),
        total(|c| c.counts.fn_),
        total(|c| c.n_gt),
    ]);
    csv_bytes(&["class", "ap", "tp", "fp", "fn", "n_gt"], rows)
}

pub fn pr_csv(report: &MapReport) -> Vec<u8> {
    csv_bytes(
        &["class", "recall", "precision"],
        report.classes.iter().flat_map(|c| {
            c.curve
                .points()
                .iter()
                .map(move |&(r, p)| vec![c.category.to_string(), r.to_string(), p.to_string()])
        }),
    )
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Line plot over the unit square. Series with one point render as a marker.
pub fn unit_line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const L: f64 = 70.0;
    const R: f64 = 150.0;
    const T: f64 = 40.0;
    const B: f64 = 60.0;
    let px = |x: f64| L + x.clamp(0.0, 1.0) * (W - L - R);
    let py = |y: f64| H - B - y.clamp(0.0, 1.0) * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        (L + W - R) / 2.0,
        escape(title)
    );
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#dddddd"/>"##,
            px(0.0),
            py(v),
            px(1.0),
            py(v)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{v:.1}</text>"#,
            px(0.0) - 6.0,
            py(v) + 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{v:.1}</text>"#,
            px(v),
            py(0.0) + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="black"/>"#,
        px(0.0),
        py(1.0),
        px(1.0) - px(0.0),
        py(0.0) - py(1.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{}</text>"#,
        (px(0.0) + px(1.0)) / 2.0,
        H - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.3}" text-anchor="middle" transform="rotate(-90 18 {:.3})">{}</text>"#,
        (py(0.0) + py(1.0)) / 2.0,
        (py(0.0) + py(1.0)) / 2.0,
        escape(y_label)
    );

    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = ser
            .points
            .iter()
            .map(|&(x, y)| format!("{:.3},{:.3}", px(x), py(y)))
            .collect();
        if path.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                path.join(" ")
            );
        }
        for &(x, y) in &ser.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.3}" cy="{:.3}" r="2.5" fill="{color}"/>"#,
                px(x),
                py(y)
            );
        }
        let ly = T + 10.0 + 20.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.3}" y1="{ly:.3}" x2="{:.3}" y2="{ly:.3}" stroke="{color}" stroke-width="2"/>"#,
            W - R + 15.0,
            W - R + 35.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}">{}</text>"#,
            W - R + 40.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// PR curves of every class, each starting from the implicit origin.
pub fn pr_svg(report: &MapReport) -> String {
    let series: Vec<Series> = report
        .classes
        .iter()
        .map(|c| Series {
            name: format!("{} (AP {:.3})", c.category, c.ap),
            points: std::iter::once((0.0, 1.0))
                .chain(c.curve.points().iter().copied())
                .collect(),
        })
        .collect();
    unit_line_plot_svg("Precision-recall", "recall", "precision", &series)
}
