//! Minimal SVG figures: ROC curves, confusion matrices and AUC bar charts.

use std::fmt::Write;

use corads_core::evaluation::RocPoint;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, w: u32, h: u32) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

/// ROC curves on the unit square, one polyline per `(label, points)`.
pub fn roc_svg(title: &str, curves: &[(String, Vec<RocPoint>)]) -> String {
    let (size, margin) = (360.0, 50.0);
    let mut out = String::new();
    header(&mut out, (size + 2.0 * margin + 160.0) as u32, (size + 2.0 * margin) as u32);
    let px = |x: f64| margin + x * size;
    let py = |y: f64| margin + (1.0 - y) * size;
    let _ = writeln!(out, r#"<text x="{}" y="25" text-anchor="middle" font-size="14">{}</text>"#, px(0.5), escape(title));
    let _ = writeln!(
        out,
        r#"<rect x="{margin}" y="{margin}" width="{size}" height="{size}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999" stroke-dasharray="4 4"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for t in 0..=5 {
        let v = t as f64 / 5.0;
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{v:.1}</text>"#, px(v), py(0.0) + 16.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#, px(0.0) - 6.0, py(v) + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">1 - specificity</text>"#, px(0.5), py(0.0) + 36.0);
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">sensitivity</text>"#,
        py(0.5),
        py(0.5)
    );
    for (i, (label, points)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.fpr), py(p.tpr)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        let ly = margin + 14.0 + 18.0 * i as f64;
        let lx = px(1.0) + 16.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="3"/>"#,
            ly - 4.0,
            lx + 16.0,
            ly - 4.0
        );
        let _ = writeln!(out, r#"<text x="{}" y="{ly}">{}</text>"#, lx + 22.0, escape(label));
    }
    out.push_str("</svg>\n");
    out
}

/// Grid of counts, true grade by row and predicted grade by column.
pub fn confusion_svg(title: &str, matrix: &[Vec<u64>]) -> String {
    let k = matrix.len();
    let (cell, margin) = (56.0, 70.0);
    let side = cell * k as f64;
    let max = matrix.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let mut out = String::new();
    header(&mut out, (side + margin + 30.0) as u32, (side + margin + 40.0) as u32);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        margin + side / 2.0,
        escape(title)
    );
    for (i, row) in matrix.iter().enumerate() {
        for (j, &n) in row.iter().enumerate() {
            let shade = 255.0 - 200.0 * n as f64 / max;
            let (x, y) = (margin + j as f64 * cell, margin - 20.0 + i as f64 * cell);
            let _ = writeln!(
                out,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({0},{0},255)" stroke="white"/>"#,
                shade as u8
            );
            let fill = if shade < 150.0 { "white" } else { "black" };
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{fill}">{n}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
        let y = margin - 20.0 + (i as f64 + 0.5) * cell + 4.0;
        let _ = writeln!(out, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, margin - 8.0, i + 1);
    }
    for j in 0..k {
        let x = margin + (j as f64 + 0.5) * cell;
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            margin - 20.0 + side + 16.0,
            j + 1
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">predicted</text>"#,
        margin + side / 2.0,
        margin + side + 14.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">reference</text>"#,
        margin - 20.0 + side / 2.0
    );
    out.push_str("</svg>\n");
    out
}

/// Horizontal AUC bars with confidence-interval whiskers.
pub fn auc_bars_svg(title: &str, rows: &[(String, f64, (f64, f64))]) -> String {
    let (label_w, plot_w, bar_h, top) = (170.0, 360.0, 26.0, 40.0);
    let height = top + bar_h * rows.len() as f64 + 40.0;
    let mut out = String::new();
    header(&mut out, (label_w + plot_w + 40.0) as u32, height as u32);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        label_w + plot_w / 2.0,
        escape(title)
    );
    // axis from 0.5 to 1.0, where AUC comparisons live
    let px = |v: f64| label_w + (v.clamp(0.5, 1.0) - 0.5) * 2.0 * plot_w;
    for (i, (label, auc, (lo, hi))) in rows.iter().enumerate() {
        let y = top + i as f64 * bar_h;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<rect x="{label_w}" y="{}" width="{:.2}" height="{}" fill="{color}" opacity="0.8"/>"#,
            y + 4.0,
            px(*auc) - label_w,
            bar_h - 8.0
        );
        let mid = y + bar_h / 2.0;
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{mid}" x2="{:.2}" y2="{mid}" stroke="black"/>"#,
            px(*lo),
            px(*hi)
        );
        for v in [lo, hi] {
            let _ = writeln!(
                out,
                r#"<line x1="{0:.2}" y1="{1}" x2="{0:.2}" y2="{2}" stroke="black"/>"#,
                px(*v),
                mid - 5.0,
                mid + 5.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{} ({auc:.3})</text>"#,
            label_w - 6.0,
            mid + 4.0,
            escape(label)
        );
    }
    let axis_y = top + bar_h * rows.len() as f64 + 4.0;
    for t in 0..=5 {
        let v = 0.5 + t as f64 * 0.1;
        let _ = writeln!(out, r#"<text x="{:.2}" y="{}" text-anchor="middle">{v:.1}</text>"#, px(v), axis_y + 14.0);
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">AUC</text>"#,
        label_w + plot_w / 2.0,
        axis_y + 32.0
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figures_are_well_formed() {
        let pts = vec![
            RocPoint { fpr: 0.0, tpr: 0.0, threshold: 2.0 },
            RocPoint { fpr: 0.5, tpr: 1.0, threshold: 0.4 },
            RocPoint { fpr: 1.0, tpr: 1.0, threshold: 0.1 },
        ];
        let roc = roc_svg("ROC <test>", &[("a & b".into(), pts)]);
        assert!(roc.starts_with("<svg") && roc.trim_end().ends_with("</svg>"));
        assert!(roc.contains("ROC &lt;test&gt;") && roc.contains("a &amp; b"));
        assert_eq!(roc.matches("<polyline").count(), 1);

        let m = vec![vec![3, 1], vec![0, 4]];
        let cm = confusion_svg("confusion", &m);
        assert_eq!(cm.matches("<rect").count(), 1 + 4);

        let bars = auc_bars_svg("auc", &[("x".into(), 0.9, (0.8, 0.95)), ("y".into(), 0.7, (0.6, 0.8))]);
        assert!(bars.contains("x (0.900)"));
    }
}
