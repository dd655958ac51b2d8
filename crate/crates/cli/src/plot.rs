//! Minimal SVG output: coefficient heatmaps and grouped bar charts.

use std::fmt::Write;

use nalgebra::DMatrix;

const CELL: f64 = 28.0;
const MARGIN: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Blue for negative, white at zero, red for positive; `scale` maps to full saturation.
fn diverging(v: f64, scale: f64) -> String {
    let x = if scale > 0.0 { (v / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |c: f64| (255.0 - (255.0 - c) * x.abs()).round() as u8;
    let (r, g, b) = if x >= 0.0 { (fade(178.0), fade(24.0), fade(43.0)) } else { (fade(33.0), fade(102.0), fade(172.0)) };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap with a colour scale symmetric about zero. Rows are outcomes,
/// columns predictors.
pub fn heatmap(title: &str, m: &DMatrix<f64>, row_labels: &[String], col_labels: &[String], scale: f64) -> String {
    let (nr, nc) = m.shape();
    let w = MARGIN * 2.0 + CELL * nc as f64;
    let h = MARGIN * 2.0 + CELL * nr as f64;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, w / 2.0, escape(title));
    for i in 0..nr {
        for j in 0..nc {
            let v = m[(i, j)];
            let _ = writeln!(
                s,
                r##"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{}" stroke="#cccccc"><title>{v}</title></rect>"##,
                MARGIN + CELL * j as f64,
                MARGIN + CELL * i as f64,
                diverging(v, scale)
            );
        }
    }
    for (i, l) in row_labels.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 4.0, MARGIN + CELL * (i as f64 + 0.6), escape(l));
    }
    for (j, l) in col_labels.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, MARGIN + CELL * (j as f64 + 0.5), MARGIN - 6.0, escape(l));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">range ±{scale:.3}</text>"#, w / 2.0, h - 20.0);
    s.push_str("</svg>\n");
    s
}

/// Largest absolute entry over all matrices, so panels share one scale.
pub fn shared_scale<'a>(ms: impl IntoIterator<Item = &'a DMatrix<f64>>) -> f64 {
    ms.into_iter().flat_map(|m| m.iter()).fold(0.0, |a: f64, v| a.max(v.abs()))
}

pub struct BarGroup {
    pub label: String,
    /// One value per series, `None` when missing.
    pub values: Vec<Option<f64>>,
}

const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

/// Grouped bars on a fixed `[lo, hi]` axis with a legend.
pub fn grouped_bars(title: &str, series: &[String], groups: &[BarGroup], lo: f64, hi: f64) -> String {
    let bar = 14.0;
    let gap = 18.0;
    let plot_h = 220.0;
    let group_w = bar * series.len().max(1) as f64 + gap;
    let w = MARGIN * 2.0 + group_w * groups.len().max(1) as f64 + 180.0;
    let h = plot_h + MARGIN * 2.0;
    let y = |v: f64| MARGIN + plot_h * (1.0 - ((v - lo) / (hi - lo)).clamp(0.0, 1.0));
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, w / 2.0, escape(title));
    for tick in 0..=4 {
        let v = lo + (hi - lo) * tick as f64 / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN}" x2="{}" y1="{yy}" y2="{yy}" stroke="#dddddd"/><text x="{}" y="{}" text-anchor="end">{v:.2}</text>"##,
            w - 180.0,
            MARGIN - 4.0,
            y(v) + 3.0,
            yy = y(v)
        );
    }
    for (g, group) in groups.iter().enumerate() {
        let x0 = MARGIN + gap / 2.0 + group_w * g as f64;
        for (k, v) in group.values.iter().enumerate() {
            if let Some(v) = v {
                let top = y(*v);
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{top}" width="{bar}" height="{}" fill="{}"><title>{v}</title></rect>"#,
                    x0 + bar * k as f64,
                    (y(lo.max(0.0_f64.min(hi))) - top).max(0.0),
                    PALETTE[k % PALETTE.len()]
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + bar * series.len() as f64 / 2.0,
            MARGIN + plot_h + 14.0,
            escape(&group.label)
        );
    }
    for (k, name) in series.iter().enumerate() {
        let ly = MARGIN + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            w - 170.0,
            ly,
            PALETTE[k % PALETTE.len()],
            w - 155.0,
            ly + 9.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
