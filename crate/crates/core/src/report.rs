//! CSV and SVG report emission.

use std::fmt::Write;

use crate::eval::{f_beta, EvalReport, PrCurve};

pub fn curve_csv(curve: &PrCurve, beta2: f64) -> String {
    let mut out = String::from("cutoff,precision,recall,f_beta,valid\n");
    for p in &curve.points {
        let f = if p.valid { f_beta(p.precision, p.recall, beta2) } else { 0.0 };
        writeln!(out, "{},{},{},{},{}", p.cutoff, p.precision, p.recall, f, p.valid).unwrap();
    }
    out
}

/// Concatenated per-image curves with a leading image column.
pub fn curves_csv<'a>(items: impl IntoIterator<Item = (&'a str, &'a PrCurve)>, beta2: f64) -> String {
    let mut out = String::from("image,cutoff,precision,recall,f_beta,valid\n");
    for (id, curve) in items {
        for p in &curve.points {
            let f = if p.valid { f_beta(p.precision, p.recall, beta2) } else { 0.0 };
            writeln!(out, "{id},{},{},{},{},{}", p.cutoff, p.precision, p.recall, f, p.valid).unwrap();
        }
    }
    out
}

pub fn per_image_csv(report: &EvalReport) -> String {
    let mut out = String::from("image,max_f_beta,segmentation_f_beta\n");
    for s in &report.images {
        let seg = s.segmentation_f_beta.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{}", s.id, s.max_f_beta, seg).unwrap();
    }
    out
}

pub fn mean_curve_csv(report: &EvalReport) -> String {
    let mut out = String::from("cutoff,precision,recall,f_beta\n");
    for (c, (p, r)) in report.mean_precision.iter().zip(&report.mean_recall).enumerate() {
        writeln!(out, "{c},{p},{r},{}", f_beta(*p, *r, report.beta2)).unwrap();
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Recall on x, precision on y, one polyline per named report.
pub fn pr_plot_svg(series: &[(&str, &EvalReport)]) -> String {
    let (w, h, m) = (480.0, 360.0, 40.0);
    let px = |r: f64| m + r * (w - 2.0 * m);
    let py = |p: f64| h - m - p * (h - 2.0 * m);
    let mut svg = String::new();
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(svg, r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#, w - 2.0 * m, h - 2.0 * m).unwrap();
    writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">Recall</text>"#, w / 2.0, h - 8.0).unwrap();
    writeln!(svg, r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">Precision</text>"#, h / 2.0, h / 2.0).unwrap();
    for (i, (name, report)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = report
            .mean_recall
            .iter()
            .zip(&report.mean_precision)
            .map(|(r, p)| format!("{:.2},{:.2}", px(*r), py(*p)))
            .collect();
        writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.join(" ")).unwrap();
        writeln!(svg, r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#, w - m - 90.0, m + 16.0 + 14.0 * i as f64).unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn bar_chart_svg(title: &str, bars: &[(&str, f64)]) -> String {
    let (w, h, m) = (80.0 * bars.len().max(1) as f64 + 80.0, 300.0, 40.0);
    let mut svg = String::new();
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, w / 2.0).unwrap();
    writeln!(svg, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m).unwrap();
    for (i, (name, value)) in bars.iter().enumerate() {
        let bh = value.clamp(0.0, 1.0) * (h - 2.0 * m - 10.0);
        let x = m + 10.0 + 80.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        writeln!(svg, r#"<rect x="{x}" y="{}" width="50" height="{bh:.2}" fill="{color}"/>"#, h - m - bh).unwrap();
        writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{value:.3}</text>"#, x + 25.0, h - m - bh - 4.0).unwrap();
        writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{name}</text>"#, x + 25.0, h - m + 14.0).unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}
