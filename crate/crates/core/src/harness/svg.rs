//! A minimal static line chart of Ψ over time.

use std::fmt::Write;

use crate::potential::PotentialTrace;

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// One polyline per dimension, x = iteration, y = Ψ (0 at the top).
pub fn psi_chart(trace: &PotentialTrace, width: u32, height: u32) -> String {
    let (w, h) = (f64::from(width), f64::from(height));
    let margin = 40.0;
    let t0 = (trace.first_sample * trace.delta_t) as f64;
    let t1 = (trace.end_sample().saturating_sub(1) * trace.delta_t) as f64;
    let low = trace.psi.iter().flatten().copied().fold(0.0f64, f64::min).min(-1.0);
    let sx = |t: f64| margin + (t - t0) / (t1 - t0).max(1.0) * (w - 2.0 * margin);
    let sy = |p: f64| margin + p / low * (h - 2.0 * margin);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<g stroke="#000" stroke-width="1"><line x1="{m}" y1="{m}" x2="{m}" y2="{b}"/><line x1="{m}" y1="{b}" x2="{r}" y2="{b}"/></g>"##,
        m = margin,
        b = h - margin,
        r = w - margin
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="12">t = {t0}..{t1}, Ψ = {low:.1}..0</text>"#, margin, margin - 10.0);
    for d in 0..trace.dims() {
        let points: Vec<String> = trace
            .psi
            .iter()
            .enumerate()
            .map(|(k, row)| format!("{:.2},{:.2}", sx(((trace.first_sample + k as u64) * trace.delta_t) as f64), sy(row[d])))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1" points="{}"><title>d = {}</title></polyline>"#,
            PALETTE[d % PALETTE.len()],
            points.join(" "),
            d + 1
        );
    }
    svg.push_str("</svg>\n");
    svg
}
