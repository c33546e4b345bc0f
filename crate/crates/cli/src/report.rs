//! Optional SVG plots.

use plotters::prelude::*;

/// Points (x, y, lo, hi) joined by a line, with vertical bars from lo to hi.
pub fn interval_plot(title: &str, x_label: &str, y_label: &str, pts: &[(f64, f64, f64, f64)]) -> String {
    let mut svg = String::new();
    if let Err(e) = draw(&mut svg, title, x_label, y_label, pts) {
        log::warn!("plot '{title}' failed: {e}");
    }
    svg
}

fn span(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-12 * hi.abs().max(1.0));
    (lo - pad, hi + pad)
}

fn draw(
    svg: &mut String,
    title: &str,
    x_label: &str,
    y_label: &str,
    pts: &[(f64, f64, f64, f64)],
) -> Result<(), String> {
    let root = SVGBackend::with_string(svg, (640, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| e.to_string())?;
    let xr = span(pts.iter().map(|p| p.0));
    let yr = span(pts.iter().flat_map(|p| [p.1, p.2, p.3]));
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(64)
        .build_cartesian_2d(xr.0..xr.1, yr.0..yr.1).map_err(|e| e.to_string())?;
    chart.configure_mesh().x_desc(x_label).y_desc(y_label).draw().map_err(|e| e.to_string())?;
    chart.draw_series(LineSeries::new(pts.iter().map(|p| (p.0, p.1)), &BLUE)).map_err(|e| e.to_string())?;
    chart.draw_series(pts.iter().map(|p| Circle::new((p.0, p.1), 3, BLUE.filled()))).map_err(|e| e.to_string())?;
    chart.draw_series(pts.iter().filter(|p| p.3 > p.2).map(|p| PathElement::new(vec![(p.0, p.2), (p.0, p.3)], BLACK))).map_err(|e| e.to_string())?;
    root.present().map_err(|e| e.to_string())?;
    Ok(())
}
