//! SVG scatterplots of 2D projections in the flat figure style common to
//! projection papers: one circle per point, categorical class colors, no
//! axes. Output is plain SVG 1.1 text, deterministic for a given input.

use crate::error::{Error, Result};
use crate::geom::convex_hull;
use crate::tensor::Tensor;
use std::fmt::Write;

/// Tableau's "Color Blind 10" categorical palette.
pub const PALETTE: [&str; 10] = [
    "#006ba4", "#ff800e", "#ababab", "#595959", "#5f9ed1", "#c85200", "#898989", "#a2c8ec",
    "#ffbc79", "#cfcfcf",
];

/// Fill color for a class index; cycles past the palette end.
pub fn class_color(class: usize) -> &'static str {
    PALETTE[class % PALETTE.len()]
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PlotOptions {
    /// Overlay the convex hull of every class, for cluster-shape inspection.
    pub per_class_hull: bool,
}

/// Equal-aspect view box around the points: the shorter axis is widened to
/// match the longer one, then both get 5% padding per side.
fn view_box(points: &Tensor) -> (f64, f64, f64) {
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..points.rows() {
        min_x = min_x.min(points.at2(i, 0));
        max_x = max_x.max(points.at2(i, 0));
        min_y = min_y.min(points.at2(i, 1));
        max_y = max_y.max(points.at2(i, 1));
    }
    let span = (max_x - min_x).max(max_y - min_y);
    let span = if span > 0.0 { span } else { 1.0 };
    let pad = 0.05 * span;
    let cx = (min_x + max_x) / 2.0;
    let cy = (min_y + max_y) / 2.0;
    (cx - span / 2.0 - pad, cy - span / 2.0 - pad, span + 2.0 * pad)
}

/// Render an m-by-2 projection as an SVG scatterplot.
pub fn scatter_svg(points: &Tensor, labels: Option<&[usize]>, options: PlotOptions) -> Result<String> {
    if points.rows() == 0 {
        return Err(Error::invalid("nothing to plot: the projection is empty"));
    }
    if points.rank() != 2 || points.cols() != 2 {
        return Err(Error::invalid(format!("expected an m-by-2 projection, got shape {:?}", points.shape())));
    }
    if let Some(y) = labels {
        if y.len() != points.rows() {
            return Err(Error::invalid(format!("{} labels for {} points", y.len(), points.rows())));
        }
    }

    let (x0, y0, side) = view_box(points);
    let radius = side / 220.0;
    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{x0} {y0} {side} {side}\" width=\"800\" height=\"800\">"
    )
    .expect("write to string");

    if options.per_class_hull {
        let class_count = labels.map_or(1, |y| y.iter().max().map_or(0, |&m| m + 1));
        for class in 0..class_count {
            let members: Vec<(f64, f64)> = (0..points.rows())
                .filter(|&i| labels.map_or(true, |y| y[i] == class))
                .map(|i| (points.at2(i, 0), points.at2(i, 1)))
                .collect();
            let hull = convex_hull(&members);
            if hull.len() < 3 {
                continue;
            }
            let outline: Vec<String> = hull.iter().map(|(px, py)| format!("{px},{py}")).collect();
            writeln!(
                svg,
                "  <polygon points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"/>",
                outline.join(" "),
                class_color(class),
                side / 400.0
            )
            .expect("write to string");
        }
    }

    for i in 0..points.rows() {
        let color = class_color(labels.map_or(0, |y| y[i]));
        writeln!(
            svg,
            "  <circle cx=\"{}\" cy=\"{}\" r=\"{radius}\" fill=\"{color}\" fill-opacity=\"0.8\"/>",
            points.at2(i, 0),
            points.at2(i, 1)
        )
        .expect("write to string");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
