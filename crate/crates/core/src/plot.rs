//! Deterministic SVG scatter plots of 2-D projections, one color per class.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::BiasClass;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("nothing to plot")]
    Empty,
    #[error("{coords} points but {labels} labels")]
    Misaligned { coords: usize, labels: usize },
    #[error("scatter plots need 2-D coordinates, got {0} columns")]
    NotTwoDimensional(usize),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("invalid plot style: {0}")]
    Style(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlotStyle {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    pub point_radius: f64,
    /// Hex colors indexed by [`BiasClass::index`].
    pub colors: [String; 4],
    pub title: Option<String>,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            width: 800.0,
            height: 600.0,
            margin: 40.0,
            point_radius: 2.5,
            colors: [
                "#1f77b4".into(),
                "#d62728".into(),
                "#2ca02c".into(),
                "#9467bd".into(),
            ],
            title: None,
        }
    }
}

impl PlotStyle {
    pub fn color(&self, class: BiasClass) -> &str {
        &self.colors[class.index()]
    }

    fn validate(&self) -> Result<(), PlotError> {
        if !(self.width > 2.0 * self.margin && self.height > 2.0 * self.margin && self.margin >= 0.0) {
            return Err(PlotError::Style("margins leave no plotting area".into()));
        }
        if !(self.point_radius > 0.0) {
            return Err(PlotError::Style("point radius must be positive".into()));
        }
        for (i, a) in self.colors.iter().enumerate() {
            if self.colors[..i].contains(a) {
                return Err(PlotError::Style(format!("color {a} used for two classes")));
            }
        }
        Ok(())
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Linear map of `[lo, hi]` onto `[start, start + span]`; a flat range maps to the center.
fn scale(v: f64, lo: f64, hi: f64, start: f64, span: f64) -> f64 {
    if hi > lo {
        start + (v - lo) / (hi - lo) * span
    } else {
        start + 0.5 * span
    }
}

/// Render the scatter plot as an SVG 1.1 document.
pub fn render_scatter_svg(
    coords: ArrayView2<f64>,
    labels: &[BiasClass],
    style: &PlotStyle,
) -> Result<String, PlotError> {
    let n = coords.nrows();
    if n == 0 {
        return Err(PlotError::Empty);
    }
    if coords.ncols() != 2 {
        return Err(PlotError::NotTwoDimensional(coords.ncols()));
    }
    if labels.len() != n {
        return Err(PlotError::Misaligned {
            coords: n,
            labels: labels.len(),
        });
    }
    if let Some(i) = coords.rows().into_iter().position(|r| !r.iter().all(|v| v.is_finite())) {
        return Err(PlotError::NonFinite(i));
    }
    style.validate()?;

    let column_range = |c: usize| {
        coords.column(c).iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    };
    let (x_lo, x_hi) = column_range(0);
    let (y_lo, y_hi) = column_range(1);
    let (w, h, m) = (style.width, style.height, style.margin);
    let (span_x, span_y) = (w - 2.0 * m, h - 2.0 * m);

    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w:.3}\" height=\"{h:.3}\" viewBox=\"0 0 {w:.3} {h:.3}\">"
    );
    let _ = writeln!(svg, "<rect x=\"0\" y=\"0\" width=\"{w:.3}\" height=\"{h:.3}\" fill=\"#ffffff\"/>");
    if let Some(title) = &style.title {
        let _ = writeln!(
            svg,
            "<text x=\"{:.3}\" y=\"{:.3}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
            w / 2.0,
            (m * 0.6).max(14.0),
            escape(title)
        );
    }
    svg.push_str("<g id=\"points\" stroke=\"none\">\n");
    for (row, label) in coords.rows().into_iter().zip(labels) {
        let cx = scale(row[0], x_lo, x_hi, m, span_x);
        // SVG y grows downward
        let cy = h - scale(row[1], y_lo, y_hi, m, span_y);
        let _ = writeln!(
            svg,
            "<circle cx=\"{cx:.3}\" cy=\"{cy:.3}\" r=\"{:.3}\" fill=\"{}\" fill-opacity=\"0.8\"/>",
            style.point_radius,
            style.color(*label)
        );
    }
    svg.push_str("</g>\n");

    // legend, top-right inside the margin box
    let swatch = 10.0;
    let line = 16.0;
    let box_w = 110.0;
    let x0 = w - m - box_w;
    let y0 = m;
    svg.push_str("<g id=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n");
    let _ = writeln!(
        svg,
        "<rect x=\"{x0:.3}\" y=\"{y0:.3}\" width=\"{box_w:.3}\" height=\"{:.3}\" fill=\"#ffffff\" fill-opacity=\"0.85\" stroke=\"#999999\"/>",
        line * 4.0 + 8.0
    );
    for (i, class) in BiasClass::ALL.iter().enumerate() {
        let y = y0 + 6.0 + line * i as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{:.3}\" y=\"{y:.3}\" width=\"{swatch:.3}\" height=\"{swatch:.3}\" fill=\"{}\"/>",
            x0 + 8.0,
            style.color(*class)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.3}\" y=\"{:.3}\">{class}</text>",
            x0 + 8.0 + swatch + 6.0,
            y + swatch
        );
    }
    svg.push_str("</g>\n</svg>\n");
    Ok(svg)
}

pub fn scatter_svg(
    coords: ArrayView2<f64>,
    labels: &[BiasClass],
    style: &PlotStyle,
    out_path: &Path,
) -> Result<(), PlotError> {
    let svg = render_scatter_svg(coords, labels, style)?;
    fs::write(out_path, svg).map_err(|source| PlotError::Io {
        path: out_path.display().to_string(),
        source,
    })
}
