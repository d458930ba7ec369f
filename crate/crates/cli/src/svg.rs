//! Minimal static SVG line charts: fixed 800x600 canvas, panels stacked
//! vertically, path data printed from the same doubles that go to CSV.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_Y: f64 = 30.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stroke {
    Solid,
    Dashed,
    Dotted,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub points: Vec<(f64, f64)>,
    pub stroke: Stroke,
    /// Palette index; `None` draws in grey.
    pub color: Option<usize>,
}

impl Series {
    pub fn new(points: Vec<(f64, f64)>, stroke: Stroke, color: Option<usize>) -> Self {
        Self {
            points,
            stroke,
            color,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

impl Panel {
    pub fn new(title: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            y_label: y_label.into(),
            series: Vec::new(),
        }
    }

    pub fn push(&mut self, s: Series) -> &mut Self {
        self.series.push(s);
        self
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let pts = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|p| p.0.is_finite() && p.1.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x0 > x1 {
            return (0.0, 1.0, -1.0, 1.0);
        }
        if y1 - y0 < 1e-12 * (1.0 + y0.abs()) {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        (x0, x1.max(x0 + 1e-12), y0 - pad, y1 + pad)
    }
}

fn dash(stroke: Stroke) -> &'static str {
    match stroke {
        Stroke::Solid => "",
        Stroke::Dashed => r#" stroke-dasharray="8 4""#,
        Stroke::Dotted => r#" stroke-dasharray="2 3""#,
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders the panels top to bottom, sharing the x label.
pub fn render(panels: &[Panel], x_label: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let k = panels.len().max(1) as f64;
    let slot = (HEIGHT - MARGIN_Y) / k;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    for (p, panel) in panels.iter().enumerate() {
        let top = p as f64 * slot + MARGIN_Y;
        let plot_h = slot - MARGIN_Y;
        let (x0, x1, y0, y1) = panel.bounds();
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| top + (y1 - y) / (y1 - y0) * plot_h;
        let _ = writeln!(
            out,
            r##"<rect x="{MARGIN_LEFT}" y="{top:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="#444"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            top - 8.0,
            escape(&panel.title)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
            top + plot_h / 2.0,
            top + plot_h / 2.0,
            escape(&panel.y_label)
        );
        for (v, anchor_y) in [(y1, top + 10.0), (y0, top + plot_h)] {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{anchor_y:.2}" text-anchor="end">{v:.3}</text>"#,
                MARGIN_LEFT - 4.0
            );
        }
        let _ = writeln!(
            out,
            r#"<clipPath id="c{p}"><rect x="{MARGIN_LEFT}" y="{top:.2}" width="{plot_w:.2}" height="{plot_h:.2}"/></clipPath>"#
        );
        for s in &panel.series {
            let color = s.color.map_or("#888", |c| PALETTE[c % PALETTE.len()]);
            let mut d = String::new();
            let mut pen_down = false;
            for &(x, y) in &s.points {
                if !(x.is_finite() && y.is_finite()) {
                    pen_down = false;
                    continue;
                }
                let _ = write!(
                    d,
                    "{}{:.2},{:.2}",
                    if pen_down { " L" } else { " M" },
                    sx(x),
                    sy(y)
                );
                pen_down = true;
            }
            if !d.is_empty() {
                let _ = writeln!(
                    out,
                    r#"<path clip-path="url(#c{p})" d="{}" fill="none" stroke="{color}" stroke-width="1.2"{}/>"#,
                    d.trim_start(),
                    dash(s.stroke)
                );
            }
        }
        if p + 1 == panels.len() {
            let base = top + plot_h;
            for (v, x, anchor) in [
                (x0, MARGIN_LEFT, "start"),
                (x1, MARGIN_LEFT + plot_w, "end"),
            ] {
                let _ = writeln!(
                    out,
                    r#"<text x="{x:.2}" y="{:.2}" text-anchor="{anchor}">{v:.3}</text>"#,
                    base + 14.0
                );
            }
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                MARGIN_LEFT + plot_w / 2.0,
                base + 14.0,
                escape(x_label)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_canvas_and_one_path_per_series() {
        let mut a = Panel::new("u", "u");
        a.push(Series::new(
            vec![(0.0, 0.0), (1.0, 1.0)],
            Stroke::Solid,
            Some(0),
        ));
        let mut b = Panel::new("omega", "omega");
        b.push(Series::new(
            vec![(0.0, 0.0), (1.0, 2.0)],
            Stroke::Solid,
            Some(1),
        ))
        .push(Series::new(
            vec![(0.0, 0.0), (1.0, 2.0)],
            Stroke::Dotted,
            None,
        ));
        let svg = render(&[a, b], "t");
        assert!(svg.starts_with("<svg") && svg.contains(r#"viewBox="0 0 800 600""#));
        assert_eq!(svg.matches("<path").count(), 3);
        assert!(svg.contains("stroke-dasharray=\"2 3\""));
    }

    #[test]
    fn nonfinite_points_break_the_line() {
        let mut a = Panel::new("x", "y");
        a.push(Series::new(
            vec![(0.0, 0.0), (1.0, f64::NAN), (2.0, 1.0)],
            Stroke::Solid,
            Some(0),
        ));
        let svg = render(&[a], "t");
        assert_eq!(svg.matches(" M").count() + svg.matches("\"M").count(), 2);
    }

    #[test]
    fn flat_series_do_not_divide_by_zero() {
        let mut a = Panel::new("x", "y");
        a.push(Series::new(
            vec![(0.0, 3.0), (1.0, 3.0)],
            Stroke::Solid,
            Some(0),
        ));
        assert!(!render(&[a], "t").contains("NaN"));
    }
}
