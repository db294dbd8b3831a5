//! Minimal static SVG plotting for the figure recipes.
//!
//! Output is a pure function of the input data: coordinates are formatted
//! with fixed precision and elements are emitted in input order, so a
//! repeated run produces byte-identical files.

use std::fmt::Write as _;

const PALETTE: [&str; 5] = ["#1f6fb2", "#d1495b", "#3a7d44", "#8e5ba6", "#c98a1e"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Line,
    Scatter,
    /// Vertical stems from y = 0; used for pole markers.
    Stems,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub kind: SeriesKind,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub log_y: bool,
    /// Optional fixed y range (before any log transform).
    pub y_range: Option<(f64, f64)>,
}

impl Panel {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            series: Vec::new(),
            log_y: false,
            y_range: None,
        }
    }

    pub fn line(mut self, label: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series { label: label.to_string(), kind: SeriesKind::Line, points });
        self
    }

    pub fn scatter(mut self, label: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series { label: label.to_string(), kind: SeriesKind::Scatter, points });
        self
    }

    pub fn stems(mut self, label: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series { label: label.to_string(), kind: SeriesKind::Stems, points });
        self
    }

    pub fn with_log_y(mut self) -> Self {
        self.log_y = true;
        self
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

fn nice_ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    (0..=count)
        .map(|k| lo + (hi - lo) * k as f64 / count as f64)
        .collect()
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xlo: f64,
    xhi: f64,
    ylo: f64,
    yhi: f64,
}

impl Frame {
    fn sx(&self, x: f64) -> f64 {
        self.x0 + (x - self.xlo) / (self.xhi - self.xlo).max(1e-300) * self.w
    }

    fn sy(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.ylo) / (self.yhi - self.ylo).max(1e-300) * self.h
    }
}

/// Render stacked panels into one SVG document.
pub fn render(panels: &[Panel], width: usize, panel_height: usize) -> String {
    let margin = 62.0;
    let total_h = panels.len() * panel_height;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{total_h}\" \
         viewBox=\"0 0 {width} {total_h}\" font-family=\"monospace\" font-size=\"11\">"
    );
    let _ = writeln!(out, "<rect width=\"{width}\" height=\"{total_h}\" fill=\"#ffffff\"/>");

    for (pi, panel) in panels.iter().enumerate() {
        let transform = |y: f64| -> f64 {
            if panel.log_y {
                y.max(1e-12).log10()
            } else {
                y
            }
        };
        let mut xlo = f64::INFINITY;
        let mut xhi = f64::NEG_INFINITY;
        let mut ylo = f64::INFINITY;
        let mut yhi = f64::NEG_INFINITY;
        for s in &panel.series {
            for &(x, y) in &s.points {
                if x.is_finite() {
                    xlo = xlo.min(x);
                    xhi = xhi.max(x);
                }
                let ty = transform(y);
                if ty.is_finite() {
                    ylo = ylo.min(ty);
                    yhi = yhi.max(ty);
                }
            }
        }
        if let Some((a, b)) = panel.y_range {
            ylo = transform(a);
            yhi = transform(b);
        }
        if !xlo.is_finite() {
            xlo = 0.0;
            xhi = 1.0;
        }
        if !ylo.is_finite() {
            ylo = 0.0;
            yhi = 1.0;
        }
        if xhi <= xlo {
            xhi = xlo + 1.0;
        }
        if yhi <= ylo {
            yhi = ylo + 1.0;
        }
        let pad = 0.04 * (yhi - ylo);
        let f = Frame {
            x0: margin,
            y0: pi as f64 * panel_height as f64 + 28.0,
            w: width as f64 - margin - 20.0,
            h: panel_height as f64 - 70.0,
            xlo,
            xhi,
            ylo: ylo - pad,
            yhi: yhi + pad,
        };

        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"13\">{}</text>",
            fmt(f.x0),
            fmt(f.y0 - 10.0),
            panel.title
        );
        let _ = writeln!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444444\"/>",
            fmt(f.x0),
            fmt(f.y0),
            fmt(f.w),
            fmt(f.h)
        );

        for t in nice_ticks(f.xlo, f.xhi, 5) {
            let x = f.sx(t);
            let _ = writeln!(
                out,
                "<line x1=\"{x}\" y1=\"{y1}\" x2=\"{x}\" y2=\"{y2}\" stroke=\"#444444\"/>",
                x = fmt(x),
                y1 = fmt(f.y0 + f.h),
                y2 = fmt(f.y0 + f.h + 4.0)
            );
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
                fmt(x),
                fmt(f.y0 + f.h + 16.0),
                fmt(t)
            );
        }
        for t in nice_ticks(f.ylo, f.yhi, 4) {
            let y = f.sy(t);
            let label = if panel.log_y { format!("1e{}", fmt(t)) } else { fmt(t) };
            let _ = writeln!(
                out,
                "<line x1=\"{x1}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"#444444\"/>",
                x1 = fmt(f.x0 - 4.0),
                x2 = fmt(f.x0),
                y = fmt(y)
            );
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
                fmt(f.x0 - 7.0),
                fmt(y + 3.5),
                label
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            fmt(f.x0 + f.w / 2.0),
            fmt(f.y0 + f.h + 32.0),
            panel.x_label
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 {} {})\">{}</text>",
            fmt(14.0),
            fmt(f.y0 + f.h / 2.0),
            fmt(14.0),
            fmt(f.y0 + f.h / 2.0),
            panel.y_label
        );

        for (si, s) in panel.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            match s.kind {
                SeriesKind::Line => {
                    let pts: Vec<String> = s
                        .points
                        .iter()
                        .filter(|(x, y)| x.is_finite() && transform(*y).is_finite())
                        .map(|&(x, y)| format!("{},{}", fmt(f.sx(x)), fmt(f.sy(transform(y)))))
                        .collect();
                    if !pts.is_empty() {
                        let _ = writeln!(
                            out,
                            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\"/>",
                            pts.join(" "),
                            color
                        );
                    }
                }
                SeriesKind::Scatter => {
                    for &(x, y) in &s.points {
                        let ty = transform(y);
                        if x.is_finite() && ty.is_finite() {
                            let _ = writeln!(
                                out,
                                "<circle cx=\"{}\" cy=\"{}\" r=\"2\" fill=\"{}\"/>",
                                fmt(f.sx(x)),
                                fmt(f.sy(ty)),
                                color
                            );
                        }
                    }
                }
                SeriesKind::Stems => {
                    let base = f.sy(transform(0.0).max(f.ylo).min(f.yhi));
                    for &(x, y) in &s.points {
                        let ty = transform(y);
                        if x.is_finite() && ty.is_finite() {
                            let _ = writeln!(
                                out,
                                "<line x1=\"{x}\" y1=\"{y1}\" x2=\"{x}\" y2=\"{y2}\" stroke=\"{c}\" stroke-width=\"1.5\"/>",
                                x = fmt(f.sx(x)),
                                y1 = fmt(base),
                                y2 = fmt(f.sy(ty)),
                                c = color
                            );
                        }
                    }
                }
            }
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>",
                fmt(f.x0 + f.w - 150.0),
                fmt(f.y0 + 14.0 + 13.0 * si as f64),
                color,
                s.label
            );
        }
    }
    let _ = writeln!(out, "</svg>");
    out
}
