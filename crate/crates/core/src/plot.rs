//! Minimal SVG line and scatter plots for diagnostic output.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::numerics::{amplification, IntegratorKind};

const W: f64 = 800.0;
const H: f64 = 500.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 20.0;
const PAD_T: f64 = 40.0;
const PAD_B: f64 = 55.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#7f7f7f",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Dashed,
    Points,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, style: Style) -> Self {
        Self {
            label: label.into(),
            points,
            style,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub equal_aspect: bool,
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let n = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    n * mag
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Default::default()
        }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let pts = self
            .series
            .iter()
            .flat_map(|s| &s.points)
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
        if !x0.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let my = 0.05 * (y1 - y0);
        (x0, x1, y0 - my, y1 + my)
    }

    pub fn render(&self) -> String {
        let (mut x0, mut x1, mut y0, mut y1) = self.bounds();
        let pw = W - PAD_L - PAD_R;
        let ph = H - PAD_T - PAD_B;
        if self.equal_aspect {
            let sx = (x1 - x0) / pw;
            let sy = (y1 - y0) / ph;
            if sx > sy {
                let c = 0.5 * (y0 + y1);
                y0 = c - 0.5 * sx * ph;
                y1 = c + 0.5 * sx * ph;
            } else {
                let c = 0.5 * (x0 + x1);
                x0 = c - 0.5 * sy * pw;
                x1 = c + 0.5 * sy * pw;
            }
        }
        let px = |x: f64| PAD_L + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| PAD_T + (y1 - y) / (y1 - y0) * ph;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            W / 2.0,
            escape(&self.title)
        );
        // grid and ticks
        let sx = nice_step(x1 - x0);
        let mut t = (x0 / sx).ceil() * sx;
        while t <= x1 + 1e-9 * sx {
            let x = px(t);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.1}" y1="{PAD_T}" x2="{x:.1}" y2="{:.1}" stroke="#e0e0e0"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                H - PAD_B,
                H - PAD_B + 16.0,
                fmt_tick(t, sx)
            );
            t += sx;
        }
        let sy = nice_step(y1 - y0);
        let mut t = (y0 / sy).ceil() * sy;
        while t <= y1 + 1e-9 * sy {
            let y = py(t);
            let _ = writeln!(
                out,
                r##"<line x1="{PAD_L}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e0e0e0"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                W - PAD_R,
                PAD_L - 6.0,
                y + 4.0,
                fmt_tick(t, sy)
            );
            t += sy;
        }
        let _ = writeln!(
            out,
            r#"<rect x="{PAD_L}" y="{PAD_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            PAD_L + pw / 2.0,
            H - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            PAD_T + ph / 2.0,
            PAD_T + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            match s.style {
                Style::Points => {
                    for &(x, y) in s
                        .points
                        .iter()
                        .filter(|p| p.0.is_finite() && p.1.is_finite())
                    {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                            px(x),
                            py(y)
                        );
                    }
                }
                Style::Line | Style::Dashed => {
                    let dash = if s.style == Style::Dashed {
                        r#" stroke-dasharray="6 4""#
                    } else {
                        ""
                    };
                    for run in s.points.split(|p| !(p.0.is_finite() && p.1.is_finite())) {
                        if run.len() < 2 {
                            continue;
                        }
                        let mut d = String::new();
                        for (k, &(x, y)) in run.iter().enumerate() {
                            let _ = write!(
                                d,
                                "{}{:.1},{:.1} ",
                                if k == 0 { "M" } else { "L" },
                                px(x),
                                py(y)
                            );
                        }
                        let _ = writeln!(
                            out,
                            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                            d.trim_end()
                        );
                    }
                }
            }
            let ly = PAD_T + 16.0 + 16.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="12" height="3" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                W - PAD_R - 170.0,
                ly - 4.0,
                W - PAD_R - 152.0,
                ly,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 {
        0
    } else {
        (-step.log10().floor()) as usize
    };
    let v = if v.abs() < 1e-12 * step.max(1.0) {
        0.0
    } else {
        v
    };
    format!("{v:.decimals$}")
}

/// Boundary of `|R(z)| = 1` traced along rays from `z = -1`.
pub fn stability_boundary(kind: IntegratorKind, rays: usize) -> Vec<(f64, f64)> {
    let center = Complex::new(-1.0, 0.0);
    let inside = |z: Complex<f64>| amplification(kind, z).norm() <= 1.0;
    let mut out = Vec::with_capacity(rays + 1);
    for i in 0..=rays {
        let th = i as f64 / rays as f64 * std::f64::consts::TAU;
        let dir = Complex::new(th.cos(), th.sin());
        let mut r = 0.0;
        while r < 4.0 && inside(center + dir * (r + 0.01)) {
            r += 0.01;
        }
        let (mut lo, mut hi) = (r, r + 0.01);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if inside(center + dir * mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z = center + dir * lo;
        out.push((z.re, z.im));
    }
    out
}
