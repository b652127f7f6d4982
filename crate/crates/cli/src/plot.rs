//! Line plots as SVG, with the plotted values dumped beside them.

use crate::error::{io_at, CliError};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// A headed comma-separated table of numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| CliError::Io(format!("{}: series file is empty", path.display())))?
            .split(',')
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| {
                    CliError::Io(format!("{}: data row {}: {e}", path.display(), i + 1))
                })?;
            if row.len() != header.len() {
                return Err(CliError::Io(format!(
                    "{}: data row {} has {} fields, header has {}",
                    path.display(),
                    i + 1,
                    row.len(),
                    header.len()
                )));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(CliError::Io(format!("{}: series is empty", path.display())));
        }
        Ok(Self { header, rows })
    }

    /// Column index by full header or by the name before its `[unit]`.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header
            .iter()
            .position(|h| h == name || bare(h) == name)
    }

    pub fn values(&self, col: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[col]).collect()
    }
}

fn bare(header: &str) -> &str {
    header.split('[').next().unwrap_or(header)
}

fn unit(header: &str) -> Option<&str> {
    let start = header.find('[')?;
    header[start + 1..].strip_suffix(']')
}

/// Axis label for a set of column headers: the shared unit when there is one.
pub fn axis_label(headers: &[&str]) -> String {
    let names: Vec<&str> = headers.iter().map(|h| bare(h)).collect();
    let mut names_dedup = names.clone();
    names_dedup.dedup();
    let units: Vec<Option<&str>> = headers.iter().map(|h| unit(h)).collect();
    match units.first() {
        Some(Some(u)) if units.iter().all(|v| *v == Some(u)) => {
            format!("{} [{u}]", names_dedup.join(", "))
        }
        _ => headers.join(", "),
    }
}

/// Exact values of every series in long form.
pub fn table_text(series: &[Series], x_label: &str, y_label: &str) -> String {
    let mut out = format!("series,{},{}\n", csv_field(x_label), csv_field(y_label));
    for s in series {
        for (x, y) in s.x.iter().zip(&s.y) {
            writeln!(out, "{},{x},{y}", csv_field(&s.name)).expect("write to String");
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Round tick spacing giving about `target` intervals over `[lo, hi]`.
fn tick_step(lo: f64, hi: f64, target: f64) -> f64 {
    let raw = (hi - lo) / target;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let m = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub struct PlotSpec<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    /// Same metres per pixel on both axes, for trajectories.
    pub equal_axes: bool,
}

pub fn svg(series: &[Series], spec: &PlotSpec) -> String {
    let (w, h) = (860.0, 520.0);
    let (left, right, top, bottom) = (80.0, 170.0, 40.0, 60.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let (mut x0, mut x1) = range(series.iter().flat_map(|s| s.x.iter().copied()));
    let (mut y0, mut y1) = range(series.iter().flat_map(|s| s.y.iter().copied()));
    if spec.equal_axes {
        let scale = ((x1 - x0) / pw).max((y1 - y0) / ph);
        let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
        (x0, x1) = (cx - 0.5 * scale * pw, cx + 0.5 * scale * pw);
        (y0, y1) = (cy - 0.5 * scale * ph, cy + 0.5 * scale * ph);
    }
    let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        left + pw / 2.0,
        escape(spec.title)
    );

    let xs = tick_step(x0, x1, 8.0);
    let mut t = (x0 / xs).ceil() * xs;
    while t <= x1 + 1e-9 * xs {
        let x = px(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{}" stroke="#e0e0e0"/>"##,
            top + ph
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            top + ph + 16.0,
            tick_label(t, xs)
        );
        t += xs;
    }
    let ys = tick_step(y0, y1, 6.0);
    let mut t = (y0 / ys).ceil() * ys;
    while t <= y1 + 1e-9 * ys {
        let y = py(t);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#e0e0e0"/>"##,
            left + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + 4.0,
            tick_label(t, ys)
        );
        t += ys;
    }
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 18.0,
        escape(spec.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{1}</text>"#,
        top + ph / 2.0,
        escape(spec.y_label)
    );

    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts = String::new();
        for (x, y) in ser.x.iter().zip(&ser.y) {
            if x.is_finite() && y.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", px(*x), py(*y));
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.4"/>"#,
            pts.trim_end()
        );
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 22.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 28.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 {
        0
    } else {
        (-step.log10().floor()) as usize
    };
    let v = if v.abs() < step * 1e-9 { 0.0 } else { v };
    format!("{v:.decimals$}")
}
