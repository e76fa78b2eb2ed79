//! Self-contained SVG line plots of metrics CSVs.
//!
//! Each input file becomes one series: the chosen column averaged over
//! seeds at every iteration. Series with a single point are drawn as a
//! marker instead of a polyline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::experiment::RunError;
use crate::metrics::Table;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 24.0;
const BOTTOM: f64 = 52.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Axis range snapped outward to multiples of a 1-2-5 step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let m = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

impl Axis {
    pub fn fit(lo: f64, hi: f64) -> Self {
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            (lo - pad, hi + pad)
        };
        let step = nice_step((hi - lo) / 5.0);
        let min = (lo / step).floor() * step;
        let max = (hi / step).ceil() * step;
        Self { min, max, step }
    }

    pub fn ticks(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step).round() as usize;
        (0..=n).map(|i| self.min + i as f64 * self.step).collect()
    }

    fn decimals(&self) -> usize {
        (-self.step.log10().floor()).max(0.0) as usize
    }

    pub fn label(&self, v: f64) -> String {
        let s = format!("{:.*}", self.decimals(), v);
        if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') { s[1..].to_owned() } else { s }
    }
}

/// Loads `metric` against `iteration` from each file, averaging over seeds.
pub fn load_series(paths: &[PathBuf], metric: &str) -> Result<Vec<Series>, RunError> {
    if paths.is_empty() {
        return Err(RunError::Input("no input files to plot".into()));
    }
    let mut header: Option<Vec<String>> = None;
    let mut out = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(p).map_err(|source| RunError::Io { path: p.clone(), source })?;
        let table = Table::parse(&text).map_err(|e| RunError::Input(format!("{}: {e}", p.display())))?;
        match &header {
            None => header = Some(table.header.clone()),
            Some(h) if *h != table.header => {
                return Err(RunError::Input(format!("{}: header differs from the first input", p.display())))
            }
            _ => {}
        }
        let x = table.column("iteration").ok_or_else(|| RunError::Input(format!("{}: no iteration column", p.display())))?;
        let y = table.column(metric).ok_or_else(|| RunError::Input(format!("{}: no column `{metric}`", p.display())))?;
        let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
        for r in 0..table.rows.len() {
            let bad = |e: String| RunError::Input(format!("{}: {e}", p.display()));
            let (Some(xv), Some(yv)) = (table.number(r, x).map_err(bad)?, table.number(r, y).map_err(bad)?) else {
                continue;
            };
            if !yv.is_finite() {
                continue;
            }
            let e = acc.entry(xv as u64).or_insert((0.0, 0));
            e.0 += yv;
            e.1 += 1;
        }
        let label = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
        let points: Vec<(f64, f64)> = acc.into_iter().map(|(x, (s, n))| (x as f64, s / n as f64)).collect();
        if !points.is_empty() {
            out.push(Series { label, points });
        }
    }
    if out.is_empty() {
        return Err(RunError::Input(format!("no plottable `{metric}` values in the inputs")));
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the series. Returns the SVG text and the y axis used.
pub fn render_svg(series: &[Series], metric: &str) -> (String, Axis) {
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    let (xa, ya) = (Axis::fit(x_lo, x_hi), Axis::fit(y_lo, y_hi));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - xa.min) / (xa.max - xa.min) * plot_w;
    let py = |y: f64| TOP + plot_h - (y - ya.min) / (ya.max - ya.min) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r##"<g stroke="#bbbbbb" stroke-width="0.5">"##);
    for t in ya.ticks() {
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#, LEFT, py(t), LEFT + plot_w, py(t));
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
    );
    for t in ya.ticks() {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, py(t) + 4.0, ya.label(t));
    }
    for t in xa.ticks() {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, px(t), TOP + plot_h + 18.0, xa.label(t));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration</text>"#, LEFT + plot_w / 2.0, HEIGHT - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(metric)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if let [(x, y)] = ser.points[..] {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#, px(x), py(y));
        } else {
            let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    (s, ya)
}

/// Reads the CSVs and writes the SVG to `output`.
pub fn emit_plot(paths: &[PathBuf], metric: &str, output: &Path) -> Result<Axis, RunError> {
    let series = load_series(paths, metric)?;
    let (svg, axis) = render_svg(&series, metric);
    crate::experiment::write_file(output, svg.as_bytes())?;
    Ok(axis)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nice_axis() {
        let a = Axis::fit(0.12, 0.93);
        assert_eq!(a.step, 0.2);
        assert!((a.min - 0.0).abs() < 1e-12 && (a.max - 1.0).abs() < 1e-12);
        let b = Axis::fit(3.0, 3.0);
        assert!(b.min < 3.0 && b.max > 3.0);
        assert_eq!(Axis::fit(0.0, 0.0).ticks().len() >= 2, true);
    }

    #[test]
    fn axis_max_within_one_step_of_data() {
        for (lo, hi) in [(0.0, 1.7), (-3.2, 8.9), (100.0, 230.5), (0.001, 0.0042)] {
            let a = Axis::fit(lo, hi);
            assert!(a.max >= hi && a.max - hi <= a.step + 1e-12, "{lo} {hi} {a:?}");
            assert!(a.min <= lo && lo - a.min <= a.step + 1e-12);
        }
    }

    #[test]
    fn marker_for_single_point() {
        let (svg, _) = render_svg(&[Series { label: "one".into(), points: vec![(1.0, 2.0)] }], "m");
        assert_eq!(svg.matches("<polyline").count(), 0);
        assert_eq!(svg.matches("<circle").count(), 1);
    }

    #[test]
    fn labels_are_escaped() {
        let (svg, _) = render_svg(&[Series { label: "a<b".into(), points: vec![(1.0, 2.0), (2.0, 3.0)] }], "m");
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(load_series(&[], "best_objective").is_err());
    }
}
