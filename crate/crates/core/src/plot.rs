//! Minimal deterministic SVG plots: line/marker series on linear or log-log
//! axes, and histograms. Fixed canvas, generic monospace font, numbers
//! printed with fixed precision so output bytes depend only on the data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum PlotKind {
    Line {
        log_log: bool,
        guide_slope: Option<f64>,
    },
    /// Bar heights over equal-width bins starting at `lo`.
    Histogram { lo: f64, width: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Series {
    /// File stem.
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub kind: PlotKind,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn line(
        name: &str,
        title: &str,
        x_label: &str,
        y_label: &str,
        log_log: bool,
        points: Vec<(f64, f64)>,
    ) -> Self {
        Series {
            name: name.into(),
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            kind: PlotKind::Line {
                log_log,
                guide_slope: None,
            },
            points,
        }
    }

    pub fn with_guide(mut self, slope: f64) -> Self {
        if let PlotKind::Line { guide_slope, .. } = &mut self.kind {
            *guide_slope = Some(slope);
        }
        self
    }

    /// Histogram of `values` over `bins` equal bins spanning their range,
    /// normalized to a density.
    pub fn histogram(name: &str, title: &str, x_label: &str, values: &[f64], bins: usize) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let mut points = Vec::new();
        let (mut lo, mut width) = (0.0, 1.0);
        if !finite.is_empty() && bins > 0 {
            lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            width = if hi > lo {
                (hi - lo) / bins as f64
            } else {
                1.0
            };
            let mut counts = vec![0u64; bins];
            for v in &finite {
                let k = (((v - lo) / width) as usize).min(bins - 1);
                counts[k] += 1;
            }
            let norm = finite.len() as f64 * width;
            points = counts
                .iter()
                .enumerate()
                .map(|(k, &c)| (lo + (k as f64 + 0.5) * width, c as f64 / norm))
                .collect();
        }
        Series {
            name: name.into(),
            title: title.into(),
            x_label: x_label.into(),
            y_label: "density".into(),
            kind: PlotKind::Histogram { lo, width },
            points,
        }
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let vals: Vec<f64> = values
            .map(|v| if log { v.log10() } else { v })
            .filter(|v| v.is_finite())
            .collect();
        let mut lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Axis {
            lo: lo - pad,
            hi: hi + pad,
            log,
        }
    }

    fn map(&self, v: f64, a: f64, b: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        a + (v - self.lo) / (self.hi - self.lo) * (b - a)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        (0..=4)
            .map(|k| {
                let u = self.lo + (self.hi - self.lo) * k as f64 / 4.0;
                if self.log {
                    (10f64.powf(u), format!("1e{u:.1}"))
                } else {
                    (u, format!("{u:.3}"))
                }
            })
            .collect()
    }
}

pub fn render(series: &Series) -> String {
    let (log, guide) = match series.kind {
        PlotKind::Line {
            log_log,
            guide_slope,
        } => (log_log, guide_slope),
        PlotKind::Histogram { .. } => (false, None),
    };
    let pts: Vec<(f64, f64)> = series
        .points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log || (*x > 0.0 && *y > 0.0)))
        .collect();
    let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    if matches!(series.kind, PlotKind::Histogram { .. }) {
        ys.push(0.0);
    }
    let xa = Axis::fit(pts.iter().map(|p| p.0), log);
    let ya = Axis::fit(ys.into_iter(), log);
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let px = |x: f64| xa.map(x, x0, x1);
    let py = |y: f64| ya.map(y, y0, y1);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="monospace" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        W / 2.0,
        esc(&series.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{x0}" y="{y1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for (v, label) in xa.ticks() {
        let x = px(v);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{:.1}" stroke="black"/>"#,
            y0 + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.1}" text-anchor="middle">{label}</text>"#,
            y0 + 18.0
        );
    }
    for (v, label) in ya.ticks() {
        let y = py(v);
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"#,
            x0 - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{label}</text>"#,
            x0 - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 15.0,
        esc(&series.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        esc(&series.y_label)
    );
    match series.kind {
        PlotKind::Histogram { width, .. } => {
            for &(c, h) in &pts {
                let (a, b) = (px(c - width / 2.0), px(c + width / 2.0));
                let top = py(h);
                let _ = writeln!(
                    s,
                    r#"<rect x="{a:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="steelblue" stroke="black"/>"#,
                    b - a,
                    py(0.0) - top
                );
            }
        }
        PlotKind::Line { .. } => {
            if pts.len() > 1 {
                let path: Vec<String> = pts
                    .iter()
                    .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
                    path.join(" ")
                );
            }
            for &(x, y) in &pts {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
                    px(x),
                    py(y)
                );
            }
            if let (Some(slope), Some(&(xa0, ya0))) = (guide, pts.first()) {
                // Guide through the first point.
                let xe = pts.last().expect("non-empty").0;
                let ye = ya0 * (xe / xa0).powf(slope);
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="5,3"/>"#,
                    px(xa0),
                    py(ya0),
                    px(xe),
                    py(ye)
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="end" fill="gray">slope {slope:.2}</text>"#,
                    x1 - 5.0,
                    y1 + 15.0
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Write one SVG per non-empty series into `dir`; empty series are skipped
/// with a log line on stderr.
pub fn emit_plots(dir: &Path, series: &[Series]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for s in series {
        if s.points.is_empty() {
            eprintln!("plot {}: empty series, skipped", s.name);
            continue;
        }
        let path = dir.join(format!("{}.svg", s.name));
        std::fs::write(&path, render(s))?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let s = Series::line("e", "empty", "x", "y", false, vec![]);
        assert!(emit_plots(dir.path(), &[s]).unwrap().is_empty());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn single_point_gives_one_marker() {
        let svg = render(&Series::line("p", "one", "x", "y", true, vec![(2.0, 3.0)]));
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn guide_line_and_determinism() {
        let pts: Vec<(f64, f64)> = (1..5).map(|k| (4f64.powi(k), 4f64.powi(-2 * k))).collect();
        let s = Series::line("q", "q_k", "L_k", "q_k", true, pts).with_guide(-2.0);
        let a = render(&s);
        assert!(a.contains("stroke-dasharray") && a.contains("slope -2.00"));
        assert_eq!(a, render(&s.clone()));
    }

    #[test]
    fn histogram_is_a_density() {
        let vals: Vec<f64> = (0..1000).map(|i| (i as f64 / 999.0) * 2.0 - 1.0).collect();
        let s = Series::histogram("h", "h", "z", &vals, 10);
        let area: f64 = s.points.iter().map(|p| p.1 * 0.2).sum();
        assert!((area - 1.0).abs() < 1e-9);
        assert_eq!(render(&s).matches("<rect").count(), 2 + 10);
    }
}
