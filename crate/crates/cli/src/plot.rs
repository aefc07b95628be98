//! Minimal SVG line and scatter plots.

use std::fmt::Write as _;
use std::path::Path;

use crate::artifacts::{read_csv, PlotSpec, RunRecord};
use crate::error::CliResult;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 56.0;
const TICKS: usize = 5;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Option<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return None;
        }
        if hi - lo < 1e-300 {
            let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
            lo -= pad;
            hi += pad;
        }
        Some(Self { lo, hi, log })
    }

    fn frac(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }

    fn label(&self, v: f64) -> String {
        let shown = if self.log { 10f64.powf(v) } else { v };
        if shown != 0.0 && (shown.abs() < 1e-2 || shown.abs() >= 1e4) {
            format!("{shown:.2e}")
        } else {
            format!("{shown:.3}")
        }
    }
}

fn transform(v: f64, log: bool) -> Option<f64> {
    match (log, v.is_finite()) {
        (_, false) => None,
        (true, _) if v <= 0.0 => None,
        (true, _) => Some(v.log10()),
        (false, _) => Some(v),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the requested columns of a table; `None` when no point is
/// plottable.
pub fn render(spec: &PlotSpec, headers: &[String], rows: &[Vec<f64>]) -> Option<String> {
    let xi = headers.iter().position(|h| *h == spec.x)?;
    let series: Vec<(String, Vec<(f64, f64)>)> = spec
        .y
        .iter()
        .filter_map(|y| {
            let yi = headers.iter().position(|h| h == y)?;
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter_map(|r| Some((transform(r[xi], spec.log_x)?, transform(r[yi], spec.log_y)?)))
                .collect();
            (!pts.is_empty()).then(|| (y.clone(), pts))
        })
        .collect();
    if series.is_empty() {
        return None;
    }
    let ax = Axis::fit(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)), spec.log_x)?;
    let ay = Axis::fit(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)), spec.log_y)?;
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let px = |v: f64| LEFT + ax.frac(v) * pw;
    let py = |v: f64| TOP + (1.0 - ay.frac(v)) * ph;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(&spec.title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for k in 0..=TICKS {
        let t = k as f64 / TICKS as f64;
        let (vx, vy) = (ax.lo + t * (ax.hi - ax.lo), ay.lo + t * (ay.hi - ay.lo));
        let (x, y) = (px(vx), py(vy));
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##, TOP + ph);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, ax.label(vx));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, ay.label(vy));
    }
    let xlabel = if spec.log_x { format!("{} (log scale)", spec.x) } else { spec.x.clone() };
    let ylabel = spec.y.join(", ");
    let ylabel = if spec.log_y { format!("{ylabel} (log scale)") } else { ylabel };
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 12.0, escape(&xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&ylabel)
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
        if pts.len() > 1 {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
        }
        for (x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, px(*x), py(*y));
        }
        if series.len() > 1 {
            let ly = TOP + 16.0 + 16.0 * k as f64;
            let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}" text-anchor="end" fill="{color}">{}</text>"#, LEFT + pw - 8.0, escape(name));
        }
    }
    if let Some(note) = &spec.annotation {
        let y = TOP + 16.0 + 16.0 * if series.len() > 1 { series.len() as f64 } else { 0.0 };
        let _ = writeln!(s, r#"<text x="{:.2}" y="{y:.2}" text-anchor="end">{}</text>"#, LEFT + pw - 8.0, escape(note));
    }
    s.push_str("</svg>\n");
    Some(s)
}

/// Writes every plot of the record into `dir/plots`. Returns the written
/// paths (relative to `dir`) and notes about plots that were skipped.
pub fn emit_plots(dir: &Path, record: &RunRecord) -> CliResult<(Vec<String>, Vec<String>)> {
    let mut written = Vec::new();
    let mut notes = Vec::new();
    if record.plots.is_empty() {
        return Ok((written, notes));
    }
    std::fs::create_dir_all(dir.join("plots"))?;
    for spec in &record.plots {
        let csv = dir.join(format!("{}.csv", spec.table));
        let (headers, rows) = match read_csv(&csv) {
            Ok(t) => t,
            Err(e) => {
                notes.push(format!("plot of {}: {e}", spec.table));
                continue;
            }
        };
        if rows.is_empty() {
            notes.push(format!("table {} is empty; no plot", spec.table));
            continue;
        }
        match render(spec, &headers, &rows) {
            Some(svg) => {
                let rel = format!("plots/{}_{}.svg", spec.table, spec.y.first().map_or("y", |s| s.as_str()));
                std::fs::write(dir.join(&rel), svg)?;
                written.push(rel);
            }
            None => notes.push(format!("table {} has no plottable points for {:?}", spec.table, spec.y)),
        }
    }
    Ok((written, notes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(log_y: bool) -> PlotSpec {
        PlotSpec {
            table: "t".into(),
            x: "k".into(),
            y: vec!["eps".into()],
            log_x: false,
            log_y,
            title: "decay".into(),
            annotation: Some("alpha = 1".into()),
        }
    }

    #[test]
    fn two_column_table_gives_one_plot_with_labels() {
        let headers = vec!["k".to_string(), "eps".to_string()];
        let rows = vec![vec![0.0, 1.0], vec![1.0, 0.5], vec![2.0, 0.25]];
        let svg = render(&spec(true), &headers, &rows).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(">k<") && svg.contains("eps (log scale)"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("alpha = 1"));
    }

    #[test]
    fn nothing_plottable() {
        let headers = vec!["k".to_string(), "eps".to_string()];
        assert!(render(&spec(true), &headers, &[vec![0.0, 0.0]]).is_none());
        assert!(render(&spec(false), &headers, &[]).is_none());
    }
}
