//! CSV tables and SVG line charts with shaded confidence bands.
//!
//! All output is a pure function of the summary, so re-emitting the same
//! summary produces byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::aggregate::METRICS;
use super::{ece_bias_pairs, ExperimentError, SweepSummary};
use crate::metrics::IntervalSummary;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub dir: PathBuf,
    pub summary_csv: PathBuf,
    pub trajectory_csv: PathBuf,
    pub calibration_csv: PathBuf,
    pub charts: Vec<PathBuf>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn summary_row(out: &mut String, lead: &str, metric: &str, s: &IntervalSummary) {
    writeln!(out, "{lead},{metric},{},{},{},{}", s.mean, opt(s.low()), opt(s.high()), s.n).unwrap();
}

fn summary_csv(summary: &SweepSummary) -> String {
    let mut out = String::from("axis,metric,mean,ci_low,ci_high,n\n");
    for p in &summary.points {
        for metric in METRICS {
            if let Some(s) = p.metric(metric) {
                summary_row(&mut out, &p.value.to_string(), metric, s);
            }
        }
    }
    out
}

fn trajectory_csv(summary: &SweepSummary) -> String {
    let mut out = String::from("axis,epoch,metric,mean,ci_low,ci_high,n\n");
    for p in &summary.points {
        for e in &p.trajectory {
            for metric in METRICS {
                if let Some(s) = e.metrics.get(metric) {
                    summary_row(&mut out, &format!("{},{}", p.value, e.epoch), metric, s);
                }
            }
        }
    }
    out
}

fn calibration_csv(summary: &SweepSummary) -> String {
    let mut out = String::from("axis,ece,bias_amp\n");
    for c in ece_bias_pairs(summary) {
        writeln!(out, "{},{},{}", c.value, c.ece, c.bias_amp).unwrap();
    }
    out
}

/// `(x, mean, optional (low, high))`.
pub type ChartPoint = (f64, f64, Option<(f64, f64)>);

/// One line of a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<ChartPoint>,
}

impl Series {
    fn from_summaries<'a>(label: impl Into<String>, points: impl Iterator<Item = (f64, &'a IntervalSummary)>) -> Self {
        Series { label: label.into(), points: points.map(|(x, s)| (x, s.mean, s.low().zip(s.high()))).collect() }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

/// Line chart with one shaded interval band per series. `log_x` is ignored
/// when some x is not positive.
pub fn render_svg(title: &str, x_label: &str, y_label: &str, log_x: bool, series: &[Series]) -> String {
    let log_x = log_x && series.iter().flat_map(|s| &s.points).all(|p| p.0 > 0.0);
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| tx(p.0))));
    let (y0, y1) = range(series.iter().flat_map(|s| {
        s.points.iter().flat_map(|&(_, m, ci)| [Some(m), ci.map(|c| c.0), ci.map(|c| c.1)].into_iter().flatten())
    }));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (tx(x) - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    )
    .unwrap();
    writeln!(out, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##).unwrap();

    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let yy = py(y);
        writeln!(out, r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#ddd"/>"##, LEFT + pw)
            .unwrap();
        writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, yy + 4.0, tick_label(y))
            .unwrap();
    }
    let mut xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let stride = xs.len().div_ceil(10).max(1);
    for &x in xs.iter().step_by(stride) {
        let xx = px(x);
        writeln!(
            out,
            r##"<line x1="{xx:.2}" y1="{:.2}" x2="{xx:.2}" y2="{:.2}" stroke="#333"/>"##,
            TOP + ph,
            TOP + ph + 5.0
        )
        .unwrap();
        writeln!(out, r#"<text x="{xx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, tick_label(x))
            .unwrap();
    }
    let x_caption = if log_x { format!("{x_label} (log scale)") } else { x_label.to_string() };
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0,
        escape(&x_caption)
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    )
    .unwrap();

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let band: Vec<(f64, f64, f64)> = s.points.iter().filter_map(|&(x, _, ci)| ci.map(|(l, h)| (x, l, h))).collect();
        if band.len() >= 2 {
            let upper = band.iter().map(|&(x, _, h)| format!("{:.2},{:.2}", px(x), py(h)));
            let lower = band.iter().rev().map(|&(x, l, _)| format!("{:.2},{:.2}", px(x), py(l)));
            let pts: Vec<String> = upper.chain(lower).collect();
            writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, pts.join(" "))
                .unwrap();
        } else {
            for &(x, l, h) in &band {
                writeln!(out, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="{color}" stroke-opacity="0.4" stroke-width="6"/>"#, px(x), py(l), py(h)).unwrap();
            }
        }
        let line: Vec<String> = s.points.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", px(x), py(m))).collect();
        writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "))
            .unwrap();
        for &(x, m, _) in &s.points {
            writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(m)).unwrap();
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="12" height="12" fill="{color}"/>"#,
            WIDTH - RIGHT + 12.0,
            ly - 10.0
        )
        .unwrap();
        writeln!(out, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, WIDTH - RIGHT + 30.0, escape(&s.label)).unwrap();
    }
    out.push_str("</svg>\n");
    out
}

fn planned_files(summary: &SweepSummary) -> Vec<(String, String)> {
    let axis = summary.axis.name();
    let data = if summary.data.is_empty() { String::new() } else { format!(" ({} data)", summary.data.join(", ")) };
    let mut files = vec![
        ("summary.csv".to_string(), summary_csv(summary)),
        ("trajectory.csv".to_string(), trajectory_csv(summary)),
        ("ece_vs_bias_amp.csv".to_string(), calibration_csv(summary)),
    ];
    for metric in METRICS {
        let points = summary.points.iter().filter_map(|p| Some((p.value, p.metric(metric)?)));
        let series = Series::from_summaries(metric, points);
        if series.points.is_empty() {
            continue;
        }
        let title = format!("{}{data}: {metric} vs {axis}", summary.name);
        files.push((format!("{metric}.svg"), render_svg(&title, axis, metric, summary.axis.log_scale(), &[series])));
    }
    let trajectories: Vec<Series> = summary
        .points
        .iter()
        .map(|p| {
            let points = p.trajectory.iter().filter_map(|e| Some((e.epoch as f64, e.metrics.get("bias_amp")?)));
            Series::from_summaries(format!("{axis}={}", p.value), points)
        })
        .filter(|s| !s.points.is_empty())
        .collect();
    if !trajectories.is_empty() {
        let title = format!("{}{data}: bias_amp per epoch", summary.name);
        files.push((
            "trajectory_bias_amp.svg".to_string(),
            render_svg(&title, "epoch", "bias_amp", false, &trajectories),
        ));
    }
    files
}

/// Writes the CSV tables and charts for one sweep under `out_dir/<name>/`.
/// Nothing is written when the summary has no points.
pub fn emit_report(summary: &SweepSummary, out_dir: &Path) -> Result<ReportFiles, ExperimentError> {
    if summary.points.is_empty() || summary.points.iter().all(|p| p.metrics.is_empty()) {
        return Err(ExperimentError::config("summary", "no aggregated points to report"));
    }
    let files = planned_files(summary);
    let dir = out_dir.join(&summary.name);
    std::fs::create_dir_all(&dir)?;
    let mut charts = Vec::new();
    for (name, content) in &files {
        let path = dir.join(name);
        std::fs::write(&path, content)?;
        if name.ends_with(".svg") {
            charts.push(path);
        }
    }
    Ok(ReportFiles {
        summary_csv: dir.join("summary.csv"),
        trajectory_csv: dir.join("trajectory.csv"),
        calibration_csv: dir.join("ece_vs_bias_amp.csv"),
        charts,
        dir,
    })
}
