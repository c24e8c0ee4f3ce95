//! CSV metric tables and self-contained SVG charts drawn from them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::ranking::Metrics;
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "protocol,subset,ratio,trial,mAP,rank1,rank5,rank10";

/// One reported row. `trials` is how many trials the values average over.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub protocol: String,
    pub subset: String,
    pub ratio: f64,
    pub trials: usize,
    pub map: f64,
    pub rank1: f64,
    pub rank5: f64,
    pub rank10: f64,
}

impl MetricRow {
    pub fn new(protocol: &str, subset: &str, ratio: f64, trials: usize, m: &Metrics) -> Self {
        MetricRow {
            protocol: protocol.to_string(),
            subset: subset.to_string(),
            ratio,
            trials,
            map: m.map,
            rank1: m.rank1,
            rank5: m.rank5,
            rank10: m.rank10,
        }
    }

    fn values(&self) -> [f64; 4] {
        [self.map, self.rank1, self.rank5, self.rank10]
    }

    fn group(&self) -> String {
        format!("{}/{}", self.protocol, self.subset)
    }
}

const METRIC_NAMES: [&str; 4] = ["mAP", "rank1", "rank5", "rank10"];
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.2},{},{:.6},{:.6},{:.6},{:.6}",
            r.protocol, r.subset, r.ratio, r.trials, r.map, r.rank1, r.rank5, r.rank10
        );
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

fn frame(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, (W - RIGHT + LEFT) / 2.0, escape(title));
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let y = y1 - v * (y1 - y0);
        let _ = writeln!(s, r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#dddddd"/>"##);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{:.1}</text>"#, x0 - 6.0, y + 4.0, v);
    }
    s
}

fn legend(s: &mut String, labels: &[String]) {
    for (i, l) in labels.iter().enumerate() {
        let y = TOP + 10.0 + 16.0 * i as f64;
        let x = W - RIGHT + 14.0;
        let _ = writeln!(s, r#"<rect x="{x}" y="{:.2}" width="10" height="10" fill="{}"/>"#, y - 9.0, COLORS[i % COLORS.len()]);
        let _ = writeln!(s, r#"<text x="{}" y="{y:.2}">{}</text>"#, x + 14.0, escape(l));
    }
}

/// One curve per (group, metric) across ratios.
fn line_chart(rows: &[MetricRow]) -> String {
    let mut ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    ratios.sort_by(f64::total_cmp);
    ratios.dedup();
    let (lo, hi) = (ratios[0], *ratios.last().expect("nonempty"));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let px = |r: f64| x0 + (r - lo) / span * (x1 - x0);
    let py = |v: f64| y1 - v.clamp(0.0, 1.0) * (y1 - y0);
    let mut s = frame("metrics vs. missing-modality ratio");
    for &r in &ratios {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{:.2}</text>"#, px(r), y1 + 16.0, r);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">ratio</text>"#, (x0 + x1) / 2.0, y1 + 36.0);
    let mut groups: Vec<String> = Vec::new();
    for r in rows {
        if !groups.contains(&r.group()) {
            groups.push(r.group());
        }
    }
    let mut labels = Vec::new();
    for g in &groups {
        let mut pts: Vec<&MetricRow> = rows.iter().filter(|r| &r.group() == g).collect();
        pts.sort_by(|a, b| a.ratio.total_cmp(&b.ratio));
        for (mi, name) in METRIC_NAMES.iter().enumerate() {
            let color = COLORS[labels.len() % COLORS.len()];
            let path: Vec<String> = pts.iter().map(|r| format!("{:.2},{:.2}", px(r.ratio), py(r.values()[mi]))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
            for r in &pts {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(r.ratio), py(r.values()[mi]));
            }
            labels.push(if groups.len() == 1 { name.to_string() } else { format!("{g} {name}") });
        }
    }
    legend(&mut s, &labels);
    s.push_str("</svg>\n");
    s
}

/// Four bars (mAP, Rank-1/5/10) per row.
fn bar_chart(rows: &[MetricRow]) -> String {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let slot = (x1 - x0) / rows.len() as f64;
    let bar = slot * 0.8 / 4.0;
    let mut s = frame("retrieval metrics");
    for (i, r) in rows.iter().enumerate() {
        let base = x0 + slot * i as f64 + slot * 0.1;
        for (mi, v) in r.values().iter().enumerate() {
            let h = v.clamp(0.0, 1.0) * (y1 - y0);
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                base + bar * mi as f64,
                y1 - h,
                bar,
                h,
                COLORS[mi]
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="9">{}</text>"#,
            base + slot * 0.4,
            y1 + 14.0,
            escape(&r.subset)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="9">{}</text>"#,
            base + slot * 0.4,
            y1 + 26.0,
            escape(&r.protocol)
        );
    }
    legend(&mut s, &METRIC_NAMES.map(String::from));
    s.push_str("</svg>\n");
    s
}

/// Line chart when rows span several ratios, bar chart otherwise.
pub fn metrics_svg(rows: &[MetricRow]) -> String {
    let first = rows.first().map(|r| r.ratio);
    if rows.iter().any(|r| Some(r.ratio) != first) {
        line_chart(rows)
    } else {
        bar_chart(rows)
    }
}

/// Writes `path` (CSV) and the same path with an `.svg` extension.
pub fn emit_report(rows: &[MetricRow], path: &Path) -> Result<(PathBuf, PathBuf)> {
    if rows.is_empty() {
        return Err(Error::Metric("no metric rows to report".into()));
    }
    if rows.iter().flat_map(|r| r.values()).any(|v| !v.is_finite()) {
        return Err(Error::Metric("non-finite metric value".into()));
    }
    let svg_path = path.with_extension("svg");
    fs::write(path, metrics_csv(rows)).map_err(|e| Error::io(path, e))?;
    fs::write(&svg_path, metrics_svg(rows)).map_err(|e| Error::io(&svg_path, e))?;
    Ok((path.to_path_buf(), svg_path))
}
