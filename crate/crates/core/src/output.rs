//! Result files: CSV tables, a JSON document echoing the resolved config, and
//! a dependency-free SVG plot. Every artifact carries the config hash and seed.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Value, json};

use crate::config::{Format, RunConfig};
use crate::error::{Result, ZenoError};
use crate::fitting::DataPoint;
use crate::protocols::ScanResult;

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 30.0, 55.0); // left, right, top, bottom
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            config_hash: cfg.hash(),
            seed: cfg.seed(),
        }
    }
}

fn io_err(e: impl std::fmt::Display) -> ZenoError {
    ZenoError::Io(e.to_string())
}

/// `param,loss_prob,stderr,mean_final_x`, preceded by `#` provenance lines.
pub fn write_scan_csv<W: Write>(sr: &ScanResult, prov: &Provenance, mut out: W) -> Result<()> {
    if sr.points.is_empty() {
        return Err(ZenoError::Io("refusing to write an empty scan".into()));
    }
    writeln!(out, "# protocol={} series={}", sr.protocol, sr.series)?;
    writeln!(out, "# axis={}", sr.axis)?;
    writeln!(out, "# config_hash={} seed={}", prov.config_hash, prov.seed)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param", "loss_prob", "stderr", "mean_final_x"])
        .map_err(io_err)?;
    for p in &sr.points {
        w.write_record([p.param, p.loss_prob, p.stderr, p.mean_final_x].map(|v| v.to_string()))
            .map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `x,y[,stderr]` rows (extra columns ignored) after a header row; `#` lines are skipped.
pub fn read_points_csv<R: Read>(input: R) -> Result<Vec<DataPoint>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let mut points = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(io_err)?;
        let field = |j: usize| -> Result<Option<f64>> {
            match rec.get(j) {
                None | Some("") => Ok(None),
                Some(s) => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|e| ZenoError::Io(format!("row {}: column {}: {e}", i + 1, j + 1))),
            }
        };
        let (x, y) = match (field(0)?, field(1)?) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(ZenoError::Io(format!("row {}: needs at least two values", i + 1))),
        };
        points.push(DataPoint {
            x,
            y,
            stderr: field(2)?,
        });
    }
    if points.is_empty() {
        return Err(ZenoError::Io("no data rows".into()));
    }
    Ok(points)
}

/// The JSON document for a run: provenance, the resolved config and the results.
pub fn results_json(cfg: &RunConfig, results: &[ScanResult], extra: Value) -> String {
    let prov = Provenance::of(cfg);
    let doc = json!({
        "config_hash": prov.config_hash,
        "seed": prov.seed,
        "config": cfg,
        "results": results,
        "extra": extra,
    });
    serde_json::to_string_pretty(&doc).expect("results serialize")
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Loss against the scan parameter, one polyline with error bars per series.
pub fn scan_svg(results: &[ScanResult], prov: &Provenance) -> Result<String> {
    let pts: Vec<_> = results.iter().flat_map(|r| r.points.iter()).collect();
    if pts.is_empty() {
        return Err(ZenoError::Io("nothing to plot".into()));
    }
    let (mut x_lo, mut x_hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
        (a.min(p.param), b.max(p.param))
    });
    if x_hi - x_lo < 1e-12 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let y_hi = pts
        .iter()
        .map(|p| p.loss_prob + p.stderr)
        .fold(0.0, f64::max)
        .clamp(0.05, 1.0);
    let (y_lo, y_hi) = (0.0, y_hi * 1.05);
    let (ml, mr, mt, mb) = MARGIN;
    let pw = SVG_W - ml - mr;
    let ph = SVG_H - mt - mb;
    let sx = |x: f64| ml + (x - x_lo) / (x_hi - x_lo) * pw;
    let sy = |y: f64| mt + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph;

    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, "<!-- config_hash={} seed={} -->", prov.config_hash, prov.seed);
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in nice_ticks(x_lo, x_hi) {
        let x = sx(t);
        let _ = writeln!(
            w,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            mt + ph,
            mt + ph + 5.0,
            mt + ph + 18.0,
            fmt_tick(t)
        );
    }
    for t in nice_ticks(y_lo, y_hi) {
        let y = sy(t);
        let _ = writeln!(
            w,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{ml}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            ml - 5.0,
            ml - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let axis = results.first().map(|r| r.axis.as_str()).unwrap_or("parameter");
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        ml + pw / 2.0,
        SVG_H - 12.0,
        escape(axis)
    );
    let _ = writeln!(
        w,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">atom loss probability</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0
    );
    for (i, r) in results.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let line: Vec<String> = r
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.param), sy(p.loss_prob)))
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        for p in &r.points {
            let (x, y) = (sx(p.param), sy(p.loss_prob));
            let (y0, y1) = (
                sy((p.loss_prob - p.stderr).max(y_lo)),
                sy((p.loss_prob + p.stderr).min(y_hi)),
            );
            let _ = writeln!(
                w,
                r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="{color}"/><circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#
            );
        }
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" fill="{color}" text-anchor="end">{}</text>"#,
            ml + pw - 6.0,
            mt + 16.0 + 15.0 * i as f64,
            escape(&r.series)
        );
    }
    let _ = writeln!(w, "</svg>");
    Ok(s)
}

fn file_stem(sr: &ScanResult, multi: bool) -> String {
    if !multi {
        return sr.protocol.clone();
    }
    let series: String = sr
        .series
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
        .collect();
    format!("{}_{series}", sr.protocol)
}

/// Writes the requested formats into `dir` and returns the paths written.
pub fn emit_results(cfg: &RunConfig, results: &[ScanResult], extra: Value, dir: &Path) -> Result<Vec<PathBuf>> {
    if results.is_empty() || results.iter().any(|r| r.points.is_empty()) {
        return Err(ZenoError::Io("no scan points to write".into()));
    }
    fs::create_dir_all(dir)?;
    let prov = Provenance::of(cfg);
    let name = cfg.protocol.name();
    let mut written = Vec::new();
    for fmt in &cfg.output.formats {
        match fmt {
            Format::Csv => {
                for sr in results {
                    let path = dir.join(format!("{}.csv", file_stem(sr, results.len() > 1)));
                    let mut buf = Vec::new();
                    write_scan_csv(sr, &prov, &mut buf)?;
                    fs::write(&path, buf)?;
                    written.push(path);
                }
            }
            Format::Json => {
                let path = dir.join(format!("{name}.json"));
                fs::write(&path, results_json(cfg, results, extra.clone()))?;
                written.push(path);
            }
            Format::Svg => {
                let path = dir.join(format!("{name}.svg"));
                fs::write(&path, scan_svg(results, &prov)?)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
