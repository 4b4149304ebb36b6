use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use super::{io_err, IoError};
use crate::train_eval::{FamilyMetrics, MetricReport, StudyReport, TrainLog};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One long-format CSV line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub schema_version: u32,
    pub config_hash: String,
    pub report: String,
    pub label: String,
    pub key: String,
    pub value: f64,
}

fn family_rows(out: &mut Vec<(String, String, f64)>, label: &str, m: &FamilyMetrics) {
    let mut push = |k: &str, v: f64| out.push((label.to_string(), k.to_string(), v));
    push("n", m.n as f64);
    push("rel_l2", m.rel_l2.mean);
    push("rel_l2_excluded", m.rel_l2.excluded as f64);
    push("r2", m.r2.mean);
    push("r2_excluded", m.r2.excluded as f64);
    if let Some(v) = m.valid_fraction {
        push("valid", v);
    }
    if let Some(s) = m.symbol_error {
        push("symbol_error", s.mean);
    }
}

/// `(label, key, value)` triples for a metric report, overall first.
pub fn metric_rows(r: &MetricReport) -> Vec<(String, String, f64)> {
    let mut out = Vec::new();
    family_rows(&mut out, "overall", &r.overall);
    for (f, m) in &r.per_family {
        family_rows(&mut out, f.id(), m);
    }
    out.push(("overall".into(), "degenerate_symbol".into(), r.degenerate_symbol as f64));
    out
}

pub fn study_rows_csv(r: &StudyReport) -> Vec<(String, String, f64)> {
    let mut out: Vec<(String, String, f64)> = r
        .rows
        .iter()
        .flat_map(|row| row.values.iter().map(|(k, v)| (row.label.clone(), k.clone(), *v)))
        .collect();
    if let Some(p) = r.passed {
        out.push(("summary".into(), "passed".into(), if p { 1.0 } else { 0.0 }));
    }
    out
}

/// Creates `dir/{stem}-{UTC timestamp}.csv`, never overwriting an existing file.
fn fresh_file(dir: &Path, stem: &str) -> Result<(PathBuf, fs::File), IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let ts = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    for k in 0.. {
        let name = if k == 0 {
            format!("{stem}-{ts}.csv")
        } else {
            format!("{stem}-{ts}-{k}.csv")
        };
        let path = dir.join(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => return Ok((path, f)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io_err(&path)(e)),
        }
    }
    unreachable!()
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |e| IoError::Format(format!("{}: {e}", path.display()))
}

/// Writes a long-format report and returns its path.
pub fn write_rows_csv(
    dir: &Path,
    stem: &str,
    config_hash: &str,
    rows: &[(String, String, f64)],
) -> Result<PathBuf, IoError> {
    let (path, file) = fresh_file(dir, stem)?;
    let mut w = csv::Writer::from_writer(file);
    for (label, key, value) in rows {
        w.serialize(ReportRow {
            schema_version: REPORT_SCHEMA_VERSION,
            config_hash: config_hash.to_string(),
            report: stem.to_string(),
            label: label.clone(),
            key: key.clone(),
            value: *value,
        })
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(path)
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<ReportRow>, IoError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let rows: Vec<ReportRow> = r.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))?;
    if let Some(row) = rows.iter().find(|r| r.schema_version != REPORT_SCHEMA_VERSION) {
        return Err(IoError::Version {
            expected: REPORT_SCHEMA_VERSION,
            found: row.schema_version,
        });
    }
    Ok(rows)
}

/// Loss curve as long-format rows labelled by step.
pub fn loss_curve_csv(log: &TrainLog) -> Vec<(String, String, f64)> {
    let mut out = Vec::new();
    for r in &log.records {
        let step = r.step.to_string();
        out.push((step.clone(), "lr".into(), r.lr));
        out.push((step.clone(), "total".into(), r.total));
        out.push((step.clone(), "data".into(), r.data));
        if let Some(s) = r.symbol {
            out.push((step.clone(), "symbol".into(), s));
        }
        out.push((step, "grad_norm".into(), r.grad_norm));
    }
    out
}

fn draw_err<E: std::fmt::Debug>(e: E) -> IoError {
    IoError::Format(format!("plot: {e:?}"))
}

/// Renders a report CSV as an SVG line chart of `keys` over the row labels
/// (in first-appearance order). Loss curves use their steps as x.
pub fn plot_csv(csv_path: &Path, svg_path: &Path, keys: &[&str]) -> Result<(), IoError> {
    let rows = read_rows_csv(csv_path)?;
    let mut labels: Vec<String> = Vec::new();
    for r in &rows {
        if !labels.contains(&r.label) && keys.contains(&r.key.as_str()) {
            labels.push(r.label.clone());
        }
    }
    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.parse::<f64>().ok()).collect();
    let xs: Vec<f64> = numeric.clone().unwrap_or_else(|| (0..labels.len()).map(|i| i as f64).collect());
    let series: Vec<(&str, Vec<(f64, f64)>)> = keys
        .iter()
        .map(|&k| {
            let pts = rows
                .iter()
                .filter(|r| r.key == k && r.value.is_finite())
                .filter_map(|r| labels.iter().position(|l| *l == r.label).map(|i| (xs[i], r.value)))
                .collect();
            (k, pts)
        })
        .collect();
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.1.iter().copied()).collect();
    if all.is_empty() {
        return Err(IoError::Format(format!("{}: no rows for {keys:?}", csv_path.display())));
    }
    let (x0, x1) = all.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = all.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let pad = ((y1 - y0) * 0.05).max(1e-9);
    let title = rows.first().map(|r| r.report.clone()).unwrap_or_default();

    let root = SVGBackend::new(svg_path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(60)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1.max(x0 + 1.0), (y0 - pad)..(y1 + pad))
        .map_err(draw_err)?;
    let label_of = |x: &f64| {
        if numeric.is_some() {
            format!("{x}")
        } else {
            labels.get(x.round() as usize).cloned().unwrap_or_default()
        }
    };
    chart
        .configure_mesh()
        .x_labels(labels.len().clamp(2, 12))
        .x_label_formatter(&label_of)
        .draw()
        .map_err(draw_err)?;
    let colors = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];
    for (i, (k, pts)) in series.iter().enumerate() {
        let c = colors[i % colors.len()];
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), c.stroke_width(2)))
            .map_err(draw_err)?
            .label(*k)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c));
        chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 3, c.filled())))
            .map_err(draw_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)?;
    Ok(())
}
