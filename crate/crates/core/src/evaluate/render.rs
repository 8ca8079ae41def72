//! Comparison CSV, SVG charts and the report JSON.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EvalError, EvalReport, SplitSpec};

pub const COMPARISON_HEADER: [&str; 8] = ["model", "n", "mse", "r2", "acc10", "mse_raw", "r2_raw", "acc10_raw"];

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub format_version: u32,
    pub split: Option<SplitSpec>,
    pub n_train: Option<usize>,
    pub reports: Vec<EvalReport>,
}

fn io_err(path: &Path, e: impl ToString) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn file_stem_for(model: &str) -> String {
    model
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn write_comparison_csv(path: &Path, reports: &[EvalReport]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(COMPARISON_HEADER).map_err(|e| io_err(path, e))?;
    for r in reports {
        w.write_record([
            r.model.clone(),
            r.n_test.to_string(),
            r.transformed.mse.to_string(),
            r.transformed.r2.to_string(),
            r.transformed.acc10.to_string(),
            r.raw.mse.to_string(),
            r.raw.r2.to_string(),
            r.raw.acc10.to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const SIZE: f64 = 420.0;
const MARGIN: f64 = 50.0;

/// Predicted-vs-actual scatter in transformed space with a `y = x` line.
///
/// Both axes share one scale, so a point on the line has equal offsets from
/// the plot origin along x and y.
pub fn scatter_svg(report: &EvalReport) -> String {
    let values = report
        .pairs
        .iter()
        .flat_map(|p| [p.actual_log, p.predicted_log])
        .filter(|v| v.is_finite());
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let span = SIZE - 2.0 * MARGIN;
    let px = |v: f64| MARGIN + (v - lo) / (hi - lo) * span;
    let py = |v: f64| SIZE - MARGIN - (v - lo) / (hi - lo) * span;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{} predicted vs actual (ln(1+ms))</text>"#,
        SIZE / 2.0,
        escape(&report.model)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{span}" height="{span}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line class="reference" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="gray" stroke-dasharray="4 3"/>"#,
        px(lo),
        py(lo),
        px(hi),
        py(hi)
    );
    for (v, anchor) in [(lo, "start"), (hi, "end")] {
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{}" text-anchor="{anchor}" font-family="sans-serif" font-size="10">{v:.3}</text>"#,
            px(v),
            SIZE - MARGIN + 14.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">actual</text>"#,
        SIZE / 2.0,
        SIZE - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {})">predicted</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    for p in &report.pairs {
        if !(p.actual_log.is_finite() && p.predicted_log.is_finite()) {
            continue;
        }
        let _ = writeln!(
            s,
            r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="steelblue" fill-opacity="0.7" data-actual="{}" data-predicted="{}"><title>{}</title></circle>"#,
            px(p.actual_log),
            py(p.predicted_log),
            p.actual_log,
            p.predicted_log,
            escape(&p.query_id)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grouped bars per model: transformed-space and raw-space value of one metric.
fn bar_svg(reports: &[EvalReport], metric: &str, pick: impl Fn(&EvalReport) -> (f64, f64)) -> String {
    let width = (MARGIN * 2.0 + 90.0 * reports.len() as f64).max(300.0);
    let height = 320.0;
    let values: Vec<(f64, f64)> = reports.iter().map(&pick).collect();
    let finite = values.iter().flat_map(|(a, b)| [*a, *b]).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((0.0f64, 0.0f64), |(l, h), v| (l.min(v), h.max(v)));
    let hi = if hi - lo < 1e-12 { lo + 1.0 } else { hi };
    let plot = height - 2.0 * MARGIN;
    let y_of = |v: f64| MARGIN + (hi - v) / (hi - lo) * plot;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{metric} by model</text>"#,
        width / 2.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="black"/>"#,
        y_of(0.0),
        width - MARGIN,
        y_of(0.0)
    );
    for (i, (r, (t, raw))) in reports.iter().zip(&values).enumerate() {
        let x0 = MARGIN + 90.0 * i as f64 + 10.0;
        for (j, (v, color, series)) in [(*t, "steelblue", "transformed"), (*raw, "darkorange", "raw")]
            .into_iter()
            .enumerate()
        {
            let x = x0 + 35.0 * j as f64;
            if v.is_finite() {
                let (top, bottom) = (y_of(v.max(0.0)), y_of(v.min(0.0)));
                let _ = writeln!(
                    s,
                    r#"<rect class="{series}" x="{x:.3}" y="{top:.3}" width="30" height="{:.3}" fill="{color}" data-value="{v}"/>"#,
                    bottom - top
                );
            }
            let label = if v.is_finite() { format!("{v:.3}") } else { "n/a".into() };
            let _ = writeln!(
                s,
                r#"<text x="{:.3}" y="{:.3}" text-anchor="middle" font-family="sans-serif" font-size="9">{label}</text>"#,
                x + 15.0,
                MARGIN - 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            x0 + 32.5,
            height - MARGIN + 16.0,
            escape(&r.model)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="10" fill="steelblue">transformed</text>"#,
        height - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" fill="darkorange">raw ms</text>"#,
        MARGIN + 80.0,
        height - 10.0
    );
    s.push_str("</svg>\n");
    s
}

/// Writes `comparison.csv`, `scatter_<model>.svg`, `bar_<metric>.svg` and
/// `report.json` into `dir`; returns the written paths.
pub fn render_report(
    reports: &[EvalReport],
    split: Option<SplitSpec>,
    n_train: Option<usize>,
    dir: &Path,
) -> Result<Vec<PathBuf>, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::Empty);
    }
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();

    let csv_path = dir.join("comparison.csv");
    write_comparison_csv(&csv_path, reports)?;
    written.push(csv_path);

    for r in reports {
        let p = dir.join(format!("scatter_{}.svg", file_stem_for(&r.model)));
        std::fs::write(&p, scatter_svg(r)).map_err(|e| io_err(&p, e))?;
        written.push(p);
    }

    type Pick = fn(&EvalReport) -> (f64, f64);
    let metrics: [(&str, Pick); 3] = [
        ("mse", |r| (r.transformed.mse, r.raw.mse)),
        ("r2", |r| (r.transformed.r2, r.raw.r2)),
        ("acc10", |r| (r.transformed.acc10, r.raw.acc10)),
    ];
    for (name, pick) in metrics {
        let p = dir.join(format!("bar_{name}.svg"));
        std::fs::write(&p, bar_svg(reports, name, pick)).map_err(|e| io_err(&p, e))?;
        written.push(p);
    }

    let doc = ReportDocument {
        format_version: REPORT_FORMAT_VERSION,
        split,
        n_train,
        reports: reports.to_vec(),
    };
    let p = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    std::fs::write(&p, text).map_err(|e| io_err(&p, e))?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::evaluate_predictions;

    fn report(name: &str, pred: &[f64]) -> EvalReport {
        let rows: Vec<(String, Option<u32>, f64)> = [1.0, 2.5, 4.0]
            .iter()
            .enumerate()
            .map(|(i, y)| (format!("q{i}"), Some(1), *y))
            .collect();
        evaluate_predictions(name, &rows, pred).unwrap()
    }

    fn attr(tag: &str, name: &str) -> f64 {
        let start = tag.find(&format!(" {name}=\"")).unwrap() + name.len() + 3;
        tag[start..].split('"').next().unwrap().parse().unwrap()
    }

    #[test]
    fn perfect_scatter_on_reference_line() {
        let svg = scatter_svg(&report("perfect", &[1.0, 2.5, 4.0]));
        let circles: Vec<&str> = svg.lines().filter(|l| l.starts_with("<circle")).collect();
        assert_eq!(circles.len(), 3);
        for c in circles {
            assert_eq!(attr(c, "data-actual"), attr(c, "data-predicted"));
            let dx = attr(c, "cx") - MARGIN;
            let dy = SIZE - MARGIN - attr(c, "cy");
            assert!((dx - dy).abs() < 1e-9);
        }
    }

    #[test]
    fn renders_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let reports = [report("a", &[1.1, 2.4, 4.2]), report("b/c", &[2.0, 2.0, 3.0])];
        let files = render_report(&reports, Some(SplitSpec::default()), Some(10), dir.path()).unwrap();
        assert_eq!(files.len(), 1 + 2 + 3 + 1);
        let csv = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), COMPARISON_HEADER.join(","));
        assert_eq!(lines.count(), 2);
        assert!(dir.path().join("scatter_b_c.svg").exists());
        let doc: ReportDocument =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(doc.reports, reports);
    }

    #[test]
    fn no_reports_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(render_report(&[], None, None, dir.path()).is_err());
    }
}
