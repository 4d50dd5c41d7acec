//! Text, CSV and JSON report rendering.
//!
//! Output is a pure function of the report: no timestamps, host names or
//! thread counts, so identical reports render to identical bytes.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use serde::Serialize;

use crate::metrics::SuiteReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Destination {
    Stdout,
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputSpec {
    pub format: Format,
    pub destination: Destination,
    pub include_normalized: bool,
    pub include_bwbw: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            format: Format::Text,
            destination: Destination::Stdout,
            include_normalized: true,
            include_bwbw: true,
        }
    }
}

pub const CSV_HEADER: [&str; 9] = [
    "name",
    "kernel",
    "pattern",
    "delta",
    "count",
    "runs",
    "moved_bytes",
    "min_time_s",
    "bandwidth_mb_s",
];

/// `x` with six significant digits in plain decimal notation, e.g.
/// `128.000`, `0.000123457`, `97163.2`. Values of 10^6 and above print as
/// integers.
pub fn fmt_sig(x: f64) -> String {
    const DIGITS: i32 = 6;
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let decimals = |exp: i32| (DIGITS - 1 - exp).max(0) as usize;
    let exp = x.abs().log10().floor() as i32;
    let s = format!("{:.*}", decimals(exp), x);
    // rounding may carry into the next decade (999999.7 -> 1000000)
    let rounded: f64 = s.parse().unwrap_or(x);
    let exp2 = rounded.abs().log10().floor() as i32;
    if exp2 > exp {
        format!("{:.*}", decimals(exp2), x)
    } else {
        s
    }
}

fn text(report: &SuiteReport, spec: &OutputSpec) -> String {
    let header = [
        "name",
        "kernel",
        "pattern",
        "delta",
        "count",
        "min_time_s",
        "bandwidth_MB_s",
    ];
    let rows: Vec<[String; 7]> = report
        .results
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                r.kernel.to_string(),
                r.pattern.clone(),
                r.delta.to_string(),
                r.count.to_string(),
                fmt_sig(r.min_time),
                fmt_sig(r.bandwidth_mb_s),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    // first three columns are text, the rest numbers
    let line = |cells: &[&str]| -> String {
        let mut out = String::new();
        for (k, (cell, w)) in cells.iter().zip(widths).enumerate() {
            if k > 0 {
                out.push_str("  ");
            }
            if k < 3 {
                out.push_str(&format!("{cell:<w$}"));
            } else {
                out.push_str(&format!("{cell:>w$}"));
            }
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
        out
    };

    let mut out = line(&header);
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        out.push_str(&line(&cells));
    }
    out.push('\n');
    out.push_str(&format!("MIN    {} MB/s\n", fmt_sig(report.min_bw)));
    out.push_str(&format!("MAX    {} MB/s\n", fmt_sig(report.max_bw)));
    out.push_str(&format!("HMEAN  {} MB/s\n", fmt_sig(report.harmonic_mean_bw)));
    if let Some(r) = report.correlation_r {
        out.push_str(&format!("R      {}\n", fmt_sig(r)));
    }
    if let (true, Some(base), Some(norm)) = (
        spec.include_normalized,
        report.baseline_bw,
        report.normalized.as_ref(),
    ) {
        out.push_str(&format!("\nPERCENT OF STRIDE-1 ({} MB/s)\n", fmt_sig(base)));
        let w = norm.iter().map(|n| n.name.len()).max().unwrap_or(0);
        for n in norm {
            out.push_str(&format!("{:<w$}  {}\n", n.name, fmt_sig(n.percent)));
        }
    }
    out
}

fn csv(report: &SuiteReport) -> io::Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in &report.results {
        w.write_record([
            r.name.clone(),
            r.kernel.to_string(),
            r.pattern.clone(),
            r.delta.to_string(),
            r.count.to_string(),
            r.runs.to_string(),
            r.moved_bytes.to_string(),
            fmt_sig(r.min_time),
            fmt_sig(r.bandwidth_mb_s),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct JsonSummary {
    min_bw_mb_s: f64,
    max_bw_mb_s: f64,
    harmonic_mean_bw_mb_s: f64,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    results: &'a [crate::engine::KernelResult],
    summary: JsonSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_bw_mb_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    normalized: Option<&'a [crate::metrics::Normalized]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bwbw: Option<&'a crate::metrics::BwBw>,
    #[serde(skip_serializing_if = "Option::is_none")]
    correlation_r: Option<f64>,
}

fn json(report: &SuiteReport, spec: &OutputSpec) -> String {
    let doc = JsonReport {
        results: &report.results,
        summary: JsonSummary {
            min_bw_mb_s: report.min_bw,
            max_bw_mb_s: report.max_bw,
            harmonic_mean_bw_mb_s: report.harmonic_mean_bw,
        },
        baseline_bw_mb_s: report.baseline_bw,
        normalized: report
            .normalized
            .as_deref()
            .filter(|_| spec.include_normalized),
        bwbw: report.bwbw.as_ref().filter(|_| spec.include_bwbw),
        correlation_r: report.correlation_r,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

/// Renders `report` in the requested format.
pub fn render_report(report: &SuiteReport, spec: &OutputSpec) -> io::Result<String> {
    match spec.format {
        Format::Text => Ok(text(report, spec)),
        Format::Csv => csv(report),
        Format::Json => Ok(json(report, spec)),
    }
}

/// Writes the rendered report to its destination; `stdout` is used for
/// [`Destination::Stdout`]. Returns the number of bytes written.
pub fn emit_report(report: &SuiteReport, spec: &OutputSpec, stdout: &mut dyn Write) -> io::Result<usize> {
    let body = render_report(report, spec)?;
    match &spec.destination {
        Destination::Stdout => stdout.write_all(body.as_bytes())?,
        Destination::Path(p) => {
            let mut f = File::create(p)?;
            f.write_all(body.as_bytes())?;
            f.flush()?;
        }
    }
    Ok(body.len())
}
