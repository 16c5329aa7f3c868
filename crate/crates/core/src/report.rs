//! Tabular output of run metrics and sweeps, as CSV or an aligned text table.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scenario::RunMetrics;
use crate::sweep::{SweepCell, SweepReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Table,
}

pub enum Report<'a> {
    Metrics(&'a [RunMetrics]),
    Sweep(&'a SweepReport),
}

pub fn emit_report(report: &Report<'_>, format: Format) -> String {
    let (header, rows, footer) = match report {
        Report::Metrics(m) => (
            METRICS_HEADER.to_vec(),
            m.iter().map(metrics_fields).collect::<Vec<_>>(),
            Vec::new(),
        ),
        Report::Sweep(s) => (
            SWEEP_HEADER.to_vec(),
            s.cells.iter().map(sweep_fields).collect(),
            sweep_footer(s),
        ),
    };
    match format {
        Format::Csv => csv(&header, &rows, &footer),
        Format::Table => table(&header, &rows, &footer),
    }
}

pub const METRICS_HEADER: [&str; 6] = [
    "first_peak_a",
    "steady_peak_a",
    "limiting_ratio",
    "bypass_time_s",
    "settle_time_s",
    "limiter_energy_j",
];

pub const SWEEP_HEADER: [&str; 11] = [
    "angle_deg",
    "remnant_pu",
    "unlimited_first_peak_a",
    "unlimited_steady_peak_a",
    "limited_first_peak_a",
    "limited_steady_peak_a",
    "limiting_ratio",
    "bypass_time_s",
    "settle_time_s",
    "limiter_energy_j",
    "status",
];

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn metrics_fields(m: &RunMetrics) -> Vec<String> {
    vec![
        num(m.first_peak),
        num(m.steady_peak),
        opt(m.limiting_ratio),
        opt(m.bypass_time),
        opt(m.settle_time),
        num(m.limiter_energy),
    ]
}

fn sweep_fields(c: &SweepCell) -> Vec<String> {
    let un = c.unlimited_metrics();
    let lim = c.limited_metrics();
    let status = match c.error() {
        // Commas and newlines would break the row.
        Some(e) => format!("error: {}", e.replace([',', '\n', '\r'], ";")),
        None => "ok".into(),
    };
    vec![
        num(c.angle_deg),
        num(c.remnant_pu),
        opt(un.map(|m| m.first_peak)),
        opt(un.map(|m| m.steady_peak)),
        opt(lim.map(|m| m.first_peak)),
        opt(lim.map(|m| m.steady_peak)),
        opt(lim.and_then(|m| m.limiting_ratio)),
        opt(lim.and_then(|m| m.bypass_time)),
        opt(lim.and_then(|m| m.settle_time)),
        opt(lim.map(|m| m.limiter_energy)),
        status,
    ]
}

fn sweep_footer(s: &SweepReport) -> Vec<(String, String)> {
    if s.cells.is_empty() {
        return Vec::new();
    }
    vec![
        ("cells".into(), s.cells.len().to_string()),
        ("failures".into(), s.failures().to_string()),
        ("min_limiting_ratio".into(), opt(s.min_ratio())),
        ("worst_case_limiting_ratio".into(), opt(s.worst_case_ratio())),
    ]
}

fn csv(header: &[&str], rows: &[Vec<String>], footer: &[(String, String)]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    for (k, v) in footer {
        let _ = writeln!(out, "# {k}={v}");
    }
    out
}

fn table(header: &[&str], rows: &[Vec<String>], footer: &[(String, String)]) -> String {
    let short = |s: &str| -> String {
        match s.parse::<f64>() {
            Ok(x) if x != 0.0 && !(1e-3..1e6).contains(&x.abs()) => format!("{x:.4e}"),
            Ok(x) => format!("{x:.4}"),
            Err(_) => s.to_string(),
        }
    };
    let cells: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|s| short(s)).collect()).collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|k| {
            cells
                .iter()
                .map(|r| r[k].len())
                .chain([header[k].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, fields: &mut dyn Iterator<Item = &str>| {
        let row: Vec<String> = fields.zip(&widths).map(|(f, w)| format!("{f:>w$}")).collect();
        let _ = writeln!(out, "{}", row.join("  ").trim_end());
    };
    line(&mut out, &mut header.iter().copied());
    for r in &cells {
        line(&mut out, &mut r.iter().map(String::as_str));
    }
    for (k, v) in footer {
        let _ = writeln!(out, "{k}: {v}");
    }
    out
}

fn parse_rows(text: &str, header: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty());
    match lines.next() {
        Some(h) if h.split(',').eq(header.iter().copied()) => {}
        Some(h) => return Err(Error::Csv(format!("unexpected header `{h}`"))),
        None => return Err(Error::Csv("missing header row".into())),
    }
    lines
        .map(|l| {
            let f: Vec<String> = l.split(',').map(str::to_string).collect();
            if f.len() == header.len() {
                Ok(f)
            } else {
                Err(Error::Csv(format!("expected {} fields in `{l}`", header.len())))
            }
        })
        .collect()
}

fn parse_num(s: &str) -> Result<f64> {
    s.parse().map_err(|e| Error::Csv(format!("`{s}`: {e}")))
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_num(s).map(Some)
    }
}

/// Loads the output of `emit_report(Report::Metrics(..), Format::Csv)`.
pub fn load_metrics_csv(text: &str) -> Result<Vec<RunMetrics>> {
    parse_rows(text, &METRICS_HEADER)?
        .iter()
        .map(|f| {
            Ok(RunMetrics {
                first_peak: parse_num(&f[0])?,
                steady_peak: parse_num(&f[1])?,
                limiting_ratio: parse_opt(&f[2])?,
                bypass_time: parse_opt(&f[3])?,
                settle_time: parse_opt(&f[4])?,
                limiter_energy: parse_num(&f[5])?,
            })
        })
        .collect()
}

/// Loads the output of `emit_report(Report::Sweep(..), Format::Csv)`.
///
/// A paired cell is recognised by having both first peaks; an unpaired
/// cell populates only the side that was run. Error text is restored with
/// `;` in place of any stripped separators.
pub fn load_sweep_csv(text: &str) -> Result<SweepReport> {
    let cells = parse_rows(text, &SWEEP_HEADER)?
        .iter()
        .map(|f| {
            let angle_deg = parse_num(&f[0])?;
            let remnant_pu = parse_num(&f[1])?;
            let err = f[10].strip_prefix("error: ").map(str::to_string);
            let un = match parse_opt(&f[2])? {
                Some(first_peak) => Some(Ok(RunMetrics {
                    first_peak,
                    steady_peak: parse_num(&f[3])?,
                    limiting_ratio: None,
                    bypass_time: None,
                    settle_time: None,
                    limiter_energy: 0.0,
                })),
                None => None,
            };
            let lim = match parse_opt(&f[4])? {
                Some(first_peak) => Some(Ok(RunMetrics {
                    first_peak,
                    steady_peak: parse_num(&f[5])?,
                    limiting_ratio: parse_opt(&f[6])?,
                    bypass_time: parse_opt(&f[7])?,
                    settle_time: parse_opt(&f[8])?,
                    limiter_energy: parse_num(&f[9])?,
                })),
                None => None,
            };
            let (unlimited, limited) = match err {
                None => (un, lim),
                Some(e) => match (un, lim) {
                    (Some(u), None) => (Some(u), Some(Err(e))),
                    (None, Some(l)) => (Some(Err(e)), Some(l)),
                    _ => (None, Some(Err(e))),
                },
            };
            Ok(SweepCell {
                angle_deg,
                remnant_pu,
                unlimited,
                limited,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { cells })
}
