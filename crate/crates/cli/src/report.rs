//! Cross-run comparison table and per-run confusion matrices.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fedround_core::{Interval, MetricsReport};
use serde::{Deserialize, Serialize};

use crate::config::BUNDLED;
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;

pub const METRICS_FILE: &str = "metrics.json";

/// A point estimate with its bootstrap interval, if one was computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<Interval>,
}

impl Estimate {
    fn of(report: &MetricsReport, name: &str) -> Option<Self> {
        report.scalar(name).map(|value| Estimate {
            value,
            ci: report.ci.get(name).copied(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub label: String,
    pub accuracy: Estimate,
    pub auroc: Option<Estimate>,
    pub f1: Estimate,
    pub auprc: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub row: ReportRow,
    pub confusion: Vec<Vec<u64>>,
}

pub fn read_metrics(dir: &Path) -> Result<MetricsReport> {
    let path = dir.join(METRICS_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("missing report {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn summarize(name: &str, label: &str, report: &MetricsReport) -> RunSummary {
    RunSummary {
        row: ReportRow {
            name: name.to_owned(),
            label: label.to_owned(),
            accuracy: Estimate::of(report, "accuracy").expect("accuracy is always present"),
            auroc: Estimate::of(report, "auroc"),
            f1: Estimate::of(report, "macro_f1").expect("macro F1 is always present"),
            auprc: Estimate::of(report, "auprc"),
        },
        confusion: report.confusion.clone(),
    }
}

fn row_rank(name: &str) -> usize {
    BUNDLED
        .iter()
        .position(|(n, _)| *n == name)
        .unwrap_or(BUNDLED.len())
}

/// Loads every run directory, ordered as the bundled configs (unknown names
/// last, by name).
pub fn collect(dirs: &[impl AsRef<Path>]) -> Result<Vec<RunSummary>> {
    let mut runs = dirs
        .iter()
        .map(|d| {
            let d = d.as_ref();
            let manifest = RunManifest::read(d)?;
            let report = read_metrics(d)?;
            Ok(summarize(
                &manifest.name,
                manifest.config.display_label(),
                &report,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by(|a, b| {
        (row_rank(&a.row.name), &a.row.name).cmp(&(row_rank(&b.row.name), &b.row.name))
    });
    Ok(runs)
}

fn cell(e: Option<&Estimate>) -> String {
    match e {
        None => "-".into(),
        Some(Estimate { value, ci: None }) => format!("{value}"),
        Some(Estimate {
            value,
            ci: Some(Interval { lo, hi }),
        }) => format!("{value} ({lo}, {hi})"),
    }
}

const HEADER: [&str; 5] = ["Experiment", "AUROC", "F1-score", "AUPRC", "Accuracy"];

/// The comparison grid. Numbers are printed at full precision so the text
/// parses back to the same values.
pub fn render_table(rows: &[ReportRow]) -> String {
    let lines: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.label.clone(),
                cell(r.auroc.as_ref()),
                cell(Some(&r.f1)),
                cell(r.auprc.as_ref()),
                cell(Some(&r.accuracy)),
            ]
        })
        .collect();
    let mut widths = HEADER.map(str::len);
    for l in &lines {
        for (w, c) in widths.iter_mut().zip(l) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let fmt_line = |cells: &[String]| {
        cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_owned()
    };
    let header: Vec<String> = HEADER.iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "{}", fmt_line(&header));
    let _ = writeln!(out, "{}", widths.map(|w| "-".repeat(w)).join("-+-"));
    for l in &lines {
        let _ = writeln!(out, "{}", fmt_line(l));
    }
    out
}

fn parse_cell(s: &str) -> Result<Option<Estimate>> {
    let s = s.trim();
    if s == "-" {
        return Ok(None);
    }
    let bad = || CliError::Usage(format!("malformed table cell {s:?}"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    match s.split_once('(') {
        None => Ok(Some(Estimate {
            value: num(s)?,
            ci: None,
        })),
        Some((value, rest)) => {
            let (lo, hi) = rest.trim_end_matches(')').split_once(',').ok_or_else(bad)?;
            Ok(Some(Estimate {
                value: num(value)?,
                ci: Some(Interval {
                    lo: num(lo)?,
                    hi: num(hi)?,
                }),
            }))
        }
    }
}

/// Reads back a table produced by [`render_table`]. Only the label and the
/// numeric cells are recovered; `name` is left empty.
pub fn parse_table(text: &str) -> Result<Vec<ReportRow>> {
    // the table ends at the first blank line; confusion blocks may follow
    text.lines()
        .skip(2)
        .take_while(|l| !l.trim().is_empty())
        .map(|line| {
            let cells: Vec<&str> = line.split(" | ").collect();
            if cells.len() != HEADER.len() {
                return Err(CliError::Usage(format!("malformed table row {line:?}")));
            }
            let required = |c: &str| {
                parse_cell(c)?.ok_or_else(|| CliError::Usage(format!("missing value in {line:?}")))
            };
            Ok(ReportRow {
                name: String::new(),
                label: cells[0].trim().to_owned(),
                auroc: parse_cell(cells[1])?,
                f1: required(cells[2])?,
                auprc: parse_cell(cells[3])?,
                accuracy: required(cells[4])?,
            })
        })
        .collect()
}

fn thousands(v: u64) -> String {
    let digits = v.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Rows are true classes, columns predictions, with thousands separators.
pub fn render_confusion(label: &str, rows: &[Vec<u64>]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r.iter().map(|&c| thousands(c)).collect())
        .collect();
    let width = cells.iter().flatten().map(String::len).max().unwrap_or(1);
    let mut out = format!("{label}\n");
    for row in cells {
        let line: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
        let _ = writeln!(out, "{}", line.join("  "));
    }
    out
}

pub fn render(runs: &[RunSummary]) -> String {
    let rows: Vec<ReportRow> = runs.iter().map(|r| r.row.clone()).collect();
    let mut out = render_table(&rows);
    for r in runs {
        out.push('\n');
        out.push_str(&render_confusion(&r.row.label, &r.confusion));
    }
    out
}
