//! Evaluation report files: a few `key<TAB>value` lines, then a
//! delimited table with one row per component count.
//!
//! ```text
//! # duet evaluation report
//! source	models/run.model
//! manifest	data/manifest.tsv
//! direction	audio-to-text
//! level	instance
//! combine	average
//! train-fraction	0.8
//! seeds	7,8,9
//! components	mrr1	recall@1	recall@5
//! 5	0.41	0.3	0.8
//! 40	n/a	n/a	n/a
//! ```
//!
//! `train-fraction` and `seeds` appear only for cross-validated runs.
//! Rows whose k exceeds the fitted components carry `n/a` cells. Values
//! print through `f64`'s shortest round-trip formatting, so the files
//! reproduce metrics bit-exactly.

use std::fs;
use std::path::Path;

use duet_core::formats::atomic_write;
use duet_core::retrieval::{Combine, Direction, EvalReport, Level};
use duet_core::{Error, Result};

pub const UNAVAILABLE: &str = "n/a";

/// Provenance lines above the table.
#[derive(Debug, Clone)]
pub struct ReportMeta {
    /// Model path, or a description for model-free runs.
    pub source: String,
    pub manifest: String,
    pub direction: Direction,
    pub level: Level,
    pub combine: Combine,
    pub train_fraction: Option<f64>,
    pub seeds: Vec<u64>,
}

/// Recall columns, sorted and deduplicated; every report row shows the
/// same columns.
fn recall_columns(top_ns: &[usize]) -> Vec<usize> {
    let mut ns = top_ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    ns
}

pub fn render_table(reports: &[EvalReport], top_ns: &[usize]) -> String {
    let ns = recall_columns(top_ns);
    let mut out = String::from("components\tmrr1");
    for n in &ns {
        out.push_str(&format!("\trecall@{n}"));
    }
    out.push('\n');
    for r in reports {
        out.push_str(&r.components.to_string());
        match &r.metrics {
            None => {
                for _ in 0..=ns.len() {
                    out.push('\t');
                    out.push_str(UNAVAILABLE);
                }
            }
            Some(m) => {
                out.push_str(&format!("\t{}", m.mrr1));
                for n in &ns {
                    match m.recall_at.get(n) {
                        Some(v) => out.push_str(&format!("\t{v}")),
                        None => {
                            out.push('\t');
                            out.push_str(UNAVAILABLE);
                        }
                    }
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn render_report(meta: &ReportMeta, reports: &[EvalReport], top_ns: &[usize]) -> String {
    let mut out = String::from("# duet evaluation report\n");
    out.push_str(&format!("source\t{}\n", meta.source));
    out.push_str(&format!("manifest\t{}\n", meta.manifest));
    out.push_str(&format!("direction\t{}\n", meta.direction.name()));
    out.push_str(&format!("level\t{}\n", meta.level.name()));
    out.push_str(&format!("combine\t{}\n", meta.combine.name()));
    if let Some(f) = meta.train_fraction {
        out.push_str(&format!("train-fraction\t{f}\n"));
    }
    if !meta.seeds.is_empty() {
        let seeds: Vec<String> = meta.seeds.iter().map(|s| s.to_string()).collect();
        out.push_str(&format!("seeds\t{}\n", seeds.join(",")));
    }
    out.push_str(&render_table(reports, top_ns));
    out
}

pub fn write_report(
    path: &Path,
    meta: &ReportMeta,
    reports: &[EvalReport],
    top_ns: &[usize],
) -> Result<()> {
    atomic_write(path, render_report(meta, reports, top_ns).as_bytes())
}

pub fn write_table(path: &Path, reports: &[EvalReport], top_ns: &[usize]) -> Result<()> {
    atomic_write(path, render_table(reports, top_ns).as_bytes())
}

/// A parsed report row: the metric columns in table order, `None` where
/// the file said `n/a`.
#[derive(Debug, Clone)]
pub struct ParsedRow {
    pub components: usize,
    pub metrics: Vec<(String, Option<f64>)>,
}

#[derive(Debug, Clone)]
pub struct ParsedReport {
    pub direction: Direction,
    pub level: Level,
    pub train_fraction: Option<f64>,
    pub rows: Vec<ParsedRow>,
}

pub fn read_report(path: &Path) -> Result<ParsedReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, what: &str| {
        Error::Format(format!("{}:{line}: {what}", path.display()))
    };

    let mut direction = None;
    let mut level = None;
    let mut train_fraction = None;
    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match &columns {
            None => match fields[0] {
                "components" => {
                    if fields.len() < 2 || fields[1] != "mrr1" {
                        return Err(bad(lineno, "table header must start components/mrr1"));
                    }
                    columns = Some(fields[1..].iter().map(|s| s.to_string()).collect());
                }
                "direction" if fields.len() == 2 => {
                    direction = Some(Direction::from_name(fields[1])?);
                }
                "level" if fields.len() == 2 => {
                    level = Some(Level::from_name(fields[1])?);
                }
                "train-fraction" if fields.len() == 2 => {
                    train_fraction = Some(fields[1].parse::<f64>().map_err(|_| {
                        bad(lineno, "train-fraction is not a number")
                    })?);
                }
                "source" | "manifest" | "combine" | "seeds" if fields.len() == 2 => {}
                _ => return Err(bad(lineno, "unrecognized header line")),
            },
            Some(cols) => {
                if fields.len() != cols.len() + 1 {
                    return Err(bad(lineno, "row width does not match the table header"));
                }
                let components = fields[0]
                    .parse::<usize>()
                    .map_err(|_| bad(lineno, "component count is not an integer"))?;
                let mut metrics = Vec::new();
                for (name, cell) in cols.iter().zip(&fields[1..]) {
                    let value = if *cell == UNAVAILABLE {
                        None
                    } else {
                        Some(cell.parse::<f64>().map_err(|_| {
                            bad(lineno, "metric cell is neither a number nor n/a")
                        })?)
                    };
                    metrics.push((name.clone(), value));
                }
                rows.push(ParsedRow { components, metrics });
            }
        }
    }

    let direction = direction.ok_or_else(|| bad(0, "missing direction line"))?;
    let level = level.ok_or_else(|| bad(0, "missing level line"))?;
    if rows.is_empty() {
        return Err(bad(0, "no table rows"));
    }
    Ok(ParsedReport {
        direction,
        level,
        train_fraction,
        rows,
    })
}
