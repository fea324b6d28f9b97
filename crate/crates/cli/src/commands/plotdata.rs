//! Flattens evaluation reports into (series, x, y) triples for whatever
//! plots them; rendering is somebody else's job.
//!
//! The x axis is either the component count (one curve per metric from
//! a single sweep) or the training fraction (one point per
//! cross-validated report, read at a fixed component count).

use std::path::PathBuf;

use clap::Args;
use duet_core::formats::atomic_write;
use duet_core::{Error, Result};

use crate::report::read_report;

#[derive(Debug, Args)]
pub struct PlotDataArgs {
    /// Report file(s) produced by eval; repeatable.
    #[arg(long, required = true)]
    pub report: Vec<PathBuf>,
    /// components or training-fraction.
    #[arg(long, default_value = "components")]
    pub x_axis: String,
    /// Component count to read metrics at (training-fraction axis only).
    #[arg(long)]
    pub components: Option<usize>,
    /// Destination; omitted means stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &PlotDataArgs) -> Result<()> {
    let mut lines = vec!["series\tx\ty".to_string()];
    match args.x_axis.as_str() {
        "components" => {
            for path in &args.report {
                let rep = read_report(path)?;
                let prefix = format!("{}/{}", rep.direction.name(), rep.level.name());
                for row in &rep.rows {
                    for (metric, value) in &row.metrics {
                        if let Some(y) = value {
                            lines.push(format!("{prefix}/{metric}\t{}\t{y}", row.components));
                        }
                    }
                }
            }
        }
        "training-fraction" => {
            let k = args.components.ok_or_else(|| {
                Error::Config("--components is required with --x-axis training-fraction".into())
            })?;
            for path in &args.report {
                let rep = read_report(path)?;
                let fraction = rep.train_fraction.ok_or_else(|| {
                    Error::Usage(format!(
                        "{} has no train-fraction line; produce it with eval --cross-validate",
                        path.display()
                    ))
                })?;
                let row = rep
                    .rows
                    .iter()
                    .find(|r| r.components == k)
                    .ok_or_else(|| {
                        Error::Input(format!(
                            "{} has no row for {k} components",
                            path.display()
                        ))
                    })?;
                let prefix = format!("{}/{}", rep.direction.name(), rep.level.name());
                for (metric, value) in &row.metrics {
                    if let Some(y) = value {
                        lines.push(format!("{prefix}/{metric}\t{fraction}\t{y}"));
                    }
                }
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown x axis '{other}' (use components or training-fraction)"
            )))
        }
    }

    let mut text = lines.join("\n");
    text.push('\n');
    match &args.out {
        Some(path) => atomic_write(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}
