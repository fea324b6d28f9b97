//! Retrieval evaluation: a component sweep over a saved model, or
//! cross-validated training and evaluation in one step.
//!
//! Both modes write a structured report plus a bare metrics table and
//! print the table. Cross-validation stamps the report with the
//! training fraction and the run seeds, which is what the plot-data
//! command's training-fraction axis reads.

use std::path::PathBuf;

use clap::Args;
use duet_core::formats::load_model;
use duet_core::retrieval::{cross_validate, evaluate, CrossValidateConfig};
use duet_core::{Error, Result};

use crate::config::{EvalOverrides, RunConfig, TrainOverrides};
use crate::dataset::{assemble, audio_requirement};
use crate::manifest::Manifest;
use crate::report::{render_table, write_report, write_table, ReportMeta};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Saved model to evaluate; omit with --cross-validate.
    #[arg(long, conflicts_with = "cross_validate")]
    pub model: Option<PathBuf>,
    /// Manifest whose audio and text columns name feature files.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Config file; defaults to $DUET_CONFIG, then built-ins.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Structured report destination.
    #[arg(long, default_value = "eval.report")]
    pub report: PathBuf,
    /// Bare metrics table destination.
    #[arg(long, default_value = "eval.tsv")]
    pub table: PathBuf,
    /// Split tag to evaluate on, or "all"; defaults to "test" when the
    /// manifest carries tags (model mode), and to every record in
    /// cross-validation mode.
    #[arg(long)]
    pub split: Option<String>,
    /// Train fresh models on song-level splits instead of loading one;
    /// uses [split] ratio and runs.
    #[arg(long)]
    pub cross_validate: bool,
    #[command(flatten)]
    pub train_overrides: TrainOverrides,
    #[command(flatten)]
    pub eval_overrides: EvalOverrides,
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let mut cfg = RunConfig::resolve(args.config.as_deref())?;
    cfg.apply_train(&args.train_overrides);
    cfg.apply_eval(&args.eval_overrides);
    cfg.validate()?;
    let (direction, level, combine) = cfg.eval_params()?;
    let ks = cfg.eval.components.clone();
    let top_ns = cfg.eval.top_n.clone();

    let manifest = Manifest::load(&args.manifest)?;

    let (meta, reports) = if args.cross_validate {
        let variant = cfg.variant()?;
        let records = manifest.select_split(args.split.as_deref().or(Some("all")), "test")?;
        let data = assemble(&manifest, &records, audio_requirement(variant), cfg.data.decimate)?;
        let cv_cfg = CrossValidateConfig {
            variant,
            train: cfg.to_train_config(),
            train_fraction: cfg.split.ratio,
            runs: cfg.split.runs,
            direction,
            level,
            combine,
            ks,
            top_ns: top_ns.clone(),
        };
        let cv = cross_validate(&data, &cv_cfg)?;
        let meta = ReportMeta {
            source: format!("cross-validate {variant}"),
            manifest: args.manifest.display().to_string(),
            direction,
            level,
            combine,
            train_fraction: Some(cfg.split.ratio),
            seeds: cv.runs.iter().map(|(s, _)| *s).collect(),
        };
        (meta, cv.aggregated)
    } else {
        let model_path = args.model.as_ref().ok_or_else(|| {
            Error::Usage("pass --model, or --cross-validate to train splits in place".into())
        })?;
        let mut model = load_model(model_path)?;
        let records = manifest.select_split(args.split.as_deref(), "test")?;
        let data = assemble(
            &manifest,
            &records,
            audio_requirement(model.variant),
            cfg.data.decimate,
        )?;
        let reports = evaluate(&mut model, &data, direction, level, &ks, &top_ns, combine)?;
        let meta = ReportMeta {
            source: model_path.display().to_string(),
            manifest: args.manifest.display().to_string(),
            direction,
            level,
            combine,
            train_fraction: None,
            seeds: vec![],
        };
        (meta, reports)
    };

    write_report(&args.report, &meta, &reports, &top_ns)?;
    write_table(&args.table, &reports, &top_ns)?;
    print!("{}", render_table(&reports, &top_ns));
    println!("report {}", args.report.display());
    println!("table {}", args.table.display());
    Ok(())
}
