//! Model training from a manifest of precomputed features.

use std::path::PathBuf;

use clap::Args;
use duet_core::formats::{save_loss_trace, save_model};
use duet_core::training::{
    train_feature_dcca, train_joint_dcca, train_linear_cca, train_mve, Variant,
};
use duet_core::Result;

use crate::config::{RunConfig, TrainOverrides};
use crate::dataset::{assemble, audio_requirement};
use crate::manifest::Manifest;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest whose audio and text columns name feature files.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Config file; defaults to $DUET_CONFIG, then built-ins.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where the model file goes.
    #[arg(long, default_value = "model.duet")]
    pub out: PathBuf,
    /// Loss trace path; defaults to the model path with a .trace.tsv
    /// extension.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Split tag to train on, or "all"; defaults to "train" when the
    /// manifest carries tags.
    #[arg(long)]
    pub split: Option<String>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::resolve(args.config.as_deref())?;
    cfg.apply_train(&args.overrides);
    cfg.validate()?;
    let variant = cfg.variant()?;
    let train_cfg = cfg.to_train_config();

    let manifest = Manifest::load(&args.manifest)?;
    let records = manifest.select_split(args.split.as_deref(), "train")?;
    let data = assemble(
        &manifest,
        &records,
        audio_requirement(variant),
        cfg.data.decimate,
    )?;

    let model = match variant {
        Variant::JointDcca => train_joint_dcca(&data, &train_cfg)?,
        Variant::FeatureDcca => train_feature_dcca(&data, &train_cfg)?,
        Variant::LinearCca => train_linear_cca(&data, train_cfg.shared_dim, train_cfg.ridge)?,
        Variant::Mve => train_mve(&data, &train_cfg)?,
    };

    save_model(&args.out, &model)?;
    let trace_path = args
        .trace
        .clone()
        .unwrap_or_else(|| args.out.with_extension("trace.tsv"));
    save_loss_trace(&trace_path, &model.loss_trace)?;

    print!(
        "trained {variant} on {} items ({} songs)",
        data.len(),
        records.len()
    );
    if let Some(last) = model.loss_trace.last() {
        print!(", final objective {:.6}", last.objective);
    }
    println!();
    println!("model {}", args.out.display());
    println!("trace {}", trace_path.display());
    Ok(())
}
