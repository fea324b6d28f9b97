//! Run configuration: a TOML file, flag overrides on top, everything
//! validated before a command does any work.
//!
//! Lookup order for the file is the `--config` flag, then the
//! [`CONFIG_ENV`] environment variable, then built-in defaults. Unknown
//! keys are rejected so a typo cannot silently fall back to a default.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use duet_core::retrieval::{Combine, Direction, Level};
use duet_core::training::optimizer::DEFAULT_LEARNING_RATE;
use duet_core::training::{TrainConfig, Variant};
use duet_core::{Error, Result};
use serde::Deserialize;

/// Names a default config file picked up when `--config` is absent.
pub const CONFIG_ENV: &str = "DUET_CONFIG";

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub train: TrainSection,
    pub split: SplitSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Split 646-frame spectrogram features into four 161-frame
    /// sub-sequences when assembling datasets.
    pub decimate: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { decimate: true }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// joint-dcca, feature-dcca, linear-cca, or mve.
    pub variant: String,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub ridge: f64,
    pub shared_dim: usize,
    pub margin: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            variant: Variant::FeatureDcca.name().to_string(),
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate: DEFAULT_LEARNING_RATE,
            ridge: t.ridge,
            shared_dim: t.shared_dim,
            margin: t.margin,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    /// Fraction of songs used for training in cross-validation.
    pub ratio: f64,
    pub runs: usize,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { ratio: 0.8, runs: 5 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// audio-to-text or text-to-audio.
    pub direction: String,
    /// instance or category.
    pub level: String,
    /// How sub-sequence scores merge into a song score: average, first,
    /// or max-score.
    pub combine: String,
    /// Component counts k to sweep.
    pub components: Vec<usize>,
    /// Ns for recall@N columns.
    pub top_n: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            direction: Direction::AudioToText.name().to_string(),
            level: Level::Instance.name().to_string(),
            combine: Combine::Average.name().to_string(),
            components: vec![30],
            top_n: vec![1, 5],
        }
    }
}

/// Flag overrides for the `[train]` section; every flag mirrors a key.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrainOverrides {
    /// Training variant: joint-dcca, feature-dcca, linear-cca, mve.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub ridge: Option<f64>,
    #[arg(long)]
    pub shared_dim: Option<usize>,
    /// Margin of the embedding hinge loss (mve only).
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Flag overrides for the `[eval]` and `[split]` sections.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct EvalOverrides {
    /// Retrieval direction: audio-to-text or text-to-audio.
    #[arg(long)]
    pub direction: Option<String>,
    /// Relevance level: instance or category.
    #[arg(long)]
    pub level: Option<String>,
    /// Sub-sequence combination: average, first, max-score.
    #[arg(long)]
    pub combine: Option<String>,
    /// Comma-separated component counts, e.g. 1,5,30.
    #[arg(long, value_delimiter = ',')]
    pub components: Option<Vec<usize>>,
    /// Comma-separated Ns for recall@N, e.g. 1,5.
    #[arg(long, value_delimiter = ',')]
    pub top_n: Option<Vec<usize>>,
    /// Training fraction for cross-validation.
    #[arg(long)]
    pub split_ratio: Option<f64>,
    /// Number of cross-validation runs.
    #[arg(long)]
    pub runs: Option<usize>,
}

impl RunConfig {
    /// Loads and parses a config file; values are not yet validated so
    /// flag overrides can still amend them.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// `--config` flag, else `$DUET_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<RunConfig> {
        let path = explicit
            .map(PathBuf::from)
            .or_else(|| env::var_os(CONFIG_ENV).map(PathBuf::from));
        match path {
            Some(p) => RunConfig::load(&p),
            None => Ok(RunConfig::default()),
        }
    }

    pub fn apply_train(&mut self, o: &TrainOverrides) {
        let t = &mut self.train;
        if let Some(v) = &o.variant {
            t.variant = v.clone();
        }
        if let Some(v) = o.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = o.epochs {
            t.epochs = v;
        }
        if let Some(v) = o.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = o.ridge {
            t.ridge = v;
        }
        if let Some(v) = o.shared_dim {
            t.shared_dim = v;
        }
        if let Some(v) = o.margin {
            t.margin = v;
        }
        if let Some(v) = o.seed {
            t.seed = v;
        }
    }

    pub fn apply_eval(&mut self, o: &EvalOverrides) {
        let e = &mut self.eval;
        if let Some(v) = &o.direction {
            e.direction = v.clone();
        }
        if let Some(v) = &o.level {
            e.level = v.clone();
        }
        if let Some(v) = &o.combine {
            e.combine = v.clone();
        }
        if let Some(v) = &o.components {
            e.components = v.clone();
        }
        if let Some(v) = &o.top_n {
            e.top_n = v.clone();
        }
        if let Some(v) = o.split_ratio {
            self.split.ratio = v;
        }
        if let Some(v) = o.runs {
            self.split.runs = v;
        }
    }

    /// Checks every value; commands call this before touching data.
    pub fn validate(&self) -> Result<()> {
        Variant::from_name(&self.train.variant)?;
        self.to_train_config().validate()?;
        Direction::from_name(&self.eval.direction)?;
        Level::from_name(&self.eval.level)?;
        Combine::from_name(&self.eval.combine)?;
        if self.eval.components.is_empty() {
            return Err(Error::Config("eval.components must not be empty".into()));
        }
        if self.eval.components.contains(&0) {
            return Err(Error::Config("eval.components must be positive".into()));
        }
        if self.eval.top_n.is_empty() {
            return Err(Error::Config("eval.top_n must not be empty".into()));
        }
        if self.eval.top_n.contains(&0) {
            return Err(Error::Config("eval.top_n must be positive".into()));
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return Err(Error::Config(format!(
                "split.ratio must lie strictly between 0 and 1, got {}",
                self.split.ratio
            )));
        }
        if self.split.runs == 0 {
            return Err(Error::Config("split.runs must be positive".into()));
        }
        Ok(())
    }

    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            learning_rate: self.train.learning_rate,
            ridge: self.train.ridge,
            shared_dim: self.train.shared_dim,
            seed: self.train.seed,
            margin: self.train.margin,
        }
    }

    pub fn variant(&self) -> Result<Variant> {
        Variant::from_name(&self.train.variant)
    }

    pub fn eval_params(&self) -> Result<(Direction, Level, Combine)> {
        Ok((
            Direction::from_name(&self.eval.direction)?,
            Level::from_name(&self.eval.level)?,
            Combine::from_name(&self.eval.combine)?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn a_partial_file_keeps_the_other_defaults() {
        let cfg: RunConfig = toml::from_str("[train]\nepochs = 7\nridge = 0.01\n").unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.ridge, 0.01);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.eval, EvalSection::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("[train]\nepoks = 7\n").unwrap_err();
        assert!(err.to_string().contains("epoks"), "{err}");
        assert!(toml::from_str::<RunConfig>("[trainer]\nepochs = 7\n").is_err());
    }

    #[test]
    fn bad_values_fail_validation() {
        let mut cfg = RunConfig::default();
        cfg.train.variant = "deep-cca".into();
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.split.ratio = 1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = RunConfig::default();
        cfg.eval.components = vec![];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides_land_in_the_right_sections() {
        let mut cfg = RunConfig::default();
        cfg.apply_train(&TrainOverrides {
            epochs: Some(3),
            variant: Some("mve".into()),
            ..TrainOverrides::default()
        });
        cfg.apply_eval(&EvalOverrides {
            components: Some(vec![1, 2]),
            split_ratio: Some(0.5),
            ..EvalOverrides::default()
        });
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.variant, "mve");
        assert_eq!(cfg.eval.components, vec![1, 2]);
        assert_eq!(cfg.split.ratio, 0.5);
        cfg.validate().unwrap();
    }
}
