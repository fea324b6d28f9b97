//! Synthetic dataset generation in the pipeline's own on-disk formats,
//! so every other command runs end-to-end without real audio.
//!
//! The generator itself lives in the core crate; this command lays its
//! output down as feature files, a manifest, and a ground-truth file
//! holding the population canonical correlations that recovery tests
//! compare against. Spectrogram mode reshapes each audio vector to
//! bands x frames so the joint variant has CNN-shaped input.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use duet_core::features::{Spectrogram, SpectrogramKind, FRAME_LENGTH, HOP, MEL_BANDS, MFCC_COEFFS};
use duet_core::formats::{atomic_write, save_feature, save_spectrogram, FeatureKind};
use duet_core::linalg::Matrix;
use duet_core::synthdata::{generate, SynthSpec};
use duet_core::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::manifest::{write_manifest, ManifestRow};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.tsv";

/// Keeps the synthetic train/test tagging independent of the draws that
/// shape the data itself.
const SPLIT_SALT: u64 = 0x53504c4954;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory receiving manifest, features, and ground truth.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 400)]
    pub pairs: usize,
    #[arg(long, default_value_t = 3)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 20)]
    pub audio_dim: usize,
    #[arg(long, default_value_t = 300)]
    pub text_dim: usize,
    /// Per-coordinate observation noise.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Warp the audio view so linear projections are provably too weak.
    #[arg(long)]
    pub nonlinear: bool,
    #[arg(long, default_value_t = 20)]
    pub categories: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Emit audio as bands x frames spectrograms instead of vectors;
    /// overrides --audio-dim with bands * frames.
    #[arg(long, requires = "frames")]
    pub bands: Option<usize>,
    #[arg(long, requires = "bands")]
    pub frames: Option<usize>,
    /// Tag this fraction of pairs as train and the rest as test.
    #[arg(long)]
    pub split_ratio: Option<f64>,
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let shape = match (args.bands, args.frames) {
        (Some(b), Some(f)) => {
            if b != MFCC_COEFFS && b != MEL_BANDS {
                return Err(Error::Config(format!(
                    "--bands must be {MFCC_COEFFS} or {MEL_BANDS} to match a network variant, got {b}"
                )));
            }
            if f == 0 {
                return Err(Error::Config("--frames must be positive".into()));
            }
            Some((b, f))
        }
        (None, None) => None,
        _ => unreachable!("clap enforces that --bands and --frames go together"),
    };
    if let Some(r) = args.split_ratio {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Config(format!(
                "--split-ratio must lie strictly between 0 and 1, got {r}"
            )));
        }
    }

    let spec = SynthSpec {
        n_pairs: args.pairs,
        latent_dim: args.latent_dim,
        audio_dim: shape.map_or(args.audio_dim, |(b, f)| b * f),
        text_dim: args.text_dim,
        noise: args.noise,
        nonlinear: args.nonlinear,
        n_categories: args.categories,
        seed: args.seed,
    };
    let ds = generate(&spec)?;

    let audio_dir = args.out_dir.join("audio");
    let text_dir = args.out_dir.join("text");
    for dir in [&audio_dir, &text_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let splits = args.split_ratio.map(|r| split_tags(args.pairs, r, args.seed));
    let labels: Vec<String> = (0..args.categories).map(|c| format!("cat{c:02}")).collect();

    let mut rows = Vec::with_capacity(args.pairs);
    for (i, id) in ds.ids.iter().enumerate() {
        let audio_rel = format!("audio/{id}.feat");
        let text_rel = format!("text/{id}.feat");
        match shape {
            Some((b, f)) => {
                let spec = Spectrogram {
                    values: Matrix::from_fn(b, f, |r, c| ds.audio.get(r * f + c, i)),
                    kind: if b == MFCC_COEFFS {
                        SpectrogramKind::Mfcc
                    } else {
                        SpectrogramKind::Mel
                    },
                    frame_length: FRAME_LENGTH,
                    hop: HOP,
                };
                save_spectrogram(args.out_dir.join(&audio_rel), &spec)?;
            }
            None => {
                let col = Matrix::from_fn(spec.audio_dim, 1, |r, _| ds.audio.get(r, i));
                save_feature(args.out_dir.join(&audio_rel), FeatureKind::Vector, &col)?;
            }
        }
        let col = Matrix::from_fn(args.text_dim, 1, |r, _| ds.text.get(r, i));
        save_feature(args.out_dir.join(&text_rel), FeatureKind::Vector, &col)?;

        rows.push(ManifestRow {
            id: id.clone(),
            audio: audio_rel,
            text: text_rel,
            category: labels[ds.categories[i]].clone(),
            split: splits.as_ref().map(|s| s[i].to_string()),
        });
    }

    write_manifest(&args.out_dir.join("manifest.tsv"), &rows, Some(&labels))?;

    let mut truth = String::from("# synthetic ground truth\n");
    truth.push_str(&format!("# noise\t{}\n", ds.truth.noise));
    truth.push_str(&format!("# nonlinear\t{}\n", args.nonlinear));
    truth.push_str("component\tpopulation_correlation\n");
    for (i, rho) in ds.truth.population_correlations.iter().enumerate() {
        truth.push_str(&format!("{i}\t{rho}\n"));
    }
    atomic_write(args.out_dir.join(GROUND_TRUTH_FILE), truth.as_bytes())?;

    println!(
        "synthesized {} pairs (latent {}, audio {}, text {}) -> {}",
        args.pairs,
        args.latent_dim,
        shape.map_or(args.audio_dim.to_string(), |(b, f)| format!("{b}x{f}")),
        args.text_dim,
        args.out_dir.display()
    );
    Ok(())
}

fn split_tags(n: usize, ratio: f64, seed: u64) -> Vec<&'static str> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT);
    order.shuffle(&mut rng);
    let n_train = (ratio * n as f64).floor() as usize;
    let mut tags = vec!["test"; n];
    for &i in &order[..n_train] {
        tags[i] = "train";
    }
    tags
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_tags_are_deterministic_and_sized_by_the_ratio() {
        let a = split_tags(10, 0.8, 7);
        let b = split_tags(10, 0.8, 7);
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|t| **t == "train").count(), 8);
        assert_ne!(split_tags(10, 0.8, 8), a);
    }
}
