//! Turns manifest records plus feature files into a training-ready
//! dataset.
//!
//! Audio feature files may hold several sub-sequences of one song:
//! spectrograms are decimated into four, and vector features carry one
//! column per sub-sequence. Every sub-sequence becomes an item that
//! repeats its song's id, text vector, and category, which is exactly
//! how the trainers and the retrieval grouping expect them.

use duet_core::features::{decimate4, SUBSEQ_FRAMES};
use duet_core::formats::{load_feature, load_spectrogram, FeatureKind};
use duet_core::linalg::Matrix;
use duet_core::training::{AudioView, PairedDataset, Variant};
use duet_core::{Error, Result};

use crate::manifest::{Manifest, ManifestRecord};

/// What the audio column must decode to for a given variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AudioRequirement {
    Spectrograms,
    Vectors,
}

pub fn audio_requirement(variant: Variant) -> AudioRequirement {
    match variant {
        Variant::JointDcca => AudioRequirement::Spectrograms,
        _ => AudioRequirement::Vectors,
    }
}

/// Loads every referenced feature file and assembles the paired views.
/// `decimate` splits full-length spectrograms (anything longer than one
/// sub-sequence) into four.
pub fn assemble(
    manifest: &Manifest,
    records: &[&ManifestRecord],
    requirement: AudioRequirement,
    decimate: bool,
) -> Result<PairedDataset> {
    if records.is_empty() {
        return Err(Error::Input("no records to assemble".into()));
    }
    let categories = manifest.category_indices(records);

    let mut ids = Vec::new();
    let mut item_categories = Vec::new();
    let mut text_cols: Vec<Vec<f64>> = Vec::new();
    let mut spectrograms = Vec::new();
    let mut vector_cols: Vec<Vec<f64>> = Vec::new();

    for (rec, &cat) in records.iter().zip(&categories) {
        let text = text_vector(rec)?;
        if let Some(first) = text_cols.first() {
            if text.len() != first.len() {
                return Err(Error::dim(
                    "text features",
                    format!("{} dims", first.len()),
                    format!("{} in '{}'", text.len(), rec.id),
                ));
            }
        }
        let n_before = ids.len();
        match requirement {
            AudioRequirement::Spectrograms => {
                let spec = load_spectrogram(&rec.audio).map_err(|e| {
                    Error::Input(format!("audio feature of '{}': {e}", rec.id))
                })?;
                if decimate && spec.frames() > SUBSEQ_FRAMES {
                    for sub in decimate4(&spec)? {
                        spectrograms.push(sub);
                        ids.push(rec.id.clone());
                    }
                } else {
                    spectrograms.push(spec);
                    ids.push(rec.id.clone());
                }
            }
            AudioRequirement::Vectors => {
                let (kind, m) = load_feature(&rec.audio)?;
                if matches!(kind, FeatureKind::Mfcc | FeatureKind::Mel) {
                    return Err(Error::Input(format!(
                        "audio feature of '{}' is a spectrogram; this variant needs vector features",
                        rec.id
                    )));
                }
                if let Some(first) = vector_cols.first() {
                    if m.rows() != first.len() {
                        return Err(Error::dim(
                            "audio features",
                            format!("{} dims", first.len()),
                            format!("{} in '{}'", m.rows(), rec.id),
                        ));
                    }
                }
                for c in 0..m.cols() {
                    vector_cols.push(column(&m, c));
                    ids.push(rec.id.clone());
                }
            }
        }
        for _ in n_before..ids.len() {
            text_cols.push(text.clone());
            item_categories.push(cat);
        }
    }

    let audio = match requirement {
        AudioRequirement::Spectrograms => AudioView::Spectrograms(spectrograms),
        AudioRequirement::Vectors => AudioView::Vectors(columns_to_matrix(&vector_cols)),
    };
    let data = PairedDataset {
        ids,
        audio,
        text: columns_to_matrix(&text_cols),
        categories: Some(item_categories),
    };
    data.validate()?;
    Ok(data)
}

fn text_vector(rec: &ManifestRecord) -> Result<Vec<f64>> {
    let (kind, m) = load_feature(&rec.text)?;
    if matches!(kind, FeatureKind::Mfcc | FeatureKind::Mel) {
        return Err(Error::Input(format!(
            "text feature of '{}' is a spectrogram",
            rec.id
        )));
    }
    if m.cols() != 1 {
        return Err(Error::Input(format!(
            "text feature of '{}' must hold one column, found {}",
            rec.id,
            m.cols()
        )));
    }
    Ok(column(&m, 0))
}

fn column(m: &Matrix, c: usize) -> Vec<f64> {
    (0..m.rows()).map(|r| m.get(r, c)).collect()
}

fn columns_to_matrix(cols: &[Vec<f64>]) -> Matrix {
    let d = cols.first().map_or(0, |c| c.len());
    Matrix::from_fn(d, cols.len(), |r, c| cols[c][r])
}
