//! Audio and text feature pipeline.
//!
//! Audio enters as PCM WAV, is resampled to 22050 Hz, and becomes either
//! a 20×F MFCC matrix or a 96×F log-mel spectrogram. Long spectrograms
//! are decimated into four interleaved 161-frame sub-sequences that all
//! pair with the same text item. Text (and any precomputed embedding)
//! arrives as delimited vectors, one `id<TAB>v1,v2,…` record per line.

pub mod mel;
pub mod resample;
pub mod wav;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use mel::{
    dct_matrix, mel_filterbank, mel_spectrogram, mfcc, FRAME_LENGTH, HOP, LOG_FLOOR, MEL_BANDS,
    MFCC_COEFFS, MFCC_MEL_BANDS, PIPELINE_SAMPLE_RATE,
};
pub use resample::resample;
pub use wav::{read_wav, write_wav_pcm16};

/// Dimension of the ingested text features.
pub const TEXT_DIM: usize = 300;
/// Frames per decimated sub-sequence.
pub const SUBSEQ_FRAMES: usize = 161;
/// Sub-sequences produced per full-length spectrogram.
pub const SUBSEQ_COUNT: usize = 4;

/// Mono audio; samples are nominally in [−1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Usage("sample rate must be positive".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("audio contains non-finite samples".into()));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Which spectral feature a matrix holds; fixes the band count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrogramKind {
    Mfcc,
    Mel,
}

impl SpectrogramKind {
    pub fn bands(self) -> usize {
        match self {
            SpectrogramKind::Mfcc => MFCC_COEFFS,
            SpectrogramKind::Mel => MEL_BANDS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpectrogramKind::Mfcc => "mfcc",
            SpectrogramKind::Mel => "mel",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "mfcc" => Ok(SpectrogramKind::Mfcc),
            "mel" => Ok(SpectrogramKind::Mel),
            other => Err(Error::Usage(format!("unknown spectrogram kind '{other}'"))),
        }
    }
}

impl fmt::Display for SpectrogramKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Bands×frames feature matrix with its framing parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Matrix,
    pub kind: SpectrogramKind,
    /// Analysis frame length in samples.
    pub frame_length: usize,
    /// Samples between adjacent frame centers (columns).
    pub hop: usize,
}

impl Spectrogram {
    pub fn bands(&self) -> usize {
        self.values.rows()
    }

    pub fn frames(&self) -> usize {
        self.values.cols()
    }
}

/// One ingested text embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct TextFeature {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Splits a spectrogram into four interleaved sub-sequences: sub `j`
/// keeps frames `j, j+4, j+8, …`, truncated to 161 frames, so the four
/// index sets partition frames 0..644. Needs at least 644 frames.
pub fn decimate4(spec: &Spectrogram) -> Result<[Spectrogram; 4]> {
    let needed = SUBSEQ_COUNT * SUBSEQ_FRAMES;
    if spec.frames() < needed {
        return Err(Error::Input(format!(
            "decimation needs at least {needed} frames, spectrogram has {}",
            spec.frames()
        )));
    }
    let bands = spec.bands();
    let mut subs = Vec::with_capacity(SUBSEQ_COUNT);
    for j in 0..SUBSEQ_COUNT {
        let mut values = Matrix::zeros(bands, SUBSEQ_FRAMES);
        for t in 0..SUBSEQ_FRAMES {
            let src = j + SUBSEQ_COUNT * t;
            for b in 0..bands {
                values[(b, t)] = spec.values[(b, src)];
            }
        }
        subs.push(Spectrogram {
            values,
            kind: spec.kind,
            frame_length: spec.frame_length,
            // Kept frames are 4 hops apart.
            hop: spec.hop * SUBSEQ_COUNT,
        });
    }
    Ok(subs.try_into().expect("built exactly four"))
}

/// In-place per-band z-score over frames. Bands with (near-)zero spread
/// are centered only.
pub fn standardize_bands(values: &mut Matrix) {
    let frames = values.cols();
    if frames == 0 {
        return;
    }
    for b in 0..values.rows() {
        let row = values.row_mut(b);
        let mean = row.iter().sum::<f64>() / frames as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / frames as f64;
        let std = var.sqrt();
        if std > 1e-12 {
            for v in row {
                *v = (*v - mean) / std;
            }
        } else {
            for v in row {
                *v -= mean;
            }
        }
    }
}

/// Loads `id<TAB>v1,v2,…` records. Lines that are empty or start with
/// `#` are skipped. All rows must share one width; `expected_width`
/// additionally pins it. Ids must be unique.
pub fn load_vectors(path: &Path, expected_width: Option<usize>) -> Result<Vec<(String, Vec<f64>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut width = expected_width;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = format!("{}:{}", path.display(), lineno + 1);
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("{at}: expected id<TAB>values")))?;
        if id.is_empty() {
            return Err(Error::Format(format!("{at}: empty id")));
        }
        let mut vector = Vec::new();
        for tok in rest.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("{at}: bad number '{tok}'")))?;
            if !v.is_finite() {
                return Err(Error::Format(format!("{at}: non-finite value")));
            }
            vector.push(v);
        }
        match width {
            Some(w) if vector.len() != w => {
                return Err(Error::Format(format!(
                    "{at}: row '{id}' has width {}, expected {w}",
                    vector.len()
                )));
            }
            Some(_) => {}
            None => width = Some(vector.len()),
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::Format(format!("{at}: duplicate id '{id}'")));
        }
        rows.push((id.to_string(), vector));
    }
    Ok(rows)
}

/// Writes records in the format [`load_vectors`] reads; values use the
/// shortest representation that round-trips exactly.
pub fn save_vectors(path: &Path, rows: &[(String, Vec<f64>)]) -> Result<()> {
    let mut out = String::new();
    for (id, vector) in rows {
        out.push_str(id);
        out.push('\t');
        for (i, v) in vector.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads 300-dimensional text features.
pub fn load_text_features(path: &Path) -> Result<Vec<TextFeature>> {
    Ok(load_vectors(path, Some(TEXT_DIM))?
        .into_iter()
        .map(|(id, vector)| TextFeature { id, vector })
        .collect())
}
