//! Frame-level spectral features: log-mel spectrograms and MFCCs.
//!
//! Framing is center-padded: frame k is centered at k·hop, out-of-range
//! samples are reflected, so a clip of `len` samples yields exactly
//! `ceil(len/hop)` frames. Each frame gets a periodic Hann window, a
//! power spectrum, a triangular mel filterbank (area-normalized, 0 Hz to
//! Nyquist), and a natural log with a small floor. MFCCs additionally
//! apply an orthonormal DCT-II over 128 mel bands and keep the first 20
//! coefficients.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::features::{AudioClip, Spectrogram, SpectrogramKind};
use crate::linalg::Matrix;

/// Sample rate every spectral feature is computed at.
pub const PIPELINE_SAMPLE_RATE: u32 = 22050;
/// Analysis frame length in samples.
pub const FRAME_LENGTH: usize = 2048;
/// Hop between frame centers in samples.
pub const HOP: usize = 1024;
/// Cepstral coefficients kept per MFCC frame.
pub const MFCC_COEFFS: usize = 20;
/// Mel bands behind the MFCC's DCT.
pub const MFCC_MEL_BANDS: usize = 128;
/// Bands of the log-mel spectrogram variant.
pub const MEL_BANDS: usize = 96;
/// Power floor applied before the log.
pub const LOG_FLOOR: f64 = 1e-10;

/// 20-coefficient MFCCs, one column per frame.
pub fn mfcc(clip: &AudioClip) -> Result<Spectrogram> {
    let logmel = log_mel_energies(clip, MFCC_MEL_BANDS)?;
    let dct = dct_matrix(MFCC_COEFFS, MFCC_MEL_BANDS);
    let values = dct.matmul(&logmel)?;
    Ok(Spectrogram {
        values,
        kind: SpectrogramKind::Mfcc,
        frame_length: FRAME_LENGTH,
        hop: HOP,
    })
}

/// 96-band log-mel spectrogram, one column per frame.
pub fn mel_spectrogram(clip: &AudioClip) -> Result<Spectrogram> {
    let values = log_mel_energies(clip, MEL_BANDS)?;
    Ok(Spectrogram {
        values,
        kind: SpectrogramKind::Mel,
        frame_length: FRAME_LENGTH,
        hop: HOP,
    })
}

fn log_mel_energies(clip: &AudioClip, n_mels: usize) -> Result<Matrix> {
    if clip.sample_rate != PIPELINE_SAMPLE_RATE {
        return Err(Error::Usage(format!(
            "spectral features run at {PIPELINE_SAMPLE_RATE} Hz, clip is {} Hz (resample first)",
            clip.sample_rate
        )));
    }
    let power = power_spectra(&clip.samples, FRAME_LENGTH, HOP)?;
    let fb = mel_filterbank(n_mels, FRAME_LENGTH, PIPELINE_SAMPLE_RATE);
    let mut mel = fb.matmul(&power)?;
    for v in mel.data_mut() {
        *v = v.max(LOG_FLOOR).ln();
    }
    Ok(mel)
}

/// Windowed power spectra of the center-padded frames: one column per
/// frame, `frame_length/2 + 1` rows.
fn power_spectra(samples: &[f64], frame_length: usize, hop: usize) -> Result<Matrix> {
    let n = samples.len();
    if n < frame_length {
        return Err(Error::Input(format!(
            "clip of {n} samples is shorter than one {frame_length}-sample frame"
        )));
    }
    let frames = n.div_ceil(hop);
    let bins = frame_length / 2 + 1;
    let window = hann_periodic(frame_length);
    let fft = FftPlanner::new().plan_fft_forward(frame_length);

    let mut out = Matrix::zeros(bins, frames);
    let mut buf = vec![Complex::new(0.0, 0.0); frame_length];
    let half = (frame_length / 2) as isize;
    for k in 0..frames {
        let center = (k * hop) as isize;
        for (i, b) in buf.iter_mut().enumerate() {
            let idx = reflect(center - half + i as isize, n);
            *b = Complex::new(samples[idx] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (b, out_row) in buf.iter().take(bins).enumerate() {
            out[(b, k)] = out_row.norm_sqr();
        }
    }
    Ok(out)
}

/// Mirror indexing without repeating the edge sample.
fn reflect(mut idx: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if idx < 0 {
            idx = -idx;
        } else if idx >= n {
            idx = 2 * n - 2 - idx;
        } else {
            return idx as usize;
        }
    }
}

fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Triangular mel filterbank: `n_mels` × `n_fft/2+1`, filters spanning
/// 0 Hz to Nyquist, each scaled by 2/bandwidth so its continuous area
/// is 1.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Matrix {
    let nyquist = sample_rate as f64 / 2.0;
    let bins = n_fft / 2 + 1;
    let m_lo = hz_to_mel(0.0);
    let m_hi = hz_to_mel(nyquist);
    let hz: Vec<f64> = (0..n_mels + 2)
        .map(|p| mel_to_hz(m_lo + (m_hi - m_lo) * p as f64 / (n_mels + 1) as f64))
        .collect();

    Matrix::from_fn(n_mels, bins, |m, i| {
        let f = i as f64 * sample_rate as f64 / n_fft as f64;
        let rise = (f - hz[m]) / (hz[m + 1] - hz[m]);
        let fall = (hz[m + 2] - f) / (hz[m + 2] - hz[m + 1]);
        let w = rise.min(fall).max(0.0);
        w * 2.0 / (hz[m + 2] - hz[m])
    })
}

/// Mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(f: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if f < MIN_LOG_HZ {
        f / F_SP
    } else {
        min_log_mel + (f / MIN_LOG_HZ).ln() / logstep
    }
}

pub fn mel_to_hz(m: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if m < min_log_mel {
        m * F_SP
    } else {
        MIN_LOG_HZ * ((m - min_log_mel) * logstep).exp()
    }
}

/// Orthonormal DCT-II: `rows` ≤ `cols`; the full `cols`×`cols` matrix is
/// orthogonal and these are its first `rows` rows.
pub fn dct_matrix(rows: usize, cols: usize) -> Matrix {
    let m = cols as f64;
    Matrix::from_fn(rows, cols, |k, n| {
        let s = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
        s * (std::f64::consts::PI * (n as f64 + 0.5) * k as f64 / m).cos()
    })
}
