//! RIFF/WAV ingestion limited to what the pipeline needs: PCM 16-bit,
//! mono or stereo (averaged down to mono). Unknown chunks are skipped,
//! including the pad byte after odd-sized ones. A matching mono writer
//! exists so tests and tooling can produce fixtures.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::AudioClip;

const SCALE: f64 = 32768.0;

/// Reads a PCM16 WAV file into a mono clip in [−1, 1).
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        Error::Unsupported(msg) => Error::Unsupported(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Decodes WAV bytes; see [`read_wav`].
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("not a RIFF/WAVE file".into()));
    }

    struct Fmt {
        channels: u16,
        sample_rate: u32,
        bits: u16,
    }
    let mut fmt: Option<Fmt> = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Format("chunk extends past end of file".into()))?;
        let body = &bytes[body_start..body_end];

        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format("fmt chunk too short".into()));
                }
                let audio_format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let sample_rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                if audio_format != 1 {
                    return Err(Error::Unsupported(format!(
                        "audio format {audio_format}, only PCM (1) is supported"
                    )));
                }
                if bits != 16 {
                    return Err(Error::Unsupported(format!(
                        "{bits}-bit samples, only 16-bit PCM is supported"
                    )));
                }
                if channels == 0 || channels > 2 {
                    return Err(Error::Unsupported(format!(
                        "{channels} channels, only mono and stereo are supported"
                    )));
                }
                if sample_rate == 0 {
                    return Err(Error::Format("sample rate 0".into()));
                }
                fmt = Some(Fmt {
                    channels,
                    sample_rate,
                    bits,
                });
            }
            b"data" => {
                let f = fmt
                    .as_ref()
                    .ok_or_else(|| Error::Format("data chunk before fmt chunk".into()))?;
                debug_assert_eq!(f.bits, 16);
                let bytes_per_frame = 2 * f.channels as usize;
                if size % bytes_per_frame != 0 {
                    return Err(Error::Format(format!(
                        "data chunk of {size} bytes is not a whole number of frames"
                    )));
                }
                let frames = size / bytes_per_frame;
                if frames == 0 {
                    return Err(Error::Input("audio data is empty".into()));
                }
                let mut samples = Vec::with_capacity(frames);
                match f.channels {
                    1 => {
                        for ch in body.chunks_exact(2) {
                            let v = i16::from_le_bytes([ch[0], ch[1]]);
                            samples.push(v as f64 / SCALE);
                        }
                    }
                    _ => {
                        for ch in body.chunks_exact(4) {
                            let l = i16::from_le_bytes([ch[0], ch[1]]) as f64;
                            let r = i16::from_le_bytes([ch[2], ch[3]]) as f64;
                            samples.push((l + r) / 2.0 / SCALE);
                        }
                    }
                }
                return AudioClip::new(samples, f.sample_rate);
            }
            _ => {}
        }
        // Chunks are word-aligned: odd sizes carry a pad byte.
        pos = body_end + (size & 1);
    }
    Err(Error::Format("no data chunk found".into()))
}

/// Writes a mono PCM16 WAV file; samples are clamped to [−1, 1].
pub fn write_wav_pcm16(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Input("refusing to write an empty WAV file".into()));
    }
    if sample_rate == 0 {
        return Err(Error::Usage("sample rate must be positive".into()));
    }
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * SCALE).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
