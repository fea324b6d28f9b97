//! Feature extraction: WAVs named by a manifest become binary
//! spectrogram files plus an index.
//!
//! The index records each item's source content hash, which is what
//! makes re-runs idempotent: an item whose source hash and output file
//! are both unchanged is skipped without a write. A corrupt or missing
//! source fails that item alone; the command finishes the rest and then
//! reports the failures.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use duet_core::features::{
    mel_spectrogram, mfcc, read_wav, resample, SpectrogramKind, PIPELINE_SAMPLE_RATE,
};
use duet_core::formats::{atomic_write, content_hash64, save_spectrogram};
use duet_core::{Error, Result};

use crate::manifest::{Manifest, ManifestRecord};

pub const INDEX_FILE: &str = "index.tsv";

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Manifest whose audio column names WAV files.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory receiving the feature files and the index.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Spectrogram variant: mfcc or mel.
    #[arg(long, default_value = "mfcc")]
    pub variant: String,
}

#[derive(Debug, Clone, PartialEq)]
struct IndexRow {
    id: String,
    /// Feature file path, relative to the index.
    path: String,
    rows: usize,
    cols: usize,
    /// Content hash of the source audio bytes.
    source_hash: u64,
}

pub fn run(args: &ExtractArgs) -> Result<()> {
    let kind = match args.variant.as_str() {
        "mfcc" => SpectrogramKind::Mfcc,
        "mel" => SpectrogramKind::Mel,
        other => {
            return Err(Error::Config(format!(
                "unknown extraction variant '{other}' (use mfcc or mel)"
            )))
        }
    };

    let manifest = Manifest::load(&args.manifest)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let index_path = args.out_dir.join(INDEX_FILE);
    let old_text = fs::read_to_string(&index_path).ok();
    let old = old_text.as_deref().map(parse_index).unwrap_or_default();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let (mut written, mut skipped) = (0usize, 0usize);
    for rec in &manifest.records {
        match extract_one(rec, &args.out_dir, old.get(&rec.id), kind) {
            Ok((row, wrote)) => {
                if wrote {
                    written += 1;
                } else {
                    skipped += 1;
                }
                rows.push(row);
            }
            Err(e) => failures.push((rec.id.clone(), e)),
        }
    }

    let new_text = render_index(&rows);
    if old_text.as_deref() != Some(new_text.as_str()) {
        atomic_write(&index_path, new_text.as_bytes())?;
    }

    println!(
        "extracted {written}, unchanged {skipped}, failed {} -> {}",
        failures.len(),
        args.out_dir.display()
    );
    if failures.is_empty() {
        return Ok(());
    }
    for (id, e) in &failures {
        eprintln!("item '{id}': {e}");
    }
    Err(Error::Input(format!(
        "extraction failed for {} item(s): {}",
        failures.len(),
        failures
            .iter()
            .map(|(id, _)| id.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    )))
}

fn extract_one(
    rec: &ManifestRecord,
    out_dir: &Path,
    old: Option<&IndexRow>,
    kind: SpectrogramKind,
) -> Result<(IndexRow, bool)> {
    let bytes = fs::read(&rec.audio).map_err(|e| Error::io(&rec.audio, e))?;
    let source_hash = content_hash64(&bytes);
    let rel = format!("{}.feat", rec.id);
    let out_path = out_dir.join(&rel);
    if let Some(o) = old {
        if o.source_hash == source_hash && o.path == rel && out_path.exists() {
            return Ok((o.clone(), false));
        }
    }

    let clip = read_wav(&rec.audio)?;
    let clip = resample(&clip, PIPELINE_SAMPLE_RATE)?;
    let spec = match kind {
        SpectrogramKind::Mfcc => mfcc(&clip)?,
        SpectrogramKind::Mel => mel_spectrogram(&clip)?,
    };
    save_spectrogram(&out_path, &spec)?;
    Ok((
        IndexRow {
            id: rec.id.clone(),
            path: rel,
            rows: spec.bands(),
            cols: spec.frames(),
            source_hash,
        },
        true,
    ))
}

fn render_index(rows: &[IndexRow]) -> String {
    let mut out = String::from("id\tpath\tshape\thash\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}x{}\t{:016x}\n",
            r.id, r.path, r.rows, r.cols, r.source_hash
        ));
    }
    out
}

/// Best-effort read of a previous index; anything unparseable just
/// disables the skip optimization.
fn parse_index(text: &str) -> BTreeMap<String, IndexRow> {
    let mut map = BTreeMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            continue;
        }
        let Some((rows, cols)) = f[2]
            .split_once('x')
            .and_then(|(r, c)| Some((r.parse().ok()?, c.parse().ok()?)))
        else {
            continue;
        };
        let Ok(source_hash) = u64::from_str_radix(f[3], 16) else {
            continue;
        };
        map.insert(
            f[0].to_string(),
            IndexRow {
                id: f[0].to_string(),
                path: f[1].to_string(),
                rows,
                cols,
                source_hash,
            },
        );
    }
    map
}
