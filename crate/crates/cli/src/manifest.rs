//! Dataset manifests: tab-delimited UTF-8 with a header row.
//!
//! ```text
//! # anything after '#' is a comment
//! # categories: happy,sad,calm
//! id	audio	text	category	split
//! song1	audio/song1.wav	text/song1.feat	happy	train
//! ```
//!
//! The `split` column is optional. A `# categories:` directive declares
//! the label set up front; rows using other labels are rejected. Without
//! it the set is collected from the rows in first-appearance order.
//! Relative paths are resolved against the manifest's directory, and
//! every referenced file must exist at load.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use duet_core::formats::atomic_write;
use duet_core::{Error, Result};

#[derive(Debug, Clone)]
pub struct ManifestRecord {
    pub id: String,
    /// Audio source: a WAV for `extract`, a feature file for train/eval.
    pub audio: PathBuf,
    /// Text feature file.
    pub text: PathBuf,
    pub category: String,
    pub split: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
    /// Category label set; declared order, or first appearance.
    pub labels: Vec<String>,
}

/// One row as written by producers; paths are stored verbatim so a
/// manifest can stay relocatable alongside its feature files.
#[derive(Debug, Clone)]
pub struct ManifestRow {
    pub id: String,
    pub audio: String,
    pub text: String,
    pub category: String,
    pub split: Option<String>,
}

const BASE_COLUMNS: [&str; 4] = ["id", "audio", "text", "category"];

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let mut declared: Option<Vec<String>> = None;
        let mut header: Option<bool> = None; // whether a split column exists
        let mut records = Vec::new();
        let mut seen_labels = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(list) = comment.trim().strip_prefix("categories:") {
                    if declared.is_some() {
                        return Err(Error::Format(format!(
                            "{}:{lineno}: repeated categories directive",
                            path.display()
                        )));
                    }
                    let labels: Vec<String> = list
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect();
                    if labels.is_empty() {
                        return Err(Error::Format(format!(
                            "{}:{lineno}: empty categories directive",
                            path.display()
                        )));
                    }
                    declared = Some(labels);
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match header {
                None => {
                    let has_split = match fields.len() {
                        4 => false,
                        5 if fields[4] == "split" => true,
                        _ => {
                            return Err(Error::Format(format!(
                                "{}:{lineno}: header must be id/audio/text/category[/split], got '{line}'",
                                path.display()
                            )))
                        }
                    };
                    if fields[..4] != BASE_COLUMNS {
                        return Err(Error::Format(format!(
                            "{}:{lineno}: header must be id/audio/text/category[/split], got '{line}'",
                            path.display()
                        )));
                    }
                    header = Some(has_split);
                }
                Some(has_split) => {
                    let want = if has_split { 5 } else { 4 };
                    if fields.len() != want {
                        return Err(Error::Format(format!(
                            "{}:{lineno}: expected {want} fields, got {}",
                            path.display(),
                            fields.len()
                        )));
                    }
                    if !valid_id(fields[0]) {
                        return Err(Error::Input(format!(
                            "{}:{lineno}: id '{}' (use letters, digits, '.', '_', '-')",
                            path.display(),
                            fields[0]
                        )));
                    }
                    for (name, value) in ["audio", "text", "category"].iter().zip(&fields[1..4]) {
                        if value.is_empty() {
                            return Err(Error::Format(format!(
                                "{}:{lineno}: empty {name} field",
                                path.display()
                            )));
                        }
                    }
                    let split = fields
                        .get(4)
                        .map(|s| s.to_string())
                        .filter(|s| !s.is_empty());
                    let category = fields[3].to_string();
                    if !seen_labels.contains(&category) {
                        seen_labels.push(category.clone());
                    }
                    records.push(ManifestRecord {
                        id: fields[0].to_string(),
                        audio: resolve(dir, fields[1]),
                        text: resolve(dir, fields[2]),
                        category,
                        split,
                    });
                }
            }
        }

        if records.is_empty() {
            return Err(Error::Input(format!(
                "{}: no records",
                path.display()
            )));
        }

        let mut ids = BTreeSet::new();
        for r in &records {
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Input(format!(
                    "{}: duplicate id '{}'",
                    path.display(),
                    r.id
                )));
            }
        }

        let labels = match declared {
            Some(labels) => {
                for r in &records {
                    if !labels.contains(&r.category) {
                        return Err(Error::Input(format!(
                            "{}: category '{}' of '{}' is not in the declared set",
                            path.display(),
                            r.category,
                            r.id
                        )));
                    }
                }
                labels
            }
            None => seen_labels,
        };

        let mut missing = Vec::new();
        for r in &records {
            for file in [&r.audio, &r.text] {
                if !file.exists() {
                    missing.push(format!("{} (item '{}')", file.display(), r.id));
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::Input(format!(
                "{}: {} referenced file(s) missing: {}",
                path.display(),
                missing.len(),
                missing.join(", ")
            )));
        }

        Ok(Manifest { records, labels })
    }

    /// Picks the records a command works on. `flag` is the `--split`
    /// value: a tag, or "all". Without a flag, manifests carrying split
    /// tags are filtered by `default_tag` and untagged manifests are
    /// used whole.
    pub fn select_split(&self, flag: Option<&str>, default_tag: &str) -> Result<Vec<&ManifestRecord>> {
        let tagged = self.records.iter().any(|r| r.split.is_some());
        let tag = match flag {
            Some("all") => None,
            Some(t) => Some(t),
            None if tagged => Some(default_tag),
            None => None,
        };
        match tag {
            None => Ok(self.records.iter().collect()),
            Some(t) => {
                let picked: Vec<&ManifestRecord> = self
                    .records
                    .iter()
                    .filter(|r| r.split.as_deref() == Some(t))
                    .collect();
                if picked.is_empty() {
                    return Err(Error::Input(format!("no records tagged split '{t}'")));
                }
                Ok(picked)
            }
        }
    }

    /// Category index per record in `records`, against `self.labels`.
    pub fn category_indices(&self, records: &[&ManifestRecord]) -> Vec<usize> {
        records
            .iter()
            .map(|r| {
                self.labels
                    .iter()
                    .position(|l| l == &r.category)
                    .expect("record categories were checked against the label set at load")
            })
            .collect()
    }
}

fn resolve(dir: &Path, field: &str) -> PathBuf {
    let p = Path::new(field);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

/// Writes a manifest; rows keep their paths verbatim. A split column is
/// emitted only when some row carries a tag.
pub fn write_manifest(path: &Path, rows: &[ManifestRow], declared: Option<&[String]>) -> Result<()> {
    let has_split = rows.iter().any(|r| r.split.is_some());
    let mut out = String::new();
    if let Some(labels) = declared {
        out.push_str(&format!("# categories: {}\n", labels.join(",")));
    }
    out.push_str(&BASE_COLUMNS.join("\t"));
    if has_split {
        out.push_str("\tsplit");
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{}\t{}\t{}\t{}", r.id, r.audio, r.text, r.category));
        if has_split {
            out.push('\t');
            out.push_str(r.split.as_deref().unwrap_or(""));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}
