//! On-disk formats: binary feature files, the sectioned model container,
//! and the loss-trace table.
//!
//! Everything binary is little-endian with magic bytes and a version up
//! front. Writes land in a temp file first and rename into place, so a
//! crash never leaves a half-written artifact under the final name.
//! Saving is canonical: save → load → save reproduces the bytes exactly.

use std::fs;
use std::path::{Path, PathBuf};

use crate::cca::CcaModel;
use crate::error::{Error, Result};
use crate::features::{Spectrogram, SpectrogramKind, FRAME_LENGTH, HOP};
use crate::linalg::Matrix;
use crate::nn::LayerState;
use crate::nn::{Activation, LayerSpec, NetworkSpec, NetworkState};
use crate::nn::tensor::DataShape;
use crate::rngutil::rng_from_seed;
use crate::training::{LossSample, TrainConfig, TrainedModel, Variant};

pub const FEATURE_MAGIC: &[u8; 8] = b"DUETFEA\0";
pub const MODEL_MAGIC: &[u8; 8] = b"DUETMDL\0";
pub const FORMAT_VERSION: u32 = 1;

/// Payload tag of a feature file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Mfcc,
    Mel,
    Vector,
    Generic,
}

impl FeatureKind {
    pub fn tag(self) -> u8 {
        match self {
            FeatureKind::Mfcc => 0,
            FeatureKind::Mel => 1,
            FeatureKind::Vector => 2,
            FeatureKind::Generic => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(FeatureKind::Mfcc),
            1 => Ok(FeatureKind::Mel),
            2 => Ok(FeatureKind::Vector),
            3 => Ok(FeatureKind::Generic),
            other => Err(Error::Format(format!("unknown feature kind tag {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Mel => "mel",
            FeatureKind::Vector => "vector",
            FeatureKind::Generic => "generic",
        }
    }
}

/// Writes bytes to a sibling temp file, then renames over `path`.
pub fn atomic_write(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let name = path
        .file_name()
        .ok_or_else(|| Error::Usage(format!("'{}' has no file name", path.display())))?;
    let mut tmp: PathBuf = dir.map(Path::to_path_buf).unwrap_or_default();
    tmp.push(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// FNV-1a over the raw bytes; the extraction index uses it to skip
/// unchanged inputs.
pub fn content_hash64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 8]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        Writer { buf }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], path: &Path, magic: &[u8; 8]) -> Result<Self> {
        let mut r = Reader {
            buf,
            pos: 0,
            path: path.display().to_string(),
        };
        let got = r.bytes(8)?;
        if got != magic {
            return Err(Error::Format(format!(
                "{}: wrong magic bytes; not a {} file",
                r.path,
                String::from_utf8_lossy(&magic[..7])
            )));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported format version {version}",
                r.path
            )));
        }
        Ok(r)
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "{}: truncated at byte {}",
                self.path, self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.bytes(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes after the payload",
                self.path,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Saves a feature matrix: magic, version, kind tag, rows, cols, then
/// row-major 64-bit floats.
pub fn save_feature(path: impl AsRef<Path>, kind: FeatureKind, values: &Matrix) -> Result<()> {
    let mut w = Writer::new(FEATURE_MAGIC);
    w.u8(kind.tag());
    w.u32(u32::try_from(values.rows()).map_err(|_| Error::Input("too many rows".into()))?);
    w.u32(u32::try_from(values.cols()).map_err(|_| Error::Input("too many cols".into()))?);
    w.f64s(values.data());
    atomic_write(path, &w.buf)
}

pub fn load_feature(path: impl AsRef<Path>) -> Result<(FeatureKind, Matrix)> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&raw, path, FEATURE_MAGIC)?;
    let kind = FeatureKind::from_tag(r.u8()?)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let data = r.f64s(rows * cols)?;
    r.finish()?;
    Ok((kind, Matrix::from_vec(rows, cols, data)?))
}

/// Saves a spectrogram under its own kind tag.
pub fn save_spectrogram(path: impl AsRef<Path>, s: &Spectrogram) -> Result<()> {
    let kind = match s.kind {
        SpectrogramKind::Mfcc => FeatureKind::Mfcc,
        SpectrogramKind::Mel => FeatureKind::Mel,
    };
    save_feature(path, kind, &s.values)
}

/// Loads a spectrogram; the file must carry a spectrogram kind. Framing
/// metadata is the pipeline's fixed frame length and hop.
pub fn load_spectrogram(path: impl AsRef<Path>) -> Result<Spectrogram> {
    let path = path.as_ref();
    let (kind, values) = load_feature(path)?;
    let kind = match kind {
        FeatureKind::Mfcc => SpectrogramKind::Mfcc,
        FeatureKind::Mel => SpectrogramKind::Mel,
        other => {
            return Err(Error::Format(format!(
                "{}: expected a spectrogram, found {} features",
                path.display(),
                other.name()
            )))
        }
    };
    Ok(Spectrogram {
        values,
        kind,
        frame_length: FRAME_LENGTH,
        hop: HOP,
    })
}

fn meta_text(model: &TrainedModel) -> String {
    let c = &model.config;
    // f64 Display is the shortest representation that parses back exactly.
    format!(
        "variant={}\nseed={}\nbatch_size={}\nepochs={}\nlearning_rate={}\nridge={}\nshared_dim={}\nmargin={}\n",
        model.variant, c.seed, c.batch_size, c.epochs, c.learning_rate, c.ridge, c.shared_dim,
        c.margin
    )
}

fn parse_meta(text: &str, path: &str) -> Result<(Variant, TrainConfig)> {
    let mut variant = None;
    let mut cfg = TrainConfig::default();
    let mut seen = std::collections::BTreeSet::new();
    for line in text.lines() {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("{path}: meta line '{line}' is not key=value")))?;
        if !seen.insert(key.to_string()) {
            return Err(Error::Format(format!("{path}: duplicate meta key '{key}'")));
        }
        let bad = |what: &str| Error::Format(format!("{path}: meta {key}='{value}' is not {what}"));
        match key {
            "variant" => variant = Some(Variant::from_name(value)?),
            "seed" => cfg.seed = value.parse().map_err(|_| bad("an integer"))?,
            "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("an integer"))?,
            "epochs" => cfg.epochs = value.parse().map_err(|_| bad("an integer"))?,
            "learning_rate" => cfg.learning_rate = value.parse().map_err(|_| bad("a number"))?,
            "ridge" => cfg.ridge = value.parse().map_err(|_| bad("a number"))?,
            "shared_dim" => cfg.shared_dim = value.parse().map_err(|_| bad("an integer"))?,
            "margin" => cfg.margin = value.parse().map_err(|_| bad("a number"))?,
            other => {
                return Err(Error::Format(format!("{path}: unknown meta key '{other}'")));
            }
        }
    }
    let want = [
        "variant",
        "seed",
        "batch_size",
        "epochs",
        "learning_rate",
        "ridge",
        "shared_dim",
        "margin",
    ];
    for key in want {
        if !seen.contains(key) {
            return Err(Error::Format(format!("{path}: meta key '{key}' is missing")));
        }
    }
    Ok((variant.expect("variant seen"), cfg))
}

fn spec_text(spec: &NetworkSpec) -> String {
    let mut out = String::new();
    match spec.input {
        DataShape::Planes {
            channels,
            height,
            width,
        } => out.push_str(&format!("input planes {channels} {height} {width}\n")),
        DataShape::Vector { len } => out.push_str(&format!("input vector {len}\n")),
    }
    for layer in &spec.layers {
        let line = match *layer {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
            } => format!("conv2d {in_channels} {out_channels} {kernel_h} {kernel_w}"),
            LayerSpec::MaxPool2d { pool_h, pool_w } => format!("maxpool2d {pool_h} {pool_w}"),
            LayerSpec::BatchNorm => "batchnorm".to_string(),
            LayerSpec::Dense { inputs, outputs } => format!("dense {inputs} {outputs}"),
            LayerSpec::Activation(a) => format!("activation {}", a.name()),
            LayerSpec::Flatten => "flatten".to_string(),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn parse_spec(text: &str, path: &str) -> Result<NetworkSpec> {
    let mut lines = text.lines();
    let bad = |line: &str| Error::Format(format!("{path}: bad network line '{line}'"));
    let head = lines.next().ok_or_else(|| bad("<empty>"))?;
    let mut parts = head.split_whitespace();
    let input = match (parts.next(), parts.next()) {
        (Some("input"), Some("planes")) => {
            let mut num = || -> Result<usize> {
                parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(head))
            };
            DataShape::Planes {
                channels: num()?,
                height: num()?,
                width: num()?,
            }
        }
        (Some("input"), Some("vector")) => DataShape::Vector {
            len: parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(head))?,
        },
        _ => return Err(bad(head)),
    };
    if parts.next().is_some() {
        return Err(bad(head));
    }
    let mut layers = Vec::new();
    for line in lines {
        let mut parts = parts_of(line);
        let kind = parts.next().ok_or_else(|| bad(line))?;
        let num = |parts: &mut std::str::SplitWhitespace| -> Result<usize> {
            parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(line))
        };
        let layer = match kind {
            "conv2d" => LayerSpec::Conv2d {
                in_channels: num(&mut parts)?,
                out_channels: num(&mut parts)?,
                kernel_h: num(&mut parts)?,
                kernel_w: num(&mut parts)?,
            },
            "maxpool2d" => LayerSpec::MaxPool2d {
                pool_h: num(&mut parts)?,
                pool_w: num(&mut parts)?,
            },
            "batchnorm" => LayerSpec::BatchNorm,
            "dense" => LayerSpec::Dense {
                inputs: num(&mut parts)?,
                outputs: num(&mut parts)?,
            },
            "activation" => LayerSpec::Activation(Activation::from_name(
                parts.next().ok_or_else(|| bad(line))?,
            )?),
            "flatten" => LayerSpec::Flatten,
            _ => return Err(bad(line)),
        };
        if parts.next().is_some() {
            return Err(bad(line));
        }
        layers.push(layer);
    }
    Ok(NetworkSpec { input, layers })
}

fn parts_of(line: &str) -> std::str::SplitWhitespace<'_> {
    line.split_whitespace()
}

/// Parameters and batch-norm running statistics, flattened in layer order.
fn net_params(net: &NetworkState) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in &net.layers {
        match layer {
            LayerState::Conv2d(st) => {
                out.extend_from_slice(&st.weights);
                out.extend_from_slice(&st.bias);
            }
            LayerState::Dense(st) => {
                out.extend_from_slice(&st.weights);
                out.extend_from_slice(&st.bias);
            }
            LayerState::BatchNorm(st) => {
                out.extend_from_slice(&st.gamma);
                out.extend_from_slice(&st.beta);
                out.extend_from_slice(&st.running_mean);
                out.extend_from_slice(&st.running_var);
            }
            _ => {}
        }
    }
    out
}

fn restore_net(spec: &NetworkSpec, params: &[f64], path: &str) -> Result<NetworkState> {
    // Init allocates the right shapes; every value is overwritten below.
    let mut net = NetworkState::init(spec, &mut rng_from_seed(0))?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[f64]> {
        if params.len() - pos < n {
            return Err(Error::Format(format!(
                "{path}: parameter payload shorter than the architecture needs"
            )));
        }
        let s = &params[pos..pos + n];
        pos += n;
        Ok(s)
    };
    for layer in &mut net.layers {
        let slots: Vec<&mut Vec<f64>> = match layer {
            LayerState::Conv2d(st) => vec![&mut st.weights, &mut st.bias],
            LayerState::Dense(st) => vec![&mut st.weights, &mut st.bias],
            LayerState::BatchNorm(st) => vec![
                &mut st.gamma,
                &mut st.beta,
                &mut st.running_mean,
                &mut st.running_var,
            ],
            _ => Vec::new(),
        };
        for slot in slots {
            let n = slot.len();
            slot.copy_from_slice(take(n)?);
        }
    }
    if pos != params.len() {
        return Err(Error::Format(format!(
            "{path}: {} parameter values beyond the architecture",
            params.len() - pos
        )));
    }
    Ok(net)
}

fn cca_block(model: &CcaModel) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.u32(model.wx.rows() as u32);
    w.u32(model.wy.rows() as u32);
    w.u32(model.components() as u32);
    w.f64s(model.wx.data());
    w.f64s(model.wy.data());
    w.f64s(&model.mean_x);
    w.f64s(&model.mean_y);
    w.f64s(&model.correlations);
    w.f64(model.ridge);
    w.buf
}

fn parse_cca(buf: &[u8], path: &Path) -> Result<CcaModel> {
    let mut r = Reader {
        buf,
        pos: 0,
        path: path.display().to_string(),
    };
    let dx = r.u32()? as usize;
    let dy = r.u32()? as usize;
    let k = r.u32()? as usize;
    let wx = Matrix::from_vec(dx, k, r.f64s(dx * k)?)?;
    let wy = Matrix::from_vec(dy, k, r.f64s(dy * k)?)?;
    let mean_x = r.f64s(dx)?;
    let mean_y = r.f64s(dy)?;
    let correlations = r.f64s(k)?;
    let ridge = r.f64()?;
    r.finish()?;
    Ok(CcaModel {
        wx,
        wy,
        mean_x,
        mean_y,
        correlations,
        ridge,
    })
}

/// Saves a trained model: a sectioned container holding the run meta,
/// each branch's architecture and parameters, and the fitted CCA block.
/// The loss trace is not part of the model; see [`save_loss_trace`].
pub fn save_model(path: impl AsRef<Path>, model: &TrainedModel) -> Result<()> {
    model.validate()?;
    let mut sections: Vec<(&str, Vec<u8>)> = Vec::new();
    sections.push(("meta", meta_text(model).into_bytes()));
    if let Some(net) = &model.audio_net {
        sections.push(("audio-net-spec", spec_text(&net.spec).into_bytes()));
        let mut w = Writer { buf: Vec::new() };
        w.f64s(&net_params(net));
        sections.push(("audio-net-params", w.buf));
    }
    if let Some(net) = &model.text_net {
        sections.push(("text-net-spec", spec_text(&net.spec).into_bytes()));
        let mut w = Writer { buf: Vec::new() };
        w.f64s(&net_params(net));
        sections.push(("text-net-params", w.buf));
    }
    if let Some(cca) = &model.cca {
        sections.push(("cca", cca_block(cca)));
    }

    let mut w = Writer::new(MODEL_MAGIC);
    w.u32(sections.len() as u32);
    for (name, payload) in &sections {
        w.u32(name.len() as u32);
        w.buf.extend_from_slice(name.as_bytes());
        w.u64(payload.len() as u64);
        w.buf.extend_from_slice(payload);
    }
    atomic_write(path, &w.buf)
}

/// Loads a model saved by [`save_model`]. The loss trace comes back
/// empty; it lives in its own file.
pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&raw, path, MODEL_MAGIC)?;
    let count = r.u32()? as usize;
    let mut sections: Vec<(String, Vec<u8>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.bytes(name_len)?.to_vec())
            .map_err(|_| Error::Format(format!("{}: section name is not UTF-8", path.display())))?;
        let payload_len = r.u64()? as usize;
        let payload = r.bytes(payload_len)?.to_vec();
        if sections.iter().any(|(n, _)| *n == name) {
            return Err(Error::Format(format!(
                "{}: duplicate section '{name}'",
                path.display()
            )));
        }
        sections.push((name, payload));
    }
    r.finish()?;
    let p = path.display().to_string();
    let get = |name: &str| sections.iter().find(|(n, _)| n == name).map(|(_, b)| b);
    let meta = get("meta")
        .ok_or_else(|| Error::Format(format!("{p}: missing meta section")))?;
    let meta = std::str::from_utf8(meta)
        .map_err(|_| Error::Format(format!("{p}: meta section is not UTF-8")))?;
    let (variant, config) = parse_meta(meta, &p)?;

    let load_net = |prefix: &str| -> Result<Option<NetworkState>> {
        match (get(&format!("{prefix}-spec")), get(&format!("{prefix}-params"))) {
            (None, None) => Ok(None),
            (Some(spec), Some(params)) => {
                let spec_text = std::str::from_utf8(spec)
                    .map_err(|_| Error::Format(format!("{p}: {prefix}-spec is not UTF-8")))?;
                let spec = parse_spec(spec_text, &p)?;
                if params.len() % 8 != 0 {
                    return Err(Error::Format(format!(
                        "{p}: {prefix}-params length is not a multiple of 8"
                    )));
                }
                let values: Vec<f64> = params
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Ok(Some(restore_net(&spec, &values, &p)?))
            }
            _ => Err(Error::Format(format!(
                "{p}: {prefix} needs both spec and params sections"
            ))),
        }
    };
    let audio_net = load_net("audio-net")?;
    let text_net = load_net("text-net")?;
    let cca = get("cca").map(|b| parse_cca(b, path)).transpose()?;

    let model = TrainedModel {
        variant,
        audio_net,
        text_net,
        cca,
        loss_trace: Vec::new(),
        config,
    };
    model.validate()?;
    Ok(model)
}

/// Saves the loss trace as tab-separated (epoch, batch, objective) rows,
/// full precision, with a leading comment naming the columns.
pub fn save_loss_trace(path: impl AsRef<Path>, trace: &[LossSample]) -> Result<()> {
    let mut out = String::from("# epoch\tbatch\tobjective\n");
    for s in trace {
        out.push_str(&format!("{}\t{}\t{}\n", s.epoch, s.batch, s.objective));
    }
    atomic_write(path, out.as_bytes())
}

pub fn load_loss_trace(path: impl AsRef<Path>) -> Result<Vec<LossSample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut trace = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let bad = || {
            Error::Format(format!(
                "{}:{}: expected epoch<TAB>batch<TAB>objective",
                path.display(),
                no + 1
            ))
        };
        let epoch = parts.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
        let batch = parts.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
        let objective = parts.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        trace.push(LossSample {
            epoch,
            batch,
            objective,
        });
    }
    Ok(trace)
}
