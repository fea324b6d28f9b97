//! Trainers for the four model variants: end-to-end DCCA with the audio
//! CNN, DCCA on precomputed feature vectors, plain linear CCA, and the
//! margin-embedding baseline.
//!
//! The correlation objective is maximized; since the optimizer descends,
//! DCCA trainers negate the correlation gradients before backpropagation.
//! The margin loss is minimized and its gradients pass through unchanged.
//! Every trainer is deterministic: one seeded generator drives parameter
//! initialization, negative sampling, and epoch shuffles, in that order.

pub mod optimizer;
mod mve;

use rand::seq::SliceRandom;

use crate::cca::{self, CcaModel};
use crate::cca_loss::CcaLoss;
use crate::error::{Error, Result};
use crate::features::Spectrogram;
use crate::linalg::Matrix;
use crate::nn::tensor::{BatchData, DataShape, Tensor};
use crate::nn::{
    build_audio_cnn, build_sub_dnn, Activation, CnnVariant, LayerSpec, Mode, NetworkSpec,
    NetworkState,
};
use crate::rngutil::{rng_from_seed, SeededRng};
use optimizer::RmsProp;

/// Output dimension of each margin-embedding branch.
pub const MVE_EMBED_DIM: usize = 128;

/// The audio side of a dataset: raw spectrograms for end-to-end training
/// or fixed-length vectors for the feature-input variants.
#[derive(Debug, Clone)]
pub enum AudioView {
    /// One single-channel spectrogram per item, all the same shape.
    Spectrograms(Vec<Spectrogram>),
    /// Features×items.
    Vectors(Matrix),
}

/// Index-aligned paired views. `ids` may repeat: decimated sub-sequences
/// share their source item's id and category.
#[derive(Debug, Clone)]
pub struct PairedDataset {
    pub ids: Vec<String>,
    pub audio: AudioView,
    /// Features×items.
    pub text: Matrix,
    pub categories: Option<Vec<usize>>,
}

impl PairedDataset {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ids.len();
        if n == 0 {
            return Err(Error::Input("dataset is empty".into()));
        }
        if self.text.cols() != n {
            return Err(Error::dim(
                "paired dataset",
                format!("{n} text columns"),
                format!("{}", self.text.cols()),
            ));
        }
        if !self.text.all_finite() {
            return Err(Error::Input("text view contains non-finite values".into()));
        }
        match &self.audio {
            AudioView::Vectors(m) => {
                if m.cols() != n {
                    return Err(Error::dim(
                        "paired dataset",
                        format!("{n} audio columns"),
                        format!("{}", m.cols()),
                    ));
                }
                if !m.all_finite() {
                    return Err(Error::Input("audio view contains non-finite values".into()));
                }
            }
            AudioView::Spectrograms(specs) => {
                if specs.len() != n {
                    return Err(Error::dim(
                        "paired dataset",
                        format!("{n} spectrograms"),
                        format!("{}", specs.len()),
                    ));
                }
                let shape = specs[0].values.shape();
                for (i, s) in specs.iter().enumerate() {
                    if s.values.shape() != shape {
                        return Err(Error::dim(
                            "paired dataset",
                            format!("uniform spectrogram shape {shape:?}"),
                            format!("item {i} has {:?}", s.values.shape()),
                        ));
                    }
                    if !s.values.all_finite() {
                        return Err(Error::Input(format!(
                            "spectrogram {i} contains non-finite values"
                        )));
                    }
                }
            }
        }
        if let Some(cats) = &self.categories {
            if cats.len() != n {
                return Err(Error::dim(
                    "paired dataset",
                    format!("{n} category labels"),
                    format!("{}", cats.len()),
                ));
            }
        }
        Ok(())
    }

    /// Per-item audio shape as the network sees it.
    pub fn audio_shape(&self) -> DataShape {
        match &self.audio {
            AudioView::Spectrograms(specs) => DataShape::Planes {
                channels: 1,
                height: specs[0].bands(),
                width: specs[0].frames(),
            },
            AudioView::Vectors(m) => DataShape::Vector { len: m.rows() },
        }
    }

    /// Gathers the selected items into a network input batch.
    pub fn audio_batch(&self, idxs: &[usize]) -> Result<BatchData> {
        match &self.audio {
            AudioView::Spectrograms(specs) => {
                let (h, w) = specs[0].values.shape();
                let mut data = Vec::with_capacity(idxs.len() * h * w);
                for &i in idxs {
                    data.extend_from_slice(specs[i].values.data());
                }
                Ok(BatchData::Planes(Tensor::from_vec(idxs.len(), 1, h, w, data)?))
            }
            AudioView::Vectors(m) => Ok(BatchData::Vectors(select_columns(m, idxs))),
        }
    }

    /// Gathers the selected text columns.
    pub fn text_batch(&self, idxs: &[usize]) -> Matrix {
        select_columns(&self.text, idxs)
    }

    /// Clones the selected items into a new dataset, preserving order.
    pub fn subset(&self, idxs: &[usize]) -> PairedDataset {
        PairedDataset {
            ids: idxs.iter().map(|&i| self.ids[i].clone()).collect(),
            audio: match &self.audio {
                AudioView::Spectrograms(specs) => {
                    AudioView::Spectrograms(idxs.iter().map(|&i| specs[i].clone()).collect())
                }
                AudioView::Vectors(m) => AudioView::Vectors(select_columns(m, idxs)),
            },
            text: select_columns(&self.text, idxs),
            categories: self
                .categories
                .as_ref()
                .map(|c| idxs.iter().map(|&i| c[i]).collect()),
        }
    }
}

fn select_columns(m: &Matrix, idxs: &[usize]) -> Matrix {
    Matrix::from_fn(m.rows(), idxs.len(), |r, j| m[(r, idxs[j])])
}

/// Hyperparameters shared by all trainers.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Covariance ridge for the correlation objective and final fit.
    pub ridge: f64,
    /// Shared-space dimension D (branch output width).
    pub shared_dim: usize,
    pub seed: u64,
    /// Margin of the embedding hinge (margin-embedding variant only).
    pub margin: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 1000,
            epochs: 200,
            learning_rate: optimizer::DEFAULT_LEARNING_RATE,
            ridge: 1e-4,
            shared_dim: 30,
            seed: 0,
            margin: 0.3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(Error::Config("ridge must be non-negative".into()));
        }
        if self.shared_dim == 0 {
            return Err(Error::Config("shared_dim must be at least 1".into()));
        }
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return Err(Error::Config("margin must be positive".into()));
        }
        Ok(())
    }
}

/// Which trainer produced a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    JointDcca,
    FeatureDcca,
    LinearCca,
    Mve,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::JointDcca => "joint-dcca",
            Variant::FeatureDcca => "feature-dcca",
            Variant::LinearCca => "linear-cca",
            Variant::Mve => "mve",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "joint-dcca" => Ok(Variant::JointDcca),
            "feature-dcca" => Ok(Variant::FeatureDcca),
            "linear-cca" => Ok(Variant::LinearCca),
            "mve" => Ok(Variant::Mve),
            other => Err(Error::Usage(format!("unknown training variant '{other}'"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One recorded objective value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSample {
    pub epoch: usize,
    pub batch: usize,
    pub objective: f64,
}

/// A trained model of any variant. Which parts are present follows the
/// variant: neural branches for the DCCA/margin variants, a fitted CCA
/// for everything except the margin embedding.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub variant: Variant,
    pub audio_net: Option<NetworkState>,
    pub text_net: Option<NetworkState>,
    pub cca: Option<CcaModel>,
    pub loss_trace: Vec<LossSample>,
    pub config: TrainConfig,
}

impl TrainedModel {
    /// Checks the variant/part correspondence; loaders call this.
    pub fn validate(&self) -> Result<()> {
        let (want_nets, want_cca) = match self.variant {
            Variant::JointDcca | Variant::FeatureDcca => (true, true),
            Variant::LinearCca => (false, true),
            Variant::Mve => (true, false),
        };
        if want_nets != self.audio_net.is_some() || want_nets != self.text_net.is_some() {
            return Err(Error::Format(format!(
                "{} model must {} neural branches",
                self.variant,
                if want_nets { "carry" } else { "not carry" }
            )));
        }
        if want_cca != self.cca.is_some() {
            return Err(Error::Format(format!(
                "{} model must {} a fitted CCA block",
                self.variant,
                if want_cca { "carry" } else { "not carry" }
            )));
        }
        Ok(())
    }

    /// Shared-space embedding of an audio batch: branch output (inference
    /// mode) followed by the canonical projection when one is fitted.
    /// Returns all fitted components; callers truncate rows for a smaller k.
    pub fn embed_audio(&mut self, batch: BatchData) -> Result<Matrix> {
        let out = match &mut self.audio_net {
            Some(net) => net
                .forward(batch, Mode::Infer)?
                .into_vectors("audio embedding")?,
            None => batch.into_vectors("audio embedding")?,
        };
        match &self.cca {
            Some(model) => model.transform_x(&out),
            None => Ok(out),
        }
    }

    /// Shared-space embedding of text columns; see [`TrainedModel::embed_audio`].
    pub fn embed_text(&mut self, text: &Matrix) -> Result<Matrix> {
        let out = match &mut self.text_net {
            Some(net) => net
                .forward(BatchData::Vectors(text.clone()), Mode::Infer)?
                .into_vectors("text embedding")?,
            None => text.clone(),
        };
        match &self.cca {
            Some(model) => model.transform_y(&out),
            None => Ok(out),
        }
    }

    /// Dimension of the embeddings produced by this model.
    pub fn embed_dim(&self) -> usize {
        match (&self.cca, &self.text_net) {
            (Some(model), _) => model.components(),
            (None, Some(net)) => net.spec.output_shape().map(|s| s.len()).unwrap_or(0),
            (None, None) => 0,
        }
    }
}

/// End-to-end training: audio CNN plus sub-DNN against the text sub-DNN,
/// coupled by the correlation objective. The audio view must be
/// spectrograms shaped for the CNN (20 or 96 bands, 161 frames).
pub fn train_joint_dcca(data: &PairedDataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    data.validate()?;
    cfg.validate()?;
    let specs = match &data.audio {
        AudioView::Spectrograms(s) => s,
        AudioView::Vectors(_) => {
            return Err(Error::Usage(
                "joint training needs spectrogram audio; use the feature variant for vectors"
                    .into(),
            ))
        }
    };
    let variant = match specs[0].bands() {
        20 => CnnVariant::Mfcc,
        96 => CnnVariant::Mel,
        other => {
            return Err(Error::dim(
                "joint training",
                "20 (mfcc) or 96 (mel) bands".to_string(),
                format!("{other}"),
            ))
        }
    };
    let cnn = build_audio_cnn(variant);
    if data.audio_shape() != cnn.input {
        return Err(Error::dim(
            "joint training",
            format!("{}", cnn.input),
            format!("{}", data.audio_shape()),
        ));
    }
    let flat = cnn.output_len()?;
    let head = build_sub_dnn(flat, cfg.shared_dim);
    let audio_spec = NetworkSpec {
        input: cnn.input,
        layers: cnn.layers.into_iter().chain(head.layers).collect(),
    };
    let text_spec = build_sub_dnn(data.text.rows(), cfg.shared_dim);
    train_dcca_with_specs(data, cfg, audio_spec, text_spec, Variant::JointDcca)
}

/// DCCA over precomputed feature vectors: two sub-DNNs and the
/// correlation objective.
pub fn train_feature_dcca(data: &PairedDataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    data.validate()?;
    cfg.validate()?;
    let dx = match &data.audio {
        AudioView::Vectors(m) => m.rows(),
        AudioView::Spectrograms(_) => {
            return Err(Error::Usage(
                "feature training needs vector audio; use the joint variant for spectrograms"
                    .into(),
            ))
        }
    };
    let audio_spec = build_sub_dnn(dx, cfg.shared_dim);
    let text_spec = build_sub_dnn(data.text.rows(), cfg.shared_dim);
    train_dcca_with_specs(data, cfg, audio_spec, text_spec, Variant::FeatureDcca)
}

/// Plain CCA on the raw vector views; a thin wrapper over the fit.
pub fn train_linear_cca(data: &PairedDataset, k: usize, ridge: f64) -> Result<TrainedModel> {
    data.validate()?;
    let audio = match &data.audio {
        AudioView::Vectors(m) => m,
        AudioView::Spectrograms(_) => {
            return Err(Error::Usage("linear CCA needs vector audio views".into()))
        }
    };
    let model = cca::fit(audio, &data.text, k, ridge)?;
    Ok(TrainedModel {
        variant: Variant::LinearCca,
        audio_net: None,
        text_net: None,
        cca: Some(model),
        loss_trace: Vec::new(),
        config: TrainConfig {
            shared_dim: k,
            ridge,
            epochs: 0,
            ..TrainConfig::default()
        },
    })
}

/// Margin-embedding baseline: twin 512/256/128 tanh branches trained with
/// the symmetric triplet hinge; one non-paired partner is sampled per item
/// up front and reused all training long.
pub fn train_mve(data: &PairedDataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    data.validate()?;
    cfg.validate()?;
    let dx = match &data.audio {
        AudioView::Vectors(m) => m.rows(),
        AudioView::Spectrograms(_) => {
            return Err(Error::Usage("margin embedding needs vector audio views".into()))
        }
    };
    let n = data.len();
    if n < 2 {
        return Err(Error::Input(
            "margin embedding needs at least 2 items to sample negatives".into(),
        ));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut audio_net = NetworkState::init(&build_mve_branch(dx), &mut rng)?;
    let mut text_net = NetworkState::init(&build_mve_branch(data.text.rows()), &mut rng)?;

    // One fixed non-paired partner per item.
    let negatives: Vec<usize> = (0..n)
        .map(|i| {
            let j = rand::Rng::gen_range(&mut rng, 0..n - 1);
            if j >= i {
                j + 1
            } else {
                j
            }
        })
        .collect();

    let mut opt_audio = RmsProp::new(cfg.learning_rate);
    let mut opt_text = RmsProp::new(cfg.learning_rate);
    let mut trace = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut batch_no = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                log::warn!(
                    "epoch {epoch}: dropping trailing batch of {} item(s)",
                    chunk.len()
                );
                continue;
            }
            // Items first, their negatives behind them, one forward pass.
            let mut extended: Vec<usize> = chunk.to_vec();
            extended.extend(chunk.iter().map(|&i| negatives[i]));

            audio_net.zero_grads();
            text_net.zero_grads();
            let a_emb = audio_net
                .forward(data.audio_batch(&extended)?, Mode::Train)?
                .into_vectors("margin audio branch")?;
            let t_emb = text_net
                .forward(BatchData::Vectors(data.text_batch(&extended)), Mode::Train)?
                .into_vectors("margin text branch")?;
            let (objective, ga, gt) = mve::mve_batch(&a_emb, &t_emb, chunk.len(), cfg.margin);
            if !objective.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_no,
                });
            }
            trace.push(LossSample {
                epoch,
                batch: batch_no,
                objective,
            });
            audio_net.backward(BatchData::Vectors(ga))?;
            text_net.backward(BatchData::Vectors(gt))?;
            step_or_diverge(&mut opt_audio, &mut audio_net, epoch, batch_no)?;
            step_or_diverge(&mut opt_text, &mut text_net, epoch, batch_no)?;
            batch_no += 1;
        }
    }
    if trace.is_empty() {
        return Err(Error::Usage(
            "no batch was large enough to train on; lower batch_size or add data".into(),
        ));
    }
    Ok(TrainedModel {
        variant: Variant::Mve,
        audio_net: Some(audio_net),
        text_net: Some(text_net),
        cca: None,
        loss_trace: trace,
        config: cfg.clone(),
    })
}

/// Twin-branch spec of the margin embedding: batch-norm before each dense
/// layer, tanh after each.
fn build_mve_branch(input_dim: usize) -> NetworkSpec {
    let dense = |i, o| LayerSpec::Dense {
        inputs: i,
        outputs: o,
    };
    NetworkSpec {
        input: DataShape::Vector { len: input_dim },
        layers: vec![
            LayerSpec::BatchNorm,
            dense(input_dim, 512),
            LayerSpec::Activation(Activation::Tanh),
            LayerSpec::BatchNorm,
            dense(512, 256),
            LayerSpec::Activation(Activation::Tanh),
            LayerSpec::BatchNorm,
            dense(256, MVE_EMBED_DIM),
            LayerSpec::Activation(Activation::Tanh),
        ],
    }
}

/// Shared DCCA loop: both branches forward, correlation objective,
/// negated gradients back, RMSProp steps; afterwards a fresh CCA is
/// fitted on the full training outputs in inference mode (the canonical
/// projection is a batch statistic, so the deployable one comes from the
/// whole training set).
pub(crate) fn train_dcca_with_specs(
    data: &PairedDataset,
    cfg: &TrainConfig,
    audio_spec: NetworkSpec,
    text_spec: NetworkSpec,
    variant: Variant,
) -> Result<TrainedModel> {
    let mut rng = rng_from_seed(cfg.seed);
    let mut audio_net = NetworkState::init(&audio_spec, &mut rng)?;
    let mut text_net = NetworkState::init(&text_spec, &mut rng)?;
    let mut opt_audio = RmsProp::new(cfg.learning_rate);
    let mut opt_text = RmsProp::new(cfg.learning_rate);
    let mut loss = CcaLoss::new(cfg.ridge, None);

    // Below 2·D samples the batch covariance is rank-deficient.
    let min_batch = 2 * cfg.shared_dim;
    let n = data.len();
    let mut trace = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut batch_no = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < min_batch {
                log::warn!(
                    "epoch {epoch}: dropping trailing batch of {} items (covariance needs {min_batch})",
                    chunk.len()
                );
                continue;
            }
            audio_net.zero_grads();
            text_net.zero_grads();
            let a_out = audio_net
                .forward(data.audio_batch(chunk)?, Mode::Train)?
                .into_vectors("audio branch output")?;
            let t_out = text_net
                .forward(BatchData::Vectors(data.text_batch(chunk)), Mode::Train)?
                .into_vectors("text branch output")?;
            let objective = loss.forward(&a_out, &t_out)?;
            if !objective.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_no,
                });
            }
            trace.push(LossSample {
                epoch,
                batch: batch_no,
                objective,
            });
            let (gx, gy) = loss.backward()?;
            // Maximize correlation: descend on its negation.
            audio_net.backward(BatchData::Vectors(gx.scaled(-1.0)))?;
            text_net.backward(BatchData::Vectors(gy.scaled(-1.0)))?;
            step_or_diverge(&mut opt_audio, &mut audio_net, epoch, batch_no)?;
            step_or_diverge(&mut opt_text, &mut text_net, epoch, batch_no)?;
            batch_no += 1;
        }
    }
    if trace.is_empty() {
        return Err(Error::Usage(format!(
            "no batch reached the {min_batch} items the covariance needs; \
             lower shared_dim or raise batch_size"
        )));
    }

    let a_full = infer_audio_outputs(&mut audio_net, data, cfg.batch_size)?;
    let t_full = infer_text_outputs(&mut text_net, data, cfg.batch_size)?;
    let cca_model = cca::fit(&a_full, &t_full, cfg.shared_dim, cfg.ridge)?;

    Ok(TrainedModel {
        variant,
        audio_net: Some(audio_net),
        text_net: Some(text_net),
        cca: Some(cca_model),
        loss_trace: trace,
        config: cfg.clone(),
    })
}

fn step_or_diverge(
    opt: &mut RmsProp,
    net: &mut NetworkState,
    epoch: usize,
    batch: usize,
) -> Result<()> {
    opt.step(net).map_err(|e| match e {
        Error::Numerical(_) => Error::Divergence { epoch, batch },
        other => other,
    })
}

fn infer_audio_outputs(
    net: &mut NetworkState,
    data: &PairedDataset,
    chunk_size: usize,
) -> Result<Matrix> {
    let idxs: Vec<usize> = (0..data.len()).collect();
    let mut cols: Option<Matrix> = None;
    for (c, chunk) in idxs.chunks(chunk_size.max(1)).enumerate() {
        let out = net
            .forward(data.audio_batch(chunk)?, Mode::Infer)?
            .into_vectors("audio branch output")?;
        let all = cols.get_or_insert_with(|| Matrix::zeros(out.rows(), data.len()));
        for (j, &i) in chunk.iter().enumerate() {
            debug_assert_eq!(i, c * chunk_size.max(1) + j);
            for r in 0..out.rows() {
                all[(r, i)] = out[(r, j)];
            }
        }
    }
    cols.ok_or_else(|| Error::Input("dataset is empty".into()))
}

fn infer_text_outputs(
    net: &mut NetworkState,
    data: &PairedDataset,
    chunk_size: usize,
) -> Result<Matrix> {
    let idxs: Vec<usize> = (0..data.len()).collect();
    let mut cols: Option<Matrix> = None;
    for chunk in idxs.chunks(chunk_size.max(1)) {
        let out = net
            .forward(BatchData::Vectors(data.text_batch(chunk)), Mode::Infer)?
            .into_vectors("text branch output")?;
        let all = cols.get_or_insert_with(|| Matrix::zeros(out.rows(), data.len()));
        for (j, &i) in chunk.iter().enumerate() {
            for r in 0..out.rows() {
                all[(r, i)] = out[(r, j)];
            }
        }
    }
    cols.ok_or_else(|| Error::Input("dataset is empty".into()))
}

/// Seeded generator type used across trainers; re-exported for callers
/// that pre-draw auxiliary randomness (splits, subsamples).
pub type TrainRng = SeededRng;
