//! Dual-encoder EEG–text alignment trained with symmetric InfoNCE.
//!
//! The EEG path is a temporal convolution bank with a per-filter spatial
//! aggregation across channels, a width-3 max-pool, and a projection head.
//! The text path is a learned token table with mean pooling and its own
//! projection head. Both emit unit-norm embeddings of dimension `d`, so inner
//! product equals cosine similarity. The temporal and spatial stages are
//! adjacent linear maps, so they are evaluated in the cheaper
//! mix-channels-then-convolve order; the function computed is identical.

pub mod loss;
pub mod tokenizer;

mod head;
mod mat;
mod optim;
mod train;

#[allow(unused_imports)] // no_std builds need the trait; std test builds shadow it with inherent methods
use num_traits::Float;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::corpus::{CorpusError, Embedding, Segment};
pub use head::ProjectionHead;
pub use loss::{info_nce_loss, InfoNce};
pub use mat::Mat;
pub use tokenizer::Vocab;
pub use train::{train, train_supervised, TrainOutput};

pub const TAU_MIN: f64 = 0.01;
pub const TAU_MAX: f64 = 1.0;
pub const TAU_INIT: f64 = 0.07;

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("segment {id}: shape {got_channels}x{got_samples} does not match encoder {channels}x{samples}")]
    ShapeMismatch {
        id: String,
        got_channels: usize,
        got_samples: usize,
        channels: usize,
        samples: usize,
    },
    #[error("empty token sequence")]
    EmptyTokens,
    #[error("token id {id} outside table with {rows} rows")]
    TokenOutOfRange { id: u32, rows: usize },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("temperature {0} must be finite and positive")]
    BadTau(f64),
    #[error("batch shapes disagree: z has {z_rows} rows, u has {u_rows}")]
    BadBatch { z_rows: usize, u_rows: usize },
    #[error("invalid config: {0}")]
    BadConfig(&'static str),
    #[error("{have} pairs but batch size is {need}")]
    NotEnoughPairs { have: usize, need: usize },
    #[error("non-finite loss at batch {batch_index}")]
    Diverged { batch_index: usize },
    #[error("encoder produced a zero-norm vector")]
    DegenerateEmbedding,
}

impl From<CorpusError> for AlignError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::ZeroNormEmbedding => AlignError::DegenerateEmbedding,
            _ => AlignError::NonFiniteInput,
        }
    }
}

/// Encoder hyperparameters. `dim` defaults to 64; the paper-scale 512 is a
/// valid setting but desk corpora do not support it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub dim: usize,
    pub channels: usize,
    pub samples: usize,
    pub n_filters: usize,
    pub kernel_len: usize,
    pub pool: usize,
    pub hidden: usize,
    pub text_embed_dim: usize,
    pub max_tokens: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 64,
            channels: 19,
            samples: 2500,
            n_filters: 8,
            kernel_len: 10,
            pool: 3,
            hidden: 64,
            text_embed_dim: 64,
            max_tokens: 77,
            dropout: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), AlignError> {
        if self.dim == 0
            || self.channels == 0
            || self.n_filters == 0
            || self.kernel_len == 0
            || self.pool == 0
            || self.hidden == 0
            || self.text_embed_dim == 0
            || self.max_tokens == 0
        {
            return Err(AlignError::BadConfig("zero-sized dimension"));
        }
        if self.samples < self.kernel_len {
            return Err(AlignError::BadConfig("segment shorter than kernel"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(AlignError::BadConfig("dropout outside [0,1)"));
        }
        if self.pooled_len() == 0 {
            return Err(AlignError::BadConfig("pooling leaves no features"));
        }
        Ok(())
    }

    pub fn conv_len(&self) -> usize {
        self.samples - self.kernel_len + 1
    }

    pub fn pooled_len(&self) -> usize {
        self.conv_len() / self.pool
    }

    /// Flattened EEG feature width entering the projection head.
    pub fn eeg_feature_dim(&self) -> usize {
        self.n_filters * self.pooled_len()
    }
}

/// Every trainable weight of both encoders plus the learnable temperature,
/// stored as log τ. Batch-norm running statistics ride along as frozen
/// inference state.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    /// n_filters × kernel_len temporal convolution bank.
    pub temporal: Vec<f64>,
    /// n_filters × channels spatial aggregation weights.
    pub spatial: Vec<f64>,
    pub eeg_proj: ProjectionHead,
    /// vocab.table_rows() × text_embed_dim; row 0 is the unknown token.
    pub token_table: Vec<f64>,
    pub vocab: Vocab,
    pub text_proj: ProjectionHead,
    pub log_tau: f64,
}

impl EncoderParams {
    /// Seeded init: weights uniform in ±1/√fan_in drawn in declaration order
    /// (temporal, spatial, EEG head, token table, text head); biases zero;
    /// τ starts at [`TAU_INIT`].
    pub fn init(config: EncoderConfig, vocab: Vocab, rng: &mut impl Rng) -> Result<Self, AlignError> {
        config.validate()?;
        let temporal = head::uniform_fan_in(config.n_filters * config.kernel_len, config.kernel_len, rng);
        let spatial = head::uniform_fan_in(config.n_filters * config.channels, config.channels, rng);
        let eeg_proj = ProjectionHead::init(config.eeg_feature_dim(), config.hidden, config.dim, rng);
        let token_table = head::uniform_fan_in(
            vocab.table_rows() * config.text_embed_dim,
            config.text_embed_dim,
            rng,
        );
        let text_proj = ProjectionHead::init(config.text_embed_dim, config.hidden, config.dim, rng);
        Ok(EncoderParams {
            config,
            temporal,
            spatial,
            eeg_proj,
            token_table,
            vocab,
            text_proj,
            log_tau: TAU_INIT.ln(),
        })
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    fn check_segment(&self, seg: &Segment) -> Result<(), AlignError> {
        let cfg = &self.config;
        if seg.channels != cfg.channels || seg.samples != cfg.samples {
            return Err(AlignError::ShapeMismatch {
                id: seg.id.clone(),
                got_channels: seg.channels,
                got_samples: seg.samples,
                channels: cfg.channels,
                samples: cfg.samples,
            });
        }
        Ok(())
    }
}

/// Activation cache for one EEG forward pass, enough to backpropagate into
/// the temporal and spatial weights.
pub(crate) struct EegCache {
    /// n_filters × samples spatially mixed signal.
    mixed: Vec<f64>,
    /// n_filters × pooled_len winning convolution offsets.
    argmax: Vec<u32>,
}

/// Temporal/spatial feature extraction shared by training and inference:
/// per-filter channel mix, temporal convolution, width-`pool` max-pool,
/// flatten.
pub(crate) fn eeg_features(params: &EncoderParams, seg: &Segment) -> (Vec<f64>, EegCache) {
    let cfg = &params.config;
    let (t, t2) = (cfg.samples, cfg.pooled_len());
    let mut mixed = vec![0.0; cfg.n_filters * t];
    for f in 0..cfg.n_filters {
        let weights = &params.spatial[f * cfg.channels..(f + 1) * cfg.channels];
        let out = &mut mixed[f * t..(f + 1) * t];
        for (c, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(seg.channel(c)) {
                *o += w * x as f64;
            }
        }
    }
    let mut flat = vec![0.0; cfg.n_filters * t2];
    let mut argmax = vec![0u32; cfg.n_filters * t2];
    for f in 0..cfg.n_filters {
        let m = &mixed[f * t..(f + 1) * t];
        let taps = &params.temporal[f * cfg.kernel_len..(f + 1) * cfg.kernel_len];
        for j in 0..t2 {
            let mut best = f64::NEG_INFINITY;
            let mut best_at = 0usize;
            for o in 0..cfg.pool {
                let at = j * cfg.pool + o;
                let window = &m[at..at + cfg.kernel_len];
                let s: f64 = taps.iter().zip(window).map(|(h, v)| h * v).sum();
                if s > best {
                    best = s;
                    best_at = at;
                }
            }
            flat[f * t2 + j] = best;
            argmax[f * t2 + j] = best_at as u32;
        }
    }
    (flat, EegCache { mixed, argmax })
}

/// Backward pass matching [`eeg_features`]. Adds into the temporal and
/// spatial gradient buffers; the input segment needs no gradient.
pub(crate) fn eeg_features_backward(
    params: &EncoderParams,
    seg: &Segment,
    cache: &EegCache,
    d_flat: &[f64],
    d_temporal: &mut [f64],
    d_spatial: &mut [f64],
) {
    let cfg = &params.config;
    let (t, t2) = (cfg.samples, cfg.pooled_len());
    let mut d_mixed = vec![0.0; t];
    for f in 0..cfg.n_filters {
        d_mixed.iter_mut().for_each(|v| *v = 0.0);
        let m = &cache.mixed[f * t..(f + 1) * t];
        let taps = &params.temporal[f * cfg.kernel_len..(f + 1) * cfg.kernel_len];
        let d_taps = &mut d_temporal[f * cfg.kernel_len..(f + 1) * cfg.kernel_len];
        for j in 0..t2 {
            let g = d_flat[f * t2 + j];
            if g == 0.0 {
                continue;
            }
            let at = cache.argmax[f * t2 + j] as usize;
            for k in 0..cfg.kernel_len {
                d_taps[k] += g * m[at + k];
                d_mixed[at + k] += g * taps[k];
            }
        }
        let d_w = &mut d_spatial[f * cfg.channels..(f + 1) * cfg.channels];
        for c in 0..cfg.channels {
            let x = seg.channel(c);
            let mut acc = 0.0;
            for (dm, &xv) in d_mixed.iter().zip(x) {
                acc += dm * xv as f64;
            }
            d_w[c] += acc;
        }
    }
}

/// Mean-pooled token-table lookup. Ids must fit the table; the sequence is
/// truncated to `max_tokens` first.
pub(crate) fn text_features(params: &EncoderParams, tokens: &[u32]) -> Result<Vec<f64>, AlignError> {
    if tokens.is_empty() {
        return Err(AlignError::EmptyTokens);
    }
    let e = params.config.text_embed_dim;
    let rows = params.token_table.len() / e;
    let used = &tokens[..tokens.len().min(params.config.max_tokens)];
    let mut feat = vec![0.0; e];
    for &id in used {
        let id = id as usize;
        if id >= rows {
            return Err(AlignError::TokenOutOfRange {
                id: id as u32,
                rows,
            });
        }
        let row = &params.token_table[id * e..(id + 1) * e];
        for (fv, rv) in feat.iter_mut().zip(row) {
            *fv += rv;
        }
    }
    let inv = 1.0 / used.len() as f64;
    feat.iter_mut().for_each(|v| *v *= inv);
    Ok(feat)
}

/// Encodes one segment to a unit-norm embedding (inference mode: frozen
/// batch-norm statistics, no dropout). Deterministic per input.
pub fn encode_eeg(params: &EncoderParams, seg: &Segment) -> Result<Embedding, AlignError> {
    params.check_segment(seg)?;
    let (flat, _) = eeg_features(params, seg);
    let raw = params.eeg_proj.forward_infer(&flat);
    Ok(Embedding::normalized(&raw)?)
}

/// Encodes a token-id sequence to a unit-norm embedding. Sequences longer
/// than the configured maximum are truncated before encoding.
pub fn encode_text(params: &EncoderParams, tokens: &[u32]) -> Result<Embedding, AlignError> {
    let feat = text_features(params, tokens)?;
    let raw = params.text_proj.forward_infer(&feat);
    Ok(Embedding::normalized(&raw)?)
}

/// Training hyperparameters. The paper-scale batch size is 128; the desk
/// default is 32.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.01,
            epochs: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AlignError> {
        if self.batch_size < 2 {
            return Err(AlignError::BadConfig("batch size below 2"));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(AlignError::BadConfig("betas outside (0,1)"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(AlignError::BadConfig("non-positive learning rate"));
        }
        if self.weight_decay < 0.0 {
            return Err(AlignError::BadConfig("negative weight decay"));
        }
        Ok(())
    }
}

/// Row-normalizes a matrix, returning the norms for the backward pass.
pub(crate) fn normalize_rows(m: &Mat) -> Result<(Mat, Vec<f64>), AlignError> {
    let mut out = m.clone();
    let mut norms = vec![0.0; m.rows];
    for i in 0..m.rows {
        let r = out.row_mut(i);
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(AlignError::DegenerateEmbedding);
        }
        r.iter_mut().for_each(|v| *v /= norm);
        norms[i] = norm;
    }
    Ok((out, norms))
}

/// Gradient through row normalization: dv = (dz − z·(z⋅dz)) / ‖v‖.
pub(crate) fn normalize_rows_backward(z: &Mat, norms: &[f64], d_z: &Mat) -> Mat {
    let mut d_pre = Mat::zeros(z.rows, z.cols);
    for i in 0..z.rows {
        let zi = z.row(i);
        let dzi = d_z.row(i);
        let proj: f64 = zi.iter().zip(dzi).map(|(a, b)| a * b).sum();
        let out = d_pre.row_mut(i);
        for k in 0..z.cols {
            out[k] = (dzi[k] - zi[k] * proj) / norms[i];
        }
    }
    d_pre
}
