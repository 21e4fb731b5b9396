//! Transformer encoder-decoder with per-layer hooks for sentence context.
//!
//! Post-norm residual layout throughout (`LayerNorm(x + Dropout(f(x)))`),
//! sinusoidal positions, target embedding shared with the output projection.
//! The encoder exposes all layer outputs `H^0..H^L`; each decoder layer
//! fuses the configured sentence-context vector into its input before
//! self-attention.

mod config;
mod count;
mod decoder;
mod encoder;
mod init;
mod layers;

pub use config::{GlobalKind, ModelConfig, Variant, ALL_VARIANTS};
pub use count::{count_parameters, ParamCount};
pub use decoder::DecodeSession;

use crate::data::Batch;
use crate::tensor::{
    Ids, Mask, ParamSet, Scalar, Tape, Tensor, TensorError, WatchedParams,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("sequence of length {len} exceeds max_len {max}")]
    Length { len: usize, max: usize },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// All encoder layer outputs for a batch: index 0 is the position-encoded
/// embedding layer, indices 1..=L the transformer layers. Every entry is
/// `[B, T, d]`; `pad` marks real tokens.
#[derive(Debug)]
pub struct EncoderOutput<S: Scalar> {
    pub layers: Vec<Tensor<S>>,
    pub pad: Mask,
}

impl<S: Scalar> EncoderOutput<S> {
    pub fn top(&self) -> &Tensor<S> {
        self.layers.last().unwrap()
    }

    pub fn embedding_layer(&self) -> &Tensor<S> {
        &self.layers[0]
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len() - 1
    }
}

/// Read access to parameters during a forward pass: either tape-tracked
/// (training, gradient checks) or raw (inference).
#[derive(Clone, Copy)]
pub enum ParamsView<'a, S: Scalar> {
    Watched(&'a WatchedParams<S>),
    Raw(&'a ParamSet<S>),
}

impl<'a, S: Scalar> ParamsView<'a, S> {
    pub fn get(&self, name: &str) -> Tensor<S> {
        match self {
            ParamsView::Watched(w) => w.get(name).clone(),
            ParamsView::Raw(p) => p
                .get(name)
                .unwrap_or_else(|| panic!("parameter {name} not registered"))
                .clone(),
        }
    }
}

/// Forward-pass mode: the effective dropout rate. Zero in evaluation and
/// verification; the tape's dropout stream must be armed for a nonzero rate
/// to have any effect.
#[derive(Debug, Clone, Copy)]
pub struct Mode {
    pub dropout: f64,
}

impl Mode {
    pub fn train(cfg: &ModelConfig) -> Self {
        Mode {
            dropout: cfg.dropout,
        }
    }

    pub fn eval() -> Self {
        Mode { dropout: 0.0 }
    }
}

/// Captured attention and mixing weights from one forward pass. Every entry
/// is a softmax output: rows sum to one over the unmasked support.
#[derive(Default)]
pub struct Trace<S: Scalar> {
    pub rows: Vec<(String, Tensor<S>)>,
}

impl<S: Scalar> Trace<S> {
    pub fn new() -> Self {
        Trace { rows: Vec::new() }
    }

    pub(crate) fn push(&mut self, name: String, weights: Tensor<S>) {
        self.rows.push((name, weights));
    }
}

pub(crate) type TraceOpt<'a, S> = Option<&'a mut Trace<S>>;

/// A model instance: hyperparameters plus the named parameter registry.
pub struct Model<S: Scalar> {
    pub config: ModelConfig,
    pub params: ParamSet<S>,
}

impl<S: Scalar> Model<S> {
    /// Fresh model with seeded fan-scaled uniform initialization.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = init::init_params(&config)?;
        Ok(Model { config, params })
    }

    /// Wraps restored parameters; the registry must exactly match what the
    /// configuration would create.
    pub fn from_params(config: ModelConfig, params: ParamSet<S>) -> Result<Self> {
        config.validate()?;
        let reference = init::init_params::<S>(&config)?;
        if reference.len() != params.len() {
            return Err(ModelError::Config(format!(
                "checkpoint has {} parameters, config implies {}",
                params.len(),
                reference.len()
            )));
        }
        for (name, t) in reference.iter() {
            match params.get(name) {
                Some(loaded) if loaded.shape() == t.shape() => {}
                Some(loaded) => {
                    return Err(ModelError::Config(format!(
                        "parameter {name}: checkpoint shape {:?}, config implies {:?}",
                        loaded.shape(),
                        t.shape()
                    )))
                }
                None => {
                    return Err(ModelError::Config(format!(
                        "checkpoint is missing parameter {name}"
                    )))
                }
            }
        }
        Ok(Model { config, params })
    }

    pub fn watch(&self, tape: &Tape<S>) -> WatchedParams<S> {
        self.params.watch_all(tape)
    }

    /// Teacher-forced logits `[B, T', V]` for a batch.
    pub fn teacher_logits(
        &self,
        view: ParamsView<'_, S>,
        batch: &Batch,
        mode: Mode,
        trace: TraceOpt<'_, S>,
    ) -> Result<Tensor<S>> {
        decoder::teacher_logits(&self.config, view, batch, mode, trace)
    }

    /// Teacher-forced logits with raw (untracked) parameters.
    pub fn teacher_logits_detached(&self, batch: &Batch, trace: TraceOpt<'_, S>) -> Result<Tensor<S>> {
        self.teacher_logits(ParamsView::Raw(&self.params), batch, Mode::eval(), trace)
    }

    /// Label-smoothed training loss for a batch, on tracked parameters.
    pub fn loss_from(
        &self,
        watched: &WatchedParams<S>,
        batch: &Batch,
        label_smoothing: f64,
        mode: Mode,
        trace: TraceOpt<'_, S>,
    ) -> Result<Tensor<S>> {
        let logits = self.teacher_logits(ParamsView::Watched(watched), batch, mode, trace)?;
        Ok(logits.cross_entropy(&batch.tgt_out, &batch.tgt_mask, label_smoothing)?)
    }

    /// Encoder outputs for raw parameters (inference, probing).
    pub fn encode_detached(&self, src: &Ids, src_mask: &Mask) -> Result<EncoderOutput<S>> {
        encoder::encode(
            &self.config,
            ParamsView::Raw(&self.params),
            src,
            src_mask,
            Mode::eval(),
            &mut None,
        )
    }

    /// Starts an incremental decoding session over one source sentence.
    pub fn start_decode(&self, src_tokens: &[usize]) -> Result<DecodeSession<'_, S>> {
        DecodeSession::start(self, src_tokens)
    }
}

