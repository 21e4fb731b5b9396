//! # sctx
//!
//! A miniature, fully testable transformer encoder-decoder lab whose
//! distinguishing feature is a pluggable *sentence-level context* mechanism:
//! a single vector summarizing the source sentence — pooled from the top
//! encoder layer or aggregated across all encoder layers — fused into every
//! decoder layer through per-layer feed-forward networks.
//!
//! The stack is self-contained:
//!
//! * [`tensor`] — dense tensors with a reverse-mode autodiff tape and a
//!   finite-difference gradient verifier,
//! * [`model`] — the encoder-decoder transformer exposing all per-layer
//!   encoder outputs and per-layer decoder hooks,
//! * [`context`] — the context providers (mean/max/attentive pooling,
//!   recurrent and decoder-conditioned layer aggregation) and the fusion
//!   networks,
//! * [`data`] — vocabularies, character/BPE tokenization, synthetic parallel
//!   tasks, batching,
//! * [`train`] — optimizer with warmup schedule, greedy/beam decoding, BLEU,
//!   paired bootstrap significance, speed instrumentation, and the probing
//!   harness,
//! * [`exp`] — experiment configs, run directories, and the ablation grid
//!   runner used by the `sctx` binary.
//!
//! See the crate `examples/` for one runnable program per major capability.

pub mod context;
pub mod data;
pub mod exp;
pub mod model;
pub mod tensor;
pub mod train;

pub use model::{Model, ModelConfig, Variant};
pub use tensor::{Mask, Scalar, Tape, Tensor, TensorError};
