//! Model hyperparameters and variant selection.

use super::ModelError;

/// Which sentence-context mechanism the decoder is wired with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Plain encoder-decoder, no context parameters at all.
    Vanilla,
    /// Context = mean pooling of the top encoder layer.
    ShallowMean,
    /// Context = max pooling of the top encoder layer.
    ShallowMax,
    /// Context = attentive pooling of the top encoder layer, queried by the
    /// max-pooled embedding layer.
    ShallowAtt,
    /// Per-layer summaries aggregated by a gated recurrent cell.
    DeepRnn,
    /// Per-layer summaries mixed by decoder-state-conditioned weights,
    /// recomputed at every decoding step and decoder layer.
    DeepTam,
}

pub const ALL_VARIANTS: [Variant; 6] = [
    Variant::Vanilla,
    Variant::ShallowMean,
    Variant::ShallowMax,
    Variant::ShallowAtt,
    Variant::DeepRnn,
    Variant::DeepTam,
];

impl Variant {
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        match s {
            "vanilla" => Ok(Variant::Vanilla),
            "shallow-mean" => Ok(Variant::ShallowMean),
            "shallow-max" => Ok(Variant::ShallowMax),
            "shallow-att" => Ok(Variant::ShallowAtt),
            "deep-rnn" => Ok(Variant::DeepRnn),
            "deep-tam" => Ok(Variant::DeepTam),
            other => Err(ModelError::Config(format!(
                "unknown variant {other:?} (vanilla | shallow-mean | shallow-max | shallow-att | deep-rnn | deep-tam)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::ShallowMean => "shallow-mean",
            Variant::ShallowMax => "shallow-max",
            Variant::ShallowAtt => "shallow-att",
            Variant::DeepRnn => "deep-rnn",
            Variant::DeepTam => "deep-tam",
        }
    }

    /// True for every variant that fuses a context vector into the decoder.
    pub fn uses_context(&self) -> bool {
        !matches!(self, Variant::Vanilla)
    }

    pub fn is_deep(&self) -> bool {
        matches!(self, Variant::DeepRnn | Variant::DeepTam)
    }
}

/// Pooling function applied per encoder layer by the deep variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalKind {
    Mean,
    Max,
    Att,
}

impl GlobalKind {
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        match s {
            "mean" => Ok(GlobalKind::Mean),
            "max" => Ok(GlobalKind::Max),
            "att" => Ok(GlobalKind::Att),
            other => Err(ModelError::Config(format!(
                "unknown global kind {other:?} (mean | max | att)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GlobalKind::Mean => "mean",
            GlobalKind::Max => "max",
            GlobalKind::Att => "att",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub vocab_src: usize,
    pub vocab_tgt: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff_enc: usize,
    pub d_ff_dec: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub dropout: f64,
    pub variant: Variant,
    /// Per-layer pooling used by the deep variants. Attentive by default.
    pub deep_global: GlobalKind,
    pub max_len: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale base: d=64, 4 heads, 2+2 layers, feed-forward width 128.
    pub fn base_toy(vocab_src: usize, vocab_tgt: usize) -> Self {
        ModelConfig {
            vocab_src,
            vocab_tgt,
            d_model: 64,
            n_heads: 4,
            d_ff_enc: 128,
            d_ff_dec: 128,
            n_enc_layers: 2,
            n_dec_layers: 2,
            dropout: 0.1,
            variant: Variant::Vanilla,
            deep_global: GlobalKind::Att,
            max_len: 64,
            seed: 1,
        }
    }

    /// Parameter-matched plain baseline: decoder feed-forward width tripled,
    /// no context machinery.
    pub fn medium_toy(vocab_src: usize, vocab_tgt: usize) -> Self {
        ModelConfig {
            d_ff_dec: 3 * 128,
            ..Self::base_toy(vocab_src, vocab_tgt)
        }
    }

    /// Tiny configuration for gradient verification: d=16, 2 heads. The
    /// feed-forward width is kept very narrow so a forward pass evaluates
    /// few relu kinks, which keeps kink-certified probe seeds common.
    pub fn grad_check_toy(vocab_src: usize, vocab_tgt: usize) -> Self {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            d_ff_enc: 4,
            d_ff_dec: 4,
            dropout: 0.0,
            max_len: 16,
            ..Self::base_toy(vocab_src, vocab_tgt)
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Inner width of the per-decoder-layer fusion networks.
    pub fn fusion_width(&self) -> usize {
        self.d_ff_dec
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(ModelError::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.n_enc_layers == 0 || self.n_dec_layers == 0 {
            return Err(ModelError::Config("layer counts must be positive".into()));
        }
        if self.vocab_src < 5 || self.vocab_tgt < 5 {
            return Err(ModelError::Config(
                "vocabularies must cover the four reserved ids plus content".into(),
            ));
        }
        if self.max_len < 2 {
            return Err(ModelError::Config("max_len must be at least 2".into()));
        }
        Ok(())
    }
}
