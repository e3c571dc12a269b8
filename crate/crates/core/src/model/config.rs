use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::relpos::RelPosConfig;

/// Network shape and regularization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Size of the joint vocabulary of node labels and text tokens.
    pub vocab_size: usize,
    pub d_model: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub d_ff: usize,
    /// Dropout on embeddings right after lookup.
    pub input_dropout: f64,
    /// Dropout on attention weights.
    pub attention_dropout: f64,
    /// Dropout on sublayer outputs before the residual add.
    pub dropout: f64,
    /// Text self-attention range: relative offsets are clamped to `±text_range`.
    pub text_range: usize,
    pub relpos: RelPosConfig,
}

impl ModelConfig {
    /// Small configuration used by tests and examples.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: 8,
            heads: 2,
            encoder_layers: 1,
            decoder_layers: 1,
            d_ff: 16,
            input_dropout: 0.0,
            attention_dropout: 0.0,
            dropout: 0.0,
            text_range: 4,
            relpos: RelPosConfig {
                d_max: 4,
                n_delta: 4,
                n_p: 4,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        contract!(self.vocab_size >= 3, "vocabulary needs at least pad, bos and eos");
        contract!(
            self.d_model >= 1 && self.heads >= 1 && self.d_model % self.heads == 0,
            "d_model ({}) must be a positive multiple of heads ({})",
            self.d_model,
            self.heads
        );
        contract!(
            self.encoder_layers >= 1 && self.decoder_layers >= 1 && self.d_ff >= 1,
            "layer counts and d_ff must be >= 1"
        );
        contract!(self.text_range >= 1, "text_range must be >= 1");
        for (name, rate) in [
            ("input_dropout", self.input_dropout),
            ("attention_dropout", self.attention_dropout),
            ("dropout", self.dropout),
        ] {
            contract!((0.0..1.0).contains(&rate), "{name} = {rate} not in [0, 1)");
        }
        self.relpos.validate()
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}
