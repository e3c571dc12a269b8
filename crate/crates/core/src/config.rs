//! Declarative run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::IngestOptions;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::relpos::RelPosConfig;
use crate::train::TrainConfig;

/// Hyperparameters of a training run. Key names follow the usual
/// hyperparameter table of the architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model_dimension: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub feedforward_dimension: usize,
    pub attention_dropout: f64,
    pub dropout: f64,
    pub input_dropout: f64,
    pub text_self_attention_range: usize,
    pub graph_self_attention_range: i64,
    pub same_range: i64,
    /// Offset of same-entity position codes; defaults to the largest
    /// shortest-path length in the training graphs (at least the graph
    /// self-attention range).
    #[serde(default)]
    pub max_graph_diameter: Option<i64>,
    pub gradient_accumulation: usize,
    /// Global gradient norm bound; 0 disables clipping.
    pub gradient_clipping: f64,
    pub label_smoothing: f64,
    pub l2_regularizer: f64,
    pub batch_size: usize,
    pub beams: usize,
    pub length_penalty: f64,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Fixed optimizer step size instead of the relative step.
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub data: DataConfig,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Vocabulary file, relative to the data directory. A whitespace
    /// vocabulary is built from the training set when absent.
    #[serde(default)]
    pub vocab_file: Option<PathBuf>,
    /// BPE merges file, relative to the data directory.
    #[serde(default)]
    pub merges_file: Option<PathBuf>,
    #[serde(default = "yes")]
    pub lowercase: bool,
    #[serde(default = "yes")]
    pub tag_labels: bool,
    #[serde(default = "yes")]
    pub include_title: bool,
    #[serde(default)]
    pub link_title: bool,
    /// Abort on malformed records instead of skipping them.
    #[serde(default = "yes")]
    pub strict: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self::from_ingest(None, None, &IngestOptions::default())
    }
}

impl DataConfig {
    fn from_ingest(vocab_file: Option<PathBuf>, merges_file: Option<PathBuf>, o: &IngestOptions) -> Self {
        Self {
            vocab_file,
            merges_file,
            lowercase: o.lowercase,
            tag_labels: o.tag_labels,
            include_title: o.include_title,
            link_title: o.link_title,
            strict: o.strict,
        }
    }

    pub fn ingest(&self) -> IngestOptions {
        IngestOptions {
            lowercase: self.lowercase,
            tag_labels: self.tag_labels,
            include_title: self.include_title,
            link_title: self.link_title,
            strict: self.strict,
            require_text: true,
        }
    }
}

impl RunConfig {
    pub fn webnlg() -> Self {
        Self {
            model_dimension: 256,
            heads: 8,
            encoder_layers: 3,
            decoder_layers: 3,
            feedforward_dimension: 512,
            attention_dropout: 0.3,
            dropout: 0.1,
            input_dropout: 0.0,
            text_self_attention_range: 25,
            graph_self_attention_range: 4,
            same_range: 10,
            max_graph_diameter: None,
            gradient_accumulation: 3,
            gradient_clipping: 1.0,
            label_smoothing: 0.25,
            l2_regularizer: 3e-3,
            batch_size: 4,
            beams: 2,
            length_penalty: 5.0,
            epochs: 200,
            seed: 0,
            learning_rate: None,
            data: DataConfig::default(),
        }
    }

    pub fn agenda() -> Self {
        Self {
            model_dimension: 400,
            encoder_layers: 4,
            decoder_layers: 5,
            feedforward_dimension: 2000,
            attention_dropout: 0.1,
            input_dropout: 0.1,
            text_self_attention_range: 50,
            graph_self_attention_range: 6,
            gradient_accumulation: 2,
            label_smoothing: 0.3,
            l2_regularizer: 3e-4,
            batch_size: 8,
            epochs: 40,
            data: DataConfig {
                link_title: true,
                ..DataConfig::default()
            },
            ..Self::webnlg()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn model_config(&self, vocab_size: usize, d_max: i64) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: self.model_dimension,
            heads: self.heads,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            d_ff: self.feedforward_dimension,
            input_dropout: self.input_dropout,
            attention_dropout: self.attention_dropout,
            dropout: self.dropout,
            text_range: self.text_self_attention_range,
            relpos: RelPosConfig {
                d_max,
                n_delta: self.graph_self_attention_range,
                n_p: self.same_range,
            },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            grad_accumulation: self.gradient_accumulation,
            grad_clip: (self.gradient_clipping > 0.0).then_some(self.gradient_clipping),
            label_smoothing: self.label_smoothing,
            l2: self.l2_regularizer,
            learning_rate: self.learning_rate,
            selection_beams: 1,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config(8, self.max_graph_diameter.unwrap_or(self.graph_self_attention_range))
            .validate()?;
        self.train_config().validate()?;
        crate::error::contract!(self.beams >= 1, "beams must be >= 1");
        Ok(())
    }
}
