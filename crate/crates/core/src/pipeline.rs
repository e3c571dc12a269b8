//! End-to-end training and generation over dataset files.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::data::{build_tokenizer, ingest, read_jsonl, DatasetRecord, IngestOptions, Instance, Tokenizer, TokenizerSpec};
use crate::decode::{generate, DecodeConfig};
use crate::error::{contract, Result};
use crate::graph::IncidenceGraph;
use crate::metrics::corpus_bleu;
use crate::model::Graformer;
use crate::relpos::shortest_path_lengths;
use crate::train::{epoch_log_line, CurriculumDataset, EpochReport, Example, Trainer};

/// Checkpoint metadata needed to run a trained model on new records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tokenizer: TokenizerSpec,
    pub ingest: IngestOptions,
    pub decode: DecodeConfig,
    pub epoch: usize,
    pub val_bleu: Option<f64>,
}

/// A model with its tokenizer, preprocessing options and decoding bounds.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub model: Graformer<f32>,
    pub tokenizer: Tokenizer,
    pub ingest: IngestOptions,
    pub decode: DecodeConfig,
}

impl Bundle {
    pub fn load(path: &Path) -> Result<(Self, Metadata)> {
        let (model, meta) = checkpoint::load::<f32>(path)?;
        let meta: Metadata = serde_json::from_value(meta)?;
        let tokenizer = Tokenizer::from_spec(&meta.tokenizer);
        contract!(
            tokenizer.vocab().len() == model.config().vocab_size,
            "checkpoint vocabulary has {} entries, model expects {}",
            tokenizer.vocab().len(),
            model.config().vocab_size
        );
        Ok((
            Self {
                model,
                tokenizer,
                ingest: meta.ingest,
                decode: meta.decode,
            },
            meta,
        ))
    }

    pub fn save(&self, path: &Path, epoch: usize, val_bleu: Option<f64>) -> Result<()> {
        let meta = Metadata {
            tokenizer: self.tokenizer.spec(),
            ingest: self.ingest,
            decode: self.decode,
            epoch,
            val_bleu,
        };
        checkpoint::save(path, &self.model, &serde_json::to_value(meta)?)
    }

    /// One decoded text per record, in input order. Records need no text.
    pub fn generate(&self, records: &[DatasetRecord], cfg: &DecodeConfig) -> Result<Vec<String>> {
        let opts = IngestOptions {
            require_text: false,
            strict: true,
            ..self.ingest
        };
        let instances = ingest(records, &self.tokenizer, &opts)?;
        self.generate_instances(instances.iter().map(|(_, i)| i), cfg)
    }

    fn generate_instances<'a>(&self, instances: impl Iterator<Item = &'a Instance>, cfg: &DecodeConfig) -> Result<Vec<String>> {
        instances
            .map(|inst| {
                let g = inst.graph_input(self.model.config())?;
                Ok(self.tokenizer.decode(&generate(&self.model, &g, cfg)?))
            })
            .collect()
    }
}

/// Longest finite directed shortest path in `g`.
pub fn max_path_length(g: &IncidenceGraph) -> usize {
    shortest_path_lengths(g).into_iter().flatten().flatten().max().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epochs: Vec<(EpochReport, Option<f64>)>,
    pub best_epoch: usize,
    pub best_checkpoint: PathBuf,
}

/// Trains on `<data_dir>/train.jsonl`, scoring `<data_dir>/val.jsonl` (if
/// present) with greedy decoding after every epoch. Every epoch is saved as
/// `epoch-NNN.ckpt` in `out_dir`; the epoch with the best validation BLEU
/// (the earliest on ties, the last without validation data) is copied to
/// `best.ckpt`. Log lines go to `log` and to `out_dir/train.log`.
pub fn train_from_dir(config: &RunConfig, data_dir: &Path, out_dir: &Path, mut log: impl FnMut(&str)) -> Result<TrainSummary> {
    config.validate()?;
    let train_records = read_jsonl(&data_dir.join("train.jsonl"))?;
    contract!(!train_records.is_empty(), "train.jsonl has no records");
    let val_path = data_dir.join("val.jsonl");
    let val_records = if val_path.exists() {
        read_jsonl(&val_path)?
    } else {
        Vec::new()
    };
    let options = config.data.ingest();

    let base = match &config.data.vocab_file {
        Some(v) => {
            let vocab = fs::read_to_string(data_dir.join(v))?;
            let merges = match &config.data.merges_file {
                Some(m) => Some(fs::read_to_string(data_dir.join(m))?),
                None => None,
            };
            Some(Tokenizer::from_text(&vocab, merges.as_deref())?)
        }
        None => None,
    };
    let tokenizer = build_tokenizer(&train_records, &options, base);
    let train = ingest(&train_records, &tokenizer, &options)?;
    contract!(!train.is_empty(), "no usable training records");
    let val = ingest(&val_records, &tokenizer, &options)?;
    let val_refs: Vec<Vec<String>> = val
        .iter()
        .map(|(i, _)| vec![options.text(&val_records[*i].text)])
        .collect();

    let d_max = config.max_graph_diameter.unwrap_or_else(|| {
        let longest = train.iter().map(|(_, i)| max_path_length(&i.graph)).max().unwrap_or(0) as i64;
        longest.max(config.graph_self_attention_range)
    });
    let model_config = config.model_config(tokenizer.vocab().len(), d_max);
    let model = Graformer::<f32>::new(model_config.clone(), config.seed)?;
    let examples: Vec<Example> = train
        .iter()
        .map(|(_, i)| i.example(&model_config))
        .collect::<Result<_>>()?;
    let lengths: Vec<usize> = examples.iter().map(|e| e.target.len()).collect();
    let curriculum = CurriculumDataset::new(&lengths, config.seed)?;
    let decode = DecodeConfig {
        beams: config.beams,
        length_penalty: config.length_penalty,
        min_len: *lengths.iter().min().expect("nonempty"),
        max_len: *lengths.iter().max().expect("nonempty"),
        eos: crate::vocab::EOS,
    };
    let selection = DecodeConfig {
        beams: 1,
        ..decode
    };

    fs::create_dir_all(out_dir)?;
    let mut log_file = fs::File::create(out_dir.join("train.log"))?;
    let mut trainer = Trainer::new(model, config.train_config())?;
    let mut bundle = Bundle {
        model: trainer.model().clone(),
        tokenizer,
        ingest: options,
        decode,
    };
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let best_path = out_dir.join("best.ckpt");
    for epoch in 1..=config.epochs {
        let report = trainer.train_epoch(&examples, &curriculum, epoch)?;
        bundle.model = trainer.model().clone();
        let bleu = if val.is_empty() {
            None
        } else {
            let hyps = bundle.generate_instances(val.iter().map(|(_, i)| i), &selection)?;
            Some(corpus_bleu(&hyps, &val_refs)?)
        };
        let line = epoch_log_line(&report, bleu);
        log(&line);
        writeln!(log_file, "{line}")?;
        let path = out_dir.join(format!("epoch-{epoch:03}.ckpt"));
        bundle.save(&path, epoch, bleu)?;
        let score = bleu.unwrap_or(f64::NEG_INFINITY);
        let improved = match best {
            None => true,
            Some((_, b)) => score > b || bleu.is_none(),
        };
        if improved {
            best = Some((epoch, score));
            fs::copy(&path, &best_path)?;
        }
        epochs.push((report, bleu));
    }
    Ok(TrainSummary {
        epochs,
        best_epoch: best.expect("at least one epoch").0,
        best_checkpoint: best_path,
    })
}
