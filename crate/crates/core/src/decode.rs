//! Greedy and beam-search generation.
//!
//! Both searches drive a [`StepScorer`], which returns next-token
//! log-probabilities for a prefix of generated tokens. EOS is suppressed
//! until `min_len` tokens exist, and generation stops after `max_len`.
//!
//! Beam hypotheses are ranked by `log P / lp(L)` with the GNMT penalty
//! `lp(L) = ((5 + L) / 6)^alpha`, where `L` counts scored steps (the
//! generated tokens plus the final EOS, if one was emitted).

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::model::Graformer;
use crate::model::GraphInput;
use crate::tensor::Element;
use crate::vocab::EOS;

/// Source of next-token log-probabilities.
pub trait StepScorer {
    fn vocab_size(&self) -> usize;

    /// Log-probabilities over the vocabulary after `prefix` (generated
    /// tokens only, without BOS).
    fn log_probs(&mut self, prefix: &[usize]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub beams: usize,
    pub length_penalty: f64,
    pub min_len: usize,
    pub max_len: usize,
    #[serde(default = "default_eos")]
    pub eos: usize,
}

fn default_eos() -> usize {
    EOS
}

impl DecodeConfig {
    pub fn greedy(min_len: usize, max_len: usize) -> Self {
        Self {
            beams: 1,
            length_penalty: 0.0,
            min_len,
            max_len,
            eos: EOS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        contract!(self.beams >= 1, "beams must be >= 1");
        contract!(
            self.min_len <= self.max_len,
            "min_len {} > max_len {}",
            self.min_len,
            self.max_len
        );
        Ok(())
    }
}

/// `((5 + len) / 6)^alpha`
pub fn length_penalty(len: usize, alpha: f64) -> f64 {
    ((5.0 + len as f64) / 6.0).powf(alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens, EOS excluded.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    /// Number of scored steps.
    pub steps: usize,
    /// `log_prob / lp(steps)`.
    pub score: f64,
}

fn masked_log_probs<S: StepScorer + ?Sized>(scorer: &mut S, prefix: &[usize], cfg: &DecodeConfig) -> Result<Vec<f64>> {
    let mut lp = scorer.log_probs(prefix)?;
    contract!(
        lp.len() == scorer.vocab_size() && cfg.eos < lp.len(),
        "scorer returned {} log-probs for vocabulary {} (eos {})",
        lp.len(),
        scorer.vocab_size(),
        cfg.eos
    );
    if prefix.len() < cfg.min_len {
        lp[cfg.eos] = f64::NEG_INFINITY;
    }
    Ok(lp)
}

/// Arg-max decoding; ties go to the lowest token id.
pub fn greedy_decode<S: StepScorer + ?Sized>(scorer: &mut S, cfg: &DecodeConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let mut out = Vec::new();
    while out.len() < cfg.max_len {
        let lp = masked_log_probs(scorer, &out, cfg)?;
        let mut best = 0;
        for (tok, &v) in lp.iter().enumerate() {
            if v > lp[best] {
                best = tok;
            }
        }
        if best == cfg.eos {
            break;
        }
        out.push(best);
    }
    Ok(out)
}

/// Beam search with length penalty. Among the top `beams` candidates of a
/// step, those ending in EOS move to the finished pool; the best non-EOS
/// candidates continue. Search stops once `beams` hypotheses are finished or
/// no live beam remains; beams reaching `max_len` are finished as they are.
pub fn beam_search<S: StepScorer + ?Sized>(scorer: &mut S, cfg: &DecodeConfig) -> Result<Hypothesis> {
    cfg.validate()?;
    let alpha = cfg.length_penalty;
    let finish = |tokens: Vec<usize>, log_prob: f64, steps: usize| Hypothesis {
        tokens,
        log_prob,
        steps,
        score: log_prob / length_penalty(steps, alpha),
    };
    let mut live: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<Hypothesis> = Vec::new();

    while !live.is_empty() && finished.len() < cfg.beams {
        if live[0].0.len() >= cfg.max_len {
            for (tokens, lp) in live.drain(..) {
                let steps = tokens.len();
                finished.push(finish(tokens, lp, steps));
            }
            break;
        }
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (b, (tokens, score)) in live.iter().enumerate() {
            let lp = masked_log_probs(scorer, tokens, cfg)?;
            for (tok, &v) in lp.iter().enumerate() {
                if v > f64::NEG_INFINITY {
                    candidates.push((score + v, b, tok));
                }
            }
        }
        candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut next = Vec::with_capacity(cfg.beams);
        for (rank, &(score, b, tok)) in candidates.iter().enumerate() {
            if rank >= cfg.beams && next.len() >= cfg.beams {
                break;
            }
            let prefix = &live[b].0;
            if tok == cfg.eos {
                if rank < cfg.beams {
                    finished.push(finish(prefix.clone(), score, prefix.len() + 1));
                }
            } else if next.len() < cfg.beams {
                let mut tokens = prefix.clone();
                tokens.push(tok);
                next.push((tokens, score));
            }
        }
        live = next;
    }

    let mut best: Option<Hypothesis> = None;
    for h in finished {
        if best.as_ref().map_or(true, |b| h.score > b.score) {
            best = Some(h);
        }
    }
    Ok(best.expect("beam search always finishes at least one hypothesis"))
}

/// Scores continuations with a trained model for one input graph; the
/// encoder runs once and each step re-runs the decoder on the full prefix.
pub struct ModelScorer<'m, T: Element> {
    model: &'m Graformer<T>,
    memory: (usize, Vec<T>),
}

impl<'m, T: Element> ModelScorer<'m, T> {
    pub fn new(model: &'m Graformer<T>, graph: &GraphInput) -> Result<Self> {
        Ok(Self {
            model,
            memory: model.encode_values(graph)?,
        })
    }
}

impl<T: Element> StepScorer for ModelScorer<'_, T> {
    fn vocab_size(&self) -> usize {
        self.model.config().vocab_size
    }

    fn log_probs(&mut self, prefix: &[usize]) -> Result<Vec<f64>> {
        self.model.next_log_probs(&self.memory, prefix)
    }
}

/// Greedy output when `cfg.beams == 1`, beam search otherwise.
pub fn generate<T: Element>(model: &Graformer<T>, graph: &GraphInput, cfg: &DecodeConfig) -> Result<Vec<usize>> {
    let mut scorer = ModelScorer::new(model, graph)?;
    if cfg.beams == 1 {
        greedy_decode(&mut scorer, cfg)
    } else {
        Ok(beam_search(&mut scorer, cfg)?.tokens)
    }
}
