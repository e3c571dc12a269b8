use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LabelTokenizer;
use crate::vocab::{Vocabulary, UNK};

/// Word-boundary marker of BPE pieces.
pub const WORD_MARK: char = '▁';

/// Serializable tokenizer description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerSpec {
    pub kind: TokenizerKind,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub merges: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    Whitespace,
    Bpe,
}

/// Splits text into vocabulary pieces, either on whitespace or with BPE
/// merges applied inside each whitespace-separated word.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    vocab: Vocabulary,
    kind: TokenizerKind,
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

impl Tokenizer {
    pub fn whitespace(vocab: Vocabulary) -> Self {
        Self {
            vocab,
            kind: TokenizerKind::Whitespace,
            merges: Vec::new(),
            ranks: HashMap::new(),
        }
    }

    pub fn bpe(vocab: Vocabulary, merges: Vec<(String, String)>) -> Self {
        let ranks = merges.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        Self {
            vocab,
            kind: TokenizerKind::Bpe,
            merges,
            ranks,
        }
    }

    /// Whitespace tokenizer over every token of `texts`, in first-seen order.
    pub fn build_whitespace<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        Self::whitespace(Vocabulary::from_tokens(texts.into_iter().flat_map(str::split_whitespace)))
    }

    /// Reads a vocabulary file (one piece per line, optional tab-separated
    /// score) and an optional merges file (`left right` per line).
    pub fn from_text(vocab: &str, merges: Option<&str>) -> Result<Self> {
        let vocab = Vocabulary::from_lines(vocab)?;
        match merges {
            None => Ok(Self::whitespace(vocab)),
            Some(m) => {
                let mut pairs = Vec::new();
                for (i, line) in m.lines().enumerate() {
                    if line.trim().is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let mut it = line.split_whitespace();
                    match (it.next(), it.next(), it.next()) {
                        (Some(a), Some(b), None) => pairs.push((a.to_string(), b.to_string())),
                        _ => return Err(Error::Format(format!("merges line {}: expected two pieces", i + 1))),
                    }
                }
                Ok(Self::bpe(vocab, pairs))
            }
        }
    }

    pub fn spec(&self) -> TokenizerSpec {
        TokenizerSpec {
            kind: self.kind,
            tokens: self.vocab.tokens().to_vec(),
            merges: self.merges.clone(),
        }
    }

    pub fn from_spec(spec: &TokenizerSpec) -> Self {
        let vocab = Vocabulary::from_tokens(&spec.tokens);
        match spec.kind {
            TokenizerKind::Whitespace => Self::whitespace(vocab),
            TokenizerKind::Bpe => Self::bpe(vocab, spec.merges.clone()),
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Adds a token to the vocabulary if missing and returns its id.
    pub fn add_token(&mut self, token: &str) -> usize {
        self.vocab.insert(token)
    }

    pub fn kind(&self) -> TokenizerKind {
        self.kind
    }

    fn bpe_word(&self, word: &str) -> Vec<String> {
        let mut syms: Vec<String> = std::iter::once(WORD_MARK).chain(word.chars()).map(String::from).collect();
        loop {
            let best = syms
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, i)))
                .min();
            let Some((_, i)) = best else { break };
            let merged = format!("{}{}", syms[i], syms[i + 1]);
            syms.splice(i..i + 2, [merged]);
        }
        let mut out = Vec::with_capacity(syms.len());
        for s in syms {
            if self.vocab.get(&s).is_some() {
                out.push(s);
            } else {
                out.extend(s.chars().map(String::from));
            }
        }
        out
    }

    /// Vocabulary pieces of `text`; out-of-vocabulary pieces are kept as
    /// strings and map to the unknown id on [`Tokenizer::encode`].
    pub fn segment(&self, text: &str) -> Vec<String> {
        match self.kind {
            TokenizerKind::Whitespace => text.split_whitespace().map(String::from).collect(),
            TokenizerKind::Bpe => text.split_whitespace().flat_map(|w| self.bpe_word(w)).collect(),
        }
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        self.segment(text).iter().map(|p| self.vocab.id(p)).collect()
    }

    /// Text of `ids`; special tokens other than the unknown token are
    /// dropped.
    pub fn decode(&self, ids: &[usize]) -> String {
        let pieces = ids
            .iter()
            .filter(|&&i| i == UNK || !Vocabulary::is_special(i))
            .filter_map(|&i| self.vocab.token(i));
        match self.kind {
            TokenizerKind::Whitespace => pieces.collect::<Vec<_>>().join(" "),
            TokenizerKind::Bpe => {
                let mut s = String::new();
                for p in pieces {
                    if p == "<unk>" && !s.is_empty() && !s.ends_with(' ') {
                        s.push(' ');
                    }
                    s.push_str(p);
                }
                s.replace(WORD_MARK, " ").split_whitespace().collect::<Vec<_>>().join(" ")
            }
        }
    }
}

impl LabelTokenizer for Tokenizer {
    fn tokenize_label(&self, label: &str) -> Vec<String> {
        self.segment(label)
    }
}
