//! Joint vocabulary of node labels and text tokens.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const ENTITY_TAG: usize = 4;
pub const RELATION_TAG: usize = 5;

/// Surface forms of the reserved ids, in id order.
pub const SPECIALS: [&str; 6] = ["<pad>", "<bos>", "<eos>", "<unk>", "<E>", "<R>"];

/// Bidirectional token/id map whose first entries are [`SPECIALS`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for s in SPECIALS {
            v.insert(s);
        }
        v
    }

    /// Builds a vocabulary from tokens in first-seen order; specials first.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self::new();
        for t in tokens {
            v.insert(t.as_ref());
        }
        v
    }

    /// Parses one token per line. Specials are added if the file omits them.
    pub fn from_lines(text: &str) -> Result<Self> {
        let toks: Vec<&str> = text.lines().map(|l| l.split('\t').next().unwrap_or("")).collect();
        if toks.iter().any(|t| t.is_empty()) {
            return Err(Error::Format("empty line in vocabulary file".into()));
        }
        Ok(Self::from_tokens(toks))
    }

    pub fn to_lines(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(id: usize) -> bool {
        id < SPECIALS.len()
    }
}
