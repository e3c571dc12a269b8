//! Corpus-level text generation metrics.

mod bleu;
mod chrf;

pub use bleu::{corpus_bleu, BleuStats};
pub use chrf::{corpus_chrf, ChrfStats, CHRF_BETA, CHAR_ORDER, WORD_ORDER};

use std::collections::HashMap;

use crate::error::{contract, Result};

pub(crate) fn ngram_counts<T: std::hash::Hash + Eq + Clone>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && items.len() >= n {
        for w in items.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

pub(crate) fn check_refs<S: AsRef<str>>(hyps: &[S], refs: &[Vec<S>]) -> Result<()> {
    contract!(!hyps.is_empty(), "empty corpus");
    contract!(
        hyps.len() == refs.len(),
        "{} hypotheses but {} reference sets",
        hyps.len(),
        refs.len()
    );
    for (i, r) in refs.iter().enumerate() {
        contract!(!r.is_empty(), "hypothesis {i} has no reference");
    }
    Ok(())
}

/// Regroups parallel reference files (one string per hypothesis each) into
/// one reference set per hypothesis.
pub fn transpose_references<S: Clone>(files: &[Vec<S>]) -> Result<Vec<Vec<S>>> {
    let n = files.first().map_or(0, Vec::len);
    for (k, f) in files.iter().enumerate() {
        contract!(f.len() == n, "reference file {k} has {} lines, expected {n}", f.len());
    }
    Ok((0..n).map(|i| files.iter().map(|f| f[i].clone()).collect()).collect())
}
