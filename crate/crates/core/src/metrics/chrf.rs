use std::collections::HashMap;

use crate::error::Result;

use super::{check_refs, ngram_counts};

pub const CHAR_ORDER: usize = 6;
pub const WORD_ORDER: usize = 2;
pub const CHRF_BETA: f64 = 2.0;

const ORDERS: usize = CHAR_ORDER + WORD_ORDER;

/// Per-order `(hypothesis n-grams, reference n-grams, matches)`; character
/// orders first, then word orders.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChrfStats {
    pub orders: [[usize; 3]; ORDERS],
}

fn overlap<T: std::hash::Hash + Eq + Clone>(h: &[T], r: &[T], n: usize) -> [usize; 3] {
    let hc = ngram_counts(h, n);
    let rc: HashMap<_, _> = ngram_counts(r, n);
    let matches = hc.iter().map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0))).sum();
    [hc.values().sum(), rc.values().sum(), matches]
}

impl ChrfStats {
    /// Character n-grams ignore whitespace; word n-grams split on it.
    pub fn pair(hyp: &str, reference: &str) -> Self {
        let hc: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
        let rc: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
        let hw: Vec<&str> = hyp.split_whitespace().collect();
        let rw: Vec<&str> = reference.split_whitespace().collect();
        let mut s = ChrfStats::default();
        for n in 1..=CHAR_ORDER {
            s.orders[n - 1] = overlap(&hc, &rc, n);
        }
        for n in 1..=WORD_ORDER {
            s.orders[CHAR_ORDER + n - 1] = overlap(&hw, &rw, n);
        }
        s
    }

    /// Stats against the reference giving the highest score; the first wins
    /// ties.
    pub fn sentence<S: AsRef<str>>(hyp: &str, refs: &[S]) -> Self {
        let mut best: Option<(f64, ChrfStats)> = None;
        for r in refs {
            let s = Self::pair(hyp, r.as_ref());
            let f = s.score();
            if best.map_or(true, |(bf, _)| f > bf) {
                best = Some((f, s));
            }
        }
        best.map(|b| b.1).unwrap_or_default()
    }

    pub fn add(&mut self, other: &Self) {
        for (a, b) in self.orders.iter_mut().zip(&other.orders) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
    }

    /// F-beta of precision and recall averaged over the orders in which
    /// either side has n-grams. Both sides empty scores 100.
    pub fn score(&self) -> f64 {
        let mut p = 0.0;
        let mut r = 0.0;
        let mut effective = 0;
        for &[hyp, rf, m] in &self.orders {
            if hyp == 0 && rf == 0 {
                continue;
            }
            effective += 1;
            if hyp > 0 {
                p += m as f64 / hyp as f64;
            }
            if rf > 0 {
                r += m as f64 / rf as f64;
            }
        }
        if effective == 0 {
            return 100.0;
        }
        p /= effective as f64;
        r /= effective as f64;
        let b2 = CHRF_BETA * CHRF_BETA;
        let denom = b2 * p + r;
        if denom == 0.0 {
            0.0
        } else {
            100.0 * (1.0 + b2) * p * r / denom
        }
    }
}

/// Corpus chrF++: statistics are summed over sentences before scoring.
pub fn corpus_chrf<S: AsRef<str>>(hyps: &[S], refs: &[Vec<S>]) -> Result<f64> {
    check_refs(hyps, refs)?;
    let mut total = ChrfStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&ChrfStats::sentence(h.as_ref(), r));
    }
    Ok(total.score())
}
