use crate::error::Result;

use super::{check_refs, ngram_counts};

const MAX_ORDER: usize = 4;

/// Sufficient statistics for corpus BLEU-4.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    /// Clipped n-gram matches against the per-n-gram maximum reference count;
    /// the reference length is that of the shortest reference.
    pub fn sentence<S: AsRef<str>>(hyp: &str, refs: &[S]) -> Self {
        let h: Vec<&str> = hyp.split_whitespace().collect();
        let rs: Vec<Vec<&str>> = refs.iter().map(|r| r.as_ref().split_whitespace().collect()).collect();
        let mut s = BleuStats {
            hyp_len: h.len(),
            ..Default::default()
        };
        s.ref_len = rs.iter().map(Vec::len).min().unwrap_or(0);
        for n in 1..=MAX_ORDER {
            let hc = ngram_counts(&h, n);
            let rcs: Vec<_> = rs.iter().map(|r| ngram_counts(r, n)).collect();
            for (g, &c) in &hc {
                let max_ref = rcs.iter().map(|rc| rc.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
                s.matches[n - 1] += c.min(max_ref);
            }
            s.totals[n - 1] = h.len().saturating_sub(n - 1);
        }
        s
    }

    pub fn add(&mut self, other: &Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// Score in `[0, 100]`. Without smoothing, any zero precision gives 0.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.iter().any(|&m| m == 0) {
            return 0.0;
        }
        let log_p: f64 = (0..MAX_ORDER)
            .map(|n| (self.matches[n] as f64 / self.totals[n] as f64).ln())
            .sum::<f64>()
            / MAX_ORDER as f64;
        let bp = if self.hyp_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        };
        100.0 * bp * log_p.exp()
    }
}

/// Corpus BLEU-4 over whitespace-tokenized strings, with one or more
/// references per hypothesis.
pub fn corpus_bleu<S: AsRef<str>>(hyps: &[S], refs: &[Vec<S>]) -> Result<f64> {
    check_refs(hyps, refs)?;
    let mut total = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&BleuStats::sentence(h.as_ref(), r));
    }
    Ok(total.score())
}
