use graformer::metrics::{corpus_bleu, corpus_chrf, transpose_references};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn refs1<'a>(rs: &[&'a str]) -> Vec<Vec<&'a str>> {
    rs.iter().map(|&r| vec![r]).collect()
}

#[test]
fn references_score_one_hundred() {
    let corpus = ["the cat sat on the mat", "a quick brown fox jumps over", "x y z w"];
    let refs = refs1(&corpus);
    assert!((corpus_bleu(&corpus, &refs).unwrap() - 100.0).abs() < 1e-9);
    assert!((corpus_chrf(&corpus, &refs).unwrap() - 100.0).abs() < 1e-9);
}

#[test]
fn disjoint_corpora_score_zero() {
    let refs = refs1(&["the cat sat on the mat"]);
    assert_eq!(corpus_bleu(&["dogs run fast in parks"], &refs).unwrap(), 0.0);
    assert_eq!(corpus_chrf(&["xyz"], &refs1(&["abc"])).unwrap(), 0.0);
}

#[test]
fn bleu_micro_examples() {
    // No 4-gram exists in a three-word hypothesis; unsmoothed BLEU is 0.
    assert_eq!(corpus_bleu(&["the cat sat"], &refs1(&["the cat sat down"])).unwrap(), 0.0);

    // p1 = 5/6, p2 = 3/5, p3 = 2/4, p4 = 1/3; equal lengths so BP = 1.
    let want = (5.0 / 6.0 * 3.0 / 5.0 * 2.0 / 4.0 * 1.0 / 3.0f64).powf(0.25) * 100.0;
    let got = corpus_bleu(&["the cat sat on the mat"], &refs1(&["the cat sat on a mat"])).unwrap();
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    assert!((got - 53.728_5).abs() < 1e-4);

    // Short hypothesis: p_n = 1 for every order, BP = exp(1 - 6/4).
    let got = corpus_bleu(&["a b c d"], &refs1(&["a b c d e f"])).unwrap();
    assert!((got - (1.0f64 - 1.5).exp() * 100.0).abs() < 1e-6);

    // Corpus level: counts are pooled before the ratios.
    let got = corpus_bleu(&["a b c d", "a b c d e"], &refs1(&["a b c d", "a b c x e"])).unwrap();
    let want = (8.0 / 9.0 * 5.0 / 7.0 * 3.0 / 5.0 * 1.0 / 3.0f64).powf(0.25) * 100.0;
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");
}

#[test]
fn chrf_micro_example() {
    // chars "ab"/"ac": order 1 P = R = 1/2, order 2 P = R = 0, orders 3-6
    // empty on both sides; words: order 1 P = R = 1/2, order 2 P = R = 0.
    // Averages P = R = 1/4, so F2 = 1/4.
    let got = corpus_chrf(&["a b"], &refs1(&["a c"])).unwrap();
    assert!((got - 25.0).abs() < 1e-9, "{got}");
}

/// chrF++ by direct enumeration: every n-gram occurrence is matched against
/// an unused identical occurrence on the other side.
fn chrf_oracle(hyps: &[String], refs: &[String]) -> f64 {
    fn grams<T: Clone>(xs: &[T], n: usize) -> Vec<Vec<T>> {
        if xs.len() < n {
            return Vec::new();
        }
        (0..=xs.len() - n).map(|i| xs[i..i + n].to_vec()).collect()
    }
    fn matched<T: PartialEq>(h: &[T], r: &[T]) -> usize {
        let mut used = vec![false; r.len()];
        let mut m = 0;
        for g in h {
            if let Some(k) = (0..r.len()).find(|&k| !used[k] && r[k] == *g) {
                used[k] = true;
                m += 1;
            }
        }
        m
    }
    let mut tot = [[0usize; 3]; 8];
    for (h, r) in hyps.iter().zip(refs) {
        let hc: Vec<char> = h.chars().filter(|c| !c.is_whitespace()).collect();
        let rc: Vec<char> = r.chars().filter(|c| !c.is_whitespace()).collect();
        let hw: Vec<&str> = h.split_whitespace().collect();
        let rw: Vec<&str> = r.split_whitespace().collect();
        for n in 1..=6 {
            let (a, b) = (grams(&hc, n), grams(&rc, n));
            let m = matched(&a, &b);
            tot[n - 1][0] += a.len();
            tot[n - 1][1] += b.len();
            tot[n - 1][2] += m;
        }
        for n in 1..=2 {
            let (a, b) = (grams(&hw, n), grams(&rw, n));
            let m = matched(&a, &b);
            tot[5 + n][0] += a.len();
            tot[5 + n][1] += b.len();
            tot[5 + n][2] += m;
        }
    }
    let live: Vec<_> = tot.iter().filter(|t| t[0] + t[1] > 0).collect();
    if live.is_empty() {
        return 100.0;
    }
    let k = live.len() as f64;
    let p = live.iter().map(|t| if t[0] > 0 { t[2] as f64 / t[0] as f64 } else { 0.0 }).sum::<f64>() / k;
    let r = live.iter().map(|t| if t[1] > 0 { t[2] as f64 / t[1] as f64 } else { 0.0 }).sum::<f64>() / k;
    if p + r == 0.0 {
        return 0.0;
    }
    100.0 * 5.0 * p * r / (4.0 * p + r)
}

fn sentence(rng: &mut ChaCha8Rng, words: &[&str]) -> String {
    let n = rng.gen_range(0..9);
    (0..n).map(|_| *words.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

const WORDS: [&str; 8] = ["the", "cat", "sat", "on", "a", "mat", "then", "ran"];

proptest! {
    #[test]
    fn chrf_matches_enumeration_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..5);
        let hyps: Vec<String> = (0..n).map(|_| sentence(&mut rng, &WORDS)).collect();
        let refs: Vec<String> = (0..n).map(|_| sentence(&mut rng, &WORDS)).collect();
        let got = corpus_chrf(&hyps, &refs.iter().map(|r| vec![r.clone()]).collect::<Vec<_>>()).unwrap();
        let want = chrf_oracle(&hyps, &refs);
        prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
    }

    #[test]
    fn corpus_order_does_not_matter(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..8);
        let hyps: Vec<String> = (0..n).map(|_| sentence(&mut rng, &WORDS)).collect();
        let refs: Vec<Vec<String>> = (0..n).map(|_| (0..rng.gen_range(1..3)).map(|_| sentence(&mut rng, &WORDS)).collect()).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let ph: Vec<String> = perm.iter().map(|&i| hyps[i].clone()).collect();
        let pr: Vec<Vec<String>> = perm.iter().map(|&i| refs[i].clone()).collect();
        prop_assert!((corpus_bleu(&hyps, &refs).unwrap() - corpus_bleu(&ph, &pr).unwrap()).abs() < 1e-9);
        prop_assert!((corpus_chrf(&hyps, &refs).unwrap() - corpus_chrf(&ph, &pr).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn more_references_never_lower_bleu(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..6);
        let k = rng.gen_range(2..4);
        let hyps: Vec<String> = (0..n).map(|_| sentence(&mut rng, &WORDS[..5])).collect();
        let refs: Vec<Vec<String>> = (0..n).map(|_| (0..k).map(|_| sentence(&mut rng, &WORDS[..5])).collect()).collect();
        let multi = corpus_bleu(&hyps, &refs).unwrap();
        for j in 0..k {
            let single: Vec<Vec<String>> = refs.iter().map(|r| vec![r[j].clone()]).collect();
            let s = corpus_bleu(&hyps, &single).unwrap();
            prop_assert!(multi >= s - 1e-9, "multi {} < single {} (reference {})", multi, s, j);
        }
        prop_assert!((0.0..=100.0 + 1e-9).contains(&multi));
    }
}

#[test]
fn empty_or_mismatched_corpora_are_rejected() {
    let none: [&str; 0] = [];
    let no_refs: Vec<Vec<&str>> = Vec::new();
    assert_eq!(corpus_bleu(&none, &no_refs).unwrap_err().exit_code(), 1);
    assert!(corpus_chrf(&none, &no_refs).is_err());
    assert!(corpus_bleu(&["a"], &[vec!["a"], vec!["b"]]).is_err());
    assert!(corpus_bleu(&["a"], &[Vec::<&str>::new()]).is_err());
}

#[test]
fn reference_files_are_transposed() {
    let files = vec![vec!["a1", "b1"], vec!["a2", "b2"]];
    assert_eq!(transpose_references(&files).unwrap(), vec![vec!["a1", "a2"], vec!["b1", "b2"]]);
    assert!(transpose_references(&[vec!["a"], vec!["a", "b"]]).is_err());
}
