//! Text-overlap metrics over pre-tokenized sequences.

use std::collections::{HashMap, HashSet};

/// Lowercase and split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn ngram_counts<'a>(tokens: &'a [String], n: usize) -> HashMap<&'a [String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU against one reference with uniform weights, clipped counts,
/// brevity penalty and no smoothing: any zero n-gram precision yields 0.
pub fn bleu(candidate: &[String], reference: &[String], max_n: usize) -> f64 {
    if candidate.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let refs = ngram_counts(reference, n);
        let total: usize = cand.values().sum();
        let clipped: usize = cand.iter().map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0))).sum();
        if clipped == 0 || total == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln() / max_n as f64;
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * log_sum.exp()
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure `((1+β²) R P) / (R + β² P)`.
pub fn rouge_l(candidate: &[String], reference: &[String], beta: f64) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(candidate, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let r = lcs / reference.len() as f64;
    let p = lcs / candidate.len() as f64;
    let b2 = beta * beta;
    (1.0 + b2) * r * p / (r + b2 * p)
}

/// CIDEr's conventional ×10 scale.
pub const CIDER_SCALE: f64 = 10.0;

/// TF-IDF n-gram consensus scorer. Document frequencies come from a corpus
/// where each document is one item's reference set.
#[derive(Clone, Debug)]
pub struct CiderScorer {
    max_n: usize,
    num_docs: f64,
    doc_freq: HashMap<Vec<String>, usize>,
}

impl CiderScorer {
    pub fn new(corpus: &[Vec<Vec<String>>], max_n: usize) -> crate::Result<Self> {
        if corpus.is_empty() {
            return Err(crate::Error::EmptyInput("CIDEr reference corpus"));
        }
        let mut doc_freq = HashMap::new();
        for refs in corpus {
            let mut grams: HashSet<Vec<String>> = HashSet::new();
            for r in refs {
                for n in 1..=max_n {
                    grams.extend(ngram_counts(r, n).into_keys().map(<[String]>::to_vec));
                }
            }
            for g in grams {
                *doc_freq.entry(g).or_insert(0) += 1;
            }
        }
        Ok(Self {
            max_n,
            num_docs: corpus.len() as f64,
            doc_freq,
        })
    }

    fn tfidf(&self, tokens: &[String], n: usize) -> HashMap<Vec<String>, f64> {
        let counts = ngram_counts(tokens, n);
        let total: usize = counts.values().sum();
        counts
            .into_iter()
            .map(|(g, c)| {
                let df = self.doc_freq.get(g).copied().unwrap_or(0).max(1) as f64;
                (g.to_vec(), c as f64 / total as f64 * (self.num_docs / df).ln())
            })
            .collect()
    }

    /// Mean over n of the average cosine to each reference, times [`CIDER_SCALE`].
    pub fn score(&self, candidate: &[String], references: &[Vec<String>]) -> f64 {
        if references.is_empty() || self.max_n == 0 {
            return 0.0;
        }
        let mut total = 0.0;
        for n in 1..=self.max_n {
            let c = self.tfidf(candidate, n);
            let per_ref: f64 = references.iter().map(|r| cosine(&c, &self.tfidf(r, n))).sum();
            total += per_ref / references.len() as f64;
        }
        CIDER_SCALE * total / self.max_n as f64
    }
}

fn cosine(a: &HashMap<Vec<String>, f64>, b: &HashMap<Vec<String>, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(k, x)| b.get(k).map(|y| x * y)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Score `candidate` against `references`, taking IDF from `corpus`.
pub fn cider(
    candidate: &[String],
    references: &[Vec<String>],
    corpus: &[Vec<Vec<String>>],
    max_n: usize,
) -> crate::Result<f64> {
    Ok(CiderScorer::new(corpus, max_n)?.score(candidate, references))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenize_lowercases() {
        assert_eq!(t("The  Cat\tSAT"), vec!["the", "cat", "sat"]);
    }

    #[test]
    fn bleu_cases() {
        let c = t("a quick brown fox jumps");
        assert!((bleu(&c, &c, 4) - 1.0).abs() < 1e-12);
        assert_eq!(bleu(&t("x y z w"), &t("a b c d"), 4), 0.0);
        assert_eq!(bleu(&[], &c, 4), 0.0);
        // Three tokens have no 4-gram, so unsmoothed 4-gram BLEU is zero.
        assert_eq!(bleu(&t("the cat sat"), &t("the cat sat down"), 4), 0.0);
        let expected = (1.0f64 - 4.0 / 3.0).exp();
        assert!((bleu(&t("the cat sat"), &t("the cat sat down"), 3) - expected).abs() < 1e-12);
    }

    #[test]
    fn bleu_clips_repeated_tokens() {
        // "the the the" vs "the cat": clipped unigram precision 1/3, BP = 1 (3 > 2).
        let score = bleu(&t("the the the"), &t("the cat"), 1);
        assert!((score - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rouge_cases() {
        let c = t("a b c d");
        assert!((rouge_l(&c, &c, 1.2) - 1.0).abs() < 1e-12);
        assert_eq!(rouge_l(&t("a b"), &t("c d"), 1.2), 0.0);
        assert_eq!(rouge_l(&[], &[], 1.2), 0.0);
    }

    #[test]
    fn lcs_matches_subsequence_enumeration() {
        use rand::Rng;
        let mut r = crate::rng::rng_from_seed(2);
        let vocab = ["a", "b", "c", "d"];
        for _ in 0..20 {
            let a: Vec<String> = (0..8).map(|_| vocab[r.random_range(0..4)].to_string()).collect();
            let b: Vec<String> = (0..8).map(|_| vocab[r.random_range(0..4)].to_string()).collect();
            let is_subseq = |sub: &[&String], s: &[String]| {
                let mut it = s.iter();
                sub.iter().all(|x| it.any(|y| y == *x))
            };
            let best = (0u32..256)
                .filter_map(|mask| {
                    let sub: Vec<&String> = (0..8).filter(|i| mask >> i & 1 == 1).map(|i| &a[i]).collect();
                    is_subseq(&sub, &b).then_some(sub.len())
                })
                .max()
                .unwrap();
            assert_eq!(lcs_len(&a, &b), best);
        }
    }

    #[test]
    fn cider_self_similarity_is_maximal() {
        let corpus = vec![vec![t("a b c")], vec![t("d e f")]];
        let scorer = CiderScorer::new(&corpus, 4).unwrap();
        let self_sim = scorer.score(&t("a b c"), &[t("a b c")]);
        // Cosine 1 for n = 1..3, no 4-grams.
        assert!((self_sim - 7.5).abs() < 1e-12);
        assert_eq!(scorer.score(&t("x y z"), &[t("a b c")]), 0.0);
        assert!(CiderScorer::new(&[], 4).is_err());
    }
}
