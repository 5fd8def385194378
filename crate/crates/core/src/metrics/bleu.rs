use std::collections::HashMap;

use super::MetricsError;

pub const MAX_NGRAM_ORDER: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Sufficient statistics for corpus BLEU.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; MAX_NGRAM_ORDER],
    pub hyp_ngrams: [usize; MAX_NGRAM_ORDER],
    pub ref_ngrams: [usize; MAX_NGRAM_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn of_segment(hyp: &[String], reference: &[String]) -> Self {
        let mut s = Self {
            hyp_len: hyp.len(),
            ref_len: reference.len(),
            ..Self::default()
        };
        for n in 1..=MAX_NGRAM_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            s.hyp_ngrams[n - 1] = h.values().sum();
            s.ref_ngrams[n - 1] = r.values().sum();
            s.matches[n - 1] = h
                .iter()
                .map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0)))
                .sum();
        }
        s
    }

    pub fn add(&mut self, other: &Self) {
        for i in 0..MAX_NGRAM_ORDER {
            self.matches[i] += other.matches[i];
            self.hyp_ngrams[i] += other.hyp_ngrams[i];
            self.ref_ngrams[i] += other.ref_ngrams[i];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// BLEU on a 0–100 scale: geometric mean of clipped 1–4-gram
    /// precisions times the brevity penalty, without smoothing.
    ///
    /// An order for which neither side has any n-gram is left out of the
    /// mean, so a corpus of short but exact hypotheses still scores 100.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 {
            return if self.ref_len == 0 { 100.0 } else { 0.0 };
        }
        let mut log_sum = 0.0;
        let mut orders = 0;
        for i in 0..MAX_NGRAM_ORDER {
            if self.hyp_ngrams[i] == 0 && self.ref_ngrams[i] == 0 {
                continue;
            }
            if self.matches[i] == 0 {
                return 0.0;
            }
            log_sum += (self.matches[i] as f64 / self.hyp_ngrams[i] as f64).ln();
            orders += 1;
        }
        let brevity = if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        100.0 * brevity * (log_sum / orders as f64).exp()
    }
}

/// Corpus-level BLEU over pre-tokenized segments.
pub fn corpus_bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<f64, MetricsError> {
    if hyps.len() != refs.len() || hyps.is_empty() {
        return Err(MetricsError::Argument(format!(
            "BLEU needs as many hypotheses as references (got {} and {})",
            hyps.len(),
            refs.len()
        )));
    }
    let mut total = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&BleuStats::of_segment(h, r));
    }
    Ok(total.score())
}
