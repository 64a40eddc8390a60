use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TokenizedPair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BleuMode {
    /// Precisions and brevity penalty from corpus totals.
    #[default]
    Corpus,
    /// Add-one smoothed per-pair scores, averaged.
    Sentence,
}

pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if n > 0 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and hypothesis n-gram total at order `n`.
fn clipped(pair: &TokenizedPair, n: usize) -> (usize, usize) {
    let hyp = ngram_counts(&pair.hyp, n);
    let reference = ngram_counts(&pair.reference, n);
    let matches = hyp
        .iter()
        .map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, pair.hyp.len().saturating_sub(n - 1))
}

fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 {
        0.0
    } else if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

/// BLEU over orders `1..=n` with uniform weights against a single reference.
pub fn bleu(pairs: &[TokenizedPair], n: usize, mode: BleuMode) -> Result<f64> {
    if !(1..=4).contains(&n) {
        return Err(Error::BleuOrder(n));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus("BLEU"));
    }
    Ok(match mode {
        BleuMode::Corpus => corpus_bleu(pairs, n),
        BleuMode::Sentence => pairs.iter().map(|p| sentence_bleu(p, n)).sum::<f64>() / pairs.len() as f64,
    })
}

fn corpus_bleu(pairs: &[TokenizedPair], n: usize) -> f64 {
    let mut log_sum = 0.0;
    for k in 1..=n {
        let (matches, total) = pairs
            .iter()
            .map(|p| clipped(p, k))
            .fold((0, 0), |(m, t), (pm, pt)| (m + pm, t + pt));
        if matches == 0 || total == 0 {
            return 0.0;
        }
        log_sum += (matches as f64 / total as f64).ln();
    }
    let hyp_len: usize = pairs.iter().map(|p| p.hyp.len()).sum();
    let ref_len: usize = pairs.iter().map(|p| p.reference.len()).sum();
    brevity_penalty(hyp_len, ref_len) * (log_sum / n as f64).exp()
}

/// Per-pair BLEU; orders with zero matches use `(m + 1) / (t + 1)`.
pub fn sentence_bleu(pair: &TokenizedPair, n: usize) -> f64 {
    if pair.hyp.is_empty() {
        return 0.0;
    }
    let log_sum: f64 = (1..=n)
        .map(|k| {
            let (m, t) = clipped(pair, k);
            if m == 0 {
                ((m + 1) as f64 / (t + 1) as f64).ln()
            } else {
                (m as f64 / t as f64).ln()
            }
        })
        .sum();
    brevity_penalty(pair.hyp.len(), pair.reference.len()) * (log_sum / n as f64).exp()
}
