//! Plain CIDEr with one reference per item.
//!
//! For each order n in 1..=4 every sentence maps to a TF-IDF vector over its
//! n-grams: `tf = count / #n-grams in the sentence` and
//! `idf = ln(N / max(df, 1))`, where `df` counts the items whose reference holds
//! the n-gram. An item scores the mean over n of the cosine between its
//! hypothesis and reference vectors (0 when either vector is zero), times `scale`.
//! Ordered maps keep the floating-point summation order, and so the output
//! bits, stable across runs.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::bleu::ngram_counts;
use super::TokenizedPair;
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;
pub const DEFAULT_SCALE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CiderScore {
    pub score: f64,
    pub per_item: Vec<f64>,
}

type DocFreq<'a> = BTreeMap<&'a [String], usize>;

pub fn cider(corpus: &[TokenizedPair], scale: f64) -> Result<CiderScore> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus("CIDEr"));
    }
    let n_items = corpus.len() as f64;

    // Phase 1: document frequencies over references.
    let doc_freq: Vec<DocFreq> = (1..=MAX_ORDER)
        .map(|n| {
            let mut df = DocFreq::new();
            for item in corpus {
                let unique: BTreeSet<&[String]> = item.reference.windows(n).collect();
                for g in unique {
                    *df.entry(g).or_insert(0) += 1;
                }
            }
            df
        })
        .collect();

    // Phase 2: per-item cosines.
    let per_item: Vec<f64> = corpus
        .par_iter()
        .map(|item| {
            let total: f64 = (1..=MAX_ORDER)
                .map(|n| {
                    let df = &doc_freq[n - 1];
                    let h = tfidf(&item.hyp, n, df, n_items);
                    let r = tfidf(&item.reference, n, df, n_items);
                    cosine(&h, &r)
                })
                .sum();
            scale * total / MAX_ORDER as f64
        })
        .collect();

    let score = per_item.iter().sum::<f64>() / n_items;
    Ok(CiderScore { score, per_item })
}

fn tfidf<'a>(tokens: &'a [String], n: usize, df: &DocFreq, n_items: f64) -> BTreeMap<&'a [String], f64> {
    let counts = ngram_counts(tokens, n);
    let total: usize = counts.values().sum();
    counts
        .into_iter()
        .map(|(g, c)| {
            let d = df.get(g).copied().unwrap_or(0).max(1) as f64;
            (g, (c as f64 / total as f64) * (n_items / d).ln())
        })
        .collect()
}

fn cosine(a: &BTreeMap<&[String], f64>, b: &BTreeMap<&[String], f64>) -> f64 {
    let norm = |v: &BTreeMap<&[String], f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(g, x)| b.get(g).map(|y| x * y)).sum();
    dot / (na * nb)
}
