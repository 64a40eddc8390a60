//! Report-generation evaluation: BLEU-1/4, ROUGE-L, CIDEr, matching-keyword F1
//! and embedding greedy-match F1, plus relative-gain comparison of two runs.

mod bleu;
mod cider;
mod embed;
mod keywords;
mod rouge;
mod tokenize;

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bleu::{bleu, sentence_bleu, BleuMode};
pub use cider::{cider, CiderScore, DEFAULT_SCALE as DEFAULT_CIDER_SCALE};
pub use embed::{greedy_embed_f1, EmbeddingStore, Role, TokenEmbeddings};
pub use keywords::{mkf1, KeywordList, KeywordScores};
pub use rouge::{lcs_len, rouge_l, rouge_l_pair};
pub use tokenize::{is_han, tokenize_for_metrics, TokenizedPair, TOKENIZATION_RULE};

use crate::error::{Error, Result};
use crate::report::Report;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub bleu_mode: BleuMode,
    pub cider_scale: f64,
    pub rouge_beta: f64,
    pub tokenization: String,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            bleu_mode: BleuMode::Corpus,
            cider_scale: DEFAULT_CIDER_SCALE,
            rouge_beta: 1.0,
            tokenization: TOKENIZATION_RULE.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    /// Smoothed sentence-level BLEU.
    pub b1: f64,
    pub b4: f64,
    pub rl: f64,
    pub cider: f64,
    pub mkf1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embed_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub b1: f64,
    pub b4: f64,
    pub rl: f64,
    pub cider: f64,
    /// Macro (per-pair mean) keyword F1.
    pub mkf1: f64,
    pub mkf1_micro: f64,
    /// Absent when no embeddings were supplied.
    pub embed_f1: Option<f64>,
    pub corpus_size: usize,
    pub per_sample: Vec<SampleMetrics>,
    pub config: MetricConfig,
}

/// Pairs hypotheses with references by id, in reference order.
fn align<'a>(hyps: &'a [Report], refs: &'a [Report]) -> Result<Vec<(&'a Report, &'a Report)>> {
    let by_id: HashMap<&str, &Report> = hyps.iter().map(|h| (h.id.as_str(), h)).collect();
    let ref_ids: HashSet<&str> = refs.iter().map(|r| r.id.as_str()).collect();
    let mut unmatched: Vec<String> = Vec::new();
    if by_id.len() != hyps.len() {
        unmatched.push("duplicate hypothesis ids".into());
    }
    if ref_ids.len() != refs.len() {
        unmatched.push("duplicate reference ids".into());
    }
    unmatched.extend(
        hyps.iter()
            .filter(|h| !ref_ids.contains(h.id.as_str()))
            .map(|h| format!("hyp:{}", h.id)),
    );
    unmatched.extend(
        refs.iter()
            .filter(|r| !by_id.contains_key(r.id.as_str()))
            .map(|r| format!("ref:{}", r.id)),
    );
    if !unmatched.is_empty() || refs.is_empty() {
        if unmatched.is_empty() {
            unmatched.push("no pairs".into());
        }
        return Err(Error::IdMismatch(unmatched));
    }
    let pairs: Vec<_> = refs.iter().map(|r| (by_id[r.id.as_str()], r)).collect();
    for (h, r) in &pairs {
        if h.language != r.language {
            return Err(Error::LanguageMismatch {
                pred: h.language,
                reference: r.language,
            });
        }
    }
    Ok(pairs)
}

/// Every metric over an id-aligned corpus. Keyword sites come from the references.
pub fn evaluate_corpus(
    hyps: &[Report],
    refs: &[Report],
    keywords: &KeywordList,
    embeddings: Option<&EmbeddingStore>,
    config: &MetricConfig,
) -> Result<MetricReport> {
    let aligned = align(hyps, refs)?;
    let tokenized: Vec<TokenizedPair> = aligned
        .par_iter()
        .map(|(h, r)| TokenizedPair::new(&h.text, &r.text, r.language))
        .collect();

    let b1 = bleu(&tokenized, 1, config.bleu_mode)?;
    let b4 = bleu(&tokenized, 4, config.bleu_mode)?;
    let rl = rouge_l(&tokenized, config.rouge_beta)?;
    let cider_score = cider(&tokenized, config.cider_scale)?;
    let kw_input: Vec<(&str, &str, &str)> = aligned
        .iter()
        .map(|(h, r)| (h.text.as_str(), r.text.as_str(), r.site.as_str()))
        .collect();
    let kw = mkf1(&kw_input, keywords)?;

    let embed: Option<Vec<f64>> = embeddings
        .map(|store| {
            aligned
                .iter()
                .map(|(h, r)| greedy_embed_f1(store.get(&h.id, Role::Hyp)?, store.get(&r.id, Role::Ref)?))
                .collect::<Result<Vec<f64>>>()
        })
        .transpose()?;

    let per_sample = aligned
        .par_iter()
        .enumerate()
        .map(|(i, (_, r))| SampleMetrics {
            id: r.id.clone(),
            b1: sentence_bleu(&tokenized[i], 1),
            b4: sentence_bleu(&tokenized[i], 4),
            rl: rouge_l_pair(&tokenized[i], config.rouge_beta),
            cider: cider_score.per_item[i],
            mkf1: kw.per_pair[i],
            embed_f1: embed.as_ref().map(|e| e[i]),
        })
        .collect::<Vec<_>>();

    Ok(MetricReport {
        b1,
        b4,
        rl,
        cider: cider_score.score,
        mkf1: kw.macro_f1,
        mkf1_micro: kw.micro_f1,
        embed_f1: embed.map(|e| e.iter().sum::<f64>() / e.len() as f64),
        corpus_size: per_sample.len(),
        per_sample,
        config: config.clone(),
    })
}

/// Headline values of a run. Deserializes from a full metric report or a
/// hand-written subset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub b1: Option<f64>,
    pub b4: Option<f64>,
    pub rl: Option<f64>,
    pub cider: Option<f64>,
    pub mkf1: Option<f64>,
    pub embed_f1: Option<f64>,
}

impl MetricSummary {
    fn fields(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("b1", self.b1),
            ("b4", self.b4),
            ("rl", self.rl),
            ("cider", self.cider),
            ("mkf1", self.mkf1),
            ("embed_f1", self.embed_f1),
        ]
    }
}

impl From<&MetricReport> for MetricSummary {
    fn from(r: &MetricReport) -> Self {
        MetricSummary {
            b1: Some(r.b1),
            b4: Some(r.b4),
            rl: Some(r.rl),
            cider: Some(r.cider),
            mkf1: Some(r.mkf1),
            embed_f1: r.embed_f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "percent")]
pub enum Gain {
    Percent(f64),
    /// The baseline value is zero.
    Undefined,
}

/// Relative gain of `a` over baseline `b` in percent, rounded to one decimal,
/// for every metric present in both.
pub fn compare_runs(a: &MetricSummary, b: &MetricSummary) -> BTreeMap<&'static str, Gain> {
    a.fields()
        .into_iter()
        .zip(b.fields())
        .filter_map(|((name, av), (_, bv))| {
            let (av, bv) = (av?, bv?);
            let gain = if bv == 0.0 {
                Gain::Undefined
            } else {
                Gain::Percent(round1((av - bv) / bv * 100.0) + 0.0)
            };
            Some((name, gain))
        })
        .collect()
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}
