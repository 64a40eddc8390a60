use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmenter::normalize_text;

/// Organ-site keyword lists, stored normalized and lowercased.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, Vec<String>>", into = "BTreeMap<String, Vec<String>>")]
pub struct KeywordList {
    sites: BTreeMap<String, Vec<String>>,
}

fn canonical(s: &str) -> String {
    normalize_text(s).to_lowercase()
}

impl TryFrom<BTreeMap<String, Vec<String>>> for KeywordList {
    type Error = Error;

    fn try_from(raw: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut sites = BTreeMap::new();
        for (site, words) in raw {
            let mut seen = BTreeSet::new();
            let mut list = Vec::new();
            for w in words {
                let w = canonical(&w);
                if w.is_empty() {
                    return Err(Error::Config(format!("empty keyword for site {site:?}")));
                }
                if seen.insert(w.clone()) {
                    list.push(w);
                }
            }
            sites.insert(site, list);
        }
        Ok(KeywordList { sites })
    }
}

impl From<KeywordList> for BTreeMap<String, Vec<String>> {
    fn from(k: KeywordList) -> Self {
        k.sites
    }
}

impl KeywordList {
    pub fn new<S: Into<String>, W: Into<String>>(sites: impl IntoIterator<Item = (S, Vec<W>)>) -> Result<Self> {
        let raw = sites
            .into_iter()
            .map(|(s, ws)| (s.into(), ws.into_iter().map(Into::into).collect()))
            .collect::<BTreeMap<String, Vec<String>>>();
        KeywordList::try_from(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn site(&self, site: &str) -> Result<&[String]> {
        self.sites
            .get(site)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownSite(site.to_string()))
    }

    /// Indices of the site keywords found as substrings of `text`.
    fn detect(&self, site: &str, text: &str) -> Result<BTreeSet<usize>> {
        let text = canonical(text);
        Ok(self
            .site(site)?
            .iter()
            .enumerate()
            .filter(|(_, k)| text.contains(k.as_str()))
            .map(|(i, _)| i)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordScores {
    /// Mean of per-pair F1.
    pub macro_f1: f64,
    /// F1 from pooled TP/FP/FN.
    pub micro_f1: f64,
    pub per_pair: Vec<f64>,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    // no keywords on either side counts as full agreement
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    2.0 * p * r / (p + r)
}

/// Matching-keyword F1 over `(hyp, ref, site)` triples.
pub fn mkf1(pairs: &[(&str, &str, &str)], keywords: &KeywordList) -> Result<KeywordScores> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus("MKF1"));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut per_pair = Vec::with_capacity(pairs.len());
    for &(hyp, reference, site) in pairs {
        let h = keywords.detect(site, hyp)?;
        let r = keywords.detect(site, reference)?;
        let t = h.intersection(&r).count();
        let (p_only, r_only) = (h.len() - t, r.len() - t);
        per_pair.push(f1(t, p_only, r_only));
        tp += t;
        fp += p_only;
        fn_ += r_only;
    }
    Ok(KeywordScores {
        macro_f1: per_pair.iter().sum::<f64>() / per_pair.len() as f64,
        micro_f1: f1(tp, fp, fn_),
        per_pair,
    })
}
