//! Text normalization, delimiter-based fragment segmentation and fragment diffs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::report::{Language, Report};

/// NFKC, trim, and collapse whitespace runs to one ASCII space. Case is preserved.
///
/// Full-width ASCII variants fold to ASCII through NFKC. The result is a fixed
/// point: `normalize_text(normalize_text(x)) == normalize_text(x)`.
pub fn normalize_text(text: &str) -> String {
    let mut current = collapse_whitespace(&text.nfkc().collect::<String>());
    // Collapsing can expose a new composition context; iterate to a fixed point.
    loop {
        let next = collapse_whitespace(&current.nfkc().collect::<String>());
        if next == current {
            return current;
        }
        current = next;
    }
}

fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split(char::is_whitespace).filter(|w| !w.is_empty()) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// The set of characters that end a fragment.
///
/// A character also counts as a delimiter when its NFKC folding is a single
/// configured delimiter (so `﹐` splits like `,`), which keeps normalized
/// fragments delimiter-free. A period-like character between two digits never
/// splits, so measurements such as `1.5cm` stay intact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Delimiters(BTreeSet<char>);

impl Default for Delimiters {
    fn default() -> Self {
        Delimiters([',', ';', '.', '，', '；', '。'].into_iter().collect())
    }
}

impl Delimiters {
    pub fn new(chars: impl IntoIterator<Item = char>) -> Result<Self> {
        let set: BTreeSet<char> = chars.into_iter().collect();
        if set.is_empty() {
            return Err(Error::Config("delimiter set must not be empty".into()));
        }
        Ok(Delimiters(set))
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, c: char) -> bool {
        self.0.contains(&c) || self.0.contains(&fold(c))
    }

    fn is_split_point(&self, prev: Option<char>, c: char, next: Option<char>) -> bool {
        if !self.contains(c) {
            return false;
        }
        if fold(c) == '.' {
            let digit = |x: Option<char>| x.is_some_and(|x| fold(x).is_ascii_digit());
            if digit(prev) && digit(next) {
                return false;
            }
        }
        true
    }
}

/// Single-character NFKC folding; multi-char expansions map to the input.
fn fold(c: char) -> char {
    let mut it = std::iter::once(c).nfkc();
    match (it.next(), it.next()) {
        (Some(f), None) => f,
        _ => c,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub raw: String,
    pub normalized: String,
    pub language: Language,
    pub index: usize,
}

/// Splits `text` on every delimiter occurrence, trimming pieces and dropping empty ones.
pub fn segment_report(text: &str, language: Language, delimiters: &Delimiters) -> Vec<Fragment> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    for (i, &(offset, c)) in chars.iter().enumerate() {
        let prev = i.checked_sub(1).map(|p| chars[p].1);
        let next = chars.get(i + 1).map(|&(_, n)| n);
        if delimiters.is_split_point(prev, c, next) {
            pieces.push(&text[start..offset]);
            start = offset + c.len_utf8();
        }
    }
    pieces.push(&text[start..]);

    pieces
        .into_iter()
        .map(str::trim)
        .filter_map(|raw| {
            let normalized = normalize_text(raw);
            (!raw.is_empty() && !normalized.is_empty()).then(|| (raw.to_string(), normalized))
        })
        .enumerate()
        .map(|(index, (raw, normalized))| Fragment {
            raw,
            normalized,
            language,
            index,
        })
        .collect()
}

/// Fragment-level comparison of a prediction against its reference.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentDiff {
    pub matched: Vec<(Fragment, Fragment)>,
    pub extra: Vec<Fragment>,
    pub missing: Vec<Fragment>,
}

pub fn fragment_diff(pred: &Report, reference: &Report, delimiters: &Delimiters) -> Result<FragmentDiff> {
    if pred.language != reference.language {
        return Err(Error::LanguageMismatch {
            pred: pred.language,
            reference: reference.language,
        });
    }
    let pred_frags = segment_report(&pred.text, pred.language, delimiters);
    let ref_frags = segment_report(&reference.text, reference.language, delimiters);
    Ok(diff_fragments(pred_frags, ref_frags))
}

/// Greedy exact matching on normalized text. Each reference fragment is consumed
/// by at most one prediction, earliest unconsumed occurrence first.
pub fn diff_fragments(pred: Vec<Fragment>, reference: Vec<Fragment>) -> FragmentDiff {
    let mut consumed = vec![false; reference.len()];
    let mut diff = FragmentDiff::default();
    for p in pred {
        let hit = reference
            .iter()
            .enumerate()
            .find(|(j, r)| !consumed[*j] && r.normalized == p.normalized)
            .map(|(j, _)| j);
        match hit {
            Some(j) => {
                consumed[j] = true;
                diff.matched.push((p, reference[j].clone()));
            }
            None => diff.extra.push(p),
        }
    }
    diff.missing = reference
        .into_iter()
        .zip(consumed)
        .filter_map(|(r, used)| (!used).then_some(r))
        .collect();
    diff
}
