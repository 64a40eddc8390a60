use serde::{Deserialize, Serialize};

use crate::report::Language;
use crate::segmenter::normalize_text;

/// Description of the metric tokenization rule, echoed into reports.
pub const TOKENIZATION_RULE: &str =
    "nfkc; en: lowercase, split on non-alphanumeric runs; zh: one token per Han character, ASCII alphanumeric runs (with inner decimal points) kept whole, punctuation dropped";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedPair {
    pub hyp: Vec<String>,
    pub reference: Vec<String>,
    pub language: Language,
}

impl TokenizedPair {
    pub fn new(hyp: &str, reference: &str, language: Language) -> Self {
        TokenizedPair {
            hyp: tokenize_for_metrics(hyp, language),
            reference: tokenize_for_metrics(reference, language),
            language,
        }
    }

    /// Pre-tokenized input, split on ASCII whitespace.
    pub fn from_whitespace(hyp: &str, reference: &str, language: Language) -> Self {
        let split = |s: &str| s.split_ascii_whitespace().map(str::to_string).collect();
        TokenizedPair {
            hyp: split(hyp),
            reference: split(reference),
            language,
        }
    }
}

pub fn tokenize_for_metrics(text: &str, language: Language) -> Vec<String> {
    let text = normalize_text(text);
    match language {
        Language::En => text
            .to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect(),
        Language::Zh => tokenize_zh(&text),
    }
}

fn tokenize_zh(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut run = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let decimal_point = c == '.'
            && !run.is_empty()
            && run.ends_with(|p: char| p.is_ascii_digit())
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if c.is_ascii_alphanumeric() || decimal_point {
            run.push(c);
            continue;
        }
        if !run.is_empty() {
            tokens.push(std::mem::take(&mut run));
        }
        if is_han(c) || c.is_alphanumeric() {
            tokens.push(c.to_string());
        }
    }
    if !run.is_empty() {
        tokens.push(run);
    }
    tokens
}

pub fn is_han(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2EBEF
        | 0x2F800..=0x2FA1F
        | 0x30000..=0x3134F)
}
