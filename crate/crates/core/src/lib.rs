//! Toolkit for standardized bilingual ultrasound reports.
//!
//! Reports are split into delimiter-bounded clinical fragments
//! ([`segmenter`]), translated through a reviewed zh→en fragment table
//! ([`lexicon`]), expanded into four cross-language SFT prompt types with
//! target-only loss masks ([`datasetgen`]), and scored with BLEU, ROUGE-L,
//! CIDEr, keyword F1 and embedding F1 ([`metrics`]). The [`cli`] and
//! [`serve`] modules back the `usreport` binary.

pub mod cli;
pub mod config;
pub mod datasetgen;
pub mod error;
pub mod lexicon;
pub mod metrics;
pub mod report;
pub mod segmenter;
pub mod serve;

pub use config::ToolConfig;
pub use datasetgen::{
    assemble_token_sequence, compute_masked_loss, gen_samples, ByteTokenizer, PromptType, SftSample, TokenSequence,
    Tokenizer,
};
pub use error::{Error, Result};
pub use lexicon::{apply_table, build_table, check_protected_terms, table_stats, FragmentEntry, FragmentTable};
pub use metrics::{compare_runs, evaluate_corpus, MetricReport};
pub use report::{Language, Report, Site};
pub use segmenter::{fragment_diff, normalize_text, segment_report, Delimiters, Fragment, FragmentDiff};
