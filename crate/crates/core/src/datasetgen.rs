//! Cross-language SFT sample generation, token/mask assembly and the masked
//! causal loss.

use std::fmt;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{apply_table, FragmentTable, JoinRule};
use crate::report::{Language, Report};
use crate::segmenter::Delimiters;

/// The four training formulations, in their fixed emission order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptType {
    ZhFromImages,
    EnFromImages,
    EnFromZhQuery,
    ZhFromEnQuery,
}

impl PromptType {
    pub const ALL: [PromptType; 4] = [
        PromptType::ZhFromImages,
        PromptType::EnFromImages,
        PromptType::EnFromZhQuery,
        PromptType::ZhFromEnQuery,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptType::ZhFromImages => "zh_from_images",
            PromptType::EnFromImages => "en_from_images",
            PromptType::EnFromZhQuery => "en_from_zh_query",
            PromptType::ZhFromEnQuery => "zh_from_en_query",
        }
    }

    pub fn target_language(self) -> Language {
        match self {
            PromptType::ZhFromImages | PromptType::ZhFromEnQuery => Language::Zh,
            PromptType::EnFromImages | PromptType::EnFromZhQuery => Language::En,
        }
    }

    pub fn is_query(self) -> bool {
        matches!(self, PromptType::EnFromZhQuery | PromptType::ZhFromEnQuery)
    }

    /// Whether the sample needs the English rendering of the report.
    fn needs_english(self) -> bool {
        self != PromptType::ZhFromImages
    }
}

impl fmt::Display for PromptType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub system: String,
    /// Instruction text. For query types, `{report}` is replaced by the source report.
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub zh_from_images: PromptText,
    pub en_from_images: PromptText,
    pub en_from_zh_query: PromptText,
    pub zh_from_en_query: PromptText,
    /// Attach the two images to query samples as well.
    pub query_images: bool,
    /// Marker emitted once per image at the start of the user turn in JSONL output.
    pub image_placeholder: String,
}

impl Default for PromptConfig {
    fn default() -> Self {
        let zh_system = "你是一名超声科医生，请根据检查内容书写标准化超声报告。";
        let en_system = "You are an ultrasound radiologist who writes standardized ultrasound reports.";
        PromptConfig {
            zh_from_images: PromptText {
                system: zh_system.into(),
                user: "请根据超声图像生成中文超声报告。".into(),
            },
            en_from_images: PromptText {
                system: en_system.into(),
                user: "Generate an English ultrasound report from the ultrasound images.".into(),
            },
            en_from_zh_query: PromptText {
                system: en_system.into(),
                user: "Write the English ultrasound report corresponding to this Chinese report:\n{report}".into(),
            },
            zh_from_en_query: PromptText {
                system: zh_system.into(),
                user: "请根据以下英文超声报告生成对应的中文超声报告：\n{report}".into(),
            },
            query_images: true,
            image_placeholder: "<image>".into(),
        }
    }
}

impl PromptConfig {
    pub fn text(&self, prompt_type: PromptType) -> &PromptText {
        match prompt_type {
            PromptType::ZhFromImages => &self.zh_from_images,
            PromptType::EnFromImages => &self.en_from_images,
            PromptType::EnFromZhQuery => &self.en_from_zh_query,
            PromptType::ZhFromEnQuery => &self.zh_from_en_query,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftSample {
    pub report_id: String,
    pub prompt_type: PromptType,
    pub system: String,
    pub user: String,
    pub images: Vec<String>,
    pub target: String,
    pub target_language: Language,
}

impl SftSample {
    pub fn id(&self) -> String {
        format!("{}#{}", self.report_id, self.prompt_type)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub id: String,
    pub reason: String,
    pub unresolved_fragments: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GeneratedDataset {
    pub samples: Vec<SftSample>,
    pub skipped: Vec<SkipRecord>,
}

/// Emits the four prompt types for every report the table fully resolves.
///
/// A report with unresolved fragments contributes only `ZhFromImages`; every
/// other type needs its English rendering. It is listed in the skip manifest.
pub fn gen_samples(
    corpus: &[Report],
    table: &FragmentTable,
    prompts: &PromptConfig,
    join: &JoinRule,
    delimiters: &Delimiters,
) -> GeneratedDataset {
    let per_report: Vec<(Vec<SftSample>, Option<SkipRecord>)> = corpus
        .par_iter()
        .map(|report| samples_for_report(report, table, prompts, join, delimiters))
        .collect();

    let mut out = GeneratedDataset::default();
    for (samples, skip) in per_report {
        out.samples.extend(samples);
        out.skipped.extend(skip);
    }
    out
}

fn samples_for_report(
    report: &Report,
    table: &FragmentTable,
    prompts: &PromptConfig,
    join: &JoinRule,
    delimiters: &Delimiters,
) -> (Vec<SftSample>, Option<SkipRecord>) {
    if report.language != Language::Zh {
        let skip = SkipRecord {
            id: report.id.clone(),
            reason: format!("expected a zh report, found {}", report.language),
            unresolved_fragments: Vec::new(),
        };
        return (Vec::new(), Some(skip));
    }
    let (english, skip) = match apply_table(report, table, join, delimiters) {
        Ok(en) => (Some(en), None),
        Err(Error::Unresolved { fragments, .. }) => (
            None,
            Some(SkipRecord {
                id: report.id.clone(),
                reason: "unresolved fragments; English-side samples skipped".into(),
                unresolved_fragments: fragments,
            }),
        ),
        Err(other) => (
            None,
            Some(SkipRecord {
                id: report.id.clone(),
                reason: other.to_string(),
                unresolved_fragments: Vec::new(),
            }),
        ),
    };

    let zh_text = report.text.trim();
    let samples = PromptType::ALL
        .into_iter()
        .filter_map(|pt| {
            let en_text = match (&english, pt.needs_english()) {
                (Some(en), true) => Some(en.text.as_str()),
                (None, true) => return None,
                (_, false) => None,
            };
            let text = prompts.text(pt);
            let (user, target) = match pt {
                PromptType::ZhFromImages => (text.user.clone(), zh_text),
                PromptType::EnFromImages => (text.user.clone(), en_text?),
                PromptType::EnFromZhQuery => (text.user.replace("{report}", zh_text), en_text?),
                PromptType::ZhFromEnQuery => (text.user.replace("{report}", en_text?), zh_text),
            };
            let images = if !pt.is_query() || prompts.query_images {
                report.images.clone()
            } else {
                Vec::new()
            };
            Some(SftSample {
                report_id: report.id.clone(),
                prompt_type: pt,
                system: text.system.clone(),
                user,
                images,
                target: target.to_string(),
                target_language: pt.target_language(),
            })
        })
        .collect();
    (samples, skip)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

/// One line of the emitted dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub prompt_type: PromptType,
    pub messages: Vec<Message>,
    pub images: Vec<String>,
}

impl DatasetRecord {
    pub fn from_sample(sample: &SftSample, image_placeholder: &str) -> Self {
        let mut user = String::new();
        for _ in &sample.images {
            user.push_str(image_placeholder);
            user.push('\n');
        }
        user.push_str(&sample.user);
        let message = |role: &str, content: String| Message {
            role: role.into(),
            content,
        };
        DatasetRecord {
            id: sample.id(),
            prompt_type: sample.prompt_type,
            messages: vec![
                message("system", sample.system.clone()),
                message("user", user),
                message("assistant", sample.target.clone()),
            ],
            images: sample.images.clone(),
        }
    }
}

pub trait Tokenizer {
    fn encode(&self, text: &str) -> Vec<u32>;
    fn decode(&self, ids: &[u32]) -> Result<String>;
    fn image_placeholder(&self) -> u32;
}

/// Token id = UTF-8 byte value; the image placeholder is 256.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteTokenizer;

impl ByteTokenizer {
    pub const IMAGE_TOKEN: u32 = 256;
}

impl Tokenizer for ByteTokenizer {
    fn encode(&self, text: &str) -> Vec<u32> {
        text.bytes().map(u32::from).collect()
    }

    fn decode(&self, ids: &[u32]) -> Result<String> {
        let bytes = ids
            .iter()
            .map(|&id| u8::try_from(id).map_err(|_| Error::Tokenizer(format!("id {id} is not a byte"))))
            .collect::<Result<Vec<u8>>>()?;
        String::from_utf8(bytes).map_err(|e| Error::Tokenizer(e.to_string()))
    }

    fn image_placeholder(&self) -> u32 {
        Self::IMAGE_TOKEN
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSpans {
    pub system: Range<usize>,
    pub image: Range<usize>,
    pub user: Range<usize>,
    pub target: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub supervised: Vec<bool>,
    pub spans: SegmentSpans,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn supervised_count(&self) -> usize {
        self.supervised.iter().filter(|&&s| s).count()
    }
}

/// Lays out `system ++ image placeholders ++ user ++ target`, supervising only
/// the target region. With `include_target = false` the target span is empty,
/// which is the inference-time input.
pub fn assemble_token_sequence(
    sample: &SftSample,
    tokenizer: &dyn Tokenizer,
    image_token_count: usize,
    include_target: bool,
) -> Result<TokenSequence> {
    if sample.system.is_empty() && sample.user.is_empty() {
        return Err(Error::DegeneratePrompt);
    }
    if !sample.images.is_empty() && image_token_count == 0 {
        return Err(Error::ZeroImageTokens {
            id: sample.id(),
            count: sample.images.len(),
        });
    }

    let mut tokens = tokenizer.encode(&sample.system);
    let system = 0..tokens.len();

    let image_len = image_token_count * sample.images.len();
    tokens.extend(std::iter::repeat_n(tokenizer.image_placeholder(), image_len));
    let image = system.end..tokens.len();

    tokens.extend(tokenizer.encode(&sample.user));
    let user = image.end..tokens.len();

    if include_target {
        tokens.extend(tokenizer.encode(&sample.target));
    }
    let target = user.end..tokens.len();

    let supervised = (0..tokens.len()).map(|i| target.contains(&i)).collect();
    Ok(TokenSequence {
        tokens,
        supervised,
        spans: SegmentSpans {
            system,
            image,
            user,
            target,
        },
    })
}

/// `-Σ logprobs[i]` over supervised positions. Masked positions contribute
/// nothing, whatever their value.
pub fn compute_masked_loss(logprobs: &[f64], seq: &TokenSequence) -> Result<f64> {
    if logprobs.len() != seq.len() {
        return Err(Error::LengthMismatch {
            expected: seq.len(),
            got: logprobs.len(),
        });
    }
    if let Some((index, &value)) = logprobs
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v <= 0.0))
    {
        return Err(Error::InvalidLogprob { index, value });
    }
    let loss: f64 = logprobs
        .iter()
        .zip(&seq.supervised)
        .filter(|(_, &s)| s)
        .map(|(lp, _)| -lp)
        .sum();
    // -0.0 when nothing is supervised
    Ok(loss + 0.0)
}
