//! Report records and JSON-lines corpus ingestion.

use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::segmenter::normalize_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Zh,
    En,
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::Zh => "zh",
            Language::En => "en",
        })
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zh" => Ok(Language::Zh),
            "en" => Ok(Language::En),
            other => Err(Error::Config(format!("unknown language {other:?}"))),
        }
    }
}

/// Scanned organ site. Unknown names are kept verbatim in `Other`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Site {
    Mammary,
    Thyroid,
    Liver,
    Other(String),
}

impl Site {
    pub fn as_str(&self) -> &str {
        match self {
            Site::Mammary => "mammary",
            Site::Thyroid => "thyroid",
            Site::Liver => "liver",
            Site::Other(name) => name,
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<&str> for Site {
    fn from(s: &str) -> Self {
        match s {
            "mammary" => Site::Mammary,
            "thyroid" => Site::Thyroid,
            "liver" => Site::Liver,
            other => Site::Other(other.to_string()),
        }
    }
}

impl Serialize for Site {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Site {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Site::from(s.as_str()))
    }
}

/// One standardized ultrasound report with its two images.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub site: Site,
    pub language: Language,
    pub text: String,
    pub images: Vec<String>,
}

impl Report {
    pub fn new(
        id: impl Into<String>,
        site: Site,
        language: Language,
        text: impl Into<String>,
        images: [String; 2],
    ) -> Result<Self> {
        let report = Report {
            id: id.into(),
            site,
            language,
            text: text.into(),
            images: images.to_vec(),
        };
        report.validate()?;
        Ok(report)
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.len() != 2 {
            return Err(Error::InvalidReport {
                id: self.id.clone(),
                reason: format!("expected exactly 2 images, found {}", self.images.len()),
            });
        }
        if normalize_text(&self.text).is_empty() {
            return Err(Error::InvalidReport {
                id: self.id.clone(),
                reason: "text is empty after normalization".into(),
            });
        }
        Ok(())
    }
}

/// Parses a JSON-lines corpus. Blank lines are skipped; unknown fields are ignored.
pub fn read_corpus<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<Report>> {
    let mut reports = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let report: Report = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        report.validate().map_err(|e| parse_err(e.to_string()))?;
        reports.push(report);
    }
    Ok(reports)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Report>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(std::io::BufReader::new(file), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(input: &str) -> Result<Vec<Report>> {
        read_corpus(input.as_bytes(), Path::new("mem.jsonl"))
    }

    #[test]
    fn reads_records_and_ignores_unknown_fields() {
        let input = r#"{"id":"r1","site":"thyroid","language":"zh","text":"甲状腺大小正常。","images":["a.png","b.png"],"extra":1}

{"id":"r2","site":"kidney","language":"en","text":"Normal.","images":["c","d"]}
"#;
        let reports = parse(input).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].site, Site::Thyroid);
        assert_eq!(reports[1].site, Site::Other("kidney".into()));
        assert_eq!(reports[1].language, Language::En);
    }

    #[test]
    fn wrong_image_count_cites_line() {
        let input = r#"{"id":"r1","site":"liver","language":"zh","text":"x","images":["a","b"]}
{"id":"r2","site":"liver","language":"zh","text":"x","images":["a"]}"#;
        match parse(input) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("2 images"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blank_text_rejected() {
        let err = Report::new("x", Site::Liver, Language::Zh, "  \u{3000} ", ["a".into(), "b".into()]).unwrap_err();
        assert!(matches!(err, Error::InvalidReport { .. }));
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let err = parse("{not json}\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
