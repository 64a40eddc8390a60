//! The zh→en fragment translation memory.
//!
//! A [`FragmentTable`] holds one entry per normalized Chinese fragment. Entries
//! start `pending`; a reviewer approves, edits or rejects them. Only `approved`
//! and `edited` entries resolve during [`apply_table`], and neither status can be
//! persisted while the entry violates a protected-term rule.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::report::{Language, Report};
use crate::segmenter::{normalize_text, segment_report, Delimiters};

pub const TSV_HEADER: &str = "source\ttarget\tstatus\toccurrences\treviewer\tupdated_at";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryStatus {
    Pending,
    Approved,
    Edited,
    Rejected,
}

impl EntryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryStatus::Pending => "pending",
            EntryStatus::Approved => "approved",
            EntryStatus::Edited => "edited",
            EntryStatus::Rejected => "rejected",
        }
    }

    /// Whether the entry may be used to translate reports.
    pub fn is_resolved(self) -> bool {
        matches!(self, EntryStatus::Approved | EntryStatus::Edited)
    }
}

impl fmt::Display for EntryStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntryStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pending" => Ok(EntryStatus::Pending),
            "approved" => Ok(EntryStatus::Approved),
            "edited" => Ok(EntryStatus::Edited),
            "rejected" => Ok(EntryStatus::Rejected),
            other => Err(Error::Config(format!("unknown entry status {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentEntry {
    pub source: String,
    pub target: String,
    pub status: EntryStatus,
    pub occurrences: u64,
    pub reviewer: Option<String>,
    /// RFC 3339 time of the last review decision; unset for freshly built entries.
    pub updated_at: Option<String>,
}

/// Stable identifier for an entry in URLs.
pub fn source_hash(source: &str) -> String {
    let digest = Sha256::digest(source.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct ProtectedTermRule {
    pub pattern: String,
    pub description: String,
    regex: Regex,
}

impl ProtectedTermRule {
    pub fn new(pattern: &str, description: impl Into<String>) -> Result<Self> {
        let regex = Regex::new(pattern).map_err(|e| Error::InvalidPattern {
            pattern: pattern.to_string(),
            message: e.to_string(),
        })?;
        Ok(ProtectedTermRule {
            pattern: pattern.to_string(),
            description: description.into(),
            regex,
        })
    }
}

/// Built-in rules; the rules file extends them.
pub fn default_rules() -> Vec<ProtectedTermRule> {
    vec![ProtectedTermRule::new("CFDI", "color flow Doppler imaging").expect("static pattern")]
}

/// Parses a rules file: one pattern per line, blank lines and `#` lines skipped.
pub fn parse_rules(text: &str) -> Result<Vec<ProtectedTermRule>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| ProtectedTermRule::new(l.trim(), format!("rules file line {}", i + 1)))
        .collect()
}

/// Default rules plus every pattern in `path`, when given.
pub fn load_rules(path: Option<&Path>) -> Result<Vec<ProtectedTermRule>> {
    let mut rules = default_rules();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for rule in parse_rules(&text)? {
            if !rules.iter().any(|r| r.pattern == rule.pattern) {
                rules.push(rule);
            }
        }
    }
    Ok(rules)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub source: String,
    pub pattern: String,
    pub term: String,
}

pub fn describe_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("{:?} drops {:?} (rule {:?})", v.source, v.term, v.pattern))
        .collect::<Vec<_>>()
        .join("; ")
}

/// One violation per (rule, matched term) whose normalized form is absent from
/// the normalized target.
pub fn check_protected_terms(entry: &FragmentEntry, rules: &[ProtectedTermRule]) -> Vec<Violation> {
    let target = normalize_text(&entry.target);
    let mut violations = Vec::new();
    for rule in rules {
        let mut seen: Vec<&str> = Vec::new();
        for m in rule.regex.find_iter(&entry.source) {
            let term = m.as_str();
            if term.is_empty() || seen.contains(&term) {
                continue;
            }
            seen.push(term);
            if !target.contains(&normalize_text(term)) {
                violations.push(Violation {
                    source: entry.source.clone(),
                    pattern: rule.pattern.clone(),
                    term: term.to_string(),
                });
            }
        }
    }
    violations
}

/// A resolved entry must carry a non-empty target that keeps every protected term.
fn gate(entry: &FragmentEntry, rules: &[ProtectedTermRule]) -> Result<()> {
    if !entry.status.is_resolved() {
        return Ok(());
    }
    if entry.target.trim().is_empty() {
        return Err(Error::InvalidDecision(format!(
            "{:?} cannot be {} with an empty target",
            entry.source, entry.status
        )));
    }
    let violations = check_protected_terms(entry, rules);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::ProtectedTerms(violations))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FragmentTable {
    entries: Vec<FragmentEntry>,
    index: HashMap<String, usize>,
}

impl FragmentTable {
    pub fn from_entries(entries: Vec<FragmentEntry>) -> Result<Self> {
        let mut table = FragmentTable {
            entries,
            index: HashMap::new(),
        };
        table.sort();
        for (i, e) in table.entries.iter().enumerate() {
            if table.index.insert(e.source.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate table source {:?}", e.source)));
            }
        }
        Ok(table)
    }

    /// Descending occurrences, then lexicographic source.
    fn sort(&mut self) {
        self.entries
            .sort_by(|a, b| b.occurrences.cmp(&a.occurrences).then_with(|| a.source.cmp(&b.source)));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[FragmentEntry] {
        &self.entries
    }

    pub fn get(&self, source: &str) -> Option<&FragmentEntry> {
        self.index.get(source).map(|&i| &self.entries[i])
    }

    pub fn find_by_hash(&self, hash: &str) -> Option<&FragmentEntry> {
        self.entries.iter().find(|e| source_hash(&e.source) == hash)
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.entries
            .iter()
            .filter(|e| e.status.is_resolved())
            .all(|e| seen.insert(normalize_text(&e.target)))
    }

    /// en→zh mapping over resolved entries, keyed by normalized target.
    pub fn inverse(&self) -> HashMap<String, String> {
        self.entries
            .iter()
            .filter(|e| e.status.is_resolved())
            .map(|e| (normalize_text(&e.target), e.source.clone()))
            .collect()
    }

    /// Applies a reviewer decision to the entry for `source`.
    ///
    /// The table is left unchanged when the decision would break the
    /// protected-term gate.
    pub fn review(
        &mut self,
        source: &str,
        decision: Decision,
        reviewer: &str,
        rules: &[ProtectedTermRule],
        timestamp: &str,
    ) -> Result<&FragmentEntry> {
        let &i = self
            .index
            .get(source)
            .ok_or_else(|| Error::EntryNotFound(source.to_string()))?;
        let mut updated = self.entries[i].clone();
        match decision {
            Decision::Approve => updated.status = EntryStatus::Approved,
            Decision::Reject => updated.status = EntryStatus::Rejected,
            Decision::Edit(target) => {
                let target = target.trim();
                if target.is_empty() {
                    return Err(Error::InvalidDecision("edit requires a non-empty target".into()));
                }
                updated.target = target.to_string();
                updated.status = EntryStatus::Edited;
            }
        }
        gate(&updated, rules)?;
        updated.reviewer = Some(reviewer.to_string());
        updated.updated_at = Some(timestamp.to_string());
        self.entries[i] = updated;
        Ok(&self.entries[i])
    }

    /// Every protected-term violation among resolved entries plus empty resolved targets.
    pub fn validate(&self, rules: &[ProtectedTermRule]) -> Vec<Violation> {
        let mut out = Vec::new();
        for entry in self.entries.iter().filter(|e| e.status.is_resolved()) {
            if entry.target.trim().is_empty() {
                out.push(Violation {
                    source: entry.source.clone(),
                    pattern: "(empty target)".into(),
                    term: String::new(),
                });
            }
            out.extend(check_protected_terms(entry, rules));
        }
        out
    }

    /// Every violation, across all statuses, for reporting.
    pub fn all_violations(&self, rules: &[ProtectedTermRule]) -> Vec<(EntryStatus, Violation)> {
        self.entries
            .iter()
            .filter(|e| !e.target.is_empty())
            .flat_map(|e| check_protected_terms(e, rules).into_iter().map(move |v| (e.status, v)))
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(TSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            let fields = [
                escape(&e.source),
                escape(&e.target),
                e.status.as_str().to_string(),
                e.occurrences.to_string(),
                escape(e.reviewer.as_deref().unwrap_or("")),
                escape(e.updated_at.as_deref().unwrap_or("")),
            ];
            out.push_str(&fields.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        match lines.next() {
            Some((_, header)) if header.trim_end_matches('\r') == TSV_HEADER => {}
            _ => return Err(parse_err(1, format!("expected header {TSV_HEADER:?}"))),
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 6 {
                return Err(parse_err(i + 1, format!("expected 6 columns, found {}", cols.len())));
            }
            let optional = |s: &str| {
                let s = unescape(s);
                (!s.is_empty()).then_some(s)
            };
            entries.push(FragmentEntry {
                source: normalize_text(&unescape(cols[0])),
                target: unescape(cols[1]),
                status: cols[2].parse().map_err(|e: Error| parse_err(i + 1, e.to_string()))?,
                occurrences: cols[3]
                    .parse()
                    .map_err(|e: std::num::ParseIntError| parse_err(i + 1, format!("occurrences: {e}")))?,
                reviewer: optional(cols[4]),
                updated_at: optional(cols[5]),
            });
        }
        FragmentTable::from_entries(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FragmentTable::from_tsv(&text, path)
    }

    /// Atomically replaces `path` (write to a sibling temp file, then rename).
    ///
    /// Refuses to write when any resolved entry fails the protected-term gate.
    pub fn save(&self, path: &Path, rules: &[ProtectedTermRule]) -> Result<()> {
        for entry in &self.entries {
            gate(entry, rules)?;
        }
        write_atomic(path, self.to_tsv().as_bytes())
    }
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Prefix of the temp files `write_atomic` creates next to `path`.
fn temp_prefix(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    format!(".{name}.")
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = parent_dir(path);
    let mut tmp = tempfile::Builder::new()
        .prefix(&temp_prefix(path))
        .suffix(".tmp")
        .tempfile_in(dir)
        .map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Approve,
    Reject,
    Edit(String),
}

/// Exclusive advisory lock on `<table>.lock`, held until dropped.
///
/// The lock lives on a sidecar file because saves replace the table inode.
#[derive(Debug)]
pub struct TableLock {
    _file: File,
    path: PathBuf,
}

impl TableLock {
    pub fn acquire(table: &Path) -> Result<Self> {
        let mut name = table.as_os_str().to_owned();
        name.push(".lock");
        let path = PathBuf::from(name);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        match file.try_lock() {
            Ok(()) => {
                remove_stale_temps(table);
                Ok(TableLock { _file: file, path })
            }
            Err(std::fs::TryLockError::WouldBlock) => Err(Error::Locked(table.to_path_buf())),
            Err(std::fs::TryLockError::Error(e)) => Err(Error::io(&path, e)),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Removes temp files left by a writer that died mid-save. Only safe under the lock.
fn remove_stale_temps(table: &Path) {
    let prefix = temp_prefix(table);
    let Ok(dir) = std::fs::read_dir(parent_dir(table)) else {
        return;
    };
    for entry in dir.flatten() {
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with(&prefix) && name.ends_with(".tmp") {
            log::debug!("removing stale temp file {}", entry.path().display());
            let _ = std::fs::remove_file(entry.path());
        }
    }
}

/// Reads a candidate translations TSV of `source<TAB>target` rows.
///
/// Sources are normalized; a `source\ttarget` header row is skipped. Later rows win.
pub fn load_candidates(path: &Path) -> Result<HashMap<String, String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (i == 0 && line == "source\ttarget") {
            continue;
        }
        let (source, target) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected source<TAB>target".into(),
        })?;
        out.insert(normalize_text(&unescape(source)), unescape(target).trim().to_string());
    }
    Ok(out)
}

/// One pending entry per distinct normalized fragment of the zh corpus.
pub fn build_table(corpus: &[Report], candidates: &HashMap<String, String>, delimiters: &Delimiters) -> FragmentTable {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for report in corpus.iter().filter(|r| r.language == Language::Zh) {
        for frag in segment_report(&report.text, report.language, delimiters) {
            *counts.entry(frag.normalized).or_default() += 1;
        }
    }
    let entries = counts
        .into_iter()
        .map(|(source, occurrences)| FragmentEntry {
            target: candidates.get(&source).cloned().unwrap_or_default(),
            source,
            status: EntryStatus::Pending,
            occurrences,
            reviewer: None,
            updated_at: None,
        })
        .collect();
    FragmentTable::from_entries(entries).expect("sources are unique map keys")
}

/// How translated fragments are reassembled into an English report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinRule {
    pub separator: String,
    pub terminal: String,
}

impl Default for JoinRule {
    fn default() -> Self {
        JoinRule {
            separator: ", ".into(),
            terminal: ".".into(),
        }
    }
}

/// Translates a zh report fragment by fragment. Fails without partial output
/// when any fragment is missing from the table or not approved/edited.
pub fn apply_table(report: &Report, table: &FragmentTable, join: &JoinRule, delimiters: &Delimiters) -> Result<Report> {
    let fragments = segment_report(&report.text, report.language, delimiters);
    let mut unresolved = Vec::new();
    let mut targets = Vec::with_capacity(fragments.len());
    for frag in &fragments {
        match table.get(&frag.normalized) {
            Some(e) if e.status.is_resolved() && !e.target.trim().is_empty() => targets.push(e.target.trim()),
            _ => unresolved.push(frag.normalized.clone()),
        }
    }
    if !unresolved.is_empty() || fragments.is_empty() {
        return Err(Error::Unresolved {
            id: report.id.clone(),
            fragments: unresolved,
        });
    }
    let mut text = targets.join(&join.separator);
    text.push_str(&join.terminal);
    Ok(Report {
        id: report.id.clone(),
        site: report.site.clone(),
        language: Language::En,
        text,
        images: report.images.clone(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteStats {
    pub total_fragment_occurrences: u64,
    pub unique_fragments: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sites: BTreeMap<String, SiteStats>,
    /// Sums over `sites`.
    pub overall: SiteStats,
}

pub fn table_stats(corpus: &[Report], delimiters: &Delimiters) -> CorpusStats {
    let mut per_site: BTreeMap<String, (u64, std::collections::HashSet<String>)> = BTreeMap::new();
    for report in corpus {
        let slot = per_site.entry(report.site.to_string()).or_default();
        for frag in segment_report(&report.text, report.language, delimiters) {
            slot.0 += 1;
            slot.1.insert(frag.normalized);
        }
    }
    let mut stats = CorpusStats::default();
    for (site, (total, unique)) in per_site {
        let s = SiteStats {
            total_fragment_occurrences: total,
            unique_fragments: unique.len() as u64,
        };
        stats.overall.total_fragment_occurrences += s.total_fragment_occurrences;
        stats.overall.unique_fragments += s.unique_fragments;
        stats.sites.insert(site, s);
    }
    stats
}
