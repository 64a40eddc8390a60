//! `usreport` command-line interface.
//!
//! Batch commands write deterministic artifacts (no timestamps) and a run
//! manifest echoing the resolved configuration. Exit status: 0 on success,
//! 1 when the wrapped operation reports an error, 2 for usage errors, 3 when
//! an input file is missing.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::ToolConfig;
use crate::datasetgen::{gen_samples, DatasetRecord};
use crate::error::{Error, Result};
use crate::lexicon::{
    build_table, load_candidates, load_rules, table_stats, write_atomic, FragmentEntry, FragmentTable, TableLock,
};
use crate::metrics::{
    compare_runs, evaluate_corpus, BleuMode, EmbeddingStore, KeywordList, MetricReport, MetricSummary,
};
use crate::report::{load_corpus, Report};
use crate::segmenter::{diff_fragments, segment_report, Delimiters, Fragment};
use crate::serve::{self, ReviewService};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_MISSING_INPUT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "usreport", version, about = "Bilingual ultrasound report fragment toolkit")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split every report of a corpus into fragments (JSON lines).
    Segment(SegmentArgs),
    /// Build the fragment lookup table from a zh corpus.
    BuildTable(BuildTableArgs),
    /// Check every table entry against the protected-term rules.
    ValidateTable(ValidateArgs),
    /// Generate the four-prompt SFT dataset.
    GenDataset(GenDatasetArgs),
    /// Fragment occurrence and unique counts per organ site.
    Stats(StatsArgs),
    /// Score hypotheses against references.
    Eval(EvalArgs),
    /// Fragment-level extra/missing analysis of hypotheses against references.
    Diff(DiffArgs),
    /// Serve the review API and UI for a table.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct DelimiterArg {
    /// Delimiter characters, e.g. ",;.，；。".
    #[arg(long)]
    pub delimiters: Option<String>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub delimiters: DelimiterArg,
}

#[derive(Debug, Args)]
pub struct BuildTableArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Candidate translations, TSV of source<TAB>target.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Existing table whose review decisions carry over to matching sources.
    #[arg(long)]
    pub previous: Option<PathBuf>,
    /// Output table; falls back to `table_path` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Extra protected-term patterns, one regex per line, added to the built-in ones.
    #[arg(long)]
    pub protected_terms: Option<PathBuf>,
    #[command(flatten)]
    pub delimiters: DelimiterArg,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Extra protected-term patterns, one regex per line, added to the built-in ones.
    #[arg(long)]
    pub protected_terms: Option<PathBuf>,
    /// Where to write the JSON report (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip manifest (defaults to `<out>.skipped.jsonl`).
    #[arg(long)]
    pub skip_manifest: Option<PathBuf>,
    /// Extra protected-term patterns, one regex per line, added to the built-in ones.
    #[arg(long)]
    pub protected_terms: Option<PathBuf>,
    /// Emit query-type samples without images.
    #[arg(long)]
    pub text_only_queries: bool,
    #[command(flatten)]
    pub delimiters: DelimiterArg,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub delimiters: DelimiterArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Hypothesis reports (JSON lines).
    #[arg(long)]
    pub hyps: PathBuf,
    /// Reference reports (JSON lines), matched to hypotheses by id.
    #[arg(long)]
    pub refs: PathBuf,
    /// Per-site clinical keyword list (JSON object of site -> keywords).
    #[arg(long)]
    pub keywords: Option<PathBuf>,
    /// Precomputed token embeddings (JSON lines of id, role, vectors).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Baseline metric report; adds relative gains to the output.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub bleu_mode: Option<BleuMode>,
    /// CIDEr multiplier (default 10).
    #[arg(long)]
    pub cider_scale: Option<f64>,
    /// Recall weight of ROUGE-L F (default 1).
    #[arg(long)]
    pub rouge_beta: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    /// Hypothesis reports (JSON lines).
    #[arg(long)]
    pub hyps: PathBuf,
    /// Reference reports (JSON lines), matched to hypotheses by id.
    #[arg(long)]
    pub refs: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub delimiters: DelimiterArg,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Corpus used for example contexts, site filters and statistics.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, env = "USREPORT_BIND", default_value = serve::DEFAULT_BIND)]
    pub bind: String,
    /// Directory holding the review UI bundle.
    #[arg(long)]
    pub assets: Option<PathBuf>,
    /// Decision audit log (defaults to `<table>.audit.jsonl`).
    #[arg(long)]
    pub audit_log: Option<PathBuf>,
    /// Extra protected-term patterns, one regex per line, added to the built-in ones.
    #[arg(long)]
    pub protected_terms: Option<PathBuf>,
    /// Request handler threads.
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
}

/// Parses arguments and runs, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MissingInput(_) => EXIT_MISSING_INPUT,
        _ => EXIT_FAILURE,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => ToolConfig::load(path)?,
        None => ToolConfig::default(),
    };
    match cli.command {
        Command::Segment(a) => {
            apply_delimiters(&mut config, &a.delimiters)?;
            cmd_segment(&config, &a)
        }
        Command::BuildTable(a) => {
            apply_delimiters(&mut config, &a.delimiters)?;
            override_path(&mut config.table_path, &a.out);
            override_path(&mut config.protected_terms_path, &a.protected_terms);
            cmd_build_table(&config, &a)
        }
        Command::ValidateTable(a) => {
            override_path(&mut config.table_path, &a.table);
            override_path(&mut config.protected_terms_path, &a.protected_terms);
            cmd_validate_table(&config, &a)
        }
        Command::GenDataset(a) => {
            apply_delimiters(&mut config, &a.delimiters)?;
            override_path(&mut config.table_path, &a.table);
            override_path(&mut config.protected_terms_path, &a.protected_terms);
            if a.text_only_queries {
                config.prompts.query_images = false;
            }
            cmd_gen_dataset(&config, &a)
        }
        Command::Stats(a) => {
            apply_delimiters(&mut config, &a.delimiters)?;
            cmd_stats(&config, &a)
        }
        Command::Eval(a) => {
            override_path(&mut config.keywords_path, &a.keywords);
            if let Some(m) = a.bleu_mode {
                config.metrics.bleu_mode = m;
            }
            if let Some(s) = a.cider_scale {
                config.metrics.cider_scale = s;
            }
            if let Some(b) = a.rouge_beta {
                config.metrics.rouge_beta = b;
            }
            config.check()?;
            cmd_eval(&config, &a)
        }
        Command::Diff(a) => {
            apply_delimiters(&mut config, &a.delimiters)?;
            cmd_diff(&config, &a)
        }
        Command::Serve(a) => {
            override_path(&mut config.table_path, &a.table);
            override_path(&mut config.protected_terms_path, &a.protected_terms);
            cmd_serve(&config, &a)
        }
    }
}

fn override_path(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

fn apply_delimiters(config: &mut ToolConfig, arg: &DelimiterArg) -> Result<()> {
    if let Some(chars) = &arg.delimiters {
        config.delimiters = Delimiters::new(chars.chars())?;
    }
    Ok(())
}

fn required<'a>(slot: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    slot.as_deref()
        .ok_or_else(|| Error::Config(format!("{what} is required (flag or config file)")))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn to_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifact types serialize");
    bytes.push(b'\n');
    bytes
}

fn to_jsonl<T: Serialize>(records: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, &r).expect("artifact types serialize");
        out.push(b'\n');
    }
    out
}

/// Writes `bytes` to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, bytes),
        None => std::io::stdout().write_all(bytes).map_err(|e| Error::io("<stdout>", e)),
    }
}

#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    command: &'a str,
    config: &'a ToolConfig,
    counts: C,
    errors: Vec<String>,
}

fn write_manifest<C: Serialize>(out: &Path, command: &str, config: &ToolConfig, counts: C) -> Result<()> {
    let manifest = RunManifest {
        command,
        config,
        counts,
        errors: Vec::new(),
    };
    write_atomic(&sidecar(out, ".manifest.json"), &to_pretty(&manifest))
}

#[derive(Serialize)]
struct SegmentRecord<'a> {
    id: &'a str,
    site: &'a str,
    language: crate::report::Language,
    fragments: Vec<FragmentOut>,
}

#[derive(Serialize)]
struct FragmentOut {
    index: usize,
    raw: String,
    normalized: String,
}

impl From<Fragment> for FragmentOut {
    fn from(f: Fragment) -> Self {
        FragmentOut {
            index: f.index,
            raw: f.raw,
            normalized: f.normalized,
        }
    }
}

pub fn cmd_segment(config: &ToolConfig, args: &SegmentArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let records = corpus.iter().map(|r| SegmentRecord {
        id: &r.id,
        site: r.site.as_str(),
        language: r.language,
        fragments: segment_report(&r.text, r.language, &config.delimiters)
            .into_iter()
            .map(FragmentOut::from)
            .collect(),
    });
    write_atomic(&args.out, &to_jsonl(records))?;
    write_manifest(&args.out, "segment", config, json!({ "reports": corpus.len() }))
}

pub fn cmd_build_table(config: &ToolConfig, args: &BuildTableArgs) -> Result<()> {
    let out = required(&config.table_path, "--out")?;
    let rules = load_rules(config.protected_terms_path.as_deref())?;
    let corpus = load_corpus(&args.corpus)?;
    let candidates = match &args.candidates {
        Some(p) => load_candidates(p)?,
        None => HashMap::new(),
    };
    let previous = args.previous.as_deref().map(FragmentTable::load).transpose()?;
    let _lock = TableLock::acquire(out)?;

    let mut table = build_table(&corpus, &candidates, &config.delimiters);
    if let Some(prev) = previous {
        let merged = table
            .entries()
            .iter()
            .map(|e| match prev.get(&e.source) {
                Some(p) if p.status != crate::lexicon::EntryStatus::Pending || e.target.is_empty() => FragmentEntry {
                    occurrences: e.occurrences,
                    ..p.clone()
                },
                _ => e.clone(),
            })
            .collect();
        table = FragmentTable::from_entries(merged)?;
    }
    table.save(out, &rules)?;
    let with_candidate = table.entries().iter().filter(|e| !e.target.is_empty()).count();
    write_manifest(
        out,
        "build-table",
        config,
        json!({ "reports": corpus.len(), "entries": table.len(), "with_candidate": with_candidate }),
    )
}

#[derive(Serialize)]
struct ValidationReport {
    table: PathBuf,
    entries_checked: usize,
    violations: Vec<ValidationItem>,
}

#[derive(Serialize)]
struct ValidationItem {
    status: crate::lexicon::EntryStatus,
    #[serde(flatten)]
    violation: crate::lexicon::Violation,
}

pub fn cmd_validate_table(config: &ToolConfig, args: &ValidateArgs) -> Result<()> {
    let path = required(&config.table_path, "--table")?;
    let rules = load_rules(config.protected_terms_path.as_deref())?;
    let table = FragmentTable::load(path)?;

    let mut violations: Vec<ValidationItem> = table
        .all_violations(&rules)
        .into_iter()
        .map(|(status, violation)| ValidationItem { status, violation })
        .collect();
    // resolved entries with an empty target
    for v in table.validate(&[]) {
        let status = table
            .get(&v.source)
            .map(|e| e.status)
            .expect("violation names an entry");
        violations.push(ValidationItem { status, violation: v });
    }
    let report = ValidationReport {
        table: path.to_path_buf(),
        entries_checked: table.len(),
        violations,
    };
    emit(args.out.as_deref(), &to_pretty(&report))?;
    if report.violations.is_empty() {
        Ok(())
    } else {
        let all = report.violations.into_iter().map(|v| v.violation).collect();
        Err(Error::ProtectedTerms(all))
    }
}

pub fn cmd_gen_dataset(config: &ToolConfig, args: &GenDatasetArgs) -> Result<()> {
    let table_path = required(&config.table_path, "--table")?;
    let rules = load_rules(config.protected_terms_path.as_deref())?;
    let corpus = load_corpus(&args.corpus)?;
    let table = FragmentTable::load(table_path)?;
    let violations = table.validate(&rules);
    if !violations.is_empty() {
        return Err(Error::ProtectedTerms(violations));
    }

    let generated = gen_samples(&corpus, &table, &config.prompts, &config.join, &config.delimiters);
    for skip in &generated.skipped {
        log::warn!("{}: {}", skip.id, skip.reason);
    }
    let records = generated
        .samples
        .iter()
        .map(|s| DatasetRecord::from_sample(s, &config.prompts.image_placeholder));
    write_atomic(&args.out, &to_jsonl(records))?;
    let skip_path = args
        .skip_manifest
        .clone()
        .unwrap_or_else(|| sidecar(&args.out, ".skipped.jsonl"));
    write_atomic(&skip_path, &to_jsonl(&generated.skipped))?;
    write_manifest(
        &args.out,
        "gen-dataset",
        config,
        json!({
            "reports": corpus.len(),
            "samples": generated.samples.len(),
            "skipped_reports": generated.skipped.len(),
        }),
    )
}

pub fn cmd_stats(config: &ToolConfig, args: &StatsArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let stats = table_stats(&corpus, &config.delimiters);
    emit(
        args.out.as_deref(),
        &to_pretty(&json!({ "stats": stats, "delimiters": config.delimiters })),
    )
}

#[derive(Serialize)]
struct EvalArtifact<'a> {
    #[serde(flatten)]
    report: &'a MetricReport,
    tool_config: &'a ToolConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<&'a Path>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gains: Option<std::collections::BTreeMap<&'static str, crate::metrics::Gain>>,
}

pub fn cmd_eval(config: &ToolConfig, args: &EvalArgs) -> Result<()> {
    let keywords_path = required(&config.keywords_path, "--keywords")?;
    let keywords = KeywordList::load(keywords_path)?;
    let hyps = load_corpus(&args.hyps)?;
    let refs = load_corpus(&args.refs)?;
    let embeddings = args.embeddings.as_deref().map(EmbeddingStore::load).transpose()?;
    let baseline: Option<MetricSummary> = args
        .baseline
        .as_deref()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: p.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })
        })
        .transpose()?;

    let report = evaluate_corpus(&hyps, &refs, &keywords, embeddings.as_ref(), &config.metrics)?;
    let gains = baseline.map(|b| compare_runs(&MetricSummary::from(&report), &b));
    let artifact = EvalArtifact {
        report: &report,
        tool_config: config,
        baseline: args.baseline.as_deref(),
        gains,
    };
    emit(args.out.as_deref(), &to_pretty(&artifact))
}

#[derive(Serialize)]
struct DiffRecord {
    id: String,
    matched: Vec<(String, String)>,
    extra: Vec<String>,
    missing: Vec<String>,
}

pub fn cmd_diff(config: &ToolConfig, args: &DiffArgs) -> Result<()> {
    let hyps = load_corpus(&args.hyps)?;
    let refs = load_corpus(&args.refs)?;
    let by_id: HashMap<&str, &Report> = hyps.iter().map(|h| (h.id.as_str(), h)).collect();
    let mut unmatched: Vec<String> = refs
        .iter()
        .filter(|r| !by_id.contains_key(r.id.as_str()))
        .map(|r| format!("ref:{}", r.id))
        .collect();
    let ref_ids: std::collections::HashSet<&str> = refs.iter().map(|r| r.id.as_str()).collect();
    unmatched.extend(
        hyps.iter()
            .filter(|h| !ref_ids.contains(h.id.as_str()))
            .map(|h| format!("hyp:{}", h.id)),
    );
    if !unmatched.is_empty() {
        return Err(Error::IdMismatch(unmatched));
    }

    let mut records = Vec::with_capacity(refs.len());
    let (mut matched, mut extra, mut missing) = (0, 0, 0);
    for reference in &refs {
        let pred = by_id[reference.id.as_str()];
        if pred.language != reference.language {
            return Err(Error::LanguageMismatch {
                pred: pred.language,
                reference: reference.language,
            });
        }
        let d = diff_fragments(
            segment_report(&pred.text, pred.language, &config.delimiters),
            segment_report(&reference.text, reference.language, &config.delimiters),
        );
        matched += d.matched.len();
        extra += d.extra.len();
        missing += d.missing.len();
        records.push(DiffRecord {
            id: reference.id.clone(),
            matched: d.matched.into_iter().map(|(p, r)| (p.raw, r.raw)).collect(),
            extra: d.extra.into_iter().map(|f| f.raw).collect(),
            missing: d.missing.into_iter().map(|f| f.raw).collect(),
        });
    }
    emit(
        args.out.as_deref(),
        &to_pretty(&json!({
            "totals": { "matched": matched, "extra": extra, "missing": missing },
            "pairs": records,
        })),
    )
}

pub fn cmd_serve(config: &ToolConfig, args: &ServeArgs) -> Result<()> {
    let table_path = required(&config.table_path, "--table")?;
    let rules = load_rules(config.protected_terms_path.as_deref())?;
    let corpus = load_corpus(&args.corpus)?;
    let service = ReviewService::open(
        table_path,
        &corpus,
        rules,
        &config.delimiters,
        args.audit_log.clone(),
        args.assets.clone(),
    )?;
    let server = serve::bind(&args.bind)?;
    eprintln!("serving {} on http://{}", table_path.display(), server.server_addr());
    serve::run(Arc::new(service), Arc::new(server), args.workers);
    Ok(())
}
