//! HTTP review service for fragment translations.
//!
//! Routes:
//!
//! * `GET /api/fragments?status=S&site=X&page=N&page_size=M`
//! * `POST /api/fragments/{source-hash}` with `{"action", "target"?, "reviewer"}`
//! * `GET /api/stats`
//! * anything else under `/` is a static asset from the assets directory
//!
//! All mutations go through one write lock: the decision is applied to a copy
//! of the table, the copy is saved with an atomic rename, and only then does it
//! replace the in-memory table. Each decision is appended to the audit log.

use std::collections::{BTreeSet, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use tiny_http::{Header, Request, Response, Server, StatusCode};

use crate::error::{Error, Result};
use crate::lexicon::{
    check_protected_terms, source_hash, table_stats, CorpusStats, Decision, EntryStatus, FragmentEntry, FragmentTable,
    ProtectedTermRule, TableLock, Violation,
};
use crate::report::Report;
use crate::segmenter::{segment_report, Delimiters};

pub const DEFAULT_BIND: &str = "127.0.0.1:8750";
pub const DEFAULT_PAGE_SIZE: usize = 50;
const MAX_EXAMPLES: usize = 3;

#[derive(Debug, Clone, Default, Serialize)]
struct Context {
    sites: BTreeSet<String>,
    examples: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReviewItem {
    pub id: String,
    #[serde(flatten)]
    pub entry: FragmentEntry,
    pub sites: Vec<String>,
    pub examples: Vec<String>,
    /// Protected terms found in the source, for highlighting.
    pub protected_terms: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ListResponse {
    pub items: Vec<ReviewItem>,
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct ListQuery {
    pub status: Option<EntryStatus>,
    pub site: Option<String>,
    pub page: Option<usize>,
    pub page_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Approve,
    Reject,
    Edit,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DecisionRequest {
    pub action: Action,
    #[serde(default)]
    pub target: Option<String>,
    pub reviewer: String,
}

#[derive(Debug, Serialize)]
struct AuditRecord<'a> {
    timestamp: &'a str,
    id: &'a str,
    source: &'a str,
    action: Action,
    target: Option<&'a str>,
    reviewer: &'a str,
    outcome: &'a str,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    violations: &'a [Violation],
}

/// Errors surfaced to HTTP clients.
#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Violations(Vec<Violation>),
    Internal(String),
}

impl ApiError {
    fn status(&self) -> u16 {
        match self {
            ApiError::BadRequest(_) => 400,
            ApiError::NotFound(_) => 404,
            ApiError::Violations(_) => 422,
            ApiError::Internal(_) => 500,
        }
    }

    fn body(&self) -> serde_json::Value {
        match self {
            ApiError::Violations(v) => serde_json::json!({ "error": "protected-term violation", "violations": v }),
            ApiError::BadRequest(m) | ApiError::NotFound(m) | ApiError::Internal(m) => {
                serde_json::json!({ "error": m })
            }
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::ProtectedTerms(v) => ApiError::Violations(v),
            Error::InvalidDecision(m) => ApiError::BadRequest(m),
            Error::EntryNotFound(m) => ApiError::NotFound(m),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

struct State {
    table: FragmentTable,
    stats: CorpusStats,
}

pub struct ReviewService {
    state: RwLock<State>,
    contexts: HashMap<String, Context>,
    rules: Vec<ProtectedTermRule>,
    table_path: PathBuf,
    audit_path: PathBuf,
    assets: Option<PathBuf>,
    _lock: TableLock,
}

pub fn default_audit_path(table: &Path) -> PathBuf {
    let mut name = table.as_os_str().to_owned();
    name.push(".audit.jsonl");
    PathBuf::from(name)
}

impl ReviewService {
    /// Loads the table under an exclusive lock held for the service lifetime.
    pub fn open(
        table_path: &Path,
        corpus: &[Report],
        rules: Vec<ProtectedTermRule>,
        delimiters: &Delimiters,
        audit_path: Option<PathBuf>,
        assets: Option<PathBuf>,
    ) -> Result<Self> {
        let lock = TableLock::acquire(table_path)?;
        let table = FragmentTable::load(table_path)?;
        let mut contexts: HashMap<String, Context> = HashMap::new();
        for report in corpus {
            for frag in segment_report(&report.text, report.language, delimiters) {
                let ctx = contexts.entry(frag.normalized).or_default();
                ctx.sites.insert(report.site.to_string());
                if ctx.examples.len() < MAX_EXAMPLES && !ctx.examples.contains(&report.text) {
                    ctx.examples.push(report.text.clone());
                }
            }
        }
        Ok(ReviewService {
            state: RwLock::new(State {
                table,
                stats: table_stats(corpus, delimiters),
            }),
            contexts,
            rules,
            audit_path: audit_path.unwrap_or_else(|| default_audit_path(table_path)),
            table_path: table_path.to_path_buf(),
            assets,
            _lock: lock,
        })
    }

    fn item(&self, entry: &FragmentEntry) -> ReviewItem {
        let ctx = self.contexts.get(&entry.source).cloned().unwrap_or_default();
        let mut protected_terms: Vec<String> = Vec::new();
        let probe = FragmentEntry {
            target: String::new(),
            ..entry.clone()
        };
        for v in check_protected_terms(&probe, &self.rules) {
            if !protected_terms.contains(&v.term) {
                protected_terms.push(v.term);
            }
        }
        ReviewItem {
            id: source_hash(&entry.source),
            entry: entry.clone(),
            sites: ctx.sites.into_iter().collect(),
            examples: ctx.examples,
            protected_terms,
        }
    }

    pub fn list(&self, query: &ListQuery) -> ListResponse {
        let state = self.state.read().expect("state lock poisoned");
        let page = query.page.unwrap_or(1).max(1);
        let page_size = query.page_size.unwrap_or(DEFAULT_PAGE_SIZE).clamp(1, 1000);
        let matching: Vec<&FragmentEntry> = state
            .table
            .entries()
            .iter()
            .filter(|e| query.status.is_none_or(|s| e.status == s))
            .filter(|e| {
                query
                    .site
                    .as_ref()
                    .is_none_or(|site| self.contexts.get(&e.source).is_some_and(|c| c.sites.contains(site)))
            })
            .collect();
        let items = matching
            .iter()
            .skip((page - 1) * page_size)
            .take(page_size)
            .map(|e| self.item(e))
            .collect();
        ListResponse {
            items,
            total: matching.len(),
            page,
            page_size,
        }
    }

    pub fn stats(&self) -> CorpusStats {
        self.state.read().expect("state lock poisoned").stats.clone()
    }

    pub fn table_snapshot(&self) -> FragmentTable {
        self.state.read().expect("state lock poisoned").table.clone()
    }

    /// Applies one decision, persisting it before it becomes visible.
    pub fn decide(&self, hash: &str, request: &DecisionRequest) -> Result<ReviewItem, ApiError> {
        if request.reviewer.trim().is_empty() {
            return Err(ApiError::BadRequest("reviewer is required".into()));
        }
        let decision = match (request.action, &request.target) {
            (Action::Approve, _) => Decision::Approve,
            (Action::Reject, _) => Decision::Reject,
            (Action::Edit, Some(t)) => Decision::Edit(t.clone()),
            (Action::Edit, None) => return Err(ApiError::BadRequest("edit requires a target".into())),
        };

        let mut state = self.state.write().expect("state lock poisoned");
        let source = state
            .table
            .find_by_hash(hash)
            .map(|e| e.source.clone())
            .ok_or_else(|| ApiError::NotFound(format!("no fragment with id {hash}")))?;
        let timestamp = now();
        let mut next = state.table.clone();
        let outcome = next
            .review(&source, decision, request.reviewer.trim(), &self.rules, &timestamp)
            .map(|_| ())
            .map_err(ApiError::from)
            .and_then(|()| next.save(&self.table_path, &self.rules).map_err(ApiError::from));

        let violations = match &outcome {
            Err(ApiError::Violations(v)) => v.as_slice(),
            _ => &[],
        };
        self.audit(&AuditRecord {
            timestamp: &timestamp,
            id: hash,
            source: &source,
            action: request.action,
            target: request.target.as_deref(),
            reviewer: &request.reviewer,
            outcome: if outcome.is_ok() { "applied" } else { "refused" },
            violations,
        })?;
        outcome?;

        state.table = next;
        let entry = state.table.get(&source).expect("reviewed entry exists");
        Ok(self.item(entry))
    }

    fn audit(&self, record: &AuditRecord) -> Result<(), ApiError> {
        let mut line = serde_json::to_string(record).map_err(|e| ApiError::Internal(e.to_string()))?;
        line.push('\n');
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.audit_path)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(|e| ApiError::Internal(format!("audit log {}: {e}", self.audit_path.display())))
    }

    /// Routes one request to a status code, content type and body.
    pub fn handle(&self, method: &str, url: &str, body: &[u8]) -> (u16, &'static str, Vec<u8>) {
        let parsed = match url::Url::parse("http://localhost").and_then(|base| base.join(url)) {
            Ok(u) => u,
            Err(e) => return json_response(&ApiError::BadRequest(e.to_string())),
        };
        let path = parsed.path();
        let result: Result<serde_json::Value, ApiError> = match (method, path) {
            ("GET", "/api/fragments") => parse_query(&parsed).map(|q| to_json(&self.list(&q))),
            ("GET", "/api/stats") => Ok(to_json(&self.stats())),
            ("POST", p) if p.starts_with("/api/fragments/") => {
                let hash = &p["/api/fragments/".len()..];
                serde_json::from_slice::<DecisionRequest>(body)
                    .map_err(|e| ApiError::BadRequest(format!("invalid decision body: {e}")))
                    .and_then(|req| self.decide(hash, &req))
                    .map(|item| to_json(&item))
            }
            ("GET", p) if !p.starts_with("/api/") => return self.asset(p),
            _ => Err(ApiError::NotFound(format!("{method} {path}"))),
        };
        match result {
            Ok(v) => (200, "application/json; charset=utf-8", v.to_string().into_bytes()),
            Err(e) => json_response(&e),
        }
    }

    fn asset(&self, path: &str) -> (u16, &'static str, Vec<u8>) {
        let rel = path.trim_start_matches('/');
        let rel = if rel.is_empty() { "index.html" } else { rel };
        let Some(root) = &self.assets else {
            if rel == "index.html" {
                return (200, "text/html; charset=utf-8", FALLBACK_INDEX.as_bytes().to_vec());
            }
            return json_response(&ApiError::NotFound(path.to_string()));
        };
        let rel = Path::new(rel);
        if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
            return json_response(&ApiError::BadRequest("invalid asset path".into()));
        }
        match std::fs::read(root.join(rel)) {
            Ok(bytes) => (200, content_type(rel), bytes),
            Err(_) => json_response(&ApiError::NotFound(path.to_string())),
        }
    }
}

const FALLBACK_INDEX: &str = "<!doctype html><meta charset=\"utf-8\"><title>usreport review</title>\
<p>Review UI assets are not installed. Start the server with <code>--assets DIR</code>; \
the JSON API is available under <code>/api/</code>.</p>";

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json") => "application/json; charset=utf-8",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

fn parse_query(url: &url::Url) -> Result<ListQuery, ApiError> {
    let mut q = ListQuery::default();
    for (k, v) in url.query_pairs() {
        let bad = |what: &str| ApiError::BadRequest(format!("invalid {what}: {v:?}"));
        match k.as_ref() {
            "status" => q.status = Some(v.parse().map_err(|_| bad("status"))?),
            "site" => q.site = Some(v.to_string()),
            "page" => q.page = Some(v.parse().map_err(|_| bad("page"))?),
            "page_size" => q.page_size = Some(v.parse().map_err(|_| bad("page_size"))?),
            _ => {}
        }
    }
    Ok(q)
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("response types serialize")
}

fn json_response(e: &ApiError) -> (u16, &'static str, Vec<u8>) {
    (
        e.status(),
        "application/json; charset=utf-8",
        e.body().to_string().into_bytes(),
    )
}

fn now() -> String {
    time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .expect("RFC 3339 formatting")
}

pub fn bind(addr: &str) -> Result<Server> {
    Server::http(addr).map_err(|e| Error::Config(format!("cannot bind {addr}: {e}")))
}

/// Serves requests until the server is unblocked. Readers run concurrently on
/// `workers` threads; writes serialize on the service lock.
pub fn run(service: Arc<ReviewService>, server: Arc<Server>, workers: usize) {
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1) {
            let service = Arc::clone(&service);
            let server = Arc::clone(&server);
            scope.spawn(move || {
                while let Ok(request) = server.recv() {
                    respond(&service, request);
                }
            });
        }
    });
}

fn respond(service: &ReviewService, mut request: Request) {
    let mut body = Vec::new();
    let (status, ctype, bytes) = match request.as_reader().read_to_end(&mut body) {
        Ok(_) => service.handle(request.method().as_str(), request.url(), &body),
        Err(e) => json_response(&ApiError::BadRequest(e.to_string())),
    };
    log::info!("{} {} -> {status}", request.method(), request.url());
    let header = Header::from_bytes("Content-Type", ctype).expect("static header");
    let response = Response::from_data(bytes)
        .with_status_code(StatusCode(status))
        .with_header(header);
    if let Err(e) = request.respond(response) {
        log::warn!("failed to send response: {e}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{default_rules, EntryStatus};
    use crate::report::{Language, Site};

    fn fixture() -> (tempfile::TempDir, ReviewService) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.tsv");
        let entries = [
            ("CFDI信号", "color flow signal", 3),
            ("包膜完整", "capsule intact", 2),
            ("形态规则", "", 1),
        ]
        .into_iter()
        .map(|(s, t, o)| FragmentEntry {
            source: s.into(),
            target: t.into(),
            status: EntryStatus::Pending,
            occurrences: o,
            reviewer: None,
            updated_at: None,
        })
        .collect();
        FragmentTable::from_entries(entries).unwrap().save(&path, &[]).unwrap();
        let corpus = vec![Report {
            id: "r1".into(),
            site: Site::Thyroid,
            language: Language::Zh,
            text: "包膜完整，CFDI信号。".into(),
            images: vec!["a".into(), "b".into()],
        }];
        let svc = ReviewService::open(&path, &corpus, default_rules(), &Delimiters::default(), None, None).unwrap();
        (dir, svc)
    }

    fn get(svc: &ReviewService, url: &str) -> (u16, serde_json::Value) {
        let (status, _, body) = svc.handle("GET", url, b"");
        (status, serde_json::from_slice(&body).unwrap())
    }

    fn post(svc: &ReviewService, hash: &str, body: serde_json::Value) -> (u16, serde_json::Value) {
        let (status, _, bytes) = svc.handle("POST", &format!("/api/fragments/{hash}"), body.to_string().as_bytes());
        (status, serde_json::from_slice(&bytes).unwrap())
    }

    #[test]
    fn lists_pending_in_occurrence_order_with_context() {
        let (_dir, svc) = fixture();
        let (status, body) = get(&svc, "/api/fragments?status=pending");
        assert_eq!(status, 200);
        assert_eq!(body["total"], 3);
        let sources: Vec<&str> = body["items"]
            .as_array()
            .unwrap()
            .iter()
            .map(|i| i["source"].as_str().unwrap())
            .collect();
        assert_eq!(sources, ["CFDI信号", "包膜完整", "形态规则"]);
        assert_eq!(body["items"][0]["protected_terms"][0], "CFDI");
        assert_eq!(body["items"][0]["sites"][0], "thyroid");
        assert_eq!(body["items"][0]["id"], source_hash("CFDI信号"));

        let (_, approved) = get(&svc, "/api/fragments?status=approved");
        assert_eq!(approved["total"], 0);
        let (_, liver) = get(&svc, "/api/fragments?site=liver");
        assert_eq!(liver["total"], 0);
        let (_, paged) = get(&svc, "/api/fragments?page=2&page_size=2");
        assert_eq!(paged["items"].as_array().unwrap().len(), 1);
        assert_eq!(get(&svc, "/api/fragments?status=bogus").0, 400);
    }

    #[test]
    fn approve_persists_and_is_visible() {
        let (dir, svc) = fixture();
        let (status, item) = post(
            &svc,
            &source_hash("包膜完整"),
            serde_json::json!({"action": "approve", "reviewer": "dr"}),
        );
        assert_eq!(status, 200, "{item}");
        assert_eq!(item["status"], "approved");
        let (_, body) = get(&svc, "/api/fragments?status=approved");
        assert_eq!(body["total"], 1);
        let on_disk = FragmentTable::load(&dir.path().join("table.tsv")).unwrap();
        assert_eq!(on_disk.get("包膜完整").unwrap().status, EntryStatus::Approved);
        let audit = std::fs::read_to_string(dir.path().join("table.tsv.audit.jsonl")).unwrap();
        assert!(audit.contains("\"outcome\":\"applied\""));
    }

    #[test]
    fn protected_term_edit_is_unprocessable() {
        let (dir, svc) = fixture();
        let hash = source_hash("CFDI信号");
        let (status, body) = post(&svc, &hash, serde_json::json!({"action": "approve", "reviewer": "dr"}));
        assert_eq!(status, 422);
        assert_eq!(body["violations"][0]["term"], "CFDI");
        let (status, _) = post(
            &svc,
            &hash,
            serde_json::json!({"action": "edit", "target": "flow signal", "reviewer": "dr"}),
        );
        assert_eq!(status, 422);
        let on_disk = FragmentTable::load(&dir.path().join("table.tsv")).unwrap();
        assert_eq!(on_disk.get("CFDI信号").unwrap().status, EntryStatus::Pending);
        assert_eq!(
            svc.table_snapshot().get("CFDI信号").unwrap().status,
            EntryStatus::Pending
        );

        let (status, body) = post(
            &svc,
            &hash,
            serde_json::json!({"action": "edit", "target": "CFDI signal", "reviewer": "dr"}),
        );
        assert_eq!(status, 200);
        assert_eq!(body["status"], "edited");
    }

    #[test]
    fn request_errors() {
        let (_dir, svc) = fixture();
        assert_eq!(
            post(&svc, "nope", serde_json::json!({"action": "approve", "reviewer": "dr"})).0,
            404
        );
        let hash = source_hash("形态规则");
        assert_eq!(
            post(&svc, &hash, serde_json::json!({"action": "edit", "reviewer": "dr"})).0,
            400
        );
        assert_eq!(
            post(&svc, &hash, serde_json::json!({"action": "approve", "reviewer": " "})).0,
            400
        );
        // empty target cannot be approved
        assert_eq!(
            post(&svc, &hash, serde_json::json!({"action": "approve", "reviewer": "dr"})).0,
            400
        );
        assert_eq!(
            post(&svc, &hash, serde_json::json!({"action": "launch", "reviewer": "dr"})).0,
            400
        );
        assert_eq!(svc.handle("DELETE", "/api/fragments", b"").0, 404);
    }

    #[test]
    fn stats_and_assets() {
        let (_dir, svc) = fixture();
        let (status, body) = get(&svc, "/api/stats");
        assert_eq!(status, 200);
        assert_eq!(body["sites"]["thyroid"]["total_fragment_occurrences"], 2);
        let (status, ctype, _) = svc.handle("GET", "/", b"");
        assert_eq!((status, ctype), (200, "text/html; charset=utf-8"));
        assert_eq!(svc.handle("GET", "/app.js", b"").0, 404);
    }

    #[test]
    fn second_service_on_same_table_is_locked_out() {
        let (dir, _svc) = fixture();
        let err = ReviewService::open(
            &dir.path().join("table.tsv"),
            &[],
            vec![],
            &Delimiters::default(),
            None,
            None,
        )
        .err()
        .unwrap();
        assert!(matches!(err, Error::Locked(_)));
    }
}
