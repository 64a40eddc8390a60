mod common;

use common::*;
use serde_json::{json, Value};
use usreport::lexicon::{source_hash, EntryStatus, FragmentTable};

struct Fixture {
    dir: tempfile::TempDir,
    corpus: std::path::PathBuf,
    table: std::path::PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempdir();
    let corpus = path_in(&dir, "corpus.jsonl");
    write_lines(&corpus, &zh_corpus());
    let cands = path_in(&dir, "cands.tsv");
    std::fs::write(&cands, candidates_tsv()).unwrap();
    let table = path_in(&dir, "table.tsv");
    let res = run(&[
        "build-table",
        "--corpus",
        arg(&corpus),
        "--candidates",
        arg(&cands),
        "--out",
        arg(&table),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    Fixture { dir, corpus, table }
}

#[test]
fn list_filter_and_paginate() {
    let f = fixture();
    let server = ServerProcess::start(&f.table, &f.corpus, &[]).unwrap();
    let (status, body) = server.get("/api/fragments?status=pending");
    assert_eq!(status, 200);
    assert_eq!(body["total"], 6);
    let first = &body["items"][0];
    assert_eq!(first["source"], "包膜完整");
    assert_eq!(first["id"], source_hash("包膜完整"));
    assert_eq!(first["sites"], json!(["liver", "thyroid"]));
    assert!(!first["examples"].as_array().unwrap().is_empty());

    let (_, body) = server.get("/api/fragments?site=liver&page=2&page_size=2");
    assert_eq!(body["total"], 3);
    assert_eq!(body["items"].as_array().unwrap().len(), 1);

    let (_, body) = server.get("/api/fragments?status=approved");
    assert_eq!(body["total"], 0);
    assert_eq!(server.get("/api/fragments?status=bogus").0, 400);

    let (status, stats) = server.get("/api/stats");
    assert_eq!(status, 200);
    assert_eq!(stats["overall"]["total_fragment_occurrences"], 8);
}

#[test]
fn approve_persists_and_audits() {
    let f = fixture();
    let server = ServerProcess::start(&f.table, &f.corpus, &[]).unwrap();
    let id = source_hash("包膜完整");
    let (status, item) = server.post(
        &format!("/api/fragments/{id}"),
        json!({"action": "approve", "reviewer": "dr-li"}),
    );
    assert_eq!(status, 200, "{item}");
    assert_eq!(item["status"], "approved");
    assert_eq!(item["reviewer"], "dr-li");
    assert!(item["updated_at"].is_string());

    let table = FragmentTable::load(&f.table).unwrap();
    assert_eq!(table.get("包膜完整").unwrap().status, EntryStatus::Approved);
    let audit = std::fs::read_to_string(f.dir.path().join("table.tsv.audit.jsonl")).unwrap();
    let record: Value = serde_json::from_str(audit.lines().last().unwrap()).unwrap();
    assert_eq!(record["outcome"], "applied");
    assert_eq!(record["reviewer"], "dr-li");

    let (_, body) = server.get("/api/fragments?status=pending");
    assert_eq!(body["total"], 5);
    assert_eq!(
        server
            .post(
                "/api/fragments/0000000000000000",
                json!({"action": "approve", "reviewer": "x"})
            )
            .0,
        404
    );
}

#[test]
fn protected_term_edit_is_refused() {
    let f = fixture();
    let server = ServerProcess::start(&f.table, &f.corpus, &[]).unwrap();
    let id = source_hash("CFDI未见异常血流信号");
    let before = std::fs::read(&f.table).unwrap();
    let (status, body) = server.post(
        &format!("/api/fragments/{id}"),
        json!({"action": "edit", "target": "no abnormal blood flow signal", "reviewer": "dr-li"}),
    );
    assert_eq!(status, 422, "{body}");
    assert_eq!(body["violations"][0]["term"], "CFDI");
    assert_eq!(std::fs::read(&f.table).unwrap(), before);

    let audit = std::fs::read_to_string(f.dir.path().join("table.tsv.audit.jsonl")).unwrap();
    let record: Value = serde_json::from_str(audit.lines().last().unwrap()).unwrap();
    assert_eq!(record["outcome"], "refused");

    let (status, item) = server.post(
        &format!("/api/fragments/{id}"),
        json!({"action": "edit", "target": "CFDI: no abnormal blood flow signal", "reviewer": "dr-li"}),
    );
    assert_eq!(status, 200, "{item}");
    assert_eq!(item["status"], "edited");
}

#[test]
fn edited_target_reaches_dataset() {
    let f = fixture();
    {
        let server = ServerProcess::start(&f.table, &f.corpus, &[]).unwrap();
        let (_, list) = server.get("/api/fragments?page_size=100");
        for item in list["items"].as_array().unwrap() {
            let id = item["id"].as_str().unwrap();
            let body = if item["source"] == "形态规则" {
                json!({"action": "edit", "target": "shape is regular", "reviewer": "r"})
            } else {
                json!({"action": "approve", "reviewer": "r"})
            };
            assert_eq!(server.post(&format!("/api/fragments/{id}"), body).0, 200);
        }
    }
    let out = path_in(&f.dir, "sft.jsonl");
    let res = run(&[
        "gen-dataset",
        "--corpus",
        arg(&f.corpus),
        "--table",
        arg(&f.table),
        "--out",
        arg(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 12);
    assert!(text.contains("thyroid size is normal, shape is regular, intact capsule."));
}

#[test]
fn second_server_on_same_table_is_refused() {
    let f = fixture();
    let _first = ServerProcess::start(&f.table, &f.corpus, &[]).unwrap();
    let err = ServerProcess::start(&f.table, &f.corpus, &[])
        .err()
        .expect("second server must fail");
    assert!(err.contains("locked"), "{err}");
}

#[test]
fn static_assets() {
    let f = fixture();
    let assets = path_in(&f.dir, "ui");
    std::fs::create_dir(&assets).unwrap();
    std::fs::write(assets.join("index.html"), "<h1>review</h1>").unwrap();
    std::fs::write(assets.join("app.js"), "console.log(1)").unwrap();
    let server = ServerProcess::start(&f.table, &f.corpus, &["--assets", arg(&assets)]).unwrap();
    let r = ureq::get(&format!("{}/", server.base)).call().unwrap();
    assert!(r.content_type().starts_with("text/html"));
    assert_eq!(r.into_string().unwrap(), "<h1>review</h1>");
    let r = ureq::get(&format!("{}/app.js", server.base)).call().unwrap();
    assert!(r.content_type().contains("javascript"));
    assert_eq!(server.get("/missing.css").0, 404);
}

#[cfg(unix)]
#[test]
fn kill_during_writes_never_corrupts_table() {
    let f = fixture();
    let ids: Vec<String> = FragmentTable::load(&f.table)
        .unwrap()
        .entries()
        .iter()
        .map(|e| source_hash(&e.source))
        .collect();
    let stray = || -> Vec<_> {
        std::fs::read_dir(f.dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
            .map(|e| e.file_name())
            .collect()
    };
    for round in 0..8 {
        let server = ServerProcess::start(&f.table, &f.corpus, &[]).unwrap();
        let base = server.base.clone();
        let ids = ids.clone();
        let writer = std::thread::spawn(move || {
            for i in 0.. {
                let id = &ids[i % ids.len()];
                let body = if i % 2 == 0 {
                    json!({"action": "reject", "reviewer": "r"})
                } else {
                    json!({"action": "approve", "reviewer": "r"})
                };
                if ureq::post(&format!("{base}/api/fragments/{id}"))
                    .send_json(body)
                    .is_err()
                {
                    break;
                }
            }
        });
        std::thread::sleep(std::time::Duration::from_millis(20 + 15 * round));
        drop(server);
        writer.join().unwrap();
        let table = FragmentTable::load(&f.table).expect("table parses after kill");
        assert_eq!(table.len(), 6);
        assert!(stray().len() <= 1, "temp files accumulate: {:?}", stray());
    }
    let _lock = usreport::lexicon::TableLock::acquire(&f.table).unwrap();
    assert!(stray().is_empty(), "{:?}", stray());
}
