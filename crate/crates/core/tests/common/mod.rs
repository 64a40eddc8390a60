#![allow(dead_code)]

pub mod oracle;

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::json;

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_usreport"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn usreport")
}

pub fn arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

pub fn report_line(id: &str, site: &str, language: &str, text: &str) -> String {
    json!({
        "id": id,
        "site": site,
        "language": language,
        "text": text,
        "images": [format!("{id}/a.png"), format!("{id}/b.png")],
    })
    .to_string()
}

pub fn write_lines(path: &Path, lines: &[String]) {
    let mut text = lines.join("\n");
    if !lines.is_empty() {
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

/// A small zh thyroid/liver corpus with a CFDI fragment.
pub fn zh_corpus() -> Vec<String> {
    vec![
        report_line("t1", "thyroid", "zh", "甲状腺大小正常，形态规则；包膜完整。"),
        report_line("t2", "thyroid", "zh", "甲状腺大小正常，CFDI未见异常血流信号。"),
        report_line("l1", "liver", "zh", "肝脏大小正常，包膜完整，实质回声均匀。"),
    ]
}

pub fn candidates_tsv() -> &'static str {
    "source\ttarget\n\
     甲状腺大小正常\tthyroid size is normal\n\
     形态规则\tregular shape\n\
     包膜完整\tintact capsule\n\
     CFDI未见异常血流信号\tno abnormal blood flow signal on CFDI\n\
     肝脏大小正常\tliver size is normal\n\
     实质回声均匀\thomogeneous parenchymal echo\n"
}

/// Sets every status in a table file with a text substitution.
pub fn set_all_status(path: &Path, status: &str) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            out.push_str(line);
        } else {
            let mut cols: Vec<&str> = line.split('\t').collect();
            cols[2] = status;
            out.push_str(&cols.join("\t"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

pub struct ServerProcess {
    pub child: Child,
    pub base: String,
}

impl ServerProcess {
    pub fn start(table: &Path, corpus: &Path, extra: &[&str]) -> Result<Self, String> {
        let mut child = bin()
            .args([
                "serve",
                "--table",
                arg(table),
                "--corpus",
                arg(corpus),
                "--bind",
                "127.0.0.1:0",
            ])
            .args(extra)
            .stderr(Stdio::piped())
            .stdout(Stdio::null())
            .spawn()
            .expect("spawn server");
        let stderr = child.stderr.take().unwrap();
        let mut lines = BufReader::new(stderr).lines();
        let mut seen = Vec::new();
        for line in lines.by_ref() {
            let line = line.unwrap();
            if let Some(addr) = line.split("on http://").nth(1) {
                let base = format!("http://{}", addr.trim());
                // keep draining stderr so the server never blocks on a full pipe
                std::thread::spawn(move || for _ in lines {});
                return Ok(ServerProcess { child, base });
            }
            seen.push(line);
        }
        let status = child.wait().unwrap();
        Err(format!("server exited with {status}: {}", seen.join("\n")))
    }

    pub fn get(&self, path: &str) -> (u16, serde_json::Value) {
        match ureq::get(&format!("{}{path}", self.base)).call() {
            Ok(r) => (r.status(), r.into_json().unwrap()),
            Err(ureq::Error::Status(code, r)) => (code, r.into_json().unwrap()),
            Err(e) => panic!("{e}"),
        }
    }

    pub fn post(&self, path: &str, body: serde_json::Value) -> (u16, serde_json::Value) {
        match ureq::post(&format!("{}{path}", self.base)).send_json(body) {
            Ok(r) => (r.status(), r.into_json().unwrap()),
            Err(ureq::Error::Status(code, r)) => (code, r.into_json().unwrap()),
            Err(e) => panic!("{e}"),
        }
    }
}

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub const DELIMS: [char; 6] = [',', ';', '.', '，', '；', '。'];

/// Random Han-character fragment inventory, distinct entries.
pub fn han_inventory<R: Rng>(rng: &mut R, size: usize) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    while seen.len() < size {
        let len = rng.gen_range(2..7);
        let s: String = (0..len)
            .map(|_| char::from_u32(rng.gen_range(0x4E00..0x9FA5)).unwrap())
            .collect();
        seen.insert(s);
    }
    let mut v: Vec<String> = seen.into_iter().collect();
    v.shuffle(rng);
    v
}

/// Report text drawn from `inventory` with random delimiters and padding.
pub fn synth_text<R: Rng>(rng: &mut R, inventory: &[String]) -> (String, Vec<String>) {
    let n = rng.gen_range(1..9);
    let picks: Vec<String> = (0..n).map(|_| inventory.choose(rng).unwrap().clone()).collect();
    let mut text = String::new();
    for p in &picks {
        if rng.gen_bool(0.2) {
            text.push(' ');
        }
        text.push_str(p);
        text.push(*DELIMS.choose(rng).unwrap());
    }
    (text, picks)
}

pub fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

pub fn path_in(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}
