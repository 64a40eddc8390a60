use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-token contextual vectors of one text, all of the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddings {
    vectors: Vec<Vec<f64>>,
}

impl TokenEmbeddings {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Embedding("no token vectors".into()));
        }
        let dim = vectors[0].len();
        if dim == 0 {
            return Err(Error::Embedding("zero-dimensional vectors".into()));
        }
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::Embedding("token vectors differ in dimension".into()));
        }
        if vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Embedding("non-finite vector entry".into()));
        }
        Ok(TokenEmbeddings { vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

fn greedy(from: &TokenEmbeddings, to: &TokenEmbeddings) -> f64 {
    from.vectors
        .iter()
        .map(|u| {
            to.vectors
                .iter()
                .map(|v| cosine(u, v))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum::<f64>()
        / from.len() as f64
}

/// Greedy max-cosine alignment F1 between hypothesis and reference tokens.
///
/// The harmonic mean is only taken when precision and recall share a sign;
/// otherwise the score is 0, which keeps the result in `[-1, 1]`.
pub fn greedy_embed_f1(hyp: &TokenEmbeddings, reference: &TokenEmbeddings) -> Result<f64> {
    if hyp.dim() != reference.dim() {
        return Err(Error::Embedding(format!(
            "dimension mismatch: hyp {} vs ref {}",
            hyp.dim(),
            reference.dim()
        )));
    }
    let p = greedy(hyp, reference);
    let r = greedy(reference, hyp);
    if p * r <= 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * p * r / (p + r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Hyp,
    Ref,
}

#[derive(Deserialize)]
struct EmbeddingRecord {
    id: String,
    role: Role,
    vectors: Vec<Vec<f64>>,
}

/// Embeddings keyed by `(report id, role)`, read from a JSON-lines file.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    items: HashMap<(String, Role), TokenEmbeddings>,
}

impl EmbeddingStore {
    pub fn insert(&mut self, id: impl Into<String>, role: Role, emb: TokenEmbeddings) {
        self.items.insert((id.into(), role), emb);
    }

    pub fn get(&self, id: &str, role: Role) -> Result<&TokenEmbeddings> {
        self.items
            .get(&(id.to_string(), role))
            .ok_or_else(|| Error::Embedding(format!("no {role:?} embeddings for id {id:?}")))
    }

    pub fn read<R: BufRead>(reader: R, origin: &Path) -> Result<Self> {
        let mut store = EmbeddingStore::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let rec: EmbeddingRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let emb = TokenEmbeddings::new(rec.vectors).map_err(|e| parse_err(e.to_string()))?;
            let key = (rec.id, rec.role);
            if store.items.contains_key(&key) {
                return Err(parse_err(format!("duplicate embeddings for {:?} {:?}", key.0, key.1)));
            }
            store.items.insert(key, emb);
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        EmbeddingStore::read(std::io::BufReader::new(file), path)
    }
}
