use super::TokenizedPair;
use crate::error::{Error, Result};

/// Longest common subsequence length, two-row dynamic program.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure of one pair. `beta = 1` is the balanced F1; larger
/// values weight recall.
pub fn rouge_l_pair(pair: &TokenizedPair, beta: f64) -> f64 {
    let l = lcs_len(&pair.hyp, &pair.reference);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / pair.hyp.len() as f64;
    let r = l as f64 / pair.reference.len() as f64;
    let b2 = beta * beta;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Mean per-pair ROUGE-L.
pub fn rouge_l(pairs: &[TokenizedPair], beta: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus("ROUGE-L"));
    }
    Ok(pairs.iter().map(|p| rouge_l_pair(p, beta)).sum::<f64>() / pairs.len() as f64)
}
