//! Brute-force reference implementations, independent of the library code.

use std::collections::BTreeMap;

/// Longest common subsequence by enumerating every subsequence of `a`.
pub fn brute_force_lcs(a: &[String], b: &[String]) -> usize {
    assert!(a.len() <= 16, "enumeration is exponential");
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let len = mask.count_ones() as usize;
        if len <= best {
            continue;
        }
        let sub: Vec<&String> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        let mut it = b.iter();
        if sub.iter().all(|s| it.any(|x| x == *s)) {
            best = len;
        }
    }
    best
}

pub fn rouge_l_f1(hyp: &[String], reference: &[String]) -> f64 {
    let l = brute_force_lcs(hyp, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / hyp.len() as f64;
    let r = l / reference.len() as f64;
    2.0 * p * r / (p + r)
}

fn grams(tokens: &[String], n: usize) -> Vec<String> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n)
        .map(|i| tokens[i..i + n].join("\u{1f}"))
        .collect()
}

/// First-principles CIDEr for one reference per item.
pub fn cider(items: &[(Vec<String>, Vec<String>)], scale: f64) -> f64 {
    let big_n = items.len() as f64;
    let mut total = 0.0;
    for (hyp, reference) in items {
        let mut item_sum = 0.0;
        for n in 1..=4 {
            let vector = |tokens: &[String]| -> BTreeMap<String, f64> {
                let g = grams(tokens, n);
                let mut out = BTreeMap::new();
                for key in &g {
                    if out.contains_key(key) {
                        continue;
                    }
                    let count = g.iter().filter(|k| *k == key).count() as f64;
                    let tf = count / g.len() as f64;
                    let df = items.iter().filter(|(_, r)| grams(r, n).contains(key)).count().max(1) as f64;
                    out.insert(key.clone(), tf * (big_n / df).ln());
                }
                out
            };
            let vh = vector(hyp);
            let vr = vector(reference);
            let dot: f64 = vh.iter().map(|(k, x)| x * vr.get(k).unwrap_or(&0.0)).sum();
            let nh: f64 = vh.values().map(|x| x * x).sum::<f64>().sqrt();
            let nr: f64 = vr.values().map(|x| x * x).sum::<f64>().sqrt();
            if nh > 0.0 && nr > 0.0 {
                item_sum += dot / (nh * nr);
            }
        }
        total += scale * item_sum / 4.0;
    }
    total / big_n
}
