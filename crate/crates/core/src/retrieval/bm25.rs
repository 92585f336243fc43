//! Okapi BM-25 over code tokens.

use std::collections::HashMap;

use super::KeyExample;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

/// Split code into lowercase word tokens: runs of alphanumerics, further
/// split at camelCase humps, acronym ends and letter/digit boundaries.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for run in text.split(|c: char| !c.is_alphanumeric()).filter(|r| !r.is_empty()) {
        let chars: Vec<char> = run.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let next = chars.get(i + 1).copied();
            let boundary = (prev.is_lowercase() && cur.is_uppercase())
                || (prev.is_alphabetic() != cur.is_alphabetic())
                || (prev.is_uppercase() && cur.is_uppercase() && next.is_some_and(char::is_lowercase));
            if boundary {
                out.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        out.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
    out
}

/// BM-25 score of every document against the query. Each query token
/// occurrence contributes one term of the sum.
pub fn bm25_scores(query: &[String], docs: &[Vec<String>]) -> Vec<f64> {
    let n = docs.len() as f64;
    if docs.is_empty() {
        return Vec::new();
    }
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut df: HashMap<&str, usize> = HashMap::new();
    let tfs: Vec<HashMap<&str, usize>> = docs
        .iter()
        .map(|d| {
            let mut tf: HashMap<&str, usize> = HashMap::new();
            for t in d {
                *tf.entry(t.as_str()).or_default() += 1;
            }
            for t in tf.keys() {
                *df.entry(t).or_default() += 1;
            }
            tf
        })
        .collect();
    docs.iter()
        .zip(&tfs)
        .map(|(doc, tf)| {
            let len_ratio = if avgdl > 0.0 { doc.len() as f64 / avgdl } else { 0.0 };
            query
                .iter()
                .map(|q| {
                    let f = *tf.get(q.as_str()).unwrap_or(&0) as f64;
                    if f == 0.0 {
                        return 0.0;
                    }
                    let nq = *df.get(q.as_str()).unwrap_or(&0) as f64;
                    let idf = ((n - nq + 0.5) / (nq + 0.5) + 1.0).ln();
                    idf * f * (BM25_K1 + 1.0) / (f + BM25_K1 * (1.0 - BM25_B + BM25_B * len_ratio))
                })
                .sum()
        })
        .collect()
}

/// Score examples against the alert context and sort best first. Ties go to
/// the higher-priority source, then path and line.
pub fn bm25_rank(query_text: &str, mut examples: Vec<KeyExample>) -> Vec<KeyExample> {
    let query = tokenize(query_text);
    let docs: Vec<Vec<String>> = examples.iter().map(|e| tokenize(&e.context_text)).collect();
    for (e, s) in examples.iter_mut().zip(bm25_scores(&query, &docs)) {
        e.score = s;
    }
    examples.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.source_priority.cmp(&b.source_priority))
            .then(a.source_order.cmp(&b.source_order))
            .then(a.snippet.cmp(&b.snippet))
            .then(a.predicate.cmp(&b.predicate))
    });
    examples
}
