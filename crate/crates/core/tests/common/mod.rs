//! Brute-force reference implementations shared by the test targets.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use propspan::corpus::SpanAnnotation;
use propspan::si::CrfParams;

/// Every label path of length `t` over `k` labels, in lexicographic order.
pub fn all_paths(t: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..t {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

/// `log sum_paths exp(score)` by enumeration.
pub fn brute_log_partition(p: &CrfParams, emissions: &[f64], t: usize) -> f64 {
    let scores: Vec<f64> = all_paths(t, p.labels).iter().map(|path| p.path_score(emissions, path)).collect();
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

/// Highest-scoring path by enumeration. Lexicographic order plus a strict
/// comparison keeps the lexicographically smallest among ties.
pub fn brute_viterbi(p: &CrfParams, emissions: &[f64], t: usize) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for path in all_paths(t, p.labels) {
        let s = p.path_score(emissions, &path);
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, path));
        }
    }
    best.unwrap().1
}

/// SI precision and recall from explicit character-index sets.
pub fn brute_si_score(pred: &[SpanAnnotation], gold: &[SpanAnnotation]) -> (f64, f64) {
    let chars = |s: &SpanAnnotation| (s.begin..s.end).collect::<BTreeSet<usize>>();
    if pred.is_empty() && gold.is_empty() {
        return (1.0, 1.0);
    }
    let mut p = 0.0;
    let mut r = 0.0;
    for s in pred {
        for t in gold.iter().filter(|t| t.article_id == s.article_id) {
            let (cs, ct) = (chars(s), chars(t));
            let inter = cs.intersection(&ct).count() as f64;
            p += inter / cs.len() as f64;
            r += inter / ct.len() as f64;
        }
    }
    let precision = if pred.is_empty() { 0.0 } else { p / pred.len() as f64 };
    let recall = if gold.is_empty() { 0.0 } else { r / gold.len() as f64 };
    (precision, recall)
}

/// Character coverage per article.
pub fn coverage(spans: &[SpanAnnotation]) -> HashMap<String, BTreeSet<usize>> {
    let mut out: HashMap<String, BTreeSet<usize>> = HashMap::new();
    for s in spans {
        out.entry(s.article_id.clone()).or_default().extend(s.begin..s.end);
    }
    out
}

/// The fill rule written out position by position.
pub fn brute_fill(tags: &[u8]) -> Vec<u8> {
    (0..tags.len())
        .map(|i| {
            let left = tags[..=i].contains(&1);
            let right = tags[i..].contains(&1);
            u8::from(left && right)
        })
        .collect()
}

/// All binary vectors of length `n`.
pub fn binary_vectors(n: usize) -> impl Iterator<Item = Vec<u8>> {
    (0..1u32 << n).map(move |bits| (0..n).map(|i| ((bits >> i) & 1) as u8).collect())
}
