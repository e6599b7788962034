//! Probability sets, label decisions, ensembling and the probability file.
//!
//! A probability file has one line per gold annotation row:
//! `<article_id>\t<begin>\t<end>\t<p_1>\t...\t<p_K>`, classes in label-set
//! order. Rows sharing a span are consecutive and carry identical vectors.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSet, SpanAnnotation};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    /// Every class at or above the threshold, argmax when none is.
    Multilabel,
    /// Argmax only.
    Single,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRow {
    pub article_id: String,
    pub begin: usize,
    pub end: usize,
    pub probabilities: Vec<f64>,
}

impl PredictionRow {
    fn same_identity(&self, other: &Self) -> bool {
        self.article_id == other.article_id && self.begin == other.begin && self.end == other.end
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PredictionSet {
    pub rows: Vec<PredictionRow>,
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Chosen classes in increasing id order; never empty for non-empty `p`.
pub fn decide_labels(p: &[f64], decision: Decision, threshold: f64) -> Vec<usize> {
    if p.is_empty() {
        return Vec::new();
    }
    if decision == Decision::Multilabel {
        let chosen: Vec<usize> = (0..p.len()).filter(|&i| p[i] >= threshold).collect();
        if !chosen.is_empty() {
            return chosen;
        }
    }
    vec![argmax(p)]
}

/// The `count` classes to emit for a span annotated by `count` gold rows:
/// decided classes first, then the rest, each part by falling probability
/// with ties to the lower id.
pub fn rows_for_sample(p: &[f64], count: usize, decision: Decision, threshold: f64) -> Vec<usize> {
    let decided = decide_labels(p, decision, threshold);
    let by_prob = |ids: &mut Vec<usize>| ids.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let mut first = decided.clone();
    by_prob(&mut first);
    let mut rest: Vec<usize> = (0..p.len()).filter(|i| !decided.contains(i)).collect();
    by_prob(&mut rest);
    first.into_iter().chain(rest).take(count).collect()
}

/// Element-wise mean of probability sets with identical row identities.
/// Values are summed in sorted order, so the result does not depend on the
/// order of `sets`.
pub fn ensemble(sets: &[PredictionSet]) -> Result<PredictionSet> {
    let Some(first) = sets.first() else {
        return Err(Error::contract("ensemble: no prediction sets"));
    };
    for (m, set) in sets.iter().enumerate().skip(1) {
        if set.rows.len() != first.rows.len() {
            return Err(Error::contract(format!(
                "ensemble: set {m} has {} rows, set 0 has {}",
                set.rows.len(),
                first.rows.len()
            )));
        }
        for (a, b) in first.rows.iter().zip(&set.rows) {
            if !a.same_identity(b) || a.probabilities.len() != b.probabilities.len() {
                return Err(Error::contract(format!(
                    "ensemble: row ({}, {}, {}) of set 0 does not match ({}, {}, {}) of set {m}",
                    a.article_id, a.begin, a.end, b.article_id, b.begin, b.end
                )));
            }
        }
    }
    let m = sets.len() as f64;
    let rows = first
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let probabilities = (0..row.probabilities.len())
                .map(|k| {
                    let mut vals: Vec<f64> = sets.iter().map(|s| s.rows[r].probabilities[k]).collect();
                    vals.sort_by(f64::total_cmp);
                    if vals[0] == vals[vals.len() - 1] {
                        vals[0]
                    } else {
                        vals.iter().sum::<f64>() / m
                    }
                })
                .collect();
            PredictionRow {
                probabilities,
                ..row.clone()
            }
        })
        .collect();
    Ok(PredictionSet { rows })
}

impl PredictionSet {
    /// TC annotation rows: each run of rows sharing a span receives as many
    /// techniques as it has rows.
    pub fn to_annotations(&self, labels: &LabelSet, decision: Decision, threshold: f64) -> Result<Vec<SpanAnnotation>> {
        let mut out = Vec::with_capacity(self.rows.len());
        let mut i = 0;
        while i < self.rows.len() {
            let row = &self.rows[i];
            if row.probabilities.len() != labels.len() {
                return Err(Error::contract(format!(
                    "row ({}, {}, {}) has {} probabilities for {} labels",
                    row.article_id,
                    row.begin,
                    row.end,
                    row.probabilities.len(),
                    labels.len()
                )));
            }
            let count = self.rows[i..].iter().take_while(|r| r.same_identity(row)).count();
            for k in rows_for_sample(&row.probabilities, count, decision, threshold) {
                out.push(SpanAnnotation::new(row.article_id.clone(), row.begin, row.end).with_technique(labels.name(k)));
            }
            i += count;
        }
        Ok(out)
    }
}

pub fn write_probabilities(set: &PredictionSet) -> String {
    let mut out = String::new();
    for r in &set.rows {
        let _ = write!(out, "{}\t{}\t{}", r.article_id, r.begin, r.end);
        for p in &r.probabilities {
            let _ = write!(out, "\t{p}");
        }
        out.push('\n');
    }
    out
}

pub fn read_probabilities(content: &str, context: &str) -> Result<PredictionSet> {
    let mut rows = Vec::new();
    let mut width = None;
    for (n, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Format {
            context: context.to_string(),
            line: n + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            return Err(err(format!("expected at least 4 columns, found {}", cols.len())));
        }
        let num = |s: &str| s.trim().parse::<usize>().map_err(|_| err(format!("bad offset {s:?}")));
        let (begin, end) = (num(cols[1])?, num(cols[2])?);
        let probabilities = cols[3..]
            .iter()
            .map(|s| match s.trim().parse::<f64>() {
                Ok(p) if (0.0..=1.0).contains(&p) => Ok(p),
                _ => Err(err(format!("bad probability {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if *width.get_or_insert(probabilities.len()) != probabilities.len() {
            return Err(err(format!("{} probabilities, earlier rows had {}", probabilities.len(), width.unwrap_or(0))));
        }
        rows.push(PredictionRow {
            article_id: cols[0].to_string(),
            begin,
            end,
            probabilities,
        });
    }
    Ok(PredictionSet { rows })
}

pub fn load_probabilities(path: &Path) -> Result<PredictionSet> {
    let content = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_probabilities(&content, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[(&str, usize, usize, &[f64])]) -> PredictionSet {
        PredictionSet {
            rows: rows
                .iter()
                .map(|(a, b, e, p)| PredictionRow {
                    article_id: a.to_string(),
                    begin: *b,
                    end: *e,
                    probabilities: p.to_vec(),
                })
                .collect(),
        }
    }

    #[test]
    fn decisions() {
        assert_eq!(decide_labels(&[0.9, 0.1], Decision::Multilabel, 0.5), vec![0]);
        assert_eq!(decide_labels(&[0.2, 0.2], Decision::Multilabel, 0.5), vec![0]);
        assert_eq!(decide_labels(&[0.6, 0.7], Decision::Multilabel, 0.5), vec![0, 1]);
        assert_eq!(decide_labels(&[0.6, 0.7], Decision::Single, 0.5), vec![1]);
    }

    #[test]
    fn ranking_for_repeated_rows() {
        let p = [0.3, 0.9, 0.6, 0.1];
        assert_eq!(rows_for_sample(&p, 1, Decision::Multilabel, 0.5), vec![1]);
        assert_eq!(rows_for_sample(&p, 3, Decision::Multilabel, 0.5), vec![1, 2, 0]);
        assert_eq!(rows_for_sample(&p, 2, Decision::Single, 0.5), vec![1, 2]);
    }

    #[test]
    fn disagreeing_pair_averages_to_a_tie() {
        let a = set(&[("1", 0, 4, &[0.4, 0.8])]);
        let b = set(&[("1", 0, 4, &[0.8, 0.4])]);
        let avg = ensemble(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(avg.rows[0].probabilities[0], avg.rows[0].probabilities[1]);
        assert_eq!(avg, ensemble(&[b, a]).unwrap());
        let labels = LabelSet::new(vec!["A".into(), "B".into()]).unwrap();
        let rows = avg.to_annotations(&labels, Decision::Multilabel, 0.5).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].technique.as_deref(), Some("A"));
    }

    #[test]
    fn ensemble_rejects_mismatched_rows() {
        let a = set(&[("1", 0, 4, &[0.4])]);
        let b = set(&[("1", 0, 5, &[0.4])]);
        assert!(ensemble(&[a.clone(), b]).is_err());
        assert!(ensemble(&[]).is_err());
        assert_eq!(ensemble(&[a.clone()]).unwrap(), a);
    }

    #[test]
    fn probability_file_round_trip() {
        let s = set(&[("7", 3, 9, &[0.1, 1.0 / 3.0]), ("7", 3, 9, &[0.1, 1.0 / 3.0])]);
        let text = write_probabilities(&s);
        assert!(text.starts_with("7\t3\t9\t0.1\t0.3333333333333333\n"));
        assert_eq!(read_probabilities(&text, "x").unwrap(), s);
        assert!(read_probabilities("7\t3\t9\t1.5\n", "x").is_err());
        assert!(read_probabilities("7\t3\t9\t0.5\n7\t3\t9\t0.5\t0.5\n", "x").is_err());
    }
}
