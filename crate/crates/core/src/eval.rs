//! Scoring for both tasks.
//!
//! SI uses the character-overlap measure: for predicted span `s`, gold span
//! `t` of the same article and normaliser `h`, `C(s, t, h) = |s ∩ t| / h`.
//! Precision averages `sum_t C(s, t, |s|)` over predictions, recall averages
//! `sum_s C(s, t, |t|)` over gold spans. Duplicate spans count separately.
//!
//! TC is micro-averaged F over technique assignments of spans matched by
//! `(article_id, begin, end)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::SpanAnnotation;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Empty for SI.
    pub per_class: BTreeMap<String, ClassScore>,
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn check_span(s: &SpanAnnotation) -> Result<()> {
    if s.begin >= s.end {
        return Err(Error::contract(format!(
            "malformed span ({}, {}) in article {}",
            s.begin, s.end, s.article_id
        )));
    }
    Ok(())
}

fn overlap(a: &SpanAnnotation, b: &SpanAnnotation) -> usize {
    a.end.min(b.end).saturating_sub(a.begin.max(b.begin))
}

pub fn si_score(predicted: &[SpanAnnotation], gold: &[SpanAnnotation]) -> Result<ScoreReport> {
    predicted.iter().chain(gold).try_for_each(check_span)?;
    if predicted.is_empty() && gold.is_empty() {
        return Ok(ScoreReport {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
            ..Default::default()
        });
    }
    let mut gold_by_article: HashMap<&str, Vec<&SpanAnnotation>> = HashMap::new();
    for g in gold {
        gold_by_article.entry(g.article_id.as_str()).or_default().push(g);
    }
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    for s in predicted {
        for t in gold_by_article.get(s.article_id.as_str()).into_iter().flatten() {
            let o = overlap(s, t) as f64;
            if o > 0.0 {
                p_sum += o / s.len() as f64;
                r_sum += o / t.len() as f64;
            }
        }
    }
    let precision = if predicted.is_empty() { 0.0 } else { p_sum / predicted.len() as f64 };
    let recall = if gold.is_empty() { 0.0 } else { r_sum / gold.len() as f64 };
    Ok(ScoreReport {
        precision,
        recall,
        f1: f1(precision, recall),
        per_class: BTreeMap::new(),
    })
}

type SpanKey<'a> = (&'a str, usize, usize);

fn technique(s: &SpanAnnotation) -> Result<&str> {
    s.technique.as_deref().ok_or_else(|| {
        Error::contract(format!(
            "row ({}, {}, {}) has no technique",
            s.article_id, s.begin, s.end
        ))
    })
}

pub fn tc_micro_f(predicted: &[SpanAnnotation], gold: &[SpanAnnotation]) -> Result<ScoreReport> {
    let mut gold_by_span: BTreeMap<SpanKey, Vec<&str>> = BTreeMap::new();
    for g in gold {
        check_span(g)?;
        gold_by_span
            .entry((g.article_id.as_str(), g.begin, g.end))
            .or_default()
            .push(technique(g)?);
    }
    let mut pred_by_span: BTreeMap<SpanKey, Vec<&str>> = BTreeMap::new();
    for p in predicted {
        check_span(p)?;
        let key = (p.article_id.as_str(), p.begin, p.end);
        if !gold_by_span.contains_key(&key) {
            return Err(Error::contract(format!(
                "prediction row {}\t{}\t{}\t{} matches no gold span",
                p.article_id,
                technique(p)?,
                p.begin,
                p.end
            )));
        }
        pred_by_span.entry(key).or_default().push(technique(p)?);
    }

    #[derive(Default)]
    struct Counts {
        tp: usize,
        fp: usize,
        fn_: usize,
        support: usize,
    }
    let mut classes: BTreeMap<&str, Counts> = BTreeMap::new();
    for (key, golds) in &gold_by_span {
        let mut remaining: Vec<&str> = golds.clone();
        for g in golds {
            classes.entry(g).or_default().support += 1;
        }
        for p in pred_by_span.get(key).into_iter().flatten() {
            if let Some(pos) = remaining.iter().position(|g| g == p) {
                remaining.swap_remove(pos);
                classes.entry(p).or_default().tp += 1;
            } else {
                classes.entry(p).or_default().fp += 1;
            }
        }
        for g in remaining {
            classes.entry(g).or_default().fn_ += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (tp, fp, fn_) = classes
        .values()
        .fold((0, 0, 0), |acc, c| (acc.0 + c.tp, acc.1 + c.fp, acc.2 + c.fn_));
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let per_class = classes
        .into_iter()
        .map(|(name, c)| {
            let p = ratio(c.tp, c.tp + c.fp);
            let r = ratio(c.tp, c.tp + c.fn_);
            (
                name.to_string(),
                ClassScore {
                    precision: p,
                    recall: r,
                    f1: f1(p, r),
                    support: c.support,
                },
            )
        })
        .collect();
    Ok(ScoreReport {
        precision,
        recall,
        f1: f1(precision, recall),
        per_class,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
/// One row of a training metrics file.
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EpochMetrics {
    pub const HEADER: &'static str = "epoch\tloss\tprecision\trecall\tf1";

    pub fn to_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.epoch, self.loss, self.precision, self.recall, self.f1
        )
    }
}

impl ScoreReport {
    /// Human-readable aligned table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<40} {:>9} {:>9} {:>9}", "", "precision", "recall", "f1");
        let _ = writeln!(
            out,
            "{:<40} {:>9.4} {:>9.4} {:>9.4}",
            "overall", self.precision, self.recall, self.f1
        );
        for (name, c) in &self.per_class {
            let _ = writeln!(
                out,
                "{:<40} {:>9.4} {:>9.4} {:>9.4}   support {}",
                name, c.precision, c.recall, c.f1, c.support
            );
        }
        out
    }

    /// Machine-readable `metric<TAB>value` rows.
    pub fn to_rows(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "precision\t{}", self.precision);
        let _ = writeln!(out, "recall\t{}", self.recall);
        let _ = writeln!(out, "f1\t{}", self.f1);
        for (name, c) in &self.per_class {
            let _ = writeln!(out, "{name}/precision\t{}", c.precision);
            let _ = writeln!(out, "{name}/recall\t{}", c.recall);
            let _ = writeln!(out, "{name}/f1\t{}", c.f1);
            let _ = writeln!(out, "{name}/support\t{}", c.support);
        }
        out
    }
}
