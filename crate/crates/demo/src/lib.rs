//! In-browser operations over the propspan core. Each export takes plain
//! strings and returns JSON (or TSV for `ensemble`); the `*_json` Rust
//! functions behind them are usable and testable off the web.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use propspan::corpus::{
    format_tc_rows, parse_span_labels, project_spans_to_tags, sentences_to_spans, split_sentences, Article, LabelMode,
    LabelSet, SpanAnnotation,
};
use propspan::eval::{si_score, tc_micro_f, ScoreReport};
use propspan::si::postprocess_fill;
use propspan::tc::{ensemble as average, read_probabilities, Decision};

/// Article id used for text pasted into the page.
pub const DEMO_ARTICLE: &str = "demo";

fn spans_from(content: &str, task: &str, what: &str) -> Result<Vec<SpanAnnotation>, String> {
    let mode = match task {
        "si" => LabelMode::Si,
        "tc" => LabelMode::Tc,
        other => return Err(format!("unknown task {other:?}")),
    };
    parse_span_labels(content, mode, what).map_err(|e| e.to_string())
}

pub fn score_json(task: &str, gold: &str, pred: &str) -> Result<String, String> {
    let g = spans_from(gold, task, "gold")?;
    let p = spans_from(pred, task, "prediction")?;
    let report: ScoreReport = if task == "si" { si_score(&p, &g) } else { tc_micro_f(&p, &g) }.map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct TokenView {
    surface: String,
    begin: usize,
    end: usize,
    tag: u8,
    filled: u8,
}

#[derive(Serialize)]
struct SentenceView {
    begin: usize,
    end: usize,
    tokens: Vec<TokenView>,
}

#[derive(Serialize)]
struct TagView {
    sentences: Vec<SentenceView>,
    /// Spans recovered from the token tags, merged across blank gaps.
    spans: Vec<(usize, usize)>,
    /// Spans recovered after filling each sentence between its first and
    /// last tagged token.
    filled_spans: Vec<(usize, usize)>,
}

/// Split `text` into sentences and tokens, tag tokens that overlap any of
/// the `begin end` pairs in `spans` (one per line), and map the tags back
/// to character spans with and without fill postprocessing.
pub fn tag_json(text: &str, spans: &str) -> Result<String, String> {
    let article = Article::new(DEMO_ARTICLE, text);
    let mut annotations = Vec::new();
    for (i, line) in spans.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let nums: Vec<usize> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| format!("line {}: expected two offsets", i + 1))?;
        let [begin, end] = nums[..] else {
            return Err(format!("line {}: expected two offsets", i + 1));
        };
        if begin >= end {
            return Err(format!("line {}: begin must be below end", i + 1));
        }
        annotations.push(SpanAnnotation::new(DEMO_ARTICLE, begin, end));
    }
    let sentences = project_spans_to_tags(&article, &split_sentences(&article), &annotations).map_err(|e| e.to_string())?;
    let tags: Vec<Vec<u8>> = sentences.iter().map(|s| s.tags.clone().unwrap_or_default()).collect();
    let filled: Vec<Vec<u8>> = tags
        .iter()
        .map(|t| postprocess_fill(t))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let pairs = |t: &[Vec<u8>]| -> Result<Vec<(usize, usize)>, String> {
        Ok(sentences_to_spans(&article, &sentences, t)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|s| (s.begin, s.end))
            .collect())
    };
    let view = TagView {
        spans: pairs(&tags)?,
        filled_spans: pairs(&filled)?,
        sentences: sentences
            .iter()
            .zip(tags.iter().zip(&filled))
            .map(|(s, (t, f))| SentenceView {
                begin: s.begin,
                end: s.end,
                tokens: s
                    .tokens
                    .iter()
                    .zip(t.iter().zip(f))
                    .map(|(tok, (&tag, &filled))| TokenView {
                        surface: tok.surface.clone(),
                        begin: tok.begin,
                        end: tok.end,
                        tag,
                        filled,
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// Average probability files (given as separate strings) and return TC
/// rows. `labels` lists technique names one per line.
pub fn ensemble_tsv(files: &[String], labels: &str, single: bool, threshold: f64) -> Result<String, String> {
    let labels = LabelSet::new(labels.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
        .map_err(|e| e.to_string())?;
    let sets = files
        .iter()
        .enumerate()
        .map(|(i, f)| read_probabilities(f, &format!("file {}", i + 1)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let joint = average(&sets).map_err(|e| e.to_string())?;
    let decision = if single { Decision::Single } else { Decision::Multilabel };
    let rows = joint.to_annotations(&labels, decision, threshold).map_err(|e| e.to_string())?;
    Ok(format_tc_rows(&rows))
}

#[wasm_bindgen]
pub fn score(task: &str, gold: &str, pred: &str) -> Result<String, JsValue> {
    score_json(task, gold, pred).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn tag(text: &str, spans: &str) -> Result<String, JsValue> {
    tag_json(text, spans).map_err(|e| JsValue::from_str(&e))
}

/// `files` holds one probability file per element.
#[wasm_bindgen]
pub fn ensemble(files: Vec<String>, labels: &str, single: bool, threshold: f64) -> Result<String, JsValue> {
    ensemble_tsv(&files, labels, single, threshold).map_err(|e| JsValue::from_str(&e))
}
