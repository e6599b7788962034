//! Conversion between character spans and per-token binary tags.

use crate::corpus::types::{Article, Sentence, SpanAnnotation};
use crate::error::{Error, Result};

/// Tag each token 1 iff its character interval overlaps any span of the
/// article. Overlapping spans collapse to their union; a span crossing a
/// sentence boundary tags tokens on both sides.
pub fn project_spans_to_tags(
    article: &Article,
    sentences: &[Sentence],
    spans: &[SpanAnnotation],
) -> Result<Vec<Sentence>> {
    let len = article.char_len();
    let mine: Vec<&SpanAnnotation> = spans.iter().filter(|s| s.article_id == article.id).collect();
    for s in &mine {
        if s.begin >= s.end || s.end > len {
            return Err(Error::Range {
                article_id: article.id.clone(),
                begin: s.begin,
                end: s.end,
                len,
            });
        }
    }
    Ok(sentences
        .iter()
        .map(|sent| {
            let tags = sent
                .tokens
                .iter()
                .map(|t| u8::from(mine.iter().any(|s| s.overlaps(t.begin, t.end))))
                .collect();
            Sentence {
                tags: Some(tags),
                ..sent.clone()
            }
        })
        .collect())
}

/// Each maximal run of 1-tags becomes one span from the first token's begin
/// to the last token's end.
pub fn tags_to_spans(sentence: &Sentence, tags: &[u8]) -> Result<Vec<SpanAnnotation>> {
    if tags.len() != sentence.tokens.len() {
        return Err(Error::contract(format!(
            "tags_to_spans: {} tags for {} tokens",
            tags.len(),
            sentence.tokens.len()
        )));
    }
    let mut spans = Vec::new();
    let mut run: Option<(usize, usize)> = None;
    for (tok, &tag) in sentence.tokens.iter().zip(tags) {
        if tag != 0 {
            run = Some(match run {
                Some((b, _)) => (b, tok.end),
                None => (tok.begin, tok.end),
            });
        } else if let Some((b, e)) = run.take() {
            spans.push(SpanAnnotation::new(sentence.article_id.clone(), b, e));
        }
    }
    if let Some((b, e)) = run {
        spans.push(SpanAnnotation::new(sentence.article_id.clone(), b, e));
    }
    // Two runs inside one sentence are always separated by a token, so the
    // whitespace merge only matters across sentences (see sentences_to_spans).
    Ok(spans)
}

/// Merge spans of one article that overlap, touch, or are separated only by
/// whitespace in `chars`. Input order is irrelevant; output is sorted.
pub fn merge_adjacent_spans(chars: &[char], mut spans: Vec<SpanAnnotation>) -> Vec<SpanAnnotation> {
    spans.sort_by(|a, b| (&a.article_id, a.begin, a.end).cmp(&(&b.article_id, b.begin, b.end)));
    let mut out: Vec<SpanAnnotation> = Vec::with_capacity(spans.len());
    for s in spans {
        if let Some(last) = out.last_mut() {
            let gap_is_blank = last.end <= s.begin
                && s.begin <= chars.len()
                && chars[last.end..s.begin].iter().all(|c| c.is_whitespace());
            if last.article_id == s.article_id && (s.begin <= last.end || gap_is_blank) {
                last.end = last.end.max(s.end);
                continue;
            }
        }
        out.push(s);
    }
    out
}

/// Article-level SI prediction: spans from every tagged sentence, merged
/// across whitespace-only gaps.
pub fn sentences_to_spans(article: &Article, sentences: &[Sentence], tags: &[Vec<u8>]) -> Result<Vec<SpanAnnotation>> {
    let mut spans = Vec::new();
    for (sent, t) in sentences.iter().zip(tags) {
        spans.extend(tags_to_spans(sent, t)?);
    }
    let chars: Vec<char> = article.text.chars().collect();
    Ok(merge_adjacent_spans(&chars, spans))
}
