//! Marker-token samples for technique classification.
//!
//! Every distinct `(begin, end)` span in a window yields one sample over the
//! same window text, with the span marker inserted immediately before the
//! first and after the last in-span token of that span only.

use std::collections::BTreeMap;
use std::ops::Range;

use crate::corpus::labels::LabelSet;
use crate::corpus::types::{Article, Sentence, SpanAnnotation, Token};
use crate::corpus::vocab::{Vocabulary, CLS, MARKER};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TcSample {
    pub article_id: String,
    pub begin: usize,
    pub end: usize,
    /// `[CLS]`, the window tokens, and exactly two markers.
    pub token_ids: Vec<usize>,
    /// Positions of the in-span tokens in `token_ids`, markers excluded.
    pub span: Range<usize>,
    pub label_vector: Vec<u8>,
    /// How many annotation rows share this span.
    pub rows: usize,
}

impl TcSample {
    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.label_vector.iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, _)| i)
    }
}

/// Insert markers around `span` (token indices into the window). Returns the
/// marked layout as indices into the window, `None` for a marker.
pub fn marked_layout(window_len: usize, span: Range<usize>) -> Vec<Option<usize>> {
    let mut out = Vec::with_capacity(window_len + 2);
    out.extend((0..span.start).map(Some));
    out.push(None);
    out.extend(span.clone().map(Some));
    out.push(None);
    out.extend((span.end..window_len).map(Some));
    out
}

pub fn build_tc_samples(
    window: &[Token],
    spans: &[SpanAnnotation],
    vocab: &Vocabulary,
    labels: &LabelSet,
) -> Result<Vec<TcSample>> {
    let mut groups: BTreeMap<(usize, usize), Vec<&SpanAnnotation>> = BTreeMap::new();
    for s in spans {
        groups.entry((s.begin, s.end)).or_default().push(s);
    }
    let window_ids = vocab.encode(window.iter().map(|t| t.surface.as_str()));
    let mut samples = Vec::with_capacity(groups.len());
    for ((begin, end), members) in groups {
        let inside: Vec<usize> = window
            .iter()
            .enumerate()
            .filter(|(_, t)| t.begin < end && begin < t.end)
            .map(|(i, _)| i)
            .collect();
        let (Some(&first), Some(&last)) = (inside.first(), inside.last()) else {
            return Err(Error::Alignment(format!(
                "span ({begin}, {end}) of article {} covers no token",
                members[0].article_id
            )));
        };
        let mut label_vector = vec![0u8; labels.len()];
        for m in &members {
            if let Some(t) = &m.technique {
                let idx = labels
                    .index(t)
                    .ok_or_else(|| Error::Malformed(format!("unknown technique {t:?}")))?;
                label_vector[idx] = 1;
            }
        }
        let mut token_ids = vec![CLS];
        token_ids.extend(
            marked_layout(window.len(), first..last + 1)
                .into_iter()
                .map(|slot| slot.map_or(MARKER, |i| window_ids[i])),
        );
        samples.push(TcSample {
            article_id: members[0].article_id.clone(),
            begin,
            end,
            token_ids,
            span: first + 2..last + 3,
            label_vector,
            rows: members.len(),
        });
    }
    Ok(samples)
}

/// Group an article's spans by the run of sentences they overlap; each
/// group's window is the concatenated tokens of those sentences.
pub fn tc_windows<'a>(
    article: &Article,
    sentences: &[Sentence],
    spans: &'a [SpanAnnotation],
) -> Result<Vec<(Vec<Token>, Vec<SpanAnnotation>)>> {
    let mut groups: BTreeMap<(usize, usize), Vec<SpanAnnotation>> = BTreeMap::new();
    for s in spans.iter().filter(|s| s.article_id == article.id) {
        let touched: Vec<usize> = sentences
            .iter()
            .enumerate()
            .filter(|(_, sent)| sent.tokens.iter().any(|t| s.overlaps(t.begin, t.end)))
            .map(|(i, _)| i)
            .collect();
        let (Some(&a), Some(&b)) = (touched.first(), touched.last()) else {
            return Err(Error::Alignment(format!(
                "span ({}, {}) of article {} covers no token",
                s.begin, s.end, article.id
            )));
        };
        groups.entry((a, b)).or_default().push(s.clone());
    }
    Ok(groups
        .into_iter()
        .map(|((a, b), spans)| {
            let tokens = sentences[a..=b].iter().flat_map(|s| s.tokens.iter().cloned()).collect();
            (tokens, spans)
        })
        .collect())
}

/// All TC samples of an article, ordered by span.
pub fn article_tc_samples(
    article: &Article,
    sentences: &[Sentence],
    spans: &[SpanAnnotation],
    vocab: &Vocabulary,
    labels: &LabelSet,
) -> Result<Vec<TcSample>> {
    let mut samples = Vec::new();
    for (window, group) in tc_windows(article, sentences, spans)? {
        samples.extend(build_tc_samples(&window, &group, vocab, labels)?);
    }
    samples.sort_by_key(|s| (s.begin, s.end));
    Ok(samples)
}
