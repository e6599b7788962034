//! Task data: article and span files, tokenization with character offsets,
//! sentence splitting, span/tag projection and technique-classification
//! samples.

pub mod io;
pub mod labels;
pub mod sentence;
pub mod synthetic;
pub mod tags;
pub mod tc_samples;
pub mod tokenize;
pub mod types;
pub mod vocab;

pub use io::{
    format_si_rows, format_tc_rows, load_articles, load_span_labels, load_span_labels_auto, parse_span_labels,
};
pub use labels::LabelSet;
pub use sentence::split_sentences;
pub use synthetic::{make_synthetic, SyntheticCorpus, SyntheticSpec};
pub use tags::{merge_adjacent_spans, project_spans_to_tags, sentences_to_spans, tags_to_spans};
pub use tc_samples::{article_tc_samples, build_tc_samples, marked_layout, tc_windows, TcSample};
pub use tokenize::tokenize;
pub use types::{Article, LabelMode, Sentence, SpanAnnotation, Token};
pub use vocab::Vocabulary;

/// Tagged sentences for a set of articles and their SI spans.
pub fn tagged_sentences(articles: &[Article], spans: &[SpanAnnotation]) -> crate::Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for a in articles {
        let sents = split_sentences(a);
        out.extend(project_spans_to_tags(a, &sents, spans)?);
    }
    Ok(out)
}

/// Vocabulary over every token of `articles`.
pub fn build_vocabulary(articles: &[Article], min_count: usize) -> Vocabulary {
    let tokens: Vec<Token> = articles.iter().flat_map(|a| tokenize(&a.text)).collect();
    Vocabulary::build(tokens.iter().map(|t| t.surface.as_str()), min_count)
}
