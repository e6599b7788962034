use serde::{Deserialize, Serialize};

/// One news article. Character offsets count Unicode scalar values of `text`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Article {
    pub id: String,
    pub text: String,
}

impl Article {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// The characters in `[begin, end)`.
    pub fn slice(&self, begin: usize, end: usize) -> String {
        self.text.chars().skip(begin).take(end.saturating_sub(begin)).collect()
    }
}

/// A labelled character span `[begin, end)`. `technique` is `None` for
/// span identification rows.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub article_id: String,
    pub begin: usize,
    pub end: usize,
    pub technique: Option<String>,
}

impl SpanAnnotation {
    pub fn new(article_id: impl Into<String>, begin: usize, end: usize) -> Self {
        Self {
            article_id: article_id.into(),
            begin,
            end,
            technique: None,
        }
    }

    pub fn with_technique(mut self, technique: impl Into<String>) -> Self {
        self.technique = Some(technique.into());
        self
    }

    pub fn len(&self) -> usize {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.begin
    }

    pub fn overlaps(&self, begin: usize, end: usize) -> bool {
        self.begin < end && begin < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub begin: usize,
    pub end: usize,
}

impl Token {
    pub fn new(surface: impl Into<String>, begin: usize, end: usize) -> Self {
        Self {
            surface: surface.into(),
            begin,
            end,
        }
    }
}

/// A sentence of an article with its tokens and, once projected, one binary
/// tag per token (1 = propaganda).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub article_id: String,
    pub begin: usize,
    pub end: usize,
    pub tokens: Vec<Token>,
    pub tags: Option<Vec<u8>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelMode {
    Si,
    Tc,
}
