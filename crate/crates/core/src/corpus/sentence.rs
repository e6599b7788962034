use crate::corpus::tokenize::tokenize;
use crate::corpus::types::{Article, Sentence, Token};

fn is_terminator(surface: &str) -> bool {
    matches!(surface, "." | "!" | "?")
}

fn is_closer(surface: &str) -> bool {
    matches!(surface, "\"" | "'" | "”" | "’" | "»" | ")" | "]" | "}")
}

/// Split an article into sentences.
///
/// A sentence ends after `.`, `!` or `?` when the next character is
/// whitespace (or the text ends). Closing quotes and brackets directly
/// after the terminator stay with the sentence. A line break between two
/// tokens also ends a sentence, so headlines stand alone.
pub fn split_sentences(article: &Article) -> Vec<Sentence> {
    let chars: Vec<char> = article.text.chars().collect();
    let tokens = tokenize(&article.text);
    let ws_after = |pos: usize| pos >= chars.len() || chars[pos].is_whitespace();
    let newline_between = |a: usize, b: usize| chars[a..b].iter().any(|c| *c == '\n');

    let mut bounds = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < tokens.len() {
        let mut last = i;
        if is_terminator(&tokens[i].surface) {
            while last + 1 < tokens.len()
                && tokens[last + 1].begin == tokens[last].end
                && (is_terminator(&tokens[last + 1].surface) || is_closer(&tokens[last + 1].surface))
            {
                last += 1;
            }
            if ws_after(tokens[last].end) {
                bounds.push((start, last + 1));
                start = last + 1;
                i = last + 1;
                continue;
            }
        }
        if last + 1 < tokens.len() && newline_between(tokens[last].end, tokens[last + 1].begin) {
            bounds.push((start, last + 1));
            start = last + 1;
        }
        i = last + 1;
    }
    if start < tokens.len() {
        bounds.push((start, tokens.len()));
    }

    let mut tokens = tokens.into_iter();
    bounds
        .into_iter()
        .map(|(a, b)| {
            let toks: Vec<Token> = tokens.by_ref().take(b - a).collect();
            Sentence {
                article_id: article.id.clone(),
                begin: toks[0].begin,
                end: toks[toks.len() - 1].end,
                tokens: toks,
                tags: None,
            }
        })
        .collect()
}
