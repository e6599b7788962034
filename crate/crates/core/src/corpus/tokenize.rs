use crate::corpus::types::Token;

/// Split on Unicode whitespace, then split every non-alphanumeric character
/// off as its own token. Offsets are character (not byte) positions.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let flush = |current: &mut String, start: usize, tokens: &mut Vec<Token>| {
        if !current.is_empty() {
            let len = current.chars().count();
            tokens.push(Token::new(std::mem::take(current), start, start + len));
        }
    };
    for (pos, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            flush(&mut current, start, &mut tokens);
        } else if c.is_alphanumeric() {
            if current.is_empty() {
                start = pos;
            }
            current.push(c);
        } else {
            flush(&mut current, start, &mut tokens);
            tokens.push(Token::new(c.to_string(), pos, pos + 1));
        }
    }
    flush(&mut current, start, &mut tokens);
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triples(text: &str) -> Vec<(String, usize, usize)> {
        tokenize(text).into_iter().map(|t| (t.surface, t.begin, t.end)).collect()
    }

    #[test]
    fn splits_punctuation() {
        assert_eq!(
            triples("a smear,"),
            vec![("a".into(), 0, 1), ("smear".into(), 2, 7), (",".into(), 7, 8)]
        );
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize(" \n\t").is_empty());
    }

    #[test]
    fn curly_apostrophe_is_its_own_token() {
        assert_eq!(
            triples("don’t"),
            vec![("don".into(), 0, 3), ("’".into(), 3, 4), ("t".into(), 4, 5)]
        );
    }

    #[test]
    fn offsets_count_characters_not_bytes() {
        assert_eq!(triples("é  ü"), vec![("é".into(), 0, 1), ("ü".into(), 3, 4)]);
    }
}
