//! Task file formats: `article<id>.txt` files and tab-separated span rows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::types::{Article, LabelMode, SpanAnnotation};
use crate::error::{Error, Result};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Sort key for article ids: numeric ids in numeric order, then the rest
/// lexicographically.
fn id_key(id: &str) -> (u8, u128, String) {
    match id.parse::<u128>() {
        Ok(n) => (0, n, String::new()),
        Err(_) => (1, 0, id.to_string()),
    }
}

/// Read every `article<id>.txt` in `dir`, sorted by id. Other files are
/// ignored.
pub fn load_articles(dir: &Path) -> Result<Vec<Article>> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut articles = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(id) = name.strip_prefix("article").and_then(|s| s.strip_suffix(".txt")) else {
            continue;
        };
        if id.is_empty() {
            continue;
        }
        let path = entry.path();
        let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
        let text = String::from_utf8(bytes)
            .map_err(|e| io_err(&path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
        articles.push(Article::new(id, text));
    }
    articles.sort_by_key(|a| id_key(&a.id));
    for pair in articles.windows(2) {
        if id_key(&pair[0].id).0 == 0 && id_key(&pair[0].id) == id_key(&pair[1].id) {
            return Err(Error::Malformed(format!(
                "duplicate article id: {} and {}",
                pair[0].id, pair[1].id
            )));
        }
    }
    Ok(articles)
}

pub fn parse_span_labels(content: &str, mode: LabelMode, context: &str) -> Result<Vec<SpanAnnotation>> {
    let mut spans = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let fail = |message: String| Error::Format {
            context: context.to_string(),
            line: line_no,
            message,
        };
        let expected = match mode {
            LabelMode::Si => 3,
            LabelMode::Tc => 4,
        };
        if cols.len() != expected {
            return Err(fail(format!("expected {expected} columns, found {}", cols.len())));
        }
        let (id, technique, begin, end) = match mode {
            LabelMode::Si => (cols[0], None, cols[1], cols[2]),
            LabelMode::Tc => (cols[0], Some(cols[1]), cols[2], cols[3]),
        };
        if id.is_empty() {
            return Err(fail("empty article id".into()));
        }
        let begin: usize = begin
            .trim()
            .parse()
            .map_err(|_| fail(format!("bad begin offset {begin:?}")))?;
        let end: usize = end.trim().parse().map_err(|_| fail(format!("bad end offset {end:?}")))?;
        if begin >= end {
            return Err(fail("begin ≥ end".into()));
        }
        spans.push(SpanAnnotation {
            article_id: id.to_string(),
            begin,
            end,
            technique: technique.map(str::to_string),
        });
    }
    Ok(spans)
}

pub fn load_span_labels(path: &Path, mode: LabelMode) -> Result<Vec<SpanAnnotation>> {
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_span_labels(&content, mode, &path.display().to_string())
}

/// Load a span file whose mode is inferred from the column count of its
/// first non-empty row (3 = SI, 4 = TC).
pub fn load_span_labels_auto(path: &Path) -> Result<(Vec<SpanAnnotation>, LabelMode)> {
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mode = match content.lines().find(|l| !l.trim().is_empty()).map(|l| l.split('\t').count()) {
        Some(4) => LabelMode::Tc,
        _ => LabelMode::Si,
    };
    Ok((parse_span_labels(&content, mode, &path.display().to_string())?, mode))
}

pub fn format_si_rows(spans: &[SpanAnnotation]) -> String {
    let mut out = String::new();
    for s in spans {
        let _ = writeln!(out, "{}\t{}\t{}", s.article_id, s.begin, s.end);
    }
    out
}

pub fn format_tc_rows(spans: &[SpanAnnotation]) -> String {
    let mut out = String::new();
    for s in spans {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            s.article_id,
            s.technique.as_deref().unwrap_or(""),
            s.begin,
            s.end
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_si_and_tc_rows() {
        let si = parse_span_labels("7\t3\t9\n", LabelMode::Si, "t").unwrap();
        assert_eq!(si, vec![SpanAnnotation::new("7", 3, 9)]);
        let tc = parse_span_labels("7\tDoubt\t3\t9", LabelMode::Tc, "t").unwrap();
        assert_eq!(tc[0].technique.as_deref(), Some("Doubt"));
        assert_eq!((tc[0].begin, tc[0].end), (3, 9));
    }

    #[test]
    fn reversed_offsets_report_line() {
        let err = parse_span_labels("7\t9\t3", LabelMode::Si, "labels").unwrap_err();
        assert_eq!(err.to_string(), "labels: begin ≥ end at line 1");
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let err = parse_span_labels("1\t0\t4\n7\tDoubt\t3\t9\n", LabelMode::Si, "x").unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }), "{err}");
    }

    #[test]
    fn formats_round_trip() {
        let spans = vec![
            SpanAnnotation::new("1", 0, 4).with_technique("Doubt"),
            SpanAnnotation::new("2", 5, 9).with_technique("Name_Calling,Labeling"),
        ];
        let text = format_tc_rows(&spans);
        assert_eq!(text, "1\tDoubt\t0\t4\n2\tName_Calling,Labeling\t5\t9\n");
        assert_eq!(parse_span_labels(&text, LabelMode::Tc, "x").unwrap(), spans);
        assert_eq!(format_si_rows(&spans), "1\t0\t4\n2\t5\t9\n");
    }
}
