//! Deterministic toy corpus: template news sentences with planted trigger
//! phrases, one trigger family per technique.

use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::io::{format_si_rows, format_tc_rows};
use crate::corpus::labels::LabelSet;
use crate::corpus::types::{Article, SpanAnnotation};
use crate::error::{Error, Result};

const SUBJECTS: [&str; 6] = [
    "The senator",
    "The committee",
    "Local officials",
    "The report",
    "Our correspondent",
    "The ministry",
];
const VERBS: [&str; 5] = ["discussed", "reviewed", "announced", "described", "criticised"];
const OBJECTS: [&str; 5] = [
    "the new budget",
    "the trade deal",
    "the election results",
    "the policy change",
    "the court ruling",
];
const ENDINGS: [&str; 4] = ["on Tuesday", "last week", "in a statement", "this morning"];

const TRIGGERS: [(&str, [&str; 3]); 4] = [
    ("Loaded_Language", ["absolutely ludicrous", "utterly disgraceful", "shameful disaster"]),
    ("Name_Calling,Labeling", ["corrupt elites", "radical extremists", "lying traitors"]),
    ("Doubt", ["so-called experts", "questionable sources", "dubious claims"]),
    ("Flag-Waving", ["our great nation", "true patriots", "proud heartland"]),
];

#[derive(Clone, Copy, Debug)]
pub struct SyntheticSpec {
    pub articles: usize,
    pub sentences_per_article: usize,
    /// Number of technique classes to plant, at most 4.
    pub classes: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            articles: 10,
            sentences_per_article: 5,
            classes: 3,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub articles: Vec<Article>,
    /// TC annotations; drop the technique for SI use.
    pub spans: Vec<SpanAnnotation>,
    pub labels: LabelSet,
}

/// Every fifth sentence is left clean; every other sentence carries one
/// trigger phrase of a randomly chosen class.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    if spec.classes == 0 || spec.classes > TRIGGERS.len() {
        return Err(Error::contract(format!(
            "synthetic corpus supports 1..={} classes, got {}",
            TRIGGERS.len(),
            spec.classes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels = LabelSet::new(TRIGGERS[..spec.classes].iter().map(|(n, _)| n.to_string()).collect())?;
    let mut articles = Vec::new();
    let mut spans = Vec::new();
    let mut sentence_index = 0;
    for a in 0..spec.articles {
        let id = (a + 1).to_string();
        let mut text = String::new();
        for _ in 0..spec.sentences_per_article {
            if !text.is_empty() {
                text.push(' ');
            }
            let subject = SUBJECTS.choose(&mut rng).unwrap();
            let verb = VERBS.choose(&mut rng).unwrap();
            let ending = ENDINGS.choose(&mut rng).unwrap();
            if sentence_index % 5 == 4 {
                let object = OBJECTS.choose(&mut rng).unwrap();
                text.push_str(&format!("{subject} {verb} {object} {ending}."));
            } else {
                let (technique, phrases) = TRIGGERS[..spec.classes].choose(&mut rng).unwrap();
                let phrase = phrases.choose(&mut rng).unwrap();
                let prefix = format!("{subject} {verb} the ");
                let begin = text.chars().count() + prefix.chars().count();
                let end = begin + phrase.chars().count();
                text.push_str(&format!("{prefix}{phrase} {ending}."));
                spans.push(SpanAnnotation::new(id.clone(), begin, end).with_technique(*technique));
            }
            sentence_index += 1;
        }
        text.push('\n');
        articles.push(Article::new(id, text));
    }
    Ok(SyntheticCorpus {
        articles,
        spans,
        labels,
    })
}

impl SyntheticCorpus {
    pub fn si_spans(&self) -> Vec<SpanAnnotation> {
        self.spans
            .iter()
            .map(|s| SpanAnnotation {
                technique: None,
                ..s.clone()
            })
            .collect()
    }

    /// Writes `articles/article<id>.txt`, `si-labels.tsv`, `tc-labels.tsv`
    /// and `techniques.txt` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let io = |path: &Path, e: std::io::Error| Error::Io {
            path: path.to_path_buf(),
            source: e,
        };
        let articles_dir = dir.join("articles");
        fs::create_dir_all(&articles_dir).map_err(|e| io(&articles_dir, e))?;
        for a in &self.articles {
            let path = articles_dir.join(format!("article{}.txt", a.id));
            fs::write(&path, &a.text).map_err(|e| io(&path, e))?;
        }
        let files = [
            ("si-labels.tsv", format_si_rows(&self.si_spans())),
            ("tc-labels.tsv", format_tc_rows(&self.spans)),
            ("techniques.txt", self.labels.to_file_contents()),
        ];
        for (name, content) in files {
            let path = dir.join(name);
            fs::write(&path, content).map_err(|e| io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_spans_slice_to_trigger_phrases() {
        let corpus = make_synthetic(&SyntheticSpec::default()).unwrap();
        assert_eq!(corpus.articles.len(), 10);
        assert_eq!(corpus.spans.len(), 40);
        for s in &corpus.spans {
            let article = corpus.articles.iter().find(|a| a.id == s.article_id).unwrap();
            let phrase = article.slice(s.begin, s.end);
            let technique = s.technique.as_deref().unwrap();
            let family = TRIGGERS.iter().find(|(n, _)| *n == technique).unwrap();
            assert!(family.1.contains(&phrase.as_str()), "{phrase}");
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = make_synthetic(&SyntheticSpec::default()).unwrap();
        let b = make_synthetic(&SyntheticSpec::default()).unwrap();
        assert_eq!(a.articles, b.articles);
        assert_eq!(a.spans, b.spans);
    }
}
