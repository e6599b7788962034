use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const CLS: usize = 3;
pub const MASK: usize = 4;
/// The span marker inserted around a classified span.
pub const MARKER: usize = 5;

const RESERVED: [&str; 6] = ["[PAD]", "[UNK]", "[BOS]", "[CLS]", "[MASK]", "[ST]"];

/// Bijection between token surfaces and ids. The first six ids are reserved.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    surfaces: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(surfaces: Vec<String>) -> Self {
        let index = surfaces.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self { surfaces, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.surfaces
    }
}

impl Vocabulary {
    /// Build from training surfaces. Surfaces seen fewer than `min_count`
    /// times stay out and map to [`UNK`]. Ids are assigned by descending
    /// frequency, ties by surface.
    pub fn build<'a>(surfaces: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in surfaces {
            *counts.entry(s).or_default() += 1;
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(s, c)| *c >= min_count && !RESERVED.contains(s))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let surfaces: Vec<String> = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(s, _)| s.to_string()))
            .collect();
        surfaces.into()
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn id(&self, surface: &str) -> usize {
        self.index.get(surface).copied().unwrap_or(UNK)
    }

    pub fn surface(&self, id: usize) -> Option<&str> {
        self.surfaces.get(id).map(String::as_str)
    }

    pub fn encode<'a>(&self, surfaces: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        surfaces.into_iter().map(|s| self.id(s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rare_tokens_map_to_unknown() {
        let v = Vocabulary::build(["a", "b", "a", "c", "c", "c"], 2);
        assert_eq!(v.len(), 8);
        assert_eq!(v.id("c"), 6);
        assert_eq!(v.id("a"), 7);
        assert_eq!(v.id("b"), UNK);
        assert_eq!(v.surface(MARKER), Some("[ST]"));
    }

    #[test]
    fn reserved_ids_are_distinct_and_serde_round_trips() {
        let ids = [PAD, UNK, BOS, CLS, MASK, MARKER];
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                assert_ne!(a, b);
            }
        }
        let v = Vocabulary::build(["x", "x", "y", "y"], 2);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("y"), v.id("y"));
    }
}
