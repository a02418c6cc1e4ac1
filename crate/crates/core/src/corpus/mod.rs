//! Corpus data model.
//!
//! Tags are encoded as BIO (IOB2) indices under a [`LabelScheme`]: index 0 is `O`,
//! and category `c` owns `B-c = 1 + 2c` and `I-c = 2 + 2c`.

mod bio;
mod conll;
mod synth;

pub use bio::{decode_bio, encode_bio};
pub use conll::{infer_categories, parse_conll, serialize_conll};
pub use synth::{generate_synthetic, SynthConfig};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prefix {
    Begin,
    Inside,
}

/// Ordered category set and its BIO tag encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    categories: Vec<String>,
}

impl LabelScheme {
    pub const O: usize = 0;

    pub fn new<S: Into<String>>(categories: impl IntoIterator<Item = S>) -> Result<Self> {
        let categories: Vec<String> = categories.into_iter().map(Into::into).collect();
        if categories.is_empty() {
            return Err(Error::Config("label scheme needs at least one category".into()));
        }
        for (i, c) in categories.iter().enumerate() {
            if c.is_empty() || c == "O" || c.contains(char::is_whitespace) || c.contains('-') {
                return Err(Error::Config(format!("invalid category name `{c}`")));
            }
            if categories[..i].contains(c) {
                return Err(Error::Config(format!("duplicate category `{c}`")));
            }
        }
        Ok(Self { categories })
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    /// Number of tags `C = 2 * |categories| + 1`.
    pub fn tag_count(&self) -> usize {
        2 * self.categories.len() + 1
    }

    pub fn o_index(&self) -> usize {
        Self::O
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == name)
    }

    pub fn tag(&self, prefix: Prefix, category: usize) -> usize {
        debug_assert!(category < self.categories.len());
        match prefix {
            Prefix::Begin => 1 + 2 * category,
            Prefix::Inside => 2 + 2 * category,
        }
    }

    /// `None` for `O`.
    pub fn split_tag(&self, tag: usize) -> Option<(Prefix, usize)> {
        if tag == Self::O || tag >= self.tag_count() {
            return None;
        }
        let category = (tag - 1) / 2;
        let prefix = if (tag - 1) % 2 == 0 { Prefix::Begin } else { Prefix::Inside };
        Some((prefix, category))
    }

    pub fn tag_name(&self, tag: usize) -> String {
        match self.split_tag(tag) {
            None => "O".to_string(),
            Some((Prefix::Begin, c)) => format!("B-{}", self.categories[c]),
            Some((Prefix::Inside, c)) => format!("I-{}", self.categories[c]),
        }
    }

    pub fn parse_tag(&self, s: &str) -> Option<usize> {
        if s == "O" {
            return Some(Self::O);
        }
        let (prefix, cat) = s.split_once('-')?;
        let category = self.category_index(cat)?;
        match prefix {
            "B" => Some(self.tag(Prefix::Begin, category)),
            "I" => Some(self.tag(Prefix::Inside, category)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub category: String,
    /// Inclusive, 0-based.
    pub start: usize,
    /// Exclusive.
    pub end: usize,
}

impl EntitySpan {
    pub fn new(category: impl Into<String>, start: usize, end: usize) -> Self {
        Self { category: category.into(), start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &EntitySpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, token: usize) -> bool {
        self.start <= token && token < self.end
    }
}

impl fmt::Display for EntitySpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{},{})", self.category, self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub labels: Option<Vec<usize>>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, labels: Option<Vec<usize>>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Config("sentence must contain at least one token".into()));
        }
        if tokens.iter().any(|t| t.is_empty()) {
            return Err(Error::Config("empty token string".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != tokens.len() {
                return Err(Error::LengthMismatch { expected: tokens.len(), actual: labels.len() });
            }
        }
        Ok(Self { tokens, labels })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn spans(&self, scheme: &LabelScheme) -> Option<Vec<EntitySpan>> {
        self.labels.as_ref().map(|l| decode_bio(l, scheme))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub scheme: LabelScheme,
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, scheme: LabelScheme, sentences: Vec<Sentence>) -> Self {
        Self { name: name.into(), scheme, sentences }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn is_labelled(&self) -> bool {
        self.sentences.iter().all(|s| s.labels.is_some())
    }

    /// Gold spans per sentence; errors when any sentence lacks labels.
    pub fn gold_spans(&self) -> Result<Vec<Vec<EntitySpan>>> {
        self.sentences
            .iter()
            .map(|s| s.spans(&self.scheme).ok_or_else(|| Error::MissingLabels(self.name.clone())))
            .collect()
    }

    pub fn entity_count(&self) -> usize {
        self.sentences.iter().filter_map(|s| s.spans(&self.scheme)).map(|s| s.len()).sum()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }
}
