//! Argmax prediction and CoNLL-style exact-match span scoring.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{decode_bio, Corpus, EntitySpan, Sentence};
use crate::tagger::{EncodedSentence, TaggerModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub matched: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.matched, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.matched, self.gold)
    }

    /// Zero when precision and recall are both zero.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn add(&mut self, other: Counts) {
        self.gold += other.gold;
        self.predicted += other.predicted;
        self.matched += other.matched;
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
    pub per_category: BTreeMap<String, Counts>,
}

impl EvalResult {
    fn from_counts(counts: Counts, per_category: BTreeMap<String, Counts>) -> Self {
        Self { precision: counts.precision(), recall: counts.recall(), f1: counts.f1(), counts, per_category }
    }

    pub fn csv_header(&self, per_category: bool) -> String {
        let mut h = String::from("precision,recall,f1,gold,predicted,matched");
        if per_category {
            for cat in self.per_category.keys() {
                let _ = write!(h, ",{cat}_precision,{cat}_recall,{cat}_f1");
            }
        }
        h
    }

    pub fn csv_row(&self, per_category: bool) -> String {
        let c = &self.counts;
        let mut row = format!("{},{},{},{},{},{}", self.precision, self.recall, self.f1, c.gold, c.predicted, c.matched);
        if per_category {
            for counts in self.per_category.values() {
                let _ = write!(row, ",{},{},{}", counts.precision(), counts.recall(), counts.f1());
            }
        }
        row
    }
}

/// Argmax tags (lowest index on ties) decoded to spans.
pub fn predict(model: &TaggerModel, sentences: &[Sentence]) -> Vec<Vec<EntitySpan>> {
    sentences.iter().map(|s| predict_encoded(model, &model.encode(s))).collect()
}

pub(crate) fn predict_encoded(model: &TaggerModel, sentence: &EncodedSentence) -> Vec<EntitySpan> {
    decode_bio(&model.forward_encoded(sentence).argmax(), model.scheme())
}

/// Micro-averaged exact-match span scores plus a per-category breakdown.
pub fn span_f1(predicted: &[Vec<EntitySpan>], gold: &[Vec<EntitySpan>]) -> Result<EvalResult> {
    if predicted.len() != gold.len() {
        return Err(Error::LengthMismatch { expected: gold.len(), actual: predicted.len() });
    }
    let mut per_category: BTreeMap<String, Counts> = BTreeMap::new();
    for (p, g) in predicted.iter().zip(gold) {
        let gold_set: HashSet<&EntitySpan> = g.iter().collect();
        for span in g {
            per_category.entry(span.category.clone()).or_default().gold += 1;
        }
        let mut seen = HashSet::new();
        for span in p {
            let entry = per_category.entry(span.category.clone()).or_default();
            entry.predicted += 1;
            if gold_set.contains(span) && seen.insert(span) {
                entry.matched += 1;
            }
        }
    }
    let mut total = Counts::default();
    for c in per_category.values() {
        total.add(*c);
    }
    Ok(EvalResult::from_counts(total, per_category))
}

pub fn evaluate(model: &TaggerModel, corpus: &Corpus) -> Result<EvalResult> {
    span_f1(&predict(model, &corpus.sentences), &corpus.gold_spans()?)
}

/// Pre-encoded validation corpus for repeated scoring during training.
pub(crate) struct Validator {
    encoded: Vec<EncodedSentence>,
    gold: Vec<Vec<EntitySpan>>,
}

impl Validator {
    pub fn new(val: &Corpus, buckets: usize) -> Result<Self> {
        Ok(Self {
            encoded: val.sentences.iter().map(|s| EncodedSentence::new(s, buckets)).collect(),
            gold: val.gold_spans()?,
        })
    }

    pub fn f1(&self, model: &TaggerModel) -> f64 {
        let predicted: Vec<_> = self.encoded.iter().map(|e| predict_encoded(model, e)).collect();
        span_f1(&predicted, &self.gold).map(|r| r.f1).unwrap_or(0.0)
    }
}
