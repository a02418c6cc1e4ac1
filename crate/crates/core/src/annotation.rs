//! Partial annotations and label distributions.
//!
//! A partially annotated sentence keeps a subset of its gold entities (the known set
//! `E`); every other token reads as `O`. Teacher distributions over tags can be
//! corrected with `E` via [`guide_correct`]: tokens inside a known span get the
//! one-hot vector of their hard label, all others pass through untouched.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{encode_bio, Corpus, EntitySpan, LabelScheme, Sentence};
use crate::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-6;

/// Known-correct, pairwise disjoint spans of one sentence, sorted by start.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityAnnotationSet {
    spans: Vec<EntitySpan>,
}

impl EntityAnnotationSet {
    pub fn new(mut spans: Vec<EntitySpan>, length: usize) -> Result<Self> {
        spans.sort();
        for s in &spans {
            if s.is_empty() || s.end > length {
                return Err(Error::SpanOutOfRange { span: s.to_string(), len: length });
            }
        }
        for w in spans.windows(2) {
            if w[0].overlaps(&w[1]) {
                return Err(Error::OverlappingSpans { first: w[0].to_string(), second: w[1].to_string() });
            }
        }
        Ok(Self { spans })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn spans(&self) -> &[EntitySpan] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn covers(&self, token: usize) -> bool {
        self.spans.iter().any(|s| s.contains(token))
    }
}

/// A probability vector over the `C` tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution(Vec<f64>);

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_probs(&probs)?;
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("no classes".into()));
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidDistribution(format!("component {p}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("sums to {sum}")));
    }
    Ok(())
}

pub fn one_hot(label: usize, classes: usize) -> Result<LabelDistribution> {
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let mut probs = vec![0.0; classes];
    probs[label] = 1.0;
    Ok(LabelDistribution(probs))
}

/// One distribution per token, stored row-major (`len × classes`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSequence {
    classes: usize,
    probs: Vec<f64>,
}

impl DistributionSequence {
    pub fn from_rows(classes: usize, probs: Vec<f64>) -> Result<Self> {
        if classes == 0 || probs.len() % classes != 0 {
            return Err(Error::InvalidDistribution(format!("{} values do not tile rows of {classes}", probs.len())));
        }
        for row in probs.chunks(classes) {
            validate_probs(row)?;
        }
        Ok(Self { classes, probs })
    }

    /// Skips validation; callers guarantee each row is a distribution.
    pub(crate) fn from_rows_unchecked(classes: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len() % classes, 0);
        Self { classes, probs }
    }

    pub fn from_distributions(dists: &[LabelDistribution]) -> Result<Self> {
        let classes = dists.first().map_or(0, |d| d.0.len());
        if dists.iter().any(|d| d.0.len() != classes) {
            return Err(Error::InvalidDistribution("rows of differing width".into()));
        }
        Ok(Self { classes, probs: dists.iter().flat_map(|d| d.0.iter().copied()).collect() })
    }

    pub fn one_hot_labels(labels: &[usize], classes: usize) -> Result<Self> {
        let mut probs = vec![0.0; labels.len() * classes];
        for (k, &l) in labels.iter().enumerate() {
            if l >= classes {
                return Err(Error::LabelOutOfRange { label: l, classes });
            }
            probs[k * classes + l] = 1.0;
        }
        Ok(Self { classes, probs })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        if self.classes == 0 {
            0
        } else {
            self.probs.len() / self.classes
        }
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, token: usize) -> &[f64] {
        &self.probs[token * self.classes..(token + 1) * self.classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks(self.classes)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.probs
    }

    pub fn validate(&self) -> Result<()> {
        self.rows().try_for_each(validate_probs)
    }

    /// Lowest index wins ties.
    pub fn argmax(&self) -> Vec<usize> {
        self.rows()
            .map(|row| {
                let mut best = 0;
                for (j, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// Replaces the distribution of every token covered by `known` with the one-hot
/// vector of its hard label. Uncovered tokens are copied bit for bit.
pub fn guide_correct(
    dists: &DistributionSequence,
    known: &EntityAnnotationSet,
    labels: &[usize],
) -> Result<DistributionSequence> {
    if dists.len() != labels.len() {
        return Err(Error::LengthMismatch { expected: labels.len(), actual: dists.len() });
    }
    let classes = dists.classes;
    let mut out = dists.clone();
    for span in known.spans() {
        if span.end > labels.len() {
            return Err(Error::SpanOutOfRange { span: span.to_string(), len: labels.len() });
        }
        for k in span.start..span.end {
            let label = labels[k];
            if label >= classes {
                return Err(Error::LabelOutOfRange { label, classes });
            }
            let row = &mut out.probs[k * classes..(k + 1) * classes];
            row.fill(0.0);
            row[label] = 1.0;
        }
    }
    Ok(out)
}

/// A sentence whose hard labels tag only the kept entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartiallyAnnotatedSentence {
    pub sentence: Sentence,
    pub known: EntityAnnotationSet,
}

impl PartiallyAnnotatedSentence {
    pub fn labels(&self) -> &[usize] {
        self.sentence.labels.as_deref().expect("partial sentences always carry labels")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeptSpan {
    pub sentence: usize,
    pub span: EntitySpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialCorpus {
    pub name: String,
    pub scheme: LabelScheme,
    pub sentences: Vec<PartiallyAnnotatedSentence>,
}

impl PartialCorpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn kept(&self) -> Vec<KeptSpan> {
        self.sentences
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.known.spans().iter().map(move |span| KeptSpan { sentence: i, span: span.clone() }))
            .collect()
    }

    /// The hard-label view: kept entities tagged, everything else `O`.
    pub fn to_corpus(&self) -> Corpus {
        Corpus::new(self.name.clone(), self.scheme.clone(), self.sentences.iter().map(|s| s.sentence.clone()).collect())
    }

    /// Treats every labelled entity of `corpus` as known (a fully annotated corpus).
    pub fn from_gold(corpus: &Corpus) -> Result<Self> {
        let spans = corpus.gold_spans()?;
        let mut kept = Vec::new();
        for (i, s) in spans.into_iter().enumerate() {
            kept.extend(s.into_iter().map(|span| KeptSpan { sentence: i, span }));
        }
        Self::from_kept(corpus, &kept)
    }

    /// Rebuilds a partial corpus from a token corpus and its kept-span list.
    pub fn from_kept(corpus: &Corpus, kept: &[KeptSpan]) -> Result<Self> {
        let mut per_sentence: Vec<Vec<EntitySpan>> = vec![Vec::new(); corpus.len()];
        for k in kept {
            let slot = per_sentence.get_mut(k.sentence).ok_or_else(|| {
                Error::Format(format!("kept span refers to sentence {} of {}", k.sentence, corpus.len()))
            })?;
            slot.push(k.span.clone());
        }
        let sentences = corpus
            .sentences
            .iter()
            .zip(per_sentence)
            .map(|(s, spans)| {
                let labels = encode_bio(&spans, s.len(), &corpus.scheme)?;
                let known = EntityAnnotationSet::new(spans, s.len())?;
                Ok(PartiallyAnnotatedSentence { sentence: Sentence { tokens: s.tokens.clone(), labels: Some(labels) }, known })
            })
            .collect::<Result<_>>()?;
        Ok(Self { name: corpus.name.clone(), scheme: corpus.scheme.clone(), sentences })
    }
}

/// `round(keep_fraction * total)` with ties to even.
pub fn kept_count(keep_fraction: f64, total: usize) -> usize {
    (keep_fraction * total as f64).round_ties_even() as usize
}

/// Keeps a uniformly sampled subset of all gold entities in the corpus and relabels
/// the rest as `O`. Sampling is corpus-global, without replacement, and ignores
/// category.
pub fn mask_entities(corpus: &Corpus, keep_fraction: f64, seed: u64) -> Result<PartialCorpus> {
    if !(0.0..=1.0).contains(&keep_fraction) {
        return Err(Error::Config(format!("keep fraction {keep_fraction} outside [0, 1]")));
    }
    let gold = corpus.gold_spans()?;
    let all: Vec<KeptSpan> = gold
        .into_iter()
        .enumerate()
        .flat_map(|(i, spans)| spans.into_iter().map(move |span| KeptSpan { sentence: i, span }))
        .collect();
    let keep = kept_count(keep_fraction, all.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, all.len(), keep).into_vec();
    chosen.sort_unstable();
    let kept: Vec<KeptSpan> = chosen.into_iter().map(|i| all[i].clone()).collect();
    PartialCorpus::from_kept(corpus, &kept)
}

/// CSV sidecar: `sentence,start,end,category`.
pub fn write_sidecar(kept: &[KeptSpan]) -> String {
    let mut out = String::from("sentence,start,end,category\n");
    for k in kept {
        let _ = writeln!(out, "{},{},{},{}", k.sentence, k.span.start, k.span.end, k.span.category);
    }
    out
}

pub fn read_sidecar(text: &str) -> Result<Vec<KeptSpan>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "sentence,start,end,category")) => {}
        _ => return Err(Error::Format("sidecar header missing".into())),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = || Error::Parse { line: i + 1, message: format!("bad sidecar row `{line}`") };
            let cols: Vec<&str> = line.split(',').collect();
            let [sentence, start, end, category] = cols[..] else { return Err(bad()) };
            Ok(KeptSpan {
                sentence: sentence.parse().map_err(|_| bad())?,
                span: EntitySpan::new(category, start.parse().map_err(|_| bad())?, end.parse().map_err(|_| bad())?),
            })
        })
        .collect()
}
