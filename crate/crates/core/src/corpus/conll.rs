use std::fmt::Write as _;

use super::{decode_bio, encode_bio, Corpus, LabelScheme, Sentence};
use crate::{Error, Result};

const DOCSTART: &str = "-DOCSTART-";

/// Parses whitespace-separated CoNLL columns (token first, NER tag last).
///
/// Tags may be IOB1 or BIO; either way they are normalised to BIO. `-DOCSTART-`
/// lines close the current sentence and are otherwise dropped.
pub fn parse_conll(text: &str, scheme: &LabelScheme, name: &str) -> Result<Corpus> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();

    let mut flush = |tokens: &mut Vec<String>, labels: &mut Vec<usize>| -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let bio = encode_bio(&decode_bio(labels, scheme), labels.len(), scheme)?;
        sentences.push(Sentence::new(std::mem::take(tokens), Some(bio))?);
        labels.clear();
        Ok(())
    };

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut columns = line.split_whitespace();
        let Some(first) = columns.next() else {
            flush(&mut tokens, &mut labels)?;
            continue;
        };
        if first == DOCSTART {
            flush(&mut tokens, &mut labels)?;
            continue;
        }
        let Some(tag) = columns.last() else {
            return Err(Error::Parse { line: line_no, message: format!("expected token and tag columns, got `{}`", line.trim()) });
        };
        let label = scheme.parse_tag(tag).ok_or_else(|| Error::UnknownTag { line: line_no, tag: tag.to_string() })?;
        tokens.push(first.to_string());
        labels.push(label);
    }
    flush(&mut tokens, &mut labels)?;

    Ok(Corpus::new(name, scheme.clone(), sentences))
}

/// Entity categories named by the tags of a CoNLL text, sorted.
pub fn infer_categories(text: &str) -> Vec<String> {
    let mut categories = std::collections::BTreeSet::new();
    for line in text.lines() {
        let mut columns = line.split_whitespace();
        if columns.next().is_none_or(|t| t == DOCSTART) {
            continue;
        }
        if let Some(cat) = columns.last().and_then(|t| t.strip_prefix("B-").or_else(|| t.strip_prefix("I-"))) {
            categories.insert(cat.to_string());
        }
    }
    categories.into_iter().collect()
}

/// Two-column `token TAG` output, one blank line after each sentence.
/// Unlabelled sentences are written with `O` tags.
pub fn serialize_conll(corpus: &Corpus) -> String {
    let mut out = String::new();
    for sentence in &corpus.sentences {
        for (k, token) in sentence.tokens.iter().enumerate() {
            let tag = sentence.labels.as_ref().map_or(LabelScheme::O, |l| l[k]);
            let _ = writeln!(out, "{} {}", token, corpus.scheme.tag_name(tag));
        }
        out.push('\n');
    }
    out
}
