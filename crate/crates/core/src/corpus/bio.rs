use super::{EntitySpan, LabelScheme, Prefix};
use crate::{Error, Result};

/// Encodes non-overlapping spans as BIO tags over a sentence of `length` tokens.
pub fn encode_bio(spans: &[EntitySpan], length: usize, scheme: &LabelScheme) -> Result<Vec<usize>> {
    let mut sorted: Vec<&EntitySpan> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for span in &sorted {
        if span.is_empty() || span.end > length {
            return Err(Error::SpanOutOfRange { span: span.to_string(), len: length });
        }
    }
    for pair in sorted.windows(2) {
        if pair[0].overlaps(pair[1]) {
            return Err(Error::OverlappingSpans { first: pair[0].to_string(), second: pair[1].to_string() });
        }
    }

    let mut labels = vec![LabelScheme::O; length];
    for span in sorted {
        let category = scheme
            .category_index(&span.category)
            .ok_or_else(|| Error::Config(format!("unknown category `{}`", span.category)))?;
        labels[span.start] = scheme.tag(Prefix::Begin, category);
        for label in &mut labels[span.start + 1..span.end] {
            *label = scheme.tag(Prefix::Inside, category);
        }
    }
    Ok(labels)
}

/// Decodes BIO tags into maximal spans.
///
/// Total over any tag sequence: an `I-X` that does not continue an open `X` span
/// starts a new one, as conlleval does.
pub fn decode_bio(labels: &[usize], scheme: &LabelScheme) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, usize)> = None;

    for (k, &tag) in labels.iter().enumerate() {
        match scheme.split_tag(tag) {
            None => {
                if let Some((cat, start)) = open.take() {
                    spans.push(EntitySpan::new(scheme.categories()[cat].clone(), start, k));
                }
            }
            Some((prefix, cat)) => {
                let continues = prefix == Prefix::Inside && matches!(open, Some((c, _)) if c == cat);
                if !continues {
                    if let Some((c, start)) = open.take() {
                        spans.push(EntitySpan::new(scheme.categories()[c].clone(), start, k));
                    }
                    open = Some((cat, k));
                }
            }
        }
    }
    if let Some((cat, start)) = open {
        spans.push(EntitySpan::new(scheme.categories()[cat].clone(), start, labels.len()));
    }
    spans
}
