use crate::corpus::Sentence;

/// Reserved token used to pad the context window at sentence boundaries.
pub const BOUNDARY_TOKEN: &str = "<boundary>";

/// Number of binary shape features per token (capitalised, has digit).
pub const SHAPE_FEATURES: usize = 2;

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn bucket(token: &str, buckets: usize) -> usize {
    (fnv1a(token.to_lowercase().as_bytes()) % buckets as u64) as usize
}

/// Per-token hashed ids and shape flags; the window is assembled at forward time.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSentence {
    pub buckets: Vec<usize>,
    pub shapes: Vec<[f64; SHAPE_FEATURES]>,
}

impl EncodedSentence {
    pub fn new(sentence: &Sentence, buckets: usize) -> Self {
        Self::from_tokens(&sentence.tokens, buckets)
    }

    pub fn from_tokens(tokens: &[String], buckets: usize) -> Self {
        Self {
            buckets: tokens.iter().map(|t| bucket(t, buckets)).collect(),
            shapes: tokens.iter().map(|t| shape(t)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }
}

fn shape(token: &str) -> [f64; SHAPE_FEATURES] {
    let capitalised = token.chars().next().is_some_and(char::is_uppercase);
    let digit = token.chars().any(|c| c.is_ascii_digit());
    [f64::from(u8::from(capitalised)), f64::from(u8::from(digit))]
}
