//! Training sequence taggers on partially annotated NER corpora.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`]: label schemes, CoNLL ingestion, BIO encoding and a synthetic corpus generator.
//! * [`annotation`]: entity masking, label distributions and teacher-distribution guidance.
//! * [`tagger`]: a small window-based neural tagger trained on hard or soft targets.
//! * [`selftrain`]: the BOND fitting/self-training procedure and its guided variant.
//! * [`bde`]: cross-fit base distribution estimation and final training on soft targets.
//! * [`eval`]: argmax prediction and exact-match span F1.

pub mod annotation;
pub mod bde;
pub mod corpus;
mod error;
pub mod eval;
pub mod selftrain;
pub mod tagger;

pub use error::{Error, Result};
