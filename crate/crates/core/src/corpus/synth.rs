//! Template-based synthetic NER corpora.
//!
//! A template is a whitespace-separated token string; `{CAT}` expands to a random
//! gazetteer entry of category `CAT`, `{NUM}` to a random integer, anything else is
//! copied verbatim. Gold labels follow from the expansion.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{encode_bio, Corpus, EntitySpan, LabelScheme, Sentence};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_sentences: usize,
    pub seed: u64,
    /// `(category, entries)` in scheme order; entries may be multi-token.
    pub gazetteers: Vec<(String, Vec<String>)>,
    pub templates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Word(String),
    Entity(usize),
    Number,
}

impl SynthConfig {
    /// The built-in three-category (PER, LOC, ORG) benchmark.
    pub fn standard(n_sentences: usize, seed: u64) -> Self {
        Self { n_sentences, seed, gazetteers: default_gazetteers(), templates: default_templates() }
    }

    pub fn scheme(&self) -> Result<LabelScheme> {
        LabelScheme::new(self.gazetteers.iter().map(|(c, _)| c.clone()))
    }

    fn compile(&self, scheme: &LabelScheme) -> Result<Vec<Vec<Piece>>> {
        if self.templates.is_empty() {
            return Err(Error::Config("template pool is empty".into()));
        }
        for (cat, entries) in &self.gazetteers {
            if entries.iter().all(|e| e.split_whitespace().next().is_none()) {
                return Err(Error::Config(format!("gazetteer for `{cat}` is empty")));
            }
        }
        self.templates
            .iter()
            .map(|t| {
                let pieces: Vec<Piece> = t
                    .split_whitespace()
                    .map(|w| match w.strip_prefix('{').and_then(|w| w.strip_suffix('}')) {
                        Some("NUM") => Ok(Piece::Number),
                        Some(cat) => scheme
                            .category_index(cat)
                            .map(Piece::Entity)
                            .ok_or_else(|| Error::Config(format!("template `{t}` uses unknown slot `{cat}`"))),
                        None => Ok(Piece::Word(w.to_string())),
                    })
                    .collect::<Result<_>>()?;
                if pieces.is_empty() {
                    return Err(Error::Config("blank template".into()));
                }
                Ok(pieces)
            })
            .collect()
    }

    /// Number of entity slots in each template.
    pub fn template_entity_counts(&self) -> Result<Vec<usize>> {
        let scheme = self.scheme()?;
        Ok(self
            .compile(&scheme)?
            .iter()
            .map(|p| p.iter().filter(|p| matches!(p, Piece::Entity(_))).count())
            .collect())
    }
}

/// Deterministic in `config`: the same config always yields the same corpus.
pub fn generate_synthetic(config: &SynthConfig, name: &str) -> Result<Corpus> {
    let scheme = config.scheme()?;
    let templates = config.compile(&scheme)?;
    let gazetteers: Vec<Vec<Vec<&str>>> = config
        .gazetteers
        .iter()
        .map(|(_, entries)| {
            entries.iter().map(|e| e.split_whitespace().collect::<Vec<_>>()).filter(|e| !e.is_empty()).collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut sentences = Vec::with_capacity(config.n_sentences);
    for _ in 0..config.n_sentences {
        let template = templates.choose(&mut rng).expect("non-empty template pool");
        let mut tokens = Vec::new();
        let mut spans = Vec::new();
        for piece in template {
            match piece {
                Piece::Word(w) => tokens.push(w.clone()),
                Piece::Number => tokens.push(rng.gen_range(1..=2000u32).to_string()),
                Piece::Entity(cat) => {
                    let entry = gazetteers[*cat].choose(&mut rng).expect("non-empty gazetteer");
                    let start = tokens.len();
                    tokens.extend(entry.iter().map(|t| t.to_string()));
                    spans.push(EntitySpan::new(scheme.categories()[*cat].clone(), start, tokens.len()));
                }
            }
        }
        let labels = encode_bio(&spans, tokens.len(), &scheme)?;
        sentences.push(Sentence::new(tokens, Some(labels))?);
    }
    Ok(Corpus::new(name, scheme, sentences))
}

const FIRST_NAMES: &[&str] = &[
    "Mary", "John", "George", "Michael", "Anna", "Victoria", "Paris", "Jordan", "Peter", "Sofia", "David", "Laura",
    "Florence", "Austin", "Chelsea", "Carter",
];
const LAST_NAMES: &[&str] = &[
    "Smith", "Washington", "Jordan", "Lincoln", "Adams", "Hilton", "Brown", "Ford", "Morgan", "Chase", "Turner",
    "London", "Sterling", "Young", "Price", "Bell",
];
const PLACES: &[&str] = &[
    "Brooklyn", "Paris", "London", "Washington", "Jordan", "Georgia", "Florence", "Austin", "Chelsea", "Victoria",
    "Lincoln", "Boston", "Berlin", "Moscow", "Tokyo", "Cairo", "Madrid", "Denver", "Phoenix", "Sydney", "New York",
    "Hong Kong", "Los Angeles", "San Francisco", "Rio de Janeiro", "Lincoln Park", "Victoria Falls", "New Jersey",
];
const ORG_HEADS: &[&str] = &[
    "Morgan", "Ford", "Chase", "Sterling", "Lincoln", "Apple", "General", "Global", "United", "Pacific", "Atlas",
    "Union", "Price", "Bell", "Turner", "Phoenix",
];
const ORG_TAILS: &[&str] = &["Bank", "Motors", "Group", "Times", "Airlines", "Labs", "Post", "Systems"];
const ORG_SINGLE: &[&str] = &["Reuters", "Apple", "Google", "Siemens", "Microsoft"];

fn default_gazetteers() -> Vec<(String, Vec<String>)> {
    let per = FIRST_NAMES.iter().flat_map(|f| LAST_NAMES.iter().map(move |l| format!("{f} {l}"))).collect();
    let loc = PLACES.iter().map(|p| p.to_string()).collect();
    let org = ORG_HEADS
        .iter()
        .flat_map(|h| ORG_TAILS.iter().map(move |t| format!("{h} {t}")))
        .chain(ORG_SINGLE.iter().map(|s| s.to_string()))
        .collect();
    vec![("PER".into(), per), ("LOC".into(), loc), ("ORG".into(), org)]
}

fn default_templates() -> Vec<String> {
    [
        "{PER} lives in {LOC} .",
        "{PER} works for {ORG} .",
        "{ORG} opened a new office in {LOC} .",
        "{PER} met {PER} at the bank .",
        "{PER} , a spokesman for {ORG} , said prices rose {NUM} percent .",
        "Shares of {ORG} fell {NUM} points on Monday .",
        "The river bank in {LOC} flooded after heavy rain .",
        "{PER} flew from {LOC} to {LOC} .",
        "Officials in {LOC} said the union would strike .",
        "The general price of apple juice rose {NUM} times this year .",
        "Young people chase the bell at the park .",
        "It was a good day for the market .",
        "{ORG} and {ORG} agreed to merge .",
        "{PER} will visit {LOC} next week , {ORG} said .",
        "According to {ORG} , {PER} was born in {LOC} .",
        "He said the post was filled by {PER} .",
        "New rules take effect in {NUM} days .",
        "United we stand , said {PER} .",
        "In {LOC} , the price of bread doubled .",
        "General {PER} arrived in {LOC} on Tuesday .",
        "The ford across the river near {LOC} is closed .",
        "{PER} sold {NUM} shares of {ORG} .",
        "Fans in {LOC} cheered for {PER} .",
        "A young turner from {LOC} joined {ORG} .",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::serialize_conll;

    #[test]
    fn deterministic_in_seed() {
        let a = generate_synthetic(&SynthConfig::standard(200, 7), "s").unwrap();
        let b = generate_synthetic(&SynthConfig::standard(200, 7), "s").unwrap();
        assert_eq!(serialize_conll(&a), serialize_conll(&b));
        let c = generate_synthetic(&SynthConfig::standard(200, 8), "s").unwrap();
        assert_ne!(serialize_conll(&a), serialize_conll(&c));
    }

    #[test]
    fn exact_sentence_count() {
        assert_eq!(generate_synthetic(&SynthConfig::standard(100, 1), "s").unwrap().len(), 100);
        assert_eq!(generate_synthetic(&SynthConfig::standard(0, 1), "s").unwrap().len(), 0);
    }

    #[test]
    fn entity_count_histogram_matches_template_pool() {
        let config = SynthConfig::standard(1000, 3);
        let per_template = config.template_entity_counts().unwrap();
        let max = *per_template.iter().max().unwrap();
        let mut expected = vec![0.0; max + 1];
        for &k in &per_template {
            expected[k] += 1.0 / per_template.len() as f64;
        }
        let corpus = generate_synthetic(&config, "s").unwrap();
        let mut observed = vec![0.0; max + 1];
        for spans in corpus.gold_spans().unwrap() {
            observed[spans.len()] += 1.0 / corpus.len() as f64;
        }
        assert_eq!(corpus.scheme.categories().len(), 3);
        for k in 0..=max {
            assert!((observed[k] - expected[k]).abs() < 0.05, "k={k}: {} vs {}", observed[k], expected[k]);
        }
    }

    #[test]
    fn distractors_overlap_entity_vocabulary() {
        let corpus = generate_synthetic(&SynthConfig::standard(500, 11), "s").unwrap();
        let mut inside = std::collections::HashSet::new();
        let mut outside = std::collections::HashSet::new();
        for s in &corpus.sentences {
            for (t, &l) in s.tokens.iter().zip(s.labels.as_ref().unwrap()) {
                let key = t.to_lowercase();
                if l == LabelScheme::O { outside.insert(key) } else { inside.insert(key) };
            }
        }
        let shared = inside.intersection(&outside).count();
        assert!(shared >= 5, "only {shared} shared words");
    }

    #[test]
    fn config_errors() {
        let mut config = SynthConfig::standard(10, 0);
        config.templates.clear();
        assert!(matches!(generate_synthetic(&config, "s"), Err(Error::Config(_))));

        let mut config = SynthConfig::standard(10, 0);
        config.templates = vec!["{FOO} said".into()];
        assert!(generate_synthetic(&config, "s").is_err());

        let mut config = SynthConfig::standard(10, 0);
        config.gazetteers[0].1.clear();
        assert!(generate_synthetic(&config, "s").is_err());
    }
}
