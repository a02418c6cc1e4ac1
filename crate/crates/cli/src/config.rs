//! TOML configuration files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use partial_ner::bde::MethodSpec;
use partial_ner::corpus::SynthConfig;
use partial_ner::selftrain::SelfTrainConfig;
use partial_ner::tagger::fnv1a;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_FRACTIONS: [f64; 7] = [0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5];

pub fn load_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Settings of the synthetic generator. Without `gazetteers` the built-in
/// PER/LOC/ORG benchmark is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthFileConfig {
    pub seed: u64,
    pub train_sentences: usize,
    pub dev_sentences: usize,
    pub test_sentences: usize,
    /// Category order of the tag scheme; required with `gazetteers`.
    pub categories: Option<Vec<String>>,
    pub gazetteers: BTreeMap<String, Vec<String>>,
    pub templates: Option<Vec<String>>,
}

impl Default for SynthFileConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            train_sentences: 2000,
            dev_sentences: 500,
            test_sentences: 500,
            categories: None,
            gazetteers: BTreeMap::new(),
            templates: None,
        }
    }
}

impl SynthFileConfig {
    /// Generator configs for the train, dev and test splits.
    pub fn splits(&self) -> CliResult<[(&'static str, SynthConfig); 3]> {
        let base = SynthConfig::standard(0, 0);
        let gazetteers = if self.gazetteers.is_empty() {
            if self.categories.is_some() {
                return Err(CliError::Usage("`categories` needs `gazetteers`".into()));
            }
            base.gazetteers
        } else {
            let categories = self
                .categories
                .as_ref()
                .ok_or_else(|| CliError::Usage("`gazetteers` needs a `categories` list giving the tag order".into()))?;
            let mut listed: Vec<&String> = categories.iter().collect();
            listed.sort();
            if !listed.iter().copied().eq(self.gazetteers.keys()) {
                return Err(CliError::Usage("`categories` and `gazetteers` name different categories".into()));
            }
            categories.iter().map(|c| (c.clone(), self.gazetteers[c].clone())).collect()
        };
        let templates = self.templates.clone().unwrap_or(base.templates);
        let split = |n, offset| SynthConfig {
            n_sentences: n,
            seed: self.seed.wrapping_add(offset),
            gazetteers: gazetteers.clone(),
            templates: templates.clone(),
        };
        Ok([
            ("train", split(self.train_sentences, 0)),
            ("dev", split(self.dev_sentences, 1)),
            ("test", split(self.test_sentences, 2)),
        ])
    }
}

/// Where an experiment's corpora come from: three CoNLL files, or the generator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Tag categories for CoNLL input; inferred from the files when unset.
    pub categories: Option<Vec<String>>,
    pub synth: Option<SynthFileConfig>,
}

/// Training settings shared by `train` and `experiment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFileConfig {
    /// Fold count for `bde:` methods.
    pub bde_k: usize,
    pub stage: SelfTrainConfig,
}

impl Default for TrainFileConfig {
    fn default() -> Self {
        Self { bde_k: 2, stage: SelfTrainConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub fractions: Vec<f64>,
    /// Model seeds; each cell's tagger and fold partition are seeded from it.
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodSpec>,
    /// Seeds entity masking, independently of the model seeds.
    pub mask_seed: u64,
    pub bde_k: usize,
    pub stage: SelfTrainConfig,
    /// Output directory; `--out` takes precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            fractions: DEFAULT_FRACTIONS.to_vec(),
            seeds: (0..5).collect(),
            methods: ["supervised", "bond", "guided_bond", "bde:guided_bond+supervised"]
                .iter()
                .map(|m| m.parse().expect("built-in method"))
                .collect(),
            mask_seed: 0,
            bde_k: 2,
            stage: SelfTrainConfig::default(),
            out: None,
            jobs: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.fractions.is_empty() {
            return Err(CliError::Usage("no fractions".into()));
        }
        if let Some(f) = self.fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
            return Err(CliError::Usage(format!("fraction {f} outside (0, 1]")));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Usage("no seeds".into()));
        }
        if self.methods.is_empty() {
            return Err(CliError::Usage("no methods".into()));
        }
        if self.bde_k < 2 {
            return Err(CliError::Usage(format!("bde_k must be at least 2, got {}", self.bde_k)));
        }
        if self.jobs == Some(0) {
            return Err(CliError::Usage("jobs must be at least 1".into()));
        }
        let d = &self.data;
        let paths = [&d.train, &d.dev, &d.test].iter().filter(|p| p.is_some()).count();
        if paths != 0 && paths != 3 {
            return Err(CliError::Usage("data needs all of train, dev and test".into()));
        }
        if paths == 3 && d.synth.is_some() {
            return Err(CliError::Usage("data gives both CoNLL paths and a synth section".into()));
        }
        self.stage.validate()?;
        Ok(())
    }

    /// Hash of everything that affects results; output location and thread count excluded.
    pub fn hash(&self) -> u64 {
        let canonical = Self { out: None, jobs: None, ..self.clone() };
        fnv1a(serde_json::to_string(&canonical).expect("config serializes").as_bytes())
    }
}
