//! Cross-fit base distribution estimation.
//!
//! The training corpus is split into `k` folds. For each fold a model is trained on
//! the other folds with the inner method and labels the held-out fold with its
//! predicted distributions. The assembled distributions then serve as soft targets
//! for a final model.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::PartialCorpus;
use crate::corpus::Corpus;
use crate::selftrain::{run_method, self_train_soft, Method, MethodOutcome, SelfTrainConfig, StageTrace};
use crate::tagger::{train, SoftDataset, SoftExample, TaggerModel, TrainData};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPartition {
    k: usize,
    assignment: Vec<usize>,
}

impl FoldPartition {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, sentence: usize) -> usize {
        self.assignment[sentence]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Sentence ids in fold `fold`, ascending.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&s| self.assignment[s] == fold).collect()
    }

    /// Sentence ids outside fold `fold`, ascending.
    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&s| self.assignment[s] != fold).collect()
    }
}

/// Shuffles sentence ids and deals them into `k` chunks whose sizes differ by at most one.
pub fn partition(sentences: usize, k: usize, seed: u64) -> Result<FoldPartition> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if k > sentences {
        return Err(Error::Config(format!("{k} folds for {sentences} sentences")));
    }
    let mut order: Vec<usize> = (0..sentences).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; sentences];
    let base = sentences / k;
    let extra = sentences % k;
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &s in &order[pos..pos + size] {
            assignment[s] = fold;
        }
        pos += size;
    }
    Ok(FoldPartition { k, assignment })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalMethod {
    Supervised,
    GuidedBond,
}

impl FinalMethod {
    pub fn name(self) -> &'static str {
        match self {
            FinalMethod::Supervised => "supervised",
            FinalMethod::GuidedBond => "guided_bond",
        }
    }
}

impl FromStr for FinalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised" => Ok(FinalMethod::Supervised),
            "guided_bond" => Ok(FinalMethod::GuidedBond),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdeConfig {
    pub k: usize,
    pub inner_method: Method,
    pub final_method: FinalMethod,
    /// Seeds the fold partition; model seeds come from `stage.tagger.seed`.
    pub seed: u64,
    pub stage: SelfTrainConfig,
}

impl Default for BdeConfig {
    fn default() -> Self {
        Self {
            k: 2,
            inner_method: Method::GuidedBond,
            final_method: FinalMethod::Supervised,
            seed: 0,
            stage: SelfTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldLineage {
    pub fold: usize,
    pub trained_on: Vec<usize>,
    pub scored: Vec<usize>,
}

/// Which model produced each sentence's base distribution, and what it was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageRecord {
    pub folds: Vec<FoldLineage>,
    /// Sentence id to the fold whose model scored it.
    pub scored_by: Vec<usize>,
}

impl LineageRecord {
    /// Every sentence was scored exactly once, by a model that never trained on it.
    pub fn verify(&self) -> Result<()> {
        let mut times_scored = vec![0usize; self.scored_by.len()];
        for f in &self.folds {
            for &s in &f.scored {
                *times_scored.get_mut(s).ok_or_else(|| Error::Format(format!("sentence {s} out of range")))? += 1;
                if self.scored_by[s] != f.fold {
                    return Err(Error::Format(format!("sentence {s} scored by fold {} but listed under {}", self.scored_by[s], f.fold)));
                }
            }
        }
        if let Some(s) = times_scored.iter().position(|&n| n != 1) {
            return Err(Error::Format(format!("sentence {s} scored {} times", times_scored[s])));
        }
        for (s, &fold) in self.scored_by.iter().enumerate() {
            let lineage = self.folds.iter().find(|f| f.fold == fold).ok_or_else(|| Error::Format(format!("no fold {fold}")))?;
            if lineage.trained_on.binary_search(&s).is_ok() {
                return Err(Error::Format(format!("sentence {s} was in the training set of its scoring model")));
            }
        }
        Ok(())
    }

    /// `fold,role,sentence` rows with role `train` or `score`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,role,sentence\n");
        for f in &self.folds {
            for s in &f.trained_on {
                let _ = writeln!(out, "{},train,{s}", f.fold);
            }
            for s in &f.scored {
                let _ = writeln!(out, "{},score,{s}", f.fold);
            }
        }
        out
    }
}

fn subset(partial: &PartialCorpus, ids: &[usize]) -> PartialCorpus {
    PartialCorpus {
        name: partial.name.clone(),
        scheme: partial.scheme.clone(),
        sentences: ids.iter().map(|&i| partial.sentences[i].clone()).collect(),
    }
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x0100_0000_01b3).wrapping_add(fold as u64 + 1)
}

/// Produces out-of-fold base distributions for every training sentence.
pub fn estimate_base(partial: &PartialCorpus, val: &Corpus, config: &BdeConfig) -> Result<(SoftDataset, LineageRecord)> {
    config.stage.validate()?;
    let folds = partition(partial.len(), config.k, config.seed)?;
    let mut slots: Vec<Option<SoftExample>> = vec![None; partial.len()];
    let mut lineage = LineageRecord { folds: Vec::with_capacity(config.k), scored_by: folds.assignment().to_vec() };

    for fold in 0..config.k {
        let trained_on = folds.complement(fold);
        let scored = folds.members(fold);
        let mut stage = config.stage.clone();
        stage.tagger.seed = fold_seed(config.stage.tagger.seed, fold);
        let outcome = run_method(config.inner_method, &subset(partial, &trained_on), val, &stage)?;
        for &s in &scored {
            let sentence = &partial.sentences[s];
            slots[s] = Some(SoftExample {
                sentence: sentence.sentence.clone(),
                targets: outcome.model.forward(&sentence.sentence),
                known: sentence.known.clone(),
            });
        }
        lineage.folds.push(FoldLineage { fold, trained_on, scored });
    }
    let examples = slots.into_iter().map(|e| e.expect("every sentence belongs to a fold")).collect();
    Ok((SoftDataset::new(examples)?, lineage))
}

/// Final training on base distributions.
pub fn train_on_base(soft: &SoftDataset, val: &Corpus, config: &BdeConfig) -> Result<MethodOutcome> {
    config.stage.validate()?;
    let scheme = soft
        .examples
        .first()
        .map(|_| val.scheme.clone())
        .ok_or(Error::EmptyTrainingData)?;
    let tagger = &config.stage.tagger;
    let model = TaggerModel::new(tagger, scheme)?;
    let (fitted, report) = train(model, TrainData::Soft(soft), val, tagger)?;
    let fit_trace = StageTrace::from_report(&report);
    match config.final_method {
        FinalMethod::Supervised => Ok(MethodOutcome { model: fitted, traces: vec![fit_trace] }),
        FinalMethod::GuidedBond => {
            let stage = SelfTrainConfig { guidance: true, ..config.stage.clone() };
            let (model, trace) = self_train_soft(&fitted, soft, val, &stage)?;
            Ok(MethodOutcome { model, traces: vec![fit_trace, trace] })
        }
    }
}

#[derive(Debug, Clone)]
pub struct BdeOutcome {
    pub outcome: MethodOutcome,
    pub base: SoftDataset,
    pub lineage: LineageRecord,
}

/// `estimate_base` followed by `train_on_base`.
pub fn run_bde(partial: &PartialCorpus, val: &Corpus, config: &BdeConfig) -> Result<BdeOutcome> {
    let (base, lineage) = estimate_base(partial, val, config)?;
    let outcome = train_on_base(&base, val, config)?;
    Ok(BdeOutcome { outcome, base, lineage })
}

/// A training recipe: a single method, or `bde:<inner>+<final>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodSpec {
    Single(Method),
    Bde { inner: Method, final_method: FinalMethod },
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::Single(m) => f.write_str(m.name()),
            MethodSpec::Bde { inner, final_method } => write!(f, "bde:{}+{}", inner.name(), final_method.name()),
        }
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownMethod(s.to_string());
        match s.strip_prefix("bde:") {
            None => s.parse().map(MethodSpec::Single).map_err(|_| unknown()),
            Some(rest) => {
                let (inner, final_method) = rest.split_once('+').ok_or_else(unknown)?;
                Ok(MethodSpec::Bde {
                    inner: inner.parse().map_err(|_| unknown())?,
                    final_method: final_method.parse().map_err(|_| unknown())?,
                })
            }
        }
    }
}

impl Serialize for MethodSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
