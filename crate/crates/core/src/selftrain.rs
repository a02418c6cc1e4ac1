//! Two-stage self-training on partial annotations.
//!
//! Stage one fits the tagger on the partial hard labels with early stopping. Stage
//! two copies that model into a teacher and a student; the frozen teacher labels every
//! training sentence with its predicted distributions and the student is trained
//! against them, with the teacher replaced by the student every
//! `teacher_refresh_period` epochs. With guidance on, the teacher's distributions at
//! tokens inside known entities are replaced by the one-hot known labels before the
//! student sees them.

use std::borrow::Cow;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotation::{guide_correct, DistributionSequence, PartialCorpus};
use crate::corpus::Corpus;
use crate::eval::Validator;
use crate::tagger::{
    run_epoch, shuffle_rng, train, BestTracker, EncodedSentence, Optimizer, Progress, SoftDataset, TaggerConfig,
    TaggerModel, TrainData, TrainReport,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Supervised,
    Bond,
    GuidedBond,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Supervised => "supervised",
            Method::Bond => "bond",
            Method::GuidedBond => "guided_bond",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised" => Ok(Method::Supervised),
            "bond" => Ok(Method::Bond),
            "guided_bond" => Ok(Method::GuidedBond),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfTrainConfig {
    /// Correct teacher distributions with the known entities.
    pub guidance: bool,
    /// Student epochs between teacher replacements.
    pub teacher_refresh_period: usize,
    pub self_train_epochs: usize,
    /// Replace teacher distributions with one-hot argmax labels.
    pub hard_pseudo_labels: bool,
    /// Stop the self-training stage after this many epochs without validation
    /// improvement. `None` runs all epochs and only uses validation for selection.
    pub self_train_patience: Option<usize>,
    /// Learning rate of the self-training stage; the fitting stage's rate when unset.
    pub self_train_learning_rate: Option<f64>,
    pub tagger: TaggerConfig,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        Self {
            guidance: true,
            teacher_refresh_period: 1,
            self_train_epochs: 20,
            hard_pseudo_labels: false,
            self_train_patience: None,
            self_train_learning_rate: None,
            tagger: TaggerConfig::default(),
        }
    }
}

impl SelfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.teacher_refresh_period == 0 {
            return Err(Error::Config("teacher_refresh_period must be at least 1".into()));
        }
        if self.self_train_epochs == 0 {
            return Err(Error::Config("self_train_epochs must be at least 1".into()));
        }
        if self.self_train_patience == Some(0) {
            return Err(Error::Config("self_train_patience must be at least 1".into()));
        }
        if let Some(lr) = self.self_train_learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("self_train_learning_rate must be positive, got {lr}")));
            }
        }
        self.tagger.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    NerFit,
    SelfTrain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: Stage,
    /// Mean training loss of each epoch.
    pub loss: Vec<f64>,
    /// Validation F1 after each epoch; the index is the iteration.
    pub val_f1: Vec<f64>,
    /// Epochs after which the teacher was replaced by the student.
    pub refresh_points: Vec<usize>,
    pub best_iteration: usize,
}

impl StageTrace {
    pub fn best_f1(&self) -> f64 {
        self.val_f1.get(self.best_iteration).copied().unwrap_or(0.0)
    }

    pub fn from_report(report: &TrainReport) -> Self {
        Self {
            stage: Stage::NerFit,
            loss: report.epoch_loss.clone(),
            val_f1: report.val_f1.clone(),
            refresh_points: Vec::new(),
            best_iteration: report.best_epoch,
        }
    }

    pub const CSV_HEADER: &'static str = "stage,iteration,loss,val_f1,teacher_refresh";

    /// Rows under [`StageTrace::CSV_HEADER`], without the header.
    pub fn csv_rows(&self) -> String {
        let stage = match self.stage {
            Stage::NerFit => "ner_fit",
            Stage::SelfTrain => "self_train",
        };
        let mut out = String::new();
        for (i, (loss, f1)) in self.loss.iter().zip(&self.val_f1).enumerate() {
            let _ = writeln!(out, "{stage},{i},{loss},{f1},{}", u8::from(self.refresh_points.contains(&i)));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Self::CSV_HEADER, self.csv_rows())
    }
}

/// Stage one: early-stopped supervised fit on the partial hard labels.
pub fn ner_fit(partial: &PartialCorpus, val: &Corpus, config: &TaggerConfig) -> Result<(TaggerModel, StageTrace)> {
    let model = TaggerModel::new(config, partial.scheme.clone())?;
    let (model, report) = train(model, TrainData::Hard(&partial.to_corpus()), val, config)?;
    Ok((model, StageTrace::from_report(&report)))
}

/// Source of the teacher's training signal for one sentence, with the known entities
/// used for guidance.
pub(crate) struct SelfTrainExample<'a> {
    pub encoded: EncodedSentence,
    pub labels: &'a [usize],
    pub known: &'a crate::annotation::EntityAnnotationSet,
}

/// Teacher targets for a single sentence, after optional hardening and guidance.
pub fn teacher_targets(
    teacher: &TaggerModel,
    encoded: &EncodedSentence,
    labels: &[usize],
    known: &crate::annotation::EntityAnnotationSet,
    config: &SelfTrainConfig,
) -> Result<DistributionSequence> {
    let mut dists = teacher.forward_encoded(encoded);
    if config.hard_pseudo_labels {
        dists = DistributionSequence::one_hot_labels(&dists.argmax(), dists.classes())?;
    }
    if config.guidance {
        dists = guide_correct(&dists, known, labels)?;
    }
    Ok(dists)
}

/// Stage two: iterated teacher-student training starting from `init`.
///
/// Returns the student checkpoint with the best validation F1 over the stage.
pub fn self_train(
    init: &TaggerModel,
    partial: &PartialCorpus,
    val: &Corpus,
    config: &SelfTrainConfig,
) -> Result<(TaggerModel, StageTrace)> {
    let buckets = init.config().hash_buckets;
    let examples: Vec<SelfTrainExample<'_>> = partial
        .sentences
        .iter()
        .map(|s| SelfTrainExample {
            encoded: EncodedSentence::new(&s.sentence, buckets),
            labels: s.labels(),
            known: &s.known,
        })
        .collect();
    self_train_examples(init, &examples, val, config)
}

/// Stage two over a soft dataset: the guidance labels are the hard labels stored in
/// each example's sentence.
pub fn self_train_soft(
    init: &TaggerModel,
    data: &SoftDataset,
    val: &Corpus,
    config: &SelfTrainConfig,
) -> Result<(TaggerModel, StageTrace)> {
    let buckets = init.config().hash_buckets;
    let examples = data
        .examples
        .iter()
        .map(|e| {
            let labels = e.sentence.labels.as_deref().ok_or_else(|| Error::MissingLabels("soft dataset".into()))?;
            Ok(SelfTrainExample { encoded: EncodedSentence::new(&e.sentence, buckets), labels, known: &e.known })
        })
        .collect::<Result<Vec<_>>>()?;
    self_train_examples(init, &examples, val, config)
}

pub(crate) fn self_train_examples(
    init: &TaggerModel,
    examples: &[SelfTrainExample<'_>],
    val: &Corpus,
    config: &SelfTrainConfig,
) -> Result<(TaggerModel, StageTrace)> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyTrainingData);
    }
    let validator = Validator::new(val, init.config().hash_buckets)?;
    let encoded: Vec<EncodedSentence> = examples.iter().map(|e| e.encoded.clone()).collect();
    let mut teacher = init.clone();
    let mut student = init.clone();
    let mut optimizer = Optimizer::new(&student, &config.tagger);
    if let Some(lr) = config.self_train_learning_rate {
        optimizer.learning_rate = lr;
    }
    let mut rng = shuffle_rng(config.tagger.seed.wrapping_add(1));
    let mut tracker = BestTracker::new(config.self_train_patience.unwrap_or(usize::MAX));
    let mut trace =
        StageTrace { stage: Stage::SelfTrain, loss: Vec::new(), val_f1: Vec::new(), refresh_points: Vec::new(), best_iteration: 0 };

    for epoch in 0..config.self_train_epochs {
        let loss = {
            let teacher = &teacher;
            run_epoch(
                &mut student,
                &encoded,
                |i| {
                    let e = &examples[i];
                    teacher_targets(teacher, &e.encoded, e.labels, e.known, config).map(Cow::Owned)
                },
                config.tagger.batch_size,
                &mut rng,
                &mut optimizer,
            )?
        };
        let f1 = validator.f1(&student);
        trace.loss.push(loss);
        trace.val_f1.push(f1);
        let progress = tracker.observe(epoch, f1, &student);
        if (epoch + 1) % config.teacher_refresh_period == 0 {
            teacher = student.clone();
            trace.refresh_points.push(epoch);
        }
        if matches!(progress, Progress::Exhausted) && config.self_train_patience.is_some() {
            break;
        }
    }
    let (best_iteration, best) = tracker.into_best().expect("at least one self-training epoch");
    trace.best_iteration = best_iteration;
    Ok((best, trace))
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub model: TaggerModel,
    pub traces: Vec<StageTrace>,
}

impl MethodOutcome {
    /// Validation F1 of the returned model, as recorded by its final stage.
    pub fn val_f1(&self) -> f64 {
        self.traces.last().map_or(0.0, StageTrace::best_f1)
    }
}

/// Trains with `method`: `supervised` is the fitting stage alone; `bond` and
/// `guided_bond` add self-training without and with guidance.
pub fn run_method(method: Method, partial: &PartialCorpus, val: &Corpus, config: &SelfTrainConfig) -> Result<MethodOutcome> {
    let (fitted, fit_trace) = ner_fit(partial, val, &config.tagger)?;
    if method == Method::Supervised {
        return Ok(MethodOutcome { model: fitted, traces: vec![fit_trace] });
    }
    let config = SelfTrainConfig { guidance: method == Method::GuidedBond, ..config.clone() };
    let (model, trace) = self_train(&fitted, partial, val, &config)?;
    Ok(MethodOutcome { model, traces: vec![fit_trace, trace] })
}
