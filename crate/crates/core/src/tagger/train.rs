use std::borrow::Cow;
use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::EncodedSentence;
use super::model::{Gradients, Params, TaggerConfig, TaggerModel};
use crate::annotation::{DistributionSequence, EntityAnnotationSet, PartialCorpus};
use crate::corpus::{Corpus, Sentence};
use crate::eval::Validator;
use crate::{Error, Result};

/// One training sentence with per-token soft targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftExample {
    pub sentence: Sentence,
    pub targets: DistributionSequence,
    /// Known entities of the sentence, kept for guided training on soft targets.
    pub known: EntityAnnotationSet,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SoftDataset {
    pub examples: Vec<SoftExample>,
}

impl SoftDataset {
    pub fn new(examples: Vec<SoftExample>) -> Result<Self> {
        for e in &examples {
            if e.targets.len() != e.sentence.len() {
                return Err(Error::LengthMismatch { expected: e.sentence.len(), actual: e.targets.len() });
            }
            e.targets.validate()?;
        }
        Ok(Self { examples })
    }

    /// Gold (or partial) hard labels as one-hot soft targets.
    pub fn from_hard(partial: &PartialCorpus) -> Result<Self> {
        let classes = partial.scheme.tag_count();
        let examples = partial
            .sentences
            .iter()
            .map(|s| {
                Ok(SoftExample {
                    sentence: s.sentence.clone(),
                    targets: DistributionSequence::one_hot_labels(s.labels(), classes)?,
                    known: s.known.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Binary layout, all little-endian: magic `PNERSOFT`, `u32` version, `u32` C,
    /// `u64` sentence count, an index of `(u64 id, u32 L)` pairs, then every
    /// sentence's `L × C` probabilities as `f64`.
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let classes = self.examples.first().map_or(0, |e| e.targets.classes());
        out.write_all(SOFT_MAGIC)?;
        out.write_all(&SOFT_VERSION.to_le_bytes())?;
        out.write_all(&(classes as u32).to_le_bytes())?;
        out.write_all(&(self.examples.len() as u64).to_le_bytes())?;
        for (id, e) in self.examples.iter().enumerate() {
            out.write_all(&(id as u64).to_le_bytes())?;
            out.write_all(&(e.targets.len() as u32).to_le_bytes())?;
        }
        let mut buf = Vec::new();
        for e in &self.examples {
            buf.clear();
            for v in e.targets.as_flat() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    /// Reads base distributions written by [`SoftDataset::write_to`] and pairs them
    /// with the sentences of `partial`.
    pub fn read_from(mut input: impl Read, partial: &PartialCorpus) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != SOFT_MAGIC {
            return Err(Error::Format("not a soft-target file".into()));
        }
        let version = read_u32(&mut input)?;
        if version != SOFT_VERSION {
            return Err(Error::Format(format!("unsupported soft-target version {version}")));
        }
        let classes = read_u32(&mut input)? as usize;
        let count = read_u64(&mut input)? as usize;
        if count != partial.len() {
            return Err(Error::LengthMismatch { expected: partial.len(), actual: count });
        }
        if count > 0 && classes != partial.scheme.tag_count() {
            return Err(Error::Format(format!("file has {classes} classes, scheme has {}", partial.scheme.tag_count())));
        }
        let mut index = Vec::with_capacity(count);
        for _ in 0..count {
            index.push((read_u64(&mut input)? as usize, read_u32(&mut input)? as usize));
        }
        let mut rows: Vec<Option<DistributionSequence>> = vec![None; count];
        for (id, len) in index {
            let mut buf = vec![0u8; len * classes * 8];
            input.read_exact(&mut buf)?;
            let probs = buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            let slot = rows.get_mut(id).ok_or_else(|| Error::Format(format!("sentence id {id} out of range")))?;
            *slot = Some(DistributionSequence::from_rows(classes, probs)?);
        }
        let examples = partial
            .sentences
            .iter()
            .zip(rows)
            .enumerate()
            .map(|(id, (s, d))| {
                let targets = d.ok_or_else(|| Error::Format(format!("sentence {id} missing")))?;
                Ok(SoftExample { sentence: s.sentence.clone(), targets, known: s.known.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(examples)
    }
}

const SOFT_MAGIC: &[u8; 8] = b"PNERSOFT";
const SOFT_VERSION: u32 = 1;

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub enum TrainData<'a> {
    /// Hard labels, trained as one-hot targets.
    Hard(&'a Corpus),
    Soft(&'a SoftDataset),
}

impl TrainData<'_> {
    fn len(&self) -> usize {
        match self {
            TrainData::Hard(c) => c.len(),
            TrainData::Soft(d) => d.len(),
        }
    }

    fn sentence(&self, i: usize) -> &Sentence {
        match self {
            TrainData::Hard(c) => &c.sentences[i],
            TrainData::Soft(d) => &d.examples[i].sentence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
    pub val_f1: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn best_f1(&self) -> f64 {
        self.val_f1.get(self.best_epoch).copied().unwrap_or(0.0)
    }

    pub fn epochs(&self) -> usize {
        self.val_f1.len()
    }

    /// `epoch,loss,val_f1` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,val_f1\n");
        for (e, (loss, f1)) in self.epoch_loss.iter().zip(&self.val_f1).enumerate() {
            let _ = writeln!(out, "{e},{loss},{f1}");
        }
        out
    }
}

/// Plain or momentum SGD. Momentum on embedding rows is applied lazily to the rows
/// present in each batch gradient.
pub(crate) struct Optimizer {
    pub learning_rate: f64,
    momentum: f64,
    velocity: Option<Params>,
}

impl Optimizer {
    pub fn new(model: &TaggerModel, config: &TaggerConfig) -> Self {
        let velocity = (config.momentum > 0.0).then(|| model.zero_params_like());
        Self { learning_rate: config.learning_rate, momentum: config.momentum, velocity }
    }

    pub fn step(&mut self, model: &mut TaggerModel, grads: &Gradients) {
        let Some(v) = self.velocity.as_mut() else {
            model.apply_gradients(grads, self.learning_rate);
            return;
        };
        let mu = self.momentum;
        let dim = model.config().embed_dim;
        let mut blended = grads.clone();
        for (&row, g) in blended.embeddings.iter_mut() {
            for (vi, gi) in v.embeddings[row * dim..(row + 1) * dim].iter_mut().zip(g.iter_mut()) {
                *vi = mu * *vi + *gi;
                *gi = *vi;
            }
        }
        for (vs, gs) in [
            (&mut v.hidden_w, &mut blended.hidden_w),
            (&mut v.hidden_b, &mut blended.hidden_b),
            (&mut v.output_w, &mut blended.output_w),
            (&mut v.output_b, &mut blended.output_b),
        ] {
            for (vi, gi) in vs.iter_mut().zip(gs.iter_mut()) {
                *vi = mu * *vi + *gi;
                *gi = *vi;
            }
        }
        model.apply_gradients(&blended, self.learning_rate);
    }
}

pub(crate) fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15)
}

/// One pass over `encoded` in a shuffled order; `targets(i)` supplies sentence `i`'s
/// targets. Returns the mean batch loss.
pub(crate) fn run_epoch<'t>(
    model: &mut TaggerModel,
    encoded: &[EncodedSentence],
    mut targets: impl FnMut(usize) -> Result<Cow<'t, DistributionSequence>>,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
    optimizer: &mut Optimizer,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in order.chunks(batch_size) {
        let batch_targets = chunk.iter().map(|&i| targets(i)).collect::<Result<Vec<_>>>()?;
        let batch: Vec<(&EncodedSentence, &DistributionSequence)> =
            chunk.iter().zip(&batch_targets).map(|(&i, t)| (&encoded[i], t.as_ref())).collect();
        let (loss, grads) = model.gradient(&batch)?;
        optimizer.step(model, &grads);
        total += loss;
        batches += 1;
    }
    Ok(if batches == 0 { 0.0 } else { total / batches as f64 })
}

/// Mini-batch training with early stopping on validation span F1.
///
/// Stops after `patience` epochs without a strict improvement or at `max_epochs`,
/// and returns the parameters of the best epoch.
pub fn train(
    mut model: TaggerModel,
    data: TrainData<'_>,
    val: &Corpus,
    config: &TaggerConfig,
) -> Result<(TaggerModel, TrainReport)> {
    config.validate()?;
    if data.len() == 0 {
        return Err(Error::EmptyTrainingData);
    }
    let classes = model.classes();
    let buckets = model.config().hash_buckets;
    let encoded: Vec<EncodedSentence> = (0..data.len()).map(|i| EncodedSentence::new(data.sentence(i), buckets)).collect();
    let hard_targets: Vec<DistributionSequence> = match &data {
        TrainData::Hard(corpus) => corpus
            .sentences
            .iter()
            .map(|s| {
                let labels = s.labels.as_ref().ok_or_else(|| Error::MissingLabels(corpus.name.clone()))?;
                DistributionSequence::one_hot_labels(labels, classes)
            })
            .collect::<Result<_>>()?,
        TrainData::Soft(_) => Vec::new(),
    };
    let validator = Validator::new(val, buckets)?;
    let mut rng = shuffle_rng(config.seed);
    let mut optimizer = Optimizer::new(&model, config);
    let mut tracker = BestTracker::new(config.patience);
    let mut report = TrainReport { epoch_loss: Vec::new(), val_f1: Vec::new(), best_epoch: 0, stopped_early: false };

    for epoch in 0..config.max_epochs {
        let loss = run_epoch(
            &mut model,
            &encoded,
            |i| {
                Ok(match &data {
                    TrainData::Hard(_) => Cow::Borrowed(&hard_targets[i]),
                    TrainData::Soft(d) => Cow::Borrowed(&d.examples[i].targets),
                })
            },
            config.batch_size,
            &mut rng,
            &mut optimizer,
        )?;
        let f1 = validator.f1(&model);
        report.epoch_loss.push(loss);
        report.val_f1.push(f1);
        match tracker.observe(epoch, f1, &model) {
            Progress::Improved => {}
            Progress::Plateau => {
                if config.halve_on_plateau {
                    optimizer.learning_rate *= 0.5;
                }
            }
            Progress::Exhausted => {
                if config.halve_on_plateau {
                    optimizer.learning_rate *= 0.5;
                }
                report.stopped_early = true;
                break;
            }
        }
    }
    let (best_epoch, best) = tracker.into_best().unwrap_or((0, model));
    report.best_epoch = best_epoch;
    Ok((best, report))
}

pub(crate) enum Progress {
    Improved,
    Plateau,
    Exhausted,
}

/// Keeps the best-scoring model seen so far.
pub(crate) struct BestTracker {
    patience: usize,
    best: Option<(usize, f64, TaggerModel)>,
    since_best: usize,
}

impl BestTracker {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, since_best: 0 }
    }

    pub fn observe(&mut self, epoch: usize, score: f64, model: &TaggerModel) -> Progress {
        let improved = self.best.as_ref().is_none_or(|(_, s, _)| score > *s);
        if improved {
            self.best = Some((epoch, score, model.clone()));
            self.since_best = 0;
            Progress::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                Progress::Exhausted
            } else {
                Progress::Plateau
            }
        }
    }

    pub fn into_best(self) -> Option<(usize, TaggerModel)> {
        self.best.map(|(e, _, m)| (e, m))
    }
}
