//! Browser bindings: every exported function takes plain numbers and strings and
//! returns JSON, so the page needs no generated TypeScript types.

use partial_ner::annotation::{guide_correct, mask_entities, PartialCorpus};
use partial_ner::bde::{run_bde, BdeConfig, MethodSpec};
use partial_ner::corpus::{generate_synthetic, Corpus, SynthConfig};
use partial_ner::selftrain::{ner_fit, run_method, SelfTrainConfig, Stage, StageTrace};
use partial_ner::tagger::TaggerConfig;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Corpus sizes small enough to train in a browser tab within seconds.
const TRAIN_SENTENCES: usize = 300;
const DEV_SENTENCES: usize = 100;

fn tagger(seed: u64) -> TaggerConfig {
    TaggerConfig {
        embed_dim: 12,
        hidden_dim: 24,
        hash_buckets: 4096,
        batch_size: 16,
        max_epochs: 20,
        seed,
        ..TaggerConfig::default()
    }
}

fn corpora(seed: u64) -> Result<(Corpus, Corpus), String> {
    let train = generate_synthetic(&SynthConfig::standard(TRAIN_SENTENCES, seed), "train").map_err(|e| e.to_string())?;
    let dev = generate_synthetic(&SynthConfig::standard(DEV_SENTENCES, seed.wrapping_add(1)), "dev").map_err(|e| e.to_string())?;
    Ok((train, dev))
}

#[derive(Debug, Serialize)]
pub struct TokenView {
    pub token: String,
    pub gold: String,
    /// Tag in the partial corpus: the gold tag if its entity was kept, else `O`.
    pub partial: String,
    pub kept: bool,
}

#[derive(Debug, Serialize)]
pub struct MaskView {
    pub total_entities: usize,
    pub kept_entities: usize,
    pub sentences: Vec<Vec<TokenView>>,
}

pub fn mask_view(seed: u64, fraction: f64, shown: usize) -> Result<MaskView, String> {
    let (train, _) = corpora(seed)?;
    let partial = mask_entities(&train, fraction, seed).map_err(|e| e.to_string())?;
    let scheme = &train.scheme;
    let sentences = train
        .sentences
        .iter()
        .zip(&partial.sentences)
        .take(shown)
        .map(|(gold, part)| {
            let gold_tags = gold.labels.as_deref().unwrap_or_default();
            gold.tokens
                .iter()
                .enumerate()
                .map(|(k, token)| TokenView {
                    token: token.clone(),
                    gold: scheme.tag_name(gold_tags[k]),
                    partial: scheme.tag_name(part.labels()[k]),
                    kept: part.known.covers(k),
                })
                .collect()
        })
        .collect();
    Ok(MaskView { total_entities: train.entity_count(), kept_entities: partial.kept().len(), sentences })
}

#[derive(Debug, Serialize)]
pub struct TeacherToken {
    pub token: String,
    pub gold: String,
    pub kept: bool,
    /// Teacher distribution before and after guidance correction.
    pub before: Vec<f64>,
    pub after: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct TeacherView {
    pub tags: Vec<String>,
    pub fit_val_f1: f64,
    pub sentences: Vec<Vec<TeacherToken>>,
}

/// Fits the first-stage teacher on the partial corpus and shows its distributions on
/// the first `shown` sentences that contain a kept entity.
pub fn teacher_view(seed: u64, fraction: f64, shown: usize) -> Result<TeacherView, String> {
    let (train, dev) = corpora(seed)?;
    let partial = mask_entities(&train, fraction, seed).map_err(|e| e.to_string())?;
    let (teacher, trace) = ner_fit(&partial, &dev, &tagger(seed)).map_err(|e| e.to_string())?;
    let scheme = &train.scheme;
    let sentences = partial
        .sentences
        .iter()
        .zip(&train.sentences)
        .filter(|(p, _)| !p.known.is_empty())
        .take(shown)
        .map(|(p, gold)| {
            let before = teacher.forward(&p.sentence);
            let after = guide_correct(&before, &p.known, p.labels()).map_err(|e| e.to_string())?;
            let gold_tags = gold.labels.as_deref().unwrap_or_default();
            Ok(p.sentence
                .tokens
                .iter()
                .enumerate()
                .map(|(k, token)| TeacherToken {
                    token: token.clone(),
                    gold: scheme.tag_name(gold_tags[k]),
                    kept: p.known.covers(k),
                    before: before.get(k).to_vec(),
                    after: after.get(k).to_vec(),
                })
                .collect())
        })
        .collect::<Result<_, String>>()?;
    Ok(TeacherView { tags: (0..scheme.tag_count()).map(|t| scheme.tag_name(t)).collect(), fit_val_f1: trace.best_f1(), sentences })
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub method: String,
    pub fraction: f64,
    pub kept_entities: usize,
    /// Stage name and per-epoch validation F1, in training order.
    pub stages: Vec<(String, Vec<f64>)>,
    pub val_f1: f64,
}

fn stage_name(trace: &StageTrace) -> String {
    match trace.stage {
        Stage::NerFit => "ner_fit",
        Stage::SelfTrain => "self_train",
    }
    .to_string()
}

/// Trains `method` on the partial corpus and returns its validation-F1 curve.
pub fn training_curve(method: &str, fraction: f64, seed: u64, self_train_epochs: usize) -> Result<Curve, String> {
    let spec: MethodSpec = method.parse().map_err(|e: partial_ner::Error| e.to_string())?;
    let (train, dev) = corpora(seed)?;
    let partial: PartialCorpus = mask_entities(&train, fraction, seed).map_err(|e| e.to_string())?;
    let stage = SelfTrainConfig { self_train_epochs, tagger: tagger(seed), ..SelfTrainConfig::default() };
    let outcome = match spec {
        MethodSpec::Single(m) => run_method(m, &partial, &dev, &stage),
        MethodSpec::Bde { inner, final_method } => {
            run_bde(&partial, &dev, &BdeConfig { inner_method: inner, final_method, seed, stage, ..BdeConfig::default() })
                .map(|o| o.outcome)
        }
    }
    .map_err(|e| e.to_string())?;
    Ok(Curve {
        method: spec.to_string(),
        fraction,
        kept_entities: partial.kept().len(),
        stages: outcome.traces.iter().map(|t| (stage_name(t), t.val_f1.clone())).collect(),
        val_f1: outcome.val_f1(),
    })
}

fn to_js<T: Serialize>(result: Result<T, String>) -> Result<String, JsValue> {
    result.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = maskView)]
pub fn mask_view_js(seed: u32, fraction: f64, shown: u32) -> Result<String, JsValue> {
    to_js(mask_view(seed.into(), fraction, shown as usize))
}

#[wasm_bindgen(js_name = teacherView)]
pub fn teacher_view_js(seed: u32, fraction: f64, shown: u32) -> Result<String, JsValue> {
    to_js(teacher_view(seed.into(), fraction, shown as usize))
}

#[wasm_bindgen(js_name = trainingCurve)]
pub fn training_curve_js(method: &str, fraction: f64, seed: u32, self_train_epochs: u32) -> Result<String, JsValue> {
    to_js(training_curve(method, fraction, seed.into(), self_train_epochs as usize))
}

/// Tag names of the demo corpus, in model output order.
#[wasm_bindgen(js_name = tagNames)]
pub fn tag_names() -> String {
    let scheme = SynthConfig::standard(0, 0).scheme().expect("built-in scheme");
    serde_json::to_string(&(0..scheme.tag_count()).map(|t| scheme.tag_name(t)).collect::<Vec<_>>()).expect("strings serialize")
}
