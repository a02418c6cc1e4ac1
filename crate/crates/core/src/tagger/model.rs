use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{bucket, EncodedSentence, BOUNDARY_TOKEN, SHAPE_FEATURES};
use super::loss::soft_cross_entropy;
use crate::annotation::DistributionSequence;
use crate::corpus::{LabelScheme, Sentence};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaggerConfig {
    pub embed_dim: usize,
    /// Context tokens on each side.
    pub window: usize,
    pub hidden_dim: usize,
    pub hash_buckets: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// 0 is plain SGD.
    pub momentum: f64,
    /// Halve the learning rate after every epoch that does not improve validation F1.
    pub halve_on_plateau: bool,
    pub seed: u64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            window: 2,
            hidden_dim: 64,
            hash_buckets: 1 << 16,
            learning_rate: 0.5,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            momentum: 0.0,
            halve_on_plateau: false,
            seed: 0,
        }
    }
}

impl TaggerConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("hash_buckets", self.hash_buckets),
            ("batch_size", self.batch_size),
            ("patience", self.patience),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        (2 * self.window + 1) * (self.embed_dim + SHAPE_FEATURES)
    }
}

/// Parameters in flat row-major storage. `hidden_w` is `hidden × input`,
/// `output_w` is `classes × hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub embeddings: Vec<f64>,
    pub hidden_w: Vec<f64>,
    pub hidden_b: Vec<f64>,
    pub output_w: Vec<f64>,
    pub output_b: Vec<f64>,
}

impl Params {
    fn zeros_like(other: &Params) -> Self {
        Self {
            embeddings: vec![0.0; other.embeddings.len()],
            hidden_w: vec![0.0; other.hidden_w.len()],
            hidden_b: vec![0.0; other.hidden_b.len()],
            output_w: vec![0.0; other.output_w.len()],
            output_b: vec![0.0; other.output_b.len()],
        }
    }

    fn slices(&self) -> [&[f64]; 5] {
        [&self.embeddings, &self.hidden_w, &self.hidden_b, &self.output_w, &self.output_b]
    }

    fn slices_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [&mut self.embeddings, &mut self.hidden_w, &mut self.hidden_b, &mut self.output_w, &mut self.output_b]
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view in the order embeddings, hidden_w, hidden_b, output_w, output_b.
    pub fn get(&self, mut index: usize) -> f64 {
        for s in self.slices() {
            if index < s.len() {
                return s[index];
            }
            index -= s.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set(&mut self, mut index: usize, value: f64) {
        for s in self.slices_mut() {
            if index < s.len() {
                s[index] = value;
                return;
            }
            index -= s.len();
        }
        panic!("parameter index out of range")
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Gradient of the batch loss. Embedding rows are sparse: only rows touched by the
/// batch appear.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embeddings: BTreeMap<usize, Vec<f64>>,
    pub hidden_w: Vec<f64>,
    pub hidden_b: Vec<f64>,
    pub output_w: Vec<f64>,
    pub output_b: Vec<f64>,
}

impl Gradients {
    fn zeros(model: &TaggerModel) -> Self {
        let p = &model.params;
        Self {
            embeddings: BTreeMap::new(),
            hidden_w: vec![0.0; p.hidden_w.len()],
            hidden_b: vec![0.0; p.hidden_b.len()],
            output_w: vec![0.0; p.output_w.len()],
            output_b: vec![0.0; p.output_b.len()],
        }
    }

    /// Dense layout matching [`Params::get`].
    pub fn to_dense(&self, model: &TaggerModel) -> Vec<f64> {
        let dim = model.config.embed_dim;
        let mut emb = vec![0.0; model.params.embeddings.len()];
        for (&row, g) in &self.embeddings {
            emb[row * dim..(row + 1) * dim].copy_from_slice(g);
        }
        emb.into_iter()
            .chain(self.hidden_w.iter().copied())
            .chain(self.hidden_b.iter().copied())
            .chain(self.output_w.iter().copied())
            .chain(self.output_b.iter().copied())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.embeddings
            .values()
            .flatten()
            .chain(&self.hidden_w)
            .chain(&self.hidden_b)
            .chain(&self.output_w)
            .chain(&self.output_b)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

struct Activations {
    inputs: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

/// Window-based token classifier: hashed embeddings plus shape flags over a
/// `±window` context, one tanh hidden layer, softmax over the tag set.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    config: TaggerConfig,
    scheme: LabelScheme,
    boundary: usize,
    pub(crate) params: Params,
}

impl TaggerModel {
    /// Weights are drawn from `uniform(-r, r)` with `r = 1/sqrt(fan_in)`; embedding
    /// rows use `fan_in = embed_dim`. Biases start at zero.
    pub fn new(config: &TaggerConfig, scheme: LabelScheme) -> Result<Self> {
        config.validate()?;
        let classes = scheme.tag_count();
        let input = config.input_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let r = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-r..r)).collect()
        };
        let params = Params {
            embeddings: uniform(config.hash_buckets * config.embed_dim, config.embed_dim),
            hidden_w: uniform(config.hidden_dim * input, input),
            hidden_b: vec![0.0; config.hidden_dim],
            output_w: uniform(classes * config.hidden_dim, config.hidden_dim),
            output_b: vec![0.0; classes],
        };
        Ok(Self { boundary: bucket(BOUNDARY_TOKEN, config.hash_buckets), config: config.clone(), scheme, params })
    }

    pub fn config(&self) -> &TaggerConfig {
        &self.config
    }

    pub fn scheme(&self) -> &LabelScheme {
        &self.scheme
    }

    pub fn classes(&self) -> usize {
        self.params.output_b.len()
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn boundary_bucket(&self) -> usize {
        self.boundary
    }

    pub fn encode(&self, sentence: &Sentence) -> EncodedSentence {
        EncodedSentence::new(sentence, self.config.hash_buckets)
    }

    pub fn forward(&self, sentence: &Sentence) -> DistributionSequence {
        self.forward_encoded(&self.encode(sentence))
    }

    pub fn forward_encoded(&self, sentence: &EncodedSentence) -> DistributionSequence {
        DistributionSequence::from_rows_unchecked(self.classes(), self.activations(sentence).probs)
    }

    fn activations(&self, sentence: &EncodedSentence) -> Activations {
        let dim = self.config.embed_dim;
        let input_dim = self.config.input_dim();
        let hidden_dim = self.config.hidden_dim;
        let classes = self.classes();
        let len = sentence.len();
        let p = &self.params;
        let window = self.config.window as isize;

        let mut inputs = vec![0.0; len * input_dim];
        for t in 0..len {
            let x = &mut inputs[t * input_dim..(t + 1) * input_dim];
            for (o, offset) in (-window..=window).enumerate() {
                let pos = t as isize + offset;
                let (row, shape) = if (0..len as isize).contains(&pos) {
                    (sentence.buckets[pos as usize], sentence.shapes[pos as usize])
                } else {
                    (self.boundary, [0.0; SHAPE_FEATURES])
                };
                let slot = &mut x[o * (dim + SHAPE_FEATURES)..(o + 1) * (dim + SHAPE_FEATURES)];
                slot[..dim].copy_from_slice(&p.embeddings[row * dim..(row + 1) * dim]);
                slot[dim..].copy_from_slice(&shape);
            }
        }

        let mut hidden = vec![0.0; len * hidden_dim];
        for t in 0..len {
            let x = &inputs[t * input_dim..(t + 1) * input_dim];
            for i in 0..hidden_dim {
                let w = &p.hidden_w[i * input_dim..(i + 1) * input_dim];
                hidden[t * hidden_dim + i] = (p.hidden_b[i] + dot(w, x)).tanh();
            }
        }

        let mut probs = vec![0.0; len * classes];
        for t in 0..len {
            let h = &hidden[t * hidden_dim..(t + 1) * hidden_dim];
            let z = &mut probs[t * classes..(t + 1) * classes];
            for c in 0..classes {
                z[c] = p.output_b[c] + dot(&p.output_w[c * hidden_dim..(c + 1) * hidden_dim], h);
            }
            softmax_in_place(z);
        }
        Activations { inputs, hidden, probs }
    }

    /// Mean soft cross-entropy of the batch (each sentence weighted equally) and its
    /// gradient.
    pub fn gradient(&self, batch: &[(&EncodedSentence, &DistributionSequence)]) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros(self);
        if batch.is_empty() {
            return Ok((0.0, grads));
        }
        let dim = self.config.embed_dim;
        let input_dim = self.config.input_dim();
        let hidden_dim = self.config.hidden_dim;
        let classes = self.classes();
        let p = &self.params;
        let window = self.config.window as isize;
        let mut total_loss = 0.0;

        let mut dz = vec![0.0; classes];
        let mut dh = vec![0.0; hidden_dim];
        let mut dx = vec![0.0; input_dim];
        for (sentence, target) in batch {
            if target.len() != sentence.len() || target.classes() != classes {
                return Err(Error::LengthMismatch { expected: sentence.len(), actual: target.len() });
            }
            let act = self.activations(sentence);
            let predicted = DistributionSequence::from_rows_unchecked(classes, act.probs);
            total_loss += soft_cross_entropy(&predicted, target)?;
            let len = sentence.len();
            let scale = 1.0 / (len as f64 * batch.len() as f64);

            for t in 0..len {
                let q = predicted.get(t);
                let y = target.get(t);
                for c in 0..classes {
                    dz[c] = (q[c] - y[c]) * scale;
                }
                let h = &act.hidden[t * hidden_dim..(t + 1) * hidden_dim];
                dh.fill(0.0);
                for c in 0..classes {
                    grads.output_b[c] += dz[c];
                    let w = &p.output_w[c * hidden_dim..(c + 1) * hidden_dim];
                    let g = &mut grads.output_w[c * hidden_dim..(c + 1) * hidden_dim];
                    for i in 0..hidden_dim {
                        g[i] += dz[c] * h[i];
                        dh[i] += w[i] * dz[c];
                    }
                }
                let x = &act.inputs[t * input_dim..(t + 1) * input_dim];
                dx.fill(0.0);
                for i in 0..hidden_dim {
                    let da = dh[i] * (1.0 - h[i] * h[i]);
                    if da == 0.0 {
                        continue;
                    }
                    grads.hidden_b[i] += da;
                    let w = &p.hidden_w[i * input_dim..(i + 1) * input_dim];
                    let g = &mut grads.hidden_w[i * input_dim..(i + 1) * input_dim];
                    for j in 0..input_dim {
                        g[j] += da * x[j];
                        dx[j] += w[j] * da;
                    }
                }
                for (o, offset) in (-window..=window).enumerate() {
                    let pos = t as isize + offset;
                    let row = if (0..len as isize).contains(&pos) { sentence.buckets[pos as usize] } else { self.boundary };
                    let g = grads.embeddings.entry(row).or_insert_with(|| vec![0.0; dim]);
                    let d = &dx[o * (dim + SHAPE_FEATURES)..o * (dim + SHAPE_FEATURES) + dim];
                    for (gi, di) in g.iter_mut().zip(d) {
                        *gi += di;
                    }
                }
            }
        }
        Ok((total_loss / batch.len() as f64, grads))
    }

    /// `params -= step * grads`.
    pub fn apply_gradients(&mut self, grads: &Gradients, step: f64) {
        let dim = self.config.embed_dim;
        let p = &mut self.params;
        for (&row, g) in &grads.embeddings {
            for (w, d) in p.embeddings[row * dim..(row + 1) * dim].iter_mut().zip(g) {
                *w -= step * d;
            }
        }
        axpy(&mut p.hidden_w, &grads.hidden_w, -step);
        axpy(&mut p.hidden_b, &grads.hidden_b, -step);
        axpy(&mut p.output_w, &grads.output_w, -step);
        axpy(&mut p.output_b, &grads.output_b, -step);
    }

    pub(crate) fn zero_params_like(&self) -> Params {
        Params::zeros_like(&self.params)
    }
}

const MAGIC: &[u8; 8] = b"PNERTAG\0";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: TaggerConfig,
    categories: Vec<String>,
}

impl TaggerModel {
    /// Binary checkpoint: magic, version, JSON header (config echo and categories),
    /// then each parameter array as a `u64` length followed by little-endian `f64`s.
    pub fn save(&self, mut out: impl Write) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        let header = serde_json::to_vec(&CheckpointHeader {
            config: self.config.clone(),
            categories: self.scheme.categories().to_vec(),
        })
        .map_err(|e| Error::Format(e.to_string()))?;
        out.write_all(&(header.len() as u64).to_le_bytes())?;
        out.write_all(&header)?;
        for array in self.params.slices() {
            out.write_all(&(array.len() as u64).to_le_bytes())?;
            let mut buf = Vec::with_capacity(array.len() * 8);
            for v in array {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn load(mut input: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a tagger checkpoint".into()));
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let header_len = read_u64(&mut input)? as usize;
        let mut header = vec![0u8; header_len];
        input.read_exact(&mut header)?;
        let header: CheckpointHeader = serde_json::from_slice(&header).map_err(|e| Error::Format(e.to_string()))?;
        let scheme = LabelScheme::new(header.categories)?;
        let config = header.config;
        config.validate()?;

        let classes = scheme.tag_count();
        let expected = [
            config.hash_buckets * config.embed_dim,
            config.hidden_dim * config.input_dim(),
            config.hidden_dim,
            classes * config.hidden_dim,
            classes,
        ];
        let mut arrays = Vec::with_capacity(5);
        for want in expected {
            let len = read_u64(&mut input)? as usize;
            if len != want {
                return Err(Error::Format(format!("parameter array of length {len}, expected {want}")));
            }
            let mut buf = vec![0u8; len * 8];
            input.read_exact(&mut buf)?;
            arrays.push(buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect::<Vec<_>>());
        }
        let mut arrays = arrays.into_iter();
        let params = Params {
            embeddings: arrays.next().unwrap(),
            hidden_w: arrays.next().unwrap(),
            hidden_b: arrays.next().unwrap(),
            output_w: arrays.next().unwrap(),
            output_b: arrays.next().unwrap(),
        };
        if !params.all_finite() {
            return Err(Error::Format("non-finite parameter".into()));
        }
        Ok(Self { boundary: bucket(BOUNDARY_TOKEN, config.hash_buckets), config, scheme, params })
    }
}

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

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], x: &[f64], alpha: f64) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}
