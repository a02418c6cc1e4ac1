// Analytic gradients against central finite differences on tiny models.

use partial_ner::annotation::DistributionSequence;
use partial_ner::corpus::{LabelScheme, Sentence};
use partial_ner::tagger::{soft_cross_entropy, EncodedSentence, TaggerConfig, TaggerModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-4;
const MAX_REL_ERR: f64 = 1e-4;

fn tiny_model(seed: u64) -> TaggerModel {
    let config = TaggerConfig { embed_dim: 4, window: 1, hidden_dim: 5, hash_buckets: 16, seed, ..TaggerConfig::default() };
    // Two categories: C = 5.
    TaggerModel::new(&config, LabelScheme::new(["PER", "LOC"]).unwrap()).unwrap()
}

fn random_batch(rng: &mut ChaCha8Rng, model: &TaggerModel) -> Vec<(EncodedSentence, DistributionSequence)> {
    const WORDS: &[&str] = &["Mary", "lives", "in", "Brooklyn", "bank", "Bank", "1999", "the", "."];
    let classes = model.classes();
    (0..rng.gen_range(1..4))
        .map(|_| {
            let len = rng.gen_range(1..5);
            let tokens: Vec<String> = (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect();
            let sentence = Sentence::new(tokens, None).unwrap();
            let mut probs = Vec::new();
            for _ in 0..len {
                let raw: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.05..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                probs.extend(raw.into_iter().map(|v| v / sum));
            }
            (model.encode(&sentence), DistributionSequence::from_rows(classes, probs).unwrap())
        })
        .collect()
}

/// Loss computed through the public forward pass only.
fn batch_loss(model: &TaggerModel, batch: &[(EncodedSentence, DistributionSequence)]) -> f64 {
    batch.iter().map(|(s, t)| soft_cross_entropy(&model.forward_encoded(s), t).unwrap()).sum::<f64>() / batch.len() as f64
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale.max(1e-8)
    }
}

fn check_model(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let mut model = tiny_model(seed);
    // Non-zero biases so every parameter group is exercised away from the origin.
    let n_params = model.params().len();
    let hidden_start = n_params - model.params().output_b.len() - model.params().output_w.len() - model.params().hidden_b.len();
    for i in hidden_start..n_params {
        let v = model.params().get(i);
        model.params_mut().set(i, v + rng.gen_range(-0.3..0.3));
    }
    let batch = random_batch(&mut rng, &model);
    let refs: Vec<_> = batch.iter().map(|(s, t)| (s, t)).collect();
    let (loss, grads) = model.gradient(&refs).unwrap();
    assert!((loss - batch_loss(&model, &batch)).abs() < 1e-12);
    let analytic = grads.to_dense(&model);

    let mut worst: f64 = 0.0;
    for i in 0..n_params {
        let orig = model.params().get(i);
        model.params_mut().set(i, orig + STEP);
        let up = batch_loss(&model, &batch);
        model.params_mut().set(i, orig - STEP);
        let down = batch_loss(&model, &batch);
        model.params_mut().set(i, orig);
        let numeric = (up - down) / (2.0 * STEP);
        let err = rel_err(analytic[i], numeric);
        assert!(err < MAX_REL_ERR, "model {seed} param {i}: analytic {} numeric {numeric} rel {err}", analytic[i]);
        worst = worst.max(err);
    }
    worst
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let worst = (0..20).map(check_model).fold(0.0f64, f64::max);
    assert!(worst < MAX_REL_ERR);
}

#[test]
fn batch_gradient_is_mean_of_sentence_gradients() {
    let model = tiny_model(5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut batch = random_batch(&mut rng, &model);
    while batch.len() < 3 {
        batch.extend(random_batch(&mut rng, &model));
    }
    let refs: Vec<_> = batch.iter().map(|(s, t)| (s, t)).collect();
    let whole = model.gradient(&refs).unwrap().1.to_dense(&model);
    let mut mean = vec![0.0; whole.len()];
    for r in &refs {
        let g = model.gradient(std::slice::from_ref(r)).unwrap().1.to_dense(&model);
        for (m, v) in mean.iter_mut().zip(g) {
            *m += v / refs.len() as f64;
        }
    }
    for (a, b) in whole.iter().zip(&mean) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn small_steps_decrease_the_batch_loss() {
    let mut model = tiny_model(8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let batch = random_batch(&mut rng, &model);
    let refs: Vec<_> = batch.iter().map(|(s, t)| (s, t)).collect();
    let mut previous = f64::INFINITY;
    for _ in 0..50 {
        let (loss, grads) = model.gradient(&refs).unwrap();
        assert!(loss <= previous + 1e-15, "{loss} > {previous}");
        previous = loss;
        model.apply_gradients(&grads, 1e-3);
    }
}
