//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use pllab::data::LabelSet;
use pllab::losses::{confidence_weights, AugmentedView, ContrastKey, LossConfig, PreparedSample, Surrogate};
use pllab::numkernel::{Architecture, BackboneParams, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CLASSES: usize = 4;
pub const INPUT: usize = 6;

pub fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn random_set(rng: &mut ChaCha8Rng, c: usize) -> LabelSet {
    let mut s = LabelSet::singleton(c, rng.random_range(0..c));
    for j in 0..c {
        if rng.random_bool(0.4) {
            s.insert(j);
        }
    }
    s
}

pub struct Batch {
    pub params: BackboneParams,
    pub samples: Vec<PreparedSample>,
    pub keys: Vec<ContrastKey>,
    pub cfg: LossConfig,
}

/// Random 8-sample batch with one augmentation view per candidate label and
/// a 12-entry key set covering every class.
pub fn random_batch(seed: u64, surrogate: Surrogate) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = Architecture::mlp(INPUT, vec![7, 5], 4, CLASSES);
    let params = BackboneParams::init(arch, seed.wrapping_add(1000)).unwrap();
    let input = |rng: &mut ChaCha8Rng| Tensor::from_vec((0..INPUT).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let logits = |rng: &mut ChaCha8Rng| (0..CLASSES).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
    let samples = (0..8)
        .map(|_| {
            let candidates = random_set(&mut rng, CLASSES);
            let key_logits = logits(&mut rng);
            let mut s = PreparedSample::with_key_logits(input(&mut rng), candidates.clone(), &key_logits);
            s.views = candidates
                .iter()
                .map(|label| AugmentedView { query_input: input(&mut rng), label, logits: logits(&mut rng) })
                .collect();
            s
        })
        .collect();
    let keys = (0..12)
        .map(|k| ContrastKey {
            embedding: unit((0..4).map(|_| rng.random_range(-1.0..1.0)).collect()),
            logits: logits(&mut rng),
            label: k % CLASSES,
        })
        .collect();
    let cfg = LossConfig { tau: 0.5, tau2: 0.4, beta: 0.8, surrogate };
    Batch { params, samples, keys, cfg }
}

/// Direct scalar evaluation of `-Σ_{k⁺} w log s_τ(q, k⁺, K)`.
pub fn contrastive_oracle(q: &[f64], z: &[f64], label: usize, keys: &[ContrastKey], tau: f64, tau2: f64) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let denom: f64 = keys.iter().map(|k| (dot(q, &k.embedding) / tau).exp()).sum();
    let bucket: Vec<&ContrastKey> = keys.iter().filter(|k| k.label == label).collect();
    let wden: f64 = bucket.iter().map(|k| (dot(z, &k.logits) / tau2).exp()).sum();
    bucket
        .iter()
        .map(|k| {
            let w = (dot(z, &k.logits) / tau2).exp() / wden;
            let s = (dot(q, &k.embedding) / tau).exp() / denom;
            -w * s.ln()
        })
        .sum()
}

pub fn omega_for(key_logits: &[f64], s: &LabelSet) -> Vec<f64> {
    confidence_weights(key_logits, s)
}
