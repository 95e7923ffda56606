use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{ContrastBank, EpochRecord, ModelPair, Result, TrainConfig, TrainError};
use crate::augment::{refresh_augmentations, AugmentationSet};
use crate::data::PLLDataset;
use crate::losses::{
    confidence_weights, total_loss, uniform_weights, weighted_pll_ce, AugmentedView, ContrastKey, LossError,
    PreparedSample,
};
use crate::numkernel::optim::{cosine_lr, Sgd};
use crate::numkernel::{argmax, BackboneParams, KernelError, Tensor};

const SHUFFLE_SALT: u64 = 0x5EED_0F_0DE5;
const VIEW_SALT: u64 = 0x71E3_A5;

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ModelPair,
    pub history: Vec<super::EpochRecord>,
}

/// Minibatch order for one epoch; a function of `(seed, epoch)` only.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SHUFFLE_SALT);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

pub fn predictions(params: &BackboneParams, dataset: &PLLDataset) -> Result<Vec<usize>> {
    dataset
        .samples()
        .par_iter()
        .map(|s| Ok(argmax(params.forward(&s.features)?.logits.values())))
        .collect()
}

/// `None` when the dataset carries no ground truth or is empty.
pub fn accuracy(params: &BackboneParams, dataset: &PLLDataset) -> Result<Option<f64>> {
    let Ok(labels) = dataset.true_labels() else { return Ok(None) };
    if labels.is_empty() {
        return Ok(None);
    }
    let pred = predictions(params, dataset)?;
    Ok(Some(pred.iter().zip(&labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64))
}

fn diverged(epoch: usize, batch: usize) -> impl Fn(TrainError) -> TrainError {
    move |e| match e {
        TrainError::Kernel(KernelError::NonFinite(d)) | TrainError::Loss(LossError::Kernel(KernelError::NonFinite(d))) => {
            TrainError::Divergence { epoch, batch, detail: d }
        }
        other => other,
    }
}

struct BatchResult {
    discls: f64,
    contrastive: f64,
    total: f64,
    grads: Vec<f64>,
    skipped: usize,
    saturated: usize,
}

fn warmup_batch(prepared: &[PreparedSample], params: &BackboneParams) -> Result<BatchResult> {
    let scale = 1.0 / prepared.len() as f64;
    let terms = prepared
        .par_iter()
        .map(|s| -> Result<(f64, usize, Vec<f64>)> {
            let out = params.forward(&s.features)?;
            let ce = weighted_pll_ce(out.logits.values(), &s.omega, &s.candidates)?;
            let mut g = vec![0.0; params.len()];
            let d: Vec<f64> = ce.grad.iter().map(|v| v * scale).collect();
            params.backward(&out.cache, None, Some(&d), &mut g)?;
            Ok((ce.loss, ce.saturated, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut res = BatchResult { discls: 0.0, contrastive: 0.0, total: 0.0, grads: vec![0.0; params.len()], skipped: 0, saturated: 0 };
    for (loss, sat, g) in terms {
        res.discls += loss * scale;
        res.saturated += sat;
        res.grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    res.total = res.discls;
    Ok(res)
}

fn jitter(x: &Tensor, noise: &Normal<f64>, rng: &mut ChaCha8Rng, enabled: bool) -> Result<Tensor> {
    if !enabled {
        return Ok(x.clone());
    }
    Ok(Tensor::new(x.shape().to_vec(), x.values().iter().map(|v| v + noise.sample(rng)).collect())?)
}

/// Training per the momentum loop: warm-up with weighted PLL cross-entropy,
/// then the combined objective with augmentations refreshed on a fixed period.
pub fn train(dataset: &PLLDataset, test: Option<&PLLDataset>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::Config("training set is empty".into()));
    }
    if let Some(t) = test {
        if t.dims() != dataset.dims() || t.num_classes() != dataset.num_classes() {
            return Err(TrainError::Config("test set dims or class count differ from the training set".into()));
        }
    }
    let arch = cfg.model.architecture(dataset.dims(), dataset.num_classes());
    let mut model = ModelPair::new(arch, cfg.seed, cfg.momentum)?;
    let mut sgd = Sgd::new(model.query.len(), cfg.sgd_momentum, cfg.weight_decay);
    let mut bank = ContrastBank::new(cfg.queue_capacity);
    let mut augs = AugmentationSet::default();
    let mut history = Vec::with_capacity(cfg.epochs);
    let warmup = cfg.warmup();
    let rl = cfg.representation_learning();
    let n = dataset.len();
    let noise = Normal::new(0.0, cfg.view_noise.max(f64::MIN_POSITIVE)).expect("valid std");
    let jitter_on = cfg.view_noise > 0.0;

    for epoch in 0..cfg.epochs {
        let warm = epoch < warmup;
        if rl && !warm && (epoch - warmup) % cfg.refresh() == 0 {
            augs = refresh_augmentations(dataset, &model.query, &cfg.augment)?;
        }
        let lr = cosine_lr(cfg.learning_rate, epoch, cfg.epochs);
        let order = epoch_order(cfg.seed, epoch, n);
        let mut sums = [0.0f64; 3];
        let (mut skipped, mut saturated, mut batches) = (0, 0, 0usize);

        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let coords = diverged(epoch + 1, b + 1);
            let key = model.key();
            let mut prepared: Vec<PreparedSample> = batch
                .par_iter()
                .map(|&i| -> Result<PreparedSample> {
                    let s = dataset.sample(i);
                    let omega = if cfg.uses_uniform_weights() {
                        uniform_weights(&s.candidates)
                    } else {
                        confidence_weights(key.forward(&s.features)?.logits.values(), &s.candidates)
                    };
                    Ok(PreparedSample { features: s.features.clone(), candidates: s.candidates.clone(), omega, views: Vec::new() })
                })
                .collect::<Result<Vec<_>>>()
                .map_err(&coords)?;

            let result = if warm {
                warmup_batch(&prepared, &model.query).map_err(&coords)?
            } else {
                let mut current: Vec<ContrastKey> = Vec::new();
                if rl {
                    for (slot, &i) in batch.iter().enumerate() {
                        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ VIEW_SALT);
                        rng.set_stream((epoch * n + i) as u64);
                        for aug in augs.of_parent(i) {
                            let q_in = jitter(&aug.features, &noise, &mut rng, jitter_on)?;
                            let k_in = jitter(&aug.features, &noise, &mut rng, jitter_on)?;
                            let k = key.forward(&k_in).map_err(|e| coords(e.into()))?;
                            let key_entry = ContrastKey {
                                embedding: k.embedding.into_values(),
                                logits: k.logits.into_values(),
                                label: aug.guiding_label,
                            };
                            prepared[slot].views.push(AugmentedView {
                                query_input: q_in,
                                label: aug.guiding_label,
                                logits: key_entry.logits.clone(),
                            });
                            current.push(key_entry);
                        }
                    }
                }
                let mut keys = bank.as_keys();
                keys.extend(current.iter().cloned());
                let out = total_loss(&model.query, &prepared, &keys, &cfg.loss).map_err(|e| coords(e.into()))?;
                bank.push_keys(&current);
                BatchResult {
                    discls: out.discls,
                    contrastive: out.contrastive,
                    total: out.loss,
                    grads: out.grads,
                    skipped: out.skipped_queries,
                    saturated: out.saturated,
                }
            };
            if !result.total.is_finite() || result.grads.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Divergence { epoch: epoch + 1, batch: b + 1, detail: "non-finite loss".into() });
            }
            sgd.step(model.query.values_mut(), &result.grads, lr);
            model.momentum_update()?;
            sums[0] += result.discls;
            sums[1] += result.contrastive;
            sums[2] += result.total;
            skipped += result.skipped;
            saturated += result.saturated;
            batches += 1;
        }
        let k = batches as f64;
        history.push(EpochRecord {
            epoch: epoch + 1,
            warmup: warm,
            l_discls: sums[0] / k,
            l_c: sums[1] / k,
            total: sums[2] / k,
            train_acc: accuracy(&model.query, dataset)?,
            test_acc: match test {
                Some(t) => accuracy(&model.query, t)?,
                None => None,
            },
            skipped_queries: skipped,
            saturated,
            discarded: if rl && !warm { augs.discards.len() } else { 0 },
        });
    }
    Ok(TrainOutcome { model, history })
}
