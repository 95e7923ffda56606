use std::collections::VecDeque;

use pllab::data::{BenchmarkConfig, LabelSet, PLLDataset};
use pllab::losses::Surrogate;
use pllab::numkernel::optim::{cosine_lr, Sgd};
use pllab::numkernel::{softmax, BackboneParams};
use pllab::trainer::{
    ablation_suite, epoch_order, momentum_update_values, train, ContrastBank, ModelPair, TrainConfig, TrainError,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_benchmark(seed: u64) -> (PLLDataset, PLLDataset) {
    BenchmarkConfig { train_size: 160, test_size: 80, tau_rate: 0.2, seed, ..Default::default() }.build().unwrap()
}

fn small_config(epochs: usize) -> TrainConfig {
    let mut cfg = TrainConfig { epochs, batch_size: 32, queue_capacity: 128, ..Default::default() };
    cfg.model.hidden = vec![16];
    cfg.model.embed_dim = 8;
    cfg
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

#[test]
fn key_trajectory_matches_geometric_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = 0.9;
    let k0 = [0.7, -1.3];
    let trace: Vec<[f64; 2]> = (0..100).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
    let mut key = k0.to_vec();
    for (t, q) in trace.iter().enumerate() {
        momentum_update_values(&mut key, q, m).unwrap();
        let steps = t + 1;
        for d in 0..2 {
            let sum: f64 = (0..steps).map(|s| m.powi((steps - 1 - s) as i32) * trace[s][d]).sum();
            let closed = m.powi(steps as i32) * k0[d] + (1.0 - m) * sum;
            assert!((key[d] - closed).abs() < 1e-12, "step {steps}: {} vs {closed}", key[d]);
        }
    }
}

#[test]
fn key_side_frozen_when_momentum_is_one() {
    let (train_set, _) = small_benchmark(1);
    let cfg = TrainConfig { momentum: 1.0, ..small_config(4) };
    let out = train(&train_set, None, &cfg).unwrap();
    let initial = ModelPair::new(cfg.model.architecture(train_set.dims(), 4), cfg.seed, 1.0).unwrap();
    assert_eq!(out.model.key().values(), initial.key().values());
    assert_ne!(out.model.query.values(), initial.query.values());
}

#[test]
fn zero_epochs_returns_initial_model() {
    let (train_set, _) = small_benchmark(2);
    let cfg = small_config(0);
    let out = train(&train_set, None, &cfg).unwrap();
    assert!(out.history.is_empty());
    let initial = ModelPair::new(cfg.model.architecture(train_set.dims(), 4), cfg.seed, cfg.momentum).unwrap();
    assert_eq!(out.model.query.values(), initial.query.values());
    assert_eq!(out.model.key().values(), initial.key().values());
}

#[test]
fn repeated_runs_are_bit_identical() {
    let (train_set, test_set) = small_benchmark(3);
    let cfg = TrainConfig { warmup_epochs: Some(1), refresh_period: Some(2), ..small_config(5) };
    let a = single_thread(|| train(&train_set, Some(&test_set), &cfg).unwrap());
    let b = single_thread(|| train(&train_set, Some(&test_set), &cfg).unwrap());
    let c = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| train(&train_set, Some(&test_set), &cfg).unwrap());
    assert_eq!(a.model.query.values(), b.model.query.values());
    assert_eq!(a.model.key().values(), b.model.key().values());
    assert_eq!(a.history, b.history);
    assert_eq!(a.model.query.values(), c.model.query.values());
    assert_eq!(a.history, c.history);
}

#[test]
fn divergence_reports_coordinates() {
    let (train_set, _) = small_benchmark(4);
    let cfg = TrainConfig { learning_rate: 1e300, warmup_epochs: Some(1), ..small_config(3) };
    match train(&train_set, None, &cfg) {
        Err(TrainError::Divergence { epoch, batch, .. }) => assert!(epoch >= 1 && batch >= 1),
        other => panic!("expected divergence, got {other:?}"),
    }
}

/// Independent weighted cross-entropy trainer over uniform within-set weights.
fn weighted_ce_trace(dataset: &PLLDataset, cfg: &TrainConfig) -> (Vec<f64>, BackboneParams) {
    let arch = cfg.model.architecture(dataset.dims(), dataset.num_classes());
    let mut params = BackboneParams::init(arch, cfg.seed).unwrap();
    let mut sgd = Sgd::new(params.len(), cfg.sgd_momentum, cfg.weight_decay);
    let c = dataset.num_classes();
    let mut trace = Vec::new();
    for epoch in 0..cfg.epochs {
        let warm = epoch < cfg.warmup();
        let lr = cosine_lr(cfg.learning_rate, epoch, cfg.epochs);
        let order = epoch_order(cfg.seed, epoch, dataset.len());
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut grads = vec![0.0; params.len()];
            let mut batch_loss = 0.0;
            for &i in batch {
                let s = dataset.sample(i);
                let out = params.forward(&s.features).unwrap();
                let p = softmax(out.logits.values());
                let (a, b) = uniform_split(&s.candidates, c);
                let mut loss = 0.0;
                let mut d = vec![0.0; c];
                let sum_a: f64 = a.iter().sum();
                for k in 0..c {
                    loss -= a[k] * p[k].ln();
                    d[k] += p[k] * sum_a - a[k];
                }
                if !warm {
                    let r: Vec<f64> = (0..c).map(|j| b[j] * p[j] / (1.0 - p[j])).collect();
                    let sum_r: f64 = r.iter().sum();
                    for k in 0..c {
                        if b[k] > 0.0 {
                            loss -= b[k] * (1.0 - p[k]).ln();
                        }
                        d[k] += r[k] - p[k] * sum_r;
                    }
                }
                batch_loss += loss * scale;
                let d: Vec<f64> = d.iter().map(|v| v * scale).collect();
                let mut g = vec![0.0; params.len()];
                params.backward(&out.cache, None, Some(&d), &mut g).unwrap();
                grads.iter_mut().zip(&g).for_each(|(x, y)| *x += y);
            }
            sgd.step(params.values_mut(), &grads, lr);
            epoch_loss += batch_loss;
            batches += 1;
        }
        trace.push(epoch_loss / batches as f64);
    }
    (trace, params)
}

fn uniform_split(s: &LabelSet, c: usize) -> (Vec<f64>, Vec<f64>) {
    let inside = s.len() as f64;
    let outside = (c - s.len()) as f64;
    let a = (0..c).map(|j| if s.contains(j) { 1.0 / inside } else { 0.0 }).collect();
    let b = (0..c).map(|j| if s.contains(j) { 0.0 } else { 1.0 / outside }).collect();
    (a, b)
}

#[test]
fn without_both_matches_standalone_weighted_ce() {
    let (train_set, _) = small_benchmark(5);
    let mut cfg = TrainConfig { no_rl: true, no_ca: true, warmup_epochs: Some(2), ..small_config(6) };
    cfg.loss.surrogate = Surrogate::CrossEntropy;
    let out = train(&train_set, None, &cfg).unwrap();
    let (oracle, params) = weighted_ce_trace(&train_set, &cfg);
    assert_eq!(out.history.len(), oracle.len());
    for (r, o) in out.history.iter().zip(&oracle) {
        assert!((r.l_discls - o).abs() <= 1e-12 * o.abs().max(1.0), "epoch {}: {} vs {o}", r.epoch, r.l_discls);
        assert_eq!(r.l_c, 0.0);
    }
    let max_dev = out.model.query.values().iter().zip(params.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(max_dev < 1e-10, "parameter deviation {max_dev}");
}

#[test]
fn variants_collapse_without_contrast_or_confidence() {
    let (train_set, test_set) = small_benchmark(6);
    let mut cfg = TrainConfig { uniform_confidence: true, ..small_config(4) };
    cfg.loss.beta = 0.0;
    let table = ablation_suite(&train_set, Some(&test_set), &cfg, &[0, 1]).unwrap();
    assert_eq!(table.rows.len(), 4);
    for row in &table.rows[1..] {
        assert_eq!(row.accuracies, table.rows[0].accuracies, "{}", row.variant.label());
    }
}

#[test]
fn epoch_order_is_a_permutation() {
    let order = epoch_order(9, 3, 50);
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    assert_eq!(order, epoch_order(9, 3, 50));
    assert_ne!(order, epoch_order(9, 4, 50));
}

#[derive(Clone, Debug)]
enum Op {
    Push(Vec<usize>),
}

fn ops() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(prop::collection::vec(0usize..4, 0..6).prop_map(Op::Push), 0..20)
}

proptest! {
    #[test]
    fn bank_matches_reference_queue(capacity in 1usize..10, script in ops()) {
        let mut bank = ContrastBank::new(capacity);
        let mut reference: VecDeque<(f64, usize)> = VecDeque::new();
        let mut counter = 0.0;
        for Op::Push(labels) in script {
            let keys: Vec<Vec<f64>> = labels.iter().map(|_| { counter += 1.0; vec![counter, -counter] }).collect();
            let logits: Vec<Vec<f64>> = keys.iter().map(|k| vec![k[0] * 2.0; 4]).collect();
            bank.push(&keys, &logits, &labels).unwrap();
            for (k, &y) in keys.iter().zip(&labels) {
                reference.push_back((k[0], y));
                if reference.len() > capacity {
                    reference.pop_front();
                }
            }
            let got: Vec<(f64, usize)> = bank.entries().map(|e| (e.embedding[0], e.label)).collect();
            let want: Vec<(f64, usize)> = reference.iter().copied().collect();
            prop_assert_eq!(got, want);
            prop_assert!(bank.entries().all(|e| e.logits[0] == 2.0 * e.embedding[0] && e.embedding[1] == -e.embedding[0]));
        }
    }
}

#[test]
fn classification_loss_halves_on_the_benchmark() {
    let (train_set, _) = BenchmarkConfig::default().build().unwrap();
    let drops: Vec<f64> = (0..5)
        .map(|seed| {
            let out = train(&train_set, None, &TrainConfig { seed, ..Default::default() }).unwrap();
            let first = out.history.first().unwrap().l_discls;
            let last = out.history.last().unwrap().l_discls;
            1.0 - last / first
        })
        .collect();
    let mean = drops.iter().sum::<f64>() / drops.len() as f64;
    assert!(mean >= 0.5, "mean relative decrease {mean} ({drops:?})");
}
