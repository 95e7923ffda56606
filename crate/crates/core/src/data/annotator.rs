//! A classifier trained on clean labels whose posteriors drive candidate synthesis.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, FeatureDims, PLLDataset};
use crate::numkernel::optim::Sgd;
use crate::numkernel::{softmax, Architecture, BackboneParams};

/// Per-sample class posterior rows.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatorPosterior {
    num_classes: usize,
    values: Vec<f64>,
}

impl AnnotatorPosterior {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, DataError> {
        let num_classes = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * num_classes);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != num_classes {
                return Err(DataError::InvalidSample { row: i, message: "posterior row length differs".into() });
            }
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(DataError::InvalidSample { row: i, message: "negative or non-finite posterior".into() });
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(DataError::InvalidSample {
                    row: i,
                    message: format!("posterior sums to {total}, expected 1"),
                });
            }
            values.extend(row);
        }
        Ok(Self { num_classes, values })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        if self.num_classes == 0 {
            0
        } else {
            self.values.len() / self.num_classes
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_classes..(i + 1) * self.num_classes]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatorConfig {
    /// Hidden widths for flat features; grid features use a conv encoder with these two widths.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self { hidden: vec![32], epochs: 20, learning_rate: 0.05, batch_size: 32, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct Annotator {
    pub params: BackboneParams,
}

impl Annotator {
    pub fn posteriors(&self, dataset: &PLLDataset) -> Result<AnnotatorPosterior, DataError> {
        let rows = dataset
            .samples()
            .iter()
            .map(|s| Ok(softmax(self.params.forward(&s.features)?.logits.values())))
            .collect::<Result<Vec<_>, DataError>>()?;
        AnnotatorPosterior::new(rows)
    }

    pub fn accuracy(&self, dataset: &PLLDataset) -> Result<f64, DataError> {
        let labels = dataset.true_labels()?;
        let mut correct = 0usize;
        for (s, &y) in dataset.samples().iter().zip(&labels) {
            correct += usize::from(self.params.predict(&s.features)? == y);
        }
        Ok(correct as f64 / labels.len().max(1) as f64)
    }
}

fn annotator_arch(dims: FeatureDims, num_classes: usize, hidden: &[usize]) -> Architecture {
    match dims {
        FeatureDims::Flat(d) => Architecture::mlp(d, hidden.to_vec(), 2, num_classes),
        FeatureDims::Grid { height, width, channels } => {
            let a = hidden.first().copied().unwrap_or(4);
            let b = hidden.get(1).copied().unwrap_or(a);
            Architecture::conv(height, width, channels, [a, b], 2, num_classes)
        }
    }
}

/// Trains a softmax cross-entropy classifier on the true labels.
pub fn train_annotator(dataset: &PLLDataset, config: &AnnotatorConfig) -> Result<Annotator, DataError> {
    let labels = dataset.true_labels()?;
    if labels.is_empty() {
        return Err(DataError::Degenerate("cannot train an annotator on an empty dataset".into()));
    }
    if dataset.num_classes() < 2 {
        return Err(DataError::Degenerate("annotator needs a label space of at least two classes".into()));
    }
    if config.batch_size == 0 {
        return Err(DataError::Parameter("batch size must be positive".into()));
    }
    let arch = annotator_arch(dataset.dims(), dataset.num_classes(), &config.hidden);
    let mut params = BackboneParams::init(arch, config.seed)?;
    let mut opt = Sgd::new(params.len(), 0.9, 0.0);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xA11C_0A70);
    let mut grads = vec![0.0; params.len()];
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let out = params.forward(&dataset.sample(i).features)?;
                let mut d_logits = softmax(out.logits.values());
                d_logits[labels[i]] -= 1.0;
                d_logits.iter_mut().for_each(|d| *d *= scale);
                params.backward(&out.cache, None, Some(&d_logits), &mut grads)?;
            }
            opt.step(params.values_mut(), &grads, config.learning_rate);
        }
    }
    Ok(Annotator { params })
}
