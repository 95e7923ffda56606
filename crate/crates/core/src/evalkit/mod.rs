//! Accuracy, confusion and label-overlap matrices, entangled-instance
//! metrics, inter-class distances and recovered rate.

mod distance;
mod report;

pub use distance::{class_distances, ClassDistances};
pub use report::{EntangledRow, EvalOptions, MetricsReport, REPORT_KEYS};

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{DataError, PLLDataset};
use crate::entangle::EntangledPair;
use crate::numkernel::{argmax, euclidean, BackboneParams, KernelError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Which representation distance metrics are measured in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSpace {
    /// Shared encoder output feeding the classifier.
    #[default]
    Penultimate,
    /// L2-normalized projection head output.
    Projection,
}

impl EmbeddingSpace {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingSpace::Penultimate => "penultimate",
            EmbeddingSpace::Projection => "projection",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "penultimate" => Some(EmbeddingSpace::Penultimate),
            "projection" => Some(EmbeddingSpace::Projection),
            _ => None,
        }
    }
}

/// Predicted labels and representations of a model over a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelView {
    pub predictions: Vec<usize>,
    pub embeddings: Vec<Vec<f64>>,
}

pub fn model_view(params: &BackboneParams, dataset: &PLLDataset, space: EmbeddingSpace) -> Result<ModelView> {
    let arch = params.arch();
    if arch.input_shape() != dataset.dims().shape() || arch.num_classes != dataset.num_classes() {
        return Err(EvalError::Contract(format!(
            "model expects inputs {:?} and {} classes, dataset has {:?} and {}",
            arch.input_shape(),
            arch.num_classes,
            dataset.dims().shape(),
            dataset.num_classes()
        )));
    }
    let rows = dataset
        .samples()
        .par_iter()
        .map(|s| {
            let out = params.forward(&s.features)?;
            let emb = match space {
                EmbeddingSpace::Penultimate => out.features,
                EmbeddingSpace::Projection => out.embedding.into_values(),
            };
            Ok((argmax(out.logits.values()), emb))
        })
        .collect::<Result<Vec<_>>>()?;
    let (predictions, embeddings) = rows.into_iter().unzip();
    Ok(ModelView { predictions, embeddings })
}

fn check_aligned(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(EvalError::Contract(format!("{what}: {got} entries for {want} samples")));
    }
    Ok(())
}

/// `(true, predicted)` counts.
pub fn confusion(predictions: &[usize], truth: &[usize], num_classes: usize) -> Result<Vec<Vec<usize>>> {
    check_aligned("predictions", predictions.len(), truth.len())?;
    let mut m = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &y) in predictions.iter().zip(truth) {
        if p >= num_classes || y >= num_classes {
            return Err(EvalError::Contract(format!("label {} outside {num_classes} classes", p.max(y))));
        }
        m[y][p] += 1;
    }
    Ok(m)
}

/// `None` for an empty prediction set.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<Option<f64>> {
    check_aligned("predictions", predictions.len(), truth.len())?;
    if truth.is_empty() {
        return Ok(None);
    }
    Ok(Some(predictions.iter().zip(truth).filter(|(p, y)| p == y).count() as f64 / truth.len() as f64))
}

/// Row-normalized confusion diagonal; `None` for classes absent from `truth`.
pub fn per_class_accuracy(confusion: &[Vec<usize>]) -> Vec<Option<f64>> {
    confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[i] as f64 / n as f64)
        })
        .collect()
}

/// Entry `(i, j)`: among samples whose true class is `i` or `j`, the fraction
/// whose candidate set holds both labels. A pair of classes with no samples
/// gets 0 off the diagonal and 1 on it.
pub fn label_overlap(dataset: &PLLDataset) -> Result<Vec<Vec<f64>>> {
    let c = dataset.num_classes();
    let truth = dataset.true_labels()?;
    let mut class_count = vec![0usize; c];
    // both[i][j]: samples of class i whose set holds i and j
    let mut both = vec![vec![0usize; c]; c];
    for (s, &y) in dataset.samples().iter().zip(&truth) {
        class_count[y] += 1;
        if s.candidates.contains(y) {
            s.candidates.iter().for_each(|j| both[y][j] += 1);
        }
    }
    let mut m = vec![vec![0.0; c]; c];
    for i in 0..c {
        m[i][i] = 1.0;
        for j in (i + 1)..c {
            let denom = class_count[i] + class_count[j];
            let v = if denom == 0 { 0.0 } else { (both[i][j] + both[j][i]) as f64 / denom as f64 };
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EntangledMetrics {
    /// Fraction of distinct instances in the pairs that are predicted correctly.
    pub accuracy: f64,
    /// Mean embedding distance over pairs.
    pub mean_distance: f64,
    pub instance_count: usize,
}

/// `None` for an empty pair list.
pub fn entangled_metrics(
    view: &ModelView,
    truth: &[usize],
    pairs: &[EntangledPair],
) -> Result<Option<EntangledMetrics>> {
    check_aligned("predictions", view.predictions.len(), truth.len())?;
    check_aligned("embeddings", view.embeddings.len(), truth.len())?;
    if pairs.is_empty() {
        return Ok(None);
    }
    let mut instances = BTreeSet::new();
    let mut dist = 0.0;
    for p in pairs {
        if p.i >= truth.len() || p.j >= truth.len() {
            return Err(EvalError::Contract(format!("pair ({}, {}) outside {} samples", p.i, p.j, truth.len())));
        }
        instances.insert(p.i);
        instances.insert(p.j);
        dist += euclidean(&view.embeddings[p.i], &view.embeddings[p.j]);
    }
    let correct = instances.iter().filter(|&&i| view.predictions[i] == truth[i]).count();
    Ok(Some(EntangledMetrics {
        accuracy: correct as f64 / instances.len() as f64,
        mean_distance: dist / pairs.len() as f64,
        instance_count: instances.len(),
    }))
}

/// Among `instances` the partial-label model gets wrong, the fraction the
/// fully supervised model gets right. `None` when the first set is empty.
pub fn recovered_rate(pll: &[usize], supervised: &[usize], truth: &[usize], instances: &[usize]) -> Result<Option<f64>> {
    check_aligned("pll predictions", pll.len(), truth.len())?;
    check_aligned("supervised predictions", supervised.len(), truth.len())?;
    let set: BTreeSet<usize> = instances.iter().copied().collect();
    if let Some(&bad) = set.iter().find(|&&i| i >= truth.len()) {
        return Err(EvalError::Contract(format!("instance {bad} outside {} samples", truth.len())));
    }
    let wrong: Vec<usize> = set.into_iter().filter(|&i| pll[i] != truth[i]).collect();
    if wrong.is_empty() {
        return Ok(None);
    }
    let recovered = wrong.iter().filter(|&&i| supervised[i] == truth[i]).count();
    Ok(Some(recovered as f64 / wrong.len() as f64))
}
