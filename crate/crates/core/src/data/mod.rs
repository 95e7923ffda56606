//! Partial-label datasets: the sample model, candidate-label synthesis from
//! annotator posteriors, a Gaussian generator with entangled class pairs, and
//! the `PLLDS v1` text format.

mod annotator;
mod bench;
mod gaussian;
mod io;
mod labels;
mod synth;

use std::collections::BTreeMap;
use std::fmt;

pub use bench::BenchmarkConfig;
pub use annotator::{train_annotator, Annotator, AnnotatorConfig, AnnotatorPosterior};
pub use gaussian::{gen_entangled_gaussians, ClassPairOverlap, Covariance, GaussianSpec};
pub use io::{load, load_path, save, save_path, FORMAT_TAG};
pub use labels::LabelSet;
pub use synth::{flip_probabilities, synthesize_candidates};

use thiserror::Error;

use crate::numkernel::{KernelError, Tensor};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("row {row}: {message}")]
    InvalidSample { row: usize, message: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("sample {sample}: posterior has zero mass on every non-true label")]
    DegeneratePosterior { sample: usize },
    #[error("degenerate dataset: {0}")]
    Degenerate(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("operation requires ground-truth labels (missing at sample {0})")]
    RequiresGroundTruth(usize),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shape of every sample's feature tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureDims {
    Flat(usize),
    Grid { height: usize, width: usize, channels: usize },
}

impl FeatureDims {
    pub fn shape(&self) -> Vec<usize> {
        match *self {
            FeatureDims::Flat(d) => vec![d],
            FeatureDims::Grid { height, width, channels } => vec![height, width, channels],
        }
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let parts: Result<Vec<usize>, _> = text.split(',').map(|p| p.trim().parse::<usize>()).collect();
        match parts.map_err(|_| format!("bad dims {text:?}"))?.as_slice() {
            [d] if *d > 0 => Ok(FeatureDims::Flat(*d)),
            [h, w, ch] if *h > 0 && *w > 0 && *ch > 0 => {
                Ok(FeatureDims::Grid { height: *h, width: *w, channels: *ch })
            }
            _ => Err(format!("dims must be d or h,w,ch with positive entries, got {text:?}")),
        }
    }
}

impl fmt::Display for FeatureDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureDims::Flat(d) => write!(f, "{d}"),
            FeatureDims::Grid { height, width, channels } => write!(f, "{height},{width},{channels}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartialSample {
    pub features: Tensor,
    pub candidates: LabelSet,
    /// Held out from training; used for synthesis and evaluation only.
    pub true_label: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PLLDataset {
    samples: Vec<PartialSample>,
    num_classes: usize,
    dims: FeatureDims,
    /// Free-form provenance (generator, seed, tau_rate, annotator settings, ...).
    pub provenance: BTreeMap<String, String>,
}

impl PLLDataset {
    pub fn new(
        samples: Vec<PartialSample>,
        num_classes: usize,
        dims: FeatureDims,
    ) -> Result<Self, DataError> {
        if num_classes == 0 {
            return Err(DataError::Parameter("num_classes must be positive".into()));
        }
        for (row, sample) in samples.iter().enumerate() {
            validate_sample(row, sample, num_classes, dims)?;
        }
        Ok(Self { samples, num_classes, dims, provenance: BTreeMap::new() })
    }

    pub fn samples(&self) -> &[PartialSample] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &PartialSample {
        &self.samples[i]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dims(&self) -> FeatureDims {
        self.dims
    }

    /// True labels for every sample, or the index of the first sample lacking one.
    pub fn true_labels(&self) -> Result<Vec<usize>, DataError> {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| s.true_label.ok_or(DataError::RequiresGroundTruth(i)))
            .collect()
    }

    pub fn average_candidates(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.candidates.len()).sum::<usize>() as f64 / self.len() as f64
    }

    /// Replaces candidate sets (one per sample), re-validating every sample.
    pub fn with_candidates(mut self, candidates: Vec<LabelSet>) -> Result<Self, DataError> {
        if candidates.len() != self.samples.len() {
            return Err(DataError::Parameter(format!(
                "expected {} candidate sets, got {}",
                self.samples.len(),
                candidates.len()
            )));
        }
        for (row, (sample, set)) in self.samples.iter_mut().zip(candidates).enumerate() {
            sample.candidates = set;
            validate_sample(row, sample, self.num_classes, self.dims)?;
        }
        Ok(self)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            num_classes: self.num_classes,
            dims: self.dims,
            provenance: self.provenance.clone(),
        }
    }
}

fn validate_sample(
    row: usize,
    sample: &PartialSample,
    num_classes: usize,
    dims: FeatureDims,
) -> Result<(), DataError> {
    let invalid = |message: String| DataError::InvalidSample { row, message };
    if sample.features.len() != dims.len() {
        return Err(invalid(format!(
            "expected {} feature values, found {}",
            dims.len(),
            sample.features.len()
        )));
    }
    if sample.candidates.num_classes() != num_classes {
        return Err(invalid(format!(
            "candidate set covers {} classes, dataset has {num_classes}",
            sample.candidates.num_classes()
        )));
    }
    if sample.candidates.is_empty() {
        return Err(invalid("empty candidate set".into()));
    }
    if let Some(y) = sample.true_label {
        if y >= num_classes {
            return Err(invalid(format!("true label {y} out of range")));
        }
        if !sample.candidates.contains(y) {
            return Err(invalid(format!("true label {y} is not among the candidates")));
        }
    }
    Ok(())
}
