//! Class-specific augmentations: CAM-guided feature reweighting and an
//! interface for external editors.

mod cache;
mod cam;
mod mix;
mod plugin;

use std::collections::BTreeMap;

use rayon::prelude::*;

pub use cache::{load_augmentations, save_augmentations, AUGMENT_FORMAT_TAG};
pub use cam::{class_activation_mask, rank_top_fraction, ClassMask, MaskOutcome, UNIFORM_RANGE};
pub use mix::{apply_blur_mix, blend, gaussian_kernel, gaussian_smooth, resize_bilinear};
pub use plugin::{external_edit, EditorPlugin};

use crate::data::{DataError, PLLDataset};
use crate::numkernel::{BackboneParams, KernelError, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("no editor plugin is configured")]
    NotConfigured,
    #[error("editor plugin '{plugin}' broke its contract: {message}")]
    PluginContract { plugin: String, message: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AugmentError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum AugmentSource {
    BuiltinCam,
    ExternalPlugin,
}

impl AugmentSource {
    pub fn name(self) -> &'static str {
        match self {
            AugmentSource::BuiltinCam => "builtin-cam",
            AugmentSource::ExternalPlugin => "external-plugin",
        }
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        match text {
            "builtin-cam" => Ok(AugmentSource::BuiltinCam),
            "external-plugin" => Ok(AugmentSource::ExternalPlugin),
            other => Err(format!("unknown augmentation source '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSample {
    pub parent_index: usize,
    pub guiding_label: usize,
    pub features: Tensor,
    pub source: AugmentSource,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub top_fraction: f64,
    /// Blur parameter `ε` applied to non-activated features.
    pub epsilon: f64,
    /// 5x5, σ = 1 Gaussian smoothing after mixing (grid features only).
    pub smoothing: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { top_fraction: 0.3, epsilon: 0.3, smoothing: true }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(AugmentError::Parameter(format!("top_fraction must lie in (0, 1], got {}", self.top_fraction)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(AugmentError::Parameter(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscardRecord {
    pub parent_index: usize,
    pub guiding_label: usize,
    /// Range of the activation map that was judged uniform.
    pub range: f64,
}

/// The augmentation set `A`, ordered by (parent index, guiding label).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AugmentationSet {
    pub samples: Vec<AugmentedSample>,
    pub discards: Vec<DiscardRecord>,
}

impl AugmentationSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Label buckets `A_{y′}`.
    pub fn buckets(&self) -> BTreeMap<usize, Vec<&AugmentedSample>> {
        let mut out: BTreeMap<usize, Vec<&AugmentedSample>> = BTreeMap::new();
        for s in &self.samples {
            out.entry(s.guiding_label).or_default().push(s);
        }
        out
    }

    /// Augmentations of one parent, in label order.
    pub fn of_parent(&self, parent: usize) -> impl Iterator<Item = &AugmentedSample> {
        let start = self.samples.partition_point(|s| s.parent_index < parent);
        self.samples[start..].iter().take_while(move |s| s.parent_index == parent)
    }
}

/// One CAM augmentation per (sample, candidate) pair unless its map is uniform.
pub fn refresh_augmentations(
    dataset: &PLLDataset,
    params: &BackboneParams,
    config: &AugmentConfig,
) -> Result<AugmentationSet> {
    config.validate()?;
    let per_sample = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let sample = dataset.sample(i);
            let mut made = Vec::new();
            let mut dropped = Vec::new();
            for s in sample.candidates.iter() {
                match class_activation_mask(params, &sample.features, &sample.candidates, s, config.top_fraction)? {
                    MaskOutcome::Mask(mask) => made.push(apply_blur_mix(i, &sample.features, &mask, config.epsilon, config.smoothing)?),
                    MaskOutcome::Discarded { range, .. } => {
                        dropped.push(DiscardRecord { parent_index: i, guiding_label: s, range })
                    }
                }
            }
            Ok((made, dropped))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut set = AugmentationSet::default();
    for (made, dropped) in per_sample {
        set.samples.extend(made);
        set.discards.extend(dropped);
    }
    Ok(set)
}
