//! Momentum training loop with warm-up, augmentation refresh, key queue and
//! ablation variants.

mod ablation;
mod bank;
mod history;
mod model;
mod train;

pub use ablation::{ablation_suite, pooled_std, AblationRow, AblationTable, Variant};
pub use bank::{BankEntry, ContrastBank};
pub use history::{history_to_csv, EpochRecord};
pub use model::{momentum_update_values, ModelConfig, ModelPair};
pub use train::{accuracy, epoch_order, predictions, train, TrainOutcome};

use crate::augment::{AugmentConfig, AugmentError};
use crate::data::DataError;
use crate::losses::{LossConfig, LossError};
use crate::numkernel::KernelError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence { epoch: usize, batch: usize, detail: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial rate of the cosine schedule.
    pub learning_rate: f64,
    pub sgd_momentum: f64,
    pub weight_decay: f64,
    /// `None` means 10% of `epochs`.
    pub warmup_epochs: Option<usize>,
    /// `None` means 10% of `epochs` (at least 1).
    pub refresh_period: Option<usize>,
    /// Key-side momentum `m`.
    pub momentum: f64,
    pub queue_capacity: usize,
    /// Std of the Gaussian jitter that turns an augmentation into its query and key views.
    pub view_noise: f64,
    pub no_rl: bool,
    pub no_ca: bool,
    /// Uniform within-set weights for every variant, including those that keep `no_ca` off.
    pub uniform_confidence: bool,
    pub seed: u64,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 0.05,
            sgd_momentum: 0.9,
            weight_decay: 1e-3,
            warmup_epochs: None,
            refresh_period: None,
            momentum: 0.99,
            queue_capacity: 1024,
            view_noise: 0.05,
            no_rl: false,
            no_ca: false,
            uniform_confidence: false,
            seed: 0,
            loss: LossConfig::default(),
            augment: AugmentConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn warmup(&self) -> usize {
        self.warmup_epochs.unwrap_or(self.epochs / 10)
    }

    pub fn refresh(&self) -> usize {
        self.refresh_period.unwrap_or((self.epochs / 10).max(1))
    }

    /// Whether the contrastive branch does any work.
    pub fn representation_learning(&self) -> bool {
        !self.no_rl && self.loss.beta > 0.0
    }

    pub fn uses_uniform_weights(&self) -> bool {
        self.no_ca || self.uniform_confidence
    }

    pub fn variant(&self) -> Variant {
        Variant::from_flags(self.no_rl, self.no_ca)
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup() > self.epochs {
            return Err(TrainError::Config(format!("warm-up {} exceeds epochs {}", self.warmup(), self.epochs)));
        }
        if self.refresh() == 0 {
            return Err(TrainError::Config("refresh period must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(TrainError::Config(format!("momentum must lie in [0, 1], got {}", self.momentum)));
        }
        if !(0.0..1.0).contains(&self.sgd_momentum) || !(self.weight_decay >= 0.0) {
            return Err(TrainError::Config("sgd momentum must lie in [0, 1) and weight decay be >= 0".into()));
        }
        if !(self.view_noise >= 0.0 && self.view_noise.is_finite()) {
            return Err(TrainError::Config(format!("view noise must be >= 0, got {}", self.view_noise)));
        }
        if self.model.embed_dim == 0 {
            return Err(TrainError::Config("embedding dimension must be positive".into()));
        }
        self.loss.validate()?;
        self.augment.validate()?;
        Ok(())
    }
}
