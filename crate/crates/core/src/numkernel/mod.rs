//! Minimal differentiable numeric core.

mod checkpoint;
mod gradcheck;
mod network;
pub mod optim;
mod tensor;

pub use checkpoint::{Checkpoint, NamedTensor, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use gradcheck::{check_gradients, check_gradients_with, relative_error, Stencil, GradientReport, RELATIVE_FLOOR};
pub use network::{
    Activation, Architecture, BackboneParams, Encoder, ForwardCache, ForwardOutput, Slot,
};
pub use tensor::{argmax, cosine, dot, euclidean, log_sum_exp, softmax, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("backward called without a forward cache")]
    MissingCache,
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BackboneParams {
    /// Named tensors for this parameter set, each name prefixed by `prefix`.
    pub fn to_named_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        self.slots()
            .iter()
            .map(|slot| NamedTensor {
                name: format!("{prefix}{}", slot.name),
                shape: slot.shape.clone(),
                values: self.values()[slot.range()].to_vec(),
            })
            .collect()
    }

    /// Rebuilds a parameter set of architecture `arch` from prefixed checkpoint tensors.
    pub fn from_checkpoint(
        arch: Architecture,
        checkpoint: &Checkpoint,
        prefix: &str,
    ) -> Result<Self, KernelError> {
        let mut params = Self::zeros(arch)?;
        for slot in params.slots().to_vec() {
            let name = format!("{prefix}{}", slot.name);
            let tensor = checkpoint
                .tensor(&name)
                .ok_or_else(|| KernelError::Checkpoint(format!("missing tensor {name}")))?;
            if tensor.shape != slot.shape {
                return Err(KernelError::Dimension {
                    expected: format!("{name} with shape {:?}", slot.shape),
                    found: format!("{:?}", tensor.shape),
                });
            }
            params.values_mut()[slot.range()].copy_from_slice(&tensor.values);
        }
        if params.values().iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite(format!("checkpoint tensors under {prefix:?}")));
        }
        Ok(params)
    }
}
