use super::{Result, TrainError};
use crate::data::FeatureDims;
use crate::numkernel::{Activation, Architecture, BackboneParams, Checkpoint, KernelError};

/// `key ← m · key + (1 − m) · query`, element-wise.
pub fn momentum_update_values(key: &mut [f64], query: &[f64], m: f64) -> Result<()> {
    if key.len() != query.len() {
        return Err(TrainError::Contract(format!("momentum update between {} and {} parameters", key.len(), query.len())));
    }
    if !(0.0..=1.0).contains(&m) {
        return Err(TrainError::Config(format!("momentum must lie in [0, 1], got {m}")));
    }
    for (k, q) in key.iter_mut().zip(query) {
        *k = m * *k + (1.0 - m) * q;
    }
    Ok(())
}

/// Query side (`e^q`, `g^q`) and its momentum copy (`e^k`, `g^k`).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelPair {
    pub query: BackboneParams,
    key: BackboneParams,
    pub momentum: f64,
}

impl ModelPair {
    /// Both sides start from the same initialization.
    pub fn new(arch: Architecture, seed: u64, momentum: f64) -> Result<Self> {
        let query = BackboneParams::init(arch, seed)?;
        Self::from_parts(query.clone(), query, momentum)
    }

    pub fn from_parts(query: BackboneParams, key: BackboneParams, momentum: f64) -> Result<Self> {
        if !query.same_shape(&key) {
            return Err(TrainError::Contract("query and key parameter shapes differ".into()));
        }
        if !(0.0..=1.0).contains(&momentum) {
            return Err(TrainError::Config(format!("momentum must lie in [0, 1], got {momentum}")));
        }
        Ok(Self { query, key, momentum })
    }

    /// The key side is read-only outside [`ModelPair::momentum_update`].
    pub fn key(&self) -> &BackboneParams {
        &self.key
    }

    pub fn momentum_update(&mut self) -> Result<()> {
        momentum_update_values(self.key.values_mut(), self.query.values(), self.momentum)
    }

    pub fn to_checkpoint(&self, extra_header: &[(String, String)]) -> Checkpoint {
        let mut header = format!("arch={}\nmomentum={}\n", self.query.arch().describe(), self.momentum);
        for (k, v) in extra_header {
            header.push_str(&format!("{k}={v}\n"));
        }
        let mut tensors = self.query.to_named_tensors("query.");
        tensors.extend(self.key.to_named_tensors("key."));
        Checkpoint { header, tensors }
    }

    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        let describe = checkpoint
            .header_value("arch")
            .ok_or_else(|| TrainError::Kernel(KernelError::Checkpoint("header lacks arch".into())))?;
        let arch = Architecture::parse(describe).map_err(TrainError::Kernel)?;
        let momentum = checkpoint
            .header_value("momentum")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| TrainError::Kernel(KernelError::Checkpoint("header lacks momentum".into())))?;
        let query = BackboneParams::from_checkpoint(arch.clone(), checkpoint, "query.")?;
        let key = BackboneParams::from_checkpoint(arch, checkpoint, "key.")?;
        Self::from_parts(query, key, momentum)
    }
}

/// Backbone shape knobs; the input side follows the dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub conv_filters: [usize; 2],
    pub embed_dim: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: vec![32, 32], conv_filters: [8, 8], embed_dim: 32, activation: Activation::Tanh }
    }
}

impl ModelConfig {
    pub fn architecture(&self, dims: FeatureDims, num_classes: usize) -> Architecture {
        let arch = match dims {
            FeatureDims::Flat(d) => Architecture::mlp(d, self.hidden.clone(), self.embed_dim, num_classes),
            FeatureDims::Grid { height, width, channels } => {
                Architecture::conv(height, width, channels, self.conv_filters, self.embed_dim, num_classes)
            }
        };
        arch.with_activation(self.activation)
    }
}
