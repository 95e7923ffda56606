use super::{AugmentError, AugmentSource, AugmentedSample, Result};
use crate::data::LabelSet;
use crate::numkernel::Tensor;

/// An external editor `E(x, I(s))`. Implementations receive the parent
/// features and the textual description of the guiding class.
pub trait EditorPlugin: Send + Sync {
    fn name(&self) -> &str;
    fn edit(&self, features: &Tensor, description: &str) -> std::result::Result<Tensor, String>;
}

pub fn external_edit(
    plugin: Option<&dyn EditorPlugin>,
    parent_index: usize,
    x: &Tensor,
    candidates: &LabelSet,
    s: usize,
    class_names: &[String],
) -> Result<AugmentedSample> {
    let plugin = plugin.ok_or(AugmentError::NotConfigured)?;
    if s >= candidates.num_classes() || !candidates.contains(s) {
        return Err(AugmentError::Contract(format!("guiding label {s} is not a candidate")));
    }
    let description = class_names
        .get(s)
        .ok_or_else(|| AugmentError::Contract(format!("no class description for label {s}")))?;
    let contract = |message: String| AugmentError::PluginContract { plugin: plugin.name().to_string(), message };
    let edited = plugin.edit(x, description).map_err(contract)?;
    if edited.shape() != x.shape() {
        return Err(contract(format!("returned shape {:?} for input shape {:?}", edited.shape(), x.shape())));
    }
    Ok(AugmentedSample { parent_index, guiding_label: s, features: edited, source: AugmentSource::ExternalPlugin })
}
