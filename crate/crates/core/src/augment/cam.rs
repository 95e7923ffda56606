use super::{AugmentError, Result};
use crate::data::LabelSet;
use crate::numkernel::{BackboneParams, Encoder, Tensor};

/// Maps whose range falls below this are treated as uniform.
pub const UNIFORM_RANGE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMask {
    /// One entry per feature; grid masks are broadcast over channels.
    pub indicator: Vec<bool>,
    pub guiding_label: usize,
    pub saliency_fraction: f64,
}

impl ClassMask {
    pub fn ones(&self) -> usize {
        self.indicator.iter().filter(|&&b| b).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MaskOutcome {
    Mask(ClassMask),
    Discarded { guiding_label: usize, range: f64 },
}

/// Marks the `round(fraction · n)` (at least one) largest entries, ties
/// broken towards the lower index.
pub fn rank_top_fraction(values: &[f64], fraction: f64) -> Vec<bool> {
    let n = values.len();
    let k = ((fraction * n as f64).round() as usize).clamp(1, n.max(1)).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut keep = vec![false; n];
    for &i in &order[..k] {
        keep[i] = true;
    }
    keep
}

fn relu_range(map: &mut [f64]) -> f64 {
    map.iter_mut().for_each(|v| *v = v.max(0.0));
    let lo = map.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

fn normalize(map: &mut [f64], range: f64) {
    let lo = map.iter().copied().fold(f64::INFINITY, f64::min);
    map.iter_mut().for_each(|v| *v = (*v - lo) / range);
}

/// Raw class-`s` activation map: the channel-weighted sum of the last feature
/// maps for grid encoders, gradient-times-input for flat encoders (which is
/// `w_{s,i} x_i` when the head is linear in the input).
fn activation_map(params: &BackboneParams, x: &Tensor, s: usize) -> Result<(Vec<f64>, Option<(usize, usize, usize)>)> {
    let out = params.forward(x)?;
    match params.arch().encoder {
        Encoder::Conv { height, width, channels, filters } => {
            let maps = out.feature_maps().ok_or_else(|| AugmentError::Contract("missing feature maps".into()))?;
            let w = params.slot("classifier.weight").expect("classifier slot");
            let f = filters[1];
            let row = &w[s * f..(s + 1) * f];
            let map = maps.chunks(f).map(|px| px.iter().zip(row).map(|(a, b)| a * b).sum()).collect();
            Ok((map, Some((height, width, channels))))
        }
        Encoder::Mlp { .. } => {
            let mut onehot = vec![0.0; params.arch().num_classes];
            onehot[s] = 1.0;
            let mut sink = vec![0.0; params.len()];
            let grad_x = params.backward(&out.cache, None, Some(&onehot), &mut sink)?;
            Ok((grad_x.iter().zip(x.values()).map(|(g, v)| g * v).collect(), None))
        }
    }
}

pub fn class_activation_mask(
    params: &BackboneParams,
    x: &Tensor,
    candidates: &LabelSet,
    s: usize,
    top_fraction: f64,
) -> Result<MaskOutcome> {
    if s >= candidates.num_classes() || !candidates.contains(s) {
        return Err(AugmentError::Contract(format!("guiding label {s} is not a candidate")));
    }
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(AugmentError::Parameter(format!("top_fraction must lie in (0, 1], got {top_fraction}")));
    }
    let (mut map, grid) = activation_map(params, x, s)?;
    let range = relu_range(&mut map);
    if !(range >= UNIFORM_RANGE) {
        return Ok(MaskOutcome::Discarded { guiding_label: s, range: if range.is_finite() { range } else { 0.0 } });
    }
    normalize(&mut map, range);
    let indicator = match grid {
        None => rank_top_fraction(&map, top_fraction),
        Some((h, w, ch)) => {
            // Feature maps already share the input resolution, so the resize is the identity.
            let map = super::resize_bilinear(&map, (h, w), (h, w));
            let pixels = rank_top_fraction(&map, top_fraction);
            pixels.iter().flat_map(|&b| std::iter::repeat_n(b, ch)).collect()
        }
    };
    Ok(MaskOutcome::Mask(ClassMask { indicator, guiding_label: s, saliency_fraction: top_fraction }))
}
