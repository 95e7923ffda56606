//! Small encoder with a projection head and a classifier head on a shared
//! backbone, plus hand-written reverse-mode gradients.
//!
//! Two encoders are supported: an MLP over flat features and a two-layer
//! 3x3 convolutional stack over `h x w x ch` grids followed by global average
//! pooling. The pooled (or last hidden) representation feeds both heads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{argmax, dot, Tensor};
use super::KernelError;

const KERNEL: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Result<Self, KernelError> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(KernelError::Architecture(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Encoder {
    Mlp { input: usize, hidden: Vec<usize> },
    Conv { height: usize, width: usize, channels: usize, filters: [usize; 2] },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub encoder: Encoder,
    pub embed_dim: usize,
    pub num_classes: usize,
    pub activation: Activation,
}

/// Location of one named parameter tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub fan_in: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

impl Architecture {
    pub fn mlp(input: usize, hidden: Vec<usize>, embed_dim: usize, num_classes: usize) -> Self {
        Self {
            encoder: Encoder::Mlp { input, hidden },
            embed_dim,
            num_classes,
            activation: Activation::Tanh,
        }
    }

    pub fn conv(
        height: usize,
        width: usize,
        channels: usize,
        filters: [usize; 2],
        embed_dim: usize,
        num_classes: usize,
    ) -> Self {
        Self {
            encoder: Encoder::Conv { height, width, channels, filters },
            embed_dim,
            num_classes,
            activation: Activation::Tanh,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let bad = |msg: &str| Err(KernelError::Architecture(msg.to_string()));
        if self.embed_dim == 0 {
            return bad("embedding dimension must be positive");
        }
        if self.num_classes == 0 {
            return bad("at least one class is required");
        }
        match &self.encoder {
            Encoder::Mlp { input, hidden } => {
                if *input == 0 || hidden.contains(&0) {
                    return bad("MLP layer widths must be positive");
                }
            }
            Encoder::Conv { height, width, channels, filters } => {
                if *height == 0 || *width == 0 || *channels == 0 || filters.contains(&0) {
                    return bad("convolution dimensions must be positive");
                }
            }
        }
        Ok(())
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match &self.encoder {
            Encoder::Mlp { input, .. } => vec![*input],
            Encoder::Conv { height, width, channels, .. } => vec![*height, *width, *channels],
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape().iter().product()
    }

    /// Width of the shared representation feeding both heads.
    pub fn feature_dim(&self) -> usize {
        match &self.encoder {
            Encoder::Mlp { input, hidden } => hidden.last().copied().unwrap_or(*input),
            Encoder::Conv { filters, .. } => filters[1],
        }
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.encoder, Encoder::Conv { .. })
    }

    pub fn slots(&self) -> Vec<Slot> {
        let mut slots = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>, fan_in: usize| {
            let len: usize = shape.iter().product();
            slots.push(Slot { name, shape, offset, fan_in });
            offset += len;
        };
        match &self.encoder {
            Encoder::Mlp { input, hidden } => {
                let mut prev = *input;
                for (i, &width) in hidden.iter().enumerate() {
                    push(format!("layer{i}.weight"), vec![width, prev], prev);
                    push(format!("layer{i}.bias"), vec![width], prev);
                    prev = width;
                }
            }
            Encoder::Conv { channels, filters, .. } => {
                let fan1 = channels * KERNEL * KERNEL;
                push("conv1.weight".into(), vec![filters[0], *channels, KERNEL, KERNEL], fan1);
                push("conv1.bias".into(), vec![filters[0]], fan1);
                let fan2 = filters[0] * KERNEL * KERNEL;
                push("conv2.weight".into(), vec![filters[1], filters[0], KERNEL, KERNEL], fan2);
                push("conv2.bias".into(), vec![filters[1]], fan2);
            }
        }
        let feat = self.feature_dim();
        push("projection.weight".into(), vec![self.embed_dim, feat], feat);
        push("projection.bias".into(), vec![self.embed_dim], feat);
        push("classifier.weight".into(), vec![self.num_classes, feat], feat);
        push("classifier.bias".into(), vec![self.num_classes], feat);
        slots
    }

    pub fn param_count(&self) -> usize {
        self.slots().iter().map(Slot::len).sum()
    }

    /// One-line descriptor used in checkpoint headers, e.g.
    /// `mlp input=16 hidden=32,32 embed=32 classes=4 act=tanh`.
    pub fn describe(&self) -> String {
        let tail = format!(
            "embed={} classes={} act={}",
            self.embed_dim,
            self.num_classes,
            self.activation.name()
        );
        match &self.encoder {
            Encoder::Mlp { input, hidden } => {
                let hidden: Vec<String> = hidden.iter().map(|h| h.to_string()).collect();
                let hidden = if hidden.is_empty() { "-".to_string() } else { hidden.join(",") };
                format!("mlp input={input} hidden={hidden} {tail}")
            }
            Encoder::Conv { height, width, channels, filters } => format!(
                "conv grid={height},{width},{channels} filters={},{} {tail}",
                filters[0], filters[1]
            ),
        }
    }

    pub fn parse(descriptor: &str) -> Result<Self, KernelError> {
        let err = |msg: String| KernelError::Architecture(msg);
        let mut words = descriptor.split_whitespace();
        let kind = words.next().ok_or_else(|| err("empty descriptor".into()))?;
        let mut fields = std::collections::BTreeMap::new();
        for word in words {
            let (k, v) = word
                .split_once('=')
                .ok_or_else(|| err(format!("malformed descriptor field {word:?}")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| err(format!("missing field {k}")));
        let num = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad integer {s:?}")));
        let list = |s: &str| -> Result<Vec<usize>, KernelError> {
            if s == "-" {
                return Ok(Vec::new());
            }
            s.split(',').map(num).collect()
        };
        let embed_dim = num(get("embed")?)?;
        let num_classes = num(get("classes")?)?;
        let activation = Activation::parse(get("act")?)?;
        let encoder = match kind {
            "mlp" => Encoder::Mlp { input: num(get("input")?)?, hidden: list(get("hidden")?)? },
            "conv" => {
                let grid = list(get("grid")?)?;
                let filters = list(get("filters")?)?;
                if grid.len() != 3 || filters.len() != 2 {
                    return Err(err("conv descriptor needs grid=h,w,ch and filters=a,b".into()));
                }
                Encoder::Conv {
                    height: grid[0],
                    width: grid[1],
                    channels: grid[2],
                    filters: [filters[0], filters[1]],
                }
            }
            other => return Err(err(format!("unknown encoder kind {other:?}"))),
        };
        let arch = Self { encoder, embed_dim, num_classes, activation };
        arch.validate()?;
        Ok(arch)
    }
}

/// Parameters of one encoder + heads, stored as a single flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct BackboneParams {
    arch: Architecture,
    slots: Vec<Slot>,
    values: Vec<f64>,
}

/// Intermediate values recorded by [`BackboneParams::forward`] and consumed
/// by [`BackboneParams::backward`]. A default-constructed cache is empty.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    state: Option<CacheState>,
}

#[derive(Clone, Debug)]
struct CacheState {
    arch: Architecture,
    input: Vec<f64>,
    /// (pre-activation, activation) per hidden layer or conv layer.
    layers: Vec<(Vec<f64>, Vec<f64>)>,
    features: Vec<f64>,
    embedding: Vec<f64>,
    projection_norm: f64,
    fallback: bool,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub embedding: Tensor,
    pub logits: Tensor,
    /// Shared representation feeding both heads.
    pub features: Vec<f64>,
    /// Set when the projection was exactly zero and the embedding fell back to `e_0`.
    pub used_fallback: bool,
    pub cache: ForwardCache,
}

impl ForwardOutput {
    /// Last convolutional activation maps in `h x w x filters` layout (grid encoders only).
    pub fn feature_maps(&self) -> Option<&[f64]> {
        let state = self.cache.state.as_ref()?;
        match state.arch.encoder {
            Encoder::Conv { .. } => state.layers.last().map(|(_, a)| a.as_slice()),
            Encoder::Mlp { .. } => None,
        }
    }
}

impl BackboneParams {
    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self, KernelError> {
        let mut params = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for slot in params.slots.clone() {
            let bound = 1.0 / (slot.fan_in.max(1) as f64).sqrt();
            for v in &mut params.values[slot.range()] {
                *v = rng.random_range(-bound..=bound);
            }
        }
        Ok(params)
    }

    pub fn zeros(arch: Architecture) -> Result<Self, KernelError> {
        arch.validate()?;
        let slots = arch.slots();
        let n = slots.iter().map(Slot::len).sum();
        Ok(Self { arch, slots, values: vec![0.0; n] })
    }

    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self, KernelError> {
        let mut params = Self::zeros(arch)?;
        if values.len() != params.values.len() {
            return Err(KernelError::Dimension {
                expected: format!("{} parameters", params.values.len()),
                found: format!("{} parameters", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite("parameter vector".into()));
        }
        params.values = values;
        Ok(params)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slot(&self, name: &str) -> Option<&[f64]> {
        self.slots.iter().find(|s| s.name == name).map(|s| &self.values[s.range()])
    }

    pub fn slot_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.slots.iter().find(|s| s.name == name)?.range();
        Some(&mut self.values[range])
    }

    fn slot_range(&self, name: &str) -> std::ops::Range<usize> {
        self.slots
            .iter()
            .find(|s| s.name == name)
            .map(Slot::range)
            .expect("layout slot exists for its own architecture")
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.arch == other.arch && self.values.len() == other.values.len()
    }

    pub fn predict(&self, x: &Tensor) -> Result<usize, KernelError> {
        Ok(argmax(self.forward(x)?.logits.values()))
    }

    pub fn forward(&self, x: &Tensor) -> Result<ForwardOutput, KernelError> {
        let expected = self.arch.input_shape();
        let shape_ok = x.shape() == expected.as_slice()
            || (x.len() == self.arch.input_len() && !self.arch.is_grid());
        if !shape_ok {
            return Err(KernelError::Dimension {
                expected: format!("input shape {expected:?}"),
                found: format!("{:?}", x.shape()),
            });
        }
        let act = self.arch.activation;
        let input = x.values().to_vec();
        let mut layers = Vec::new();
        let features = match &self.arch.encoder {
            Encoder::Mlp { hidden, .. } => {
                let mut current = input.clone();
                for i in 0..hidden.len() {
                    let w = &self.values[self.slot_range(&format!("layer{i}.weight"))];
                    let b = &self.values[self.slot_range(&format!("layer{i}.bias"))];
                    let z = affine(w, b, &current);
                    let a: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
                    layers.push((z, a.clone()));
                    current = a;
                }
                current
            }
            Encoder::Conv { height, width, channels, filters } => {
                let (h, w) = (*height, *width);
                let z1 = conv3x3_same(
                    &input,
                    h,
                    w,
                    *channels,
                    &self.values[self.slot_range("conv1.weight")],
                    &self.values[self.slot_range("conv1.bias")],
                    filters[0],
                );
                let a1: Vec<f64> = z1.iter().map(|&v| act.apply(v)).collect();
                let z2 = conv3x3_same(
                    &a1,
                    h,
                    w,
                    filters[0],
                    &self.values[self.slot_range("conv2.weight")],
                    &self.values[self.slot_range("conv2.bias")],
                    filters[1],
                );
                let a2: Vec<f64> = z2.iter().map(|&v| act.apply(v)).collect();
                let pooled = global_average_pool(&a2, h * w, filters[1]);
                layers.push((z1, a1));
                layers.push((z2, a2));
                pooled
            }
        };
        let projection = affine(
            &self.values[self.slot_range("projection.weight")],
            &self.values[self.slot_range("projection.bias")],
            &features,
        );
        let logits = affine(
            &self.values[self.slot_range("classifier.weight")],
            &self.values[self.slot_range("classifier.bias")],
            &features,
        );
        let norm = dot(&projection, &projection).sqrt();
        let (embedding, fallback) = if norm > 0.0 && norm.is_finite() {
            (projection.iter().map(|v| v / norm).collect::<Vec<_>>(), false)
        } else {
            let mut e = vec![0.0; projection.len()];
            e[0] = 1.0;
            (e, true)
        };
        let cache = ForwardCache {
            state: Some(CacheState {
                arch: self.arch.clone(),
                input,
                layers,
                features: features.clone(),
                embedding: embedding.clone(),
                projection_norm: norm,
                fallback,
            }),
        };
        Ok(ForwardOutput {
            embedding: Tensor::new(vec![self.arch.embed_dim], embedding)?,
            logits: Tensor::new(vec![self.arch.num_classes], logits)?,
            features,
            used_fallback: fallback,
            cache,
        })
    }

    /// Accumulates parameter gradients into `grads` (same layout as
    /// [`Self::values`]) and returns the gradient with respect to the input.
    ///
    /// Missing upstream gradients are treated as zero.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_embedding: Option<&[f64]>,
        d_logits: Option<&[f64]>,
        grads: &mut [f64],
    ) -> Result<Vec<f64>, KernelError> {
        let state = cache.state.as_ref().ok_or(KernelError::MissingCache)?;
        if state.arch != self.arch {
            return Err(KernelError::Usage("forward cache was built for a different architecture".into()));
        }
        if grads.len() != self.values.len() {
            return Err(KernelError::Dimension {
                expected: format!("{} gradient slots", self.values.len()),
                found: format!("{}", grads.len()),
            });
        }
        let e = self.arch.embed_dim;
        let c = self.arch.num_classes;
        if d_embedding.is_some_and(|d| d.len() != e) || d_logits.is_some_and(|d| d.len() != c) {
            return Err(KernelError::Dimension {
                expected: format!("upstream gradients of length {e} and {c}"),
                found: "mismatched upstream gradients".into(),
            });
        }
        let feat = state.features.len();
        let mut d_features = vec![0.0; feat];

        if let Some(d_logits) = d_logits {
            let w_range = self.slot_range("classifier.weight");
            let b_range = self.slot_range("classifier.bias");
            affine_backward(
                &self.values[w_range.clone()],
                &state.features,
                d_logits,
                &mut d_features,
                grads,
                w_range.start,
                b_range.start,
            );
        }
        if let (Some(d_emb), false) = (d_embedding, state.fallback) {
            let q = &state.embedding;
            let qd = dot(q, d_emb);
            let d_proj: Vec<f64> = q
                .iter()
                .zip(d_emb)
                .map(|(qi, di)| (di - qi * qd) / state.projection_norm)
                .collect();
            let w_range = self.slot_range("projection.weight");
            let b_range = self.slot_range("projection.bias");
            affine_backward(
                &self.values[w_range.clone()],
                &state.features,
                &d_proj,
                &mut d_features,
                grads,
                w_range.start,
                b_range.start,
            );
        }

        let act = self.arch.activation;
        match &self.arch.encoder {
            Encoder::Mlp { hidden, .. } => {
                let mut upstream = d_features;
                for i in (0..hidden.len()).rev() {
                    let (z, a) = &state.layers[i];
                    let d_z: Vec<f64> = upstream
                        .iter()
                        .zip(z.iter().zip(a))
                        .map(|(d, (&zi, &ai))| d * act.derivative(zi, ai))
                        .collect();
                    let prev: &[f64] = if i == 0 { &state.input } else { &state.layers[i - 1].1 };
                    let w_range = self.slot_range(&format!("layer{i}.weight"));
                    let b_range = self.slot_range(&format!("layer{i}.bias"));
                    let mut d_prev = vec![0.0; prev.len()];
                    affine_backward(
                        &self.values[w_range.clone()],
                        prev,
                        &d_z,
                        &mut d_prev,
                        grads,
                        w_range.start,
                        b_range.start,
                    );
                    upstream = d_prev;
                }
                Ok(upstream)
            }
            Encoder::Conv { height, width, channels, filters } => {
                let (h, w) = (*height, *width);
                let area = (h * w) as f64;
                let (z2, a2) = &state.layers[1];
                let (z1, a1) = &state.layers[0];
                let mut d_z2 = vec![0.0; a2.len()];
                for p in 0..h * w {
                    for k in 0..filters[1] {
                        let idx = p * filters[1] + k;
                        d_z2[idx] = d_features[k] / area * act.derivative(z2[idx], a2[idx]);
                    }
                }
                let w2 = self.slot_range("conv2.weight");
                let b2 = self.slot_range("conv2.bias");
                let d_a1 = conv3x3_backward(
                    a1,
                    h,
                    w,
                    filters[0],
                    &self.values[w2.clone()],
                    filters[1],
                    &d_z2,
                    grads,
                    w2.start,
                    b2.start,
                );
                let d_z1: Vec<f64> = d_a1
                    .iter()
                    .zip(z1.iter().zip(a1))
                    .map(|(d, (&zi, &ai))| d * act.derivative(zi, ai))
                    .collect();
                let w1 = self.slot_range("conv1.weight");
                let b1 = self.slot_range("conv1.bias");
                Ok(conv3x3_backward(
                    &state.input,
                    h,
                    w,
                    *channels,
                    &self.values[w1.clone()],
                    filters[0],
                    &d_z1,
                    grads,
                    w1.start,
                    b1.start,
                ))
            }
        }
    }
}

/// `W x + b` with `W` stored row-major as `[out, in]`.
fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    b.iter()
        .enumerate()
        .map(|(o, bias)| bias + dot(&w[o * n_in..(o + 1) * n_in], x))
        .collect()
}

fn affine_backward(
    w: &[f64],
    x: &[f64],
    d_out: &[f64],
    d_x: &mut [f64],
    grads: &mut [f64],
    w_offset: usize,
    b_offset: usize,
) {
    let n_in = x.len();
    for (o, &d) in d_out.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = w_offset + o * n_in;
        for i in 0..n_in {
            grads[row + i] += d * x[i];
            d_x[i] += d * w[o * n_in + i];
        }
        grads[b_offset + o] += d;
    }
}

/// Stride-1 zero-padded 3x3 convolution over an HWC grid.
fn conv3x3_same(
    input: &[f64],
    h: usize,
    w: usize,
    c_in: usize,
    weight: &[f64],
    bias: &[f64],
    c_out: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; h * w * c_out];
    for y in 0..h {
        for x in 0..w {
            for o in 0..c_out {
                let mut acc = bias[o];
                for ky in 0..KERNEL {
                    let Some(iy) = (y + ky).checked_sub(1).filter(|&v| v < h) else { continue };
                    for kx in 0..KERNEL {
                        let Some(ix) = (x + kx).checked_sub(1).filter(|&v| v < w) else { continue };
                        let base = (iy * w + ix) * c_in;
                        for i in 0..c_in {
                            acc += weight[((o * c_in + i) * KERNEL + ky) * KERNEL + kx] * input[base + i];
                        }
                    }
                }
                out[(y * w + x) * c_out + o] = acc;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv3x3_backward(
    input: &[f64],
    h: usize,
    w: usize,
    c_in: usize,
    weight: &[f64],
    c_out: usize,
    d_out: &[f64],
    grads: &mut [f64],
    w_offset: usize,
    b_offset: usize,
) -> Vec<f64> {
    let mut d_in = vec![0.0; input.len()];
    for y in 0..h {
        for x in 0..w {
            for o in 0..c_out {
                let d = d_out[(y * w + x) * c_out + o];
                if d == 0.0 {
                    continue;
                }
                grads[b_offset + o] += d;
                for ky in 0..KERNEL {
                    let Some(iy) = (y + ky).checked_sub(1).filter(|&v| v < h) else { continue };
                    for kx in 0..KERNEL {
                        let Some(ix) = (x + kx).checked_sub(1).filter(|&v| v < w) else { continue };
                        let base = (iy * w + ix) * c_in;
                        for i in 0..c_in {
                            let widx = ((o * c_in + i) * KERNEL + ky) * KERNEL + kx;
                            grads[w_offset + widx] += d * input[base + i];
                            d_in[base + i] += d * weight[widx];
                        }
                    }
                }
            }
        }
    }
    d_in
}

fn global_average_pool(maps: &[f64], area: usize, channels: usize) -> Vec<f64> {
    let mut pooled = vec![0.0; channels];
    for p in 0..area {
        for k in 0..channels {
            pooled[k] += maps[p * channels + k];
        }
    }
    pooled.iter_mut().for_each(|v| *v /= area as f64);
    pooled
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_linear() -> BackboneParams {
        let arch = Architecture::mlp(2, vec![], 2, 2);
        let mut p = BackboneParams::zeros(arch).unwrap();
        p.slot_mut("projection.weight").unwrap().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        p.slot_mut("classifier.weight").unwrap().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        p
    }

    #[test]
    fn zero_everything_gives_zero_logits_and_fallback() {
        let arch = Architecture::mlp(3, vec![4], 5, 3);
        let p = BackboneParams::zeros(arch).unwrap();
        let out = p.forward(&Tensor::zeros(vec![3])).unwrap();
        assert!(out.logits.values().iter().all(|&v| v == 0.0));
        assert!(out.used_fallback);
        assert_eq!(out.embedding.values(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn identity_projection_normalizes_three_four() {
        let p = identity_linear();
        let out = p.forward(&Tensor::from_vec(vec![3.0, 4.0]).unwrap()).unwrap();
        let e = out.embedding.values();
        assert!((e[0] - 0.6).abs() < 1e-15 && (e[1] - 0.8).abs() < 1e-15);
        assert!(!out.used_fallback);
    }

    #[test]
    fn positive_scaling_of_classifier_keeps_argmax() {
        let arch = Architecture::mlp(4, vec![6], 3, 5);
        let p = BackboneParams::init(arch, 3).unwrap();
        let x = Tensor::from_vec(vec![0.3, -1.2, 0.8, 2.0]).unwrap();
        let base = p.forward(&x).unwrap();
        let mut scaled = p.clone();
        for name in ["classifier.weight", "classifier.bias"] {
            scaled.slot_mut(name).unwrap().iter_mut().for_each(|v| *v *= 3.5);
        }
        let out = scaled.forward(&x).unwrap();
        assert_eq!(argmax(base.logits.values()), argmax(out.logits.values()));
        for (a, b) in base.logits.values().iter().zip(out.logits.values()) {
            assert!((a * 3.5 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sum_of_logits_gives_outer_product_weight_gradient() {
        let p = identity_linear();
        let x = Tensor::from_vec(vec![3.0, -2.0]).unwrap();
        let out = p.forward(&x).unwrap();
        let mut g = vec![0.0; p.len()];
        p.backward(&out.cache, None, Some(&[1.0, 1.0]), &mut g).unwrap();
        let range = p.slots().iter().find(|s| s.name == "classifier.weight").unwrap().range();
        assert_eq!(&g[range], &[3.0, -2.0, 3.0, -2.0]);
    }

    #[test]
    fn zero_upstream_gives_exact_zero_gradients() {
        let arch = Architecture::conv(4, 4, 2, [3, 2], 3, 3);
        let p = BackboneParams::init(arch, 9).unwrap();
        let x = Tensor::new(vec![4, 4, 2], (0..32).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let out = p.forward(&x).unwrap();
        let mut g = vec![0.0; p.len()];
        p.backward(&out.cache, Some(&[0.0; 3]), Some(&[0.0; 3]), &mut g).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_without_forward_is_usage_error() {
        let p = identity_linear();
        let mut g = vec![0.0; p.len()];
        let err = p.backward(&ForwardCache::default(), None, Some(&[1.0, 1.0]), &mut g);
        assert!(matches!(err, Err(KernelError::MissingCache)));
    }

    #[test]
    fn forward_rejects_wrong_input_dims() {
        let p = identity_linear();
        assert!(matches!(
            p.forward(&Tensor::from_vec(vec![1.0, 2.0, 3.0]).unwrap()),
            Err(KernelError::Dimension { .. })
        ));
    }

    #[test]
    fn descriptor_round_trips() {
        for arch in [
            Architecture::mlp(16, vec![32, 8], 32, 4),
            Architecture::mlp(2, vec![], 2, 2).with_activation(Activation::Relu),
            Architecture::conv(8, 8, 1, [4, 6], 16, 10),
        ] {
            assert_eq!(Architecture::parse(&arch.describe()).unwrap(), arch);
        }
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let arch = Architecture::mlp(9, vec![4], 3, 2);
        let p = BackboneParams::init(arch, 1).unwrap();
        let w = p.slot("layer0.weight").unwrap();
        assert!(w.iter().all(|v| v.abs() <= 1.0 / 3.0));
        assert_eq!(p, BackboneParams::init(p.arch().clone(), 1).unwrap());
    }
}
