use rayon::prelude::*;

use super::{confidence_weights, discls_loss, query_contrastive, ContrastKey, LossConfig, LossError, Result};
use crate::data::LabelSet;
use crate::numkernel::{BackboneParams, Tensor};

/// Query view of one class-specific augmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedView {
    pub query_input: Tensor,
    pub label: usize,
    /// Key-side logits of the augmentation.
    pub logits: Vec<f64>,
}

/// Everything the objective needs for one training instance; `omega` is
/// computed by the caller (from `g^k`, or uniform for ablations).
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSample {
    pub features: Tensor,
    pub candidates: LabelSet,
    pub omega: Vec<f64>,
    pub views: Vec<AugmentedView>,
}

impl PreparedSample {
    pub fn with_key_logits(features: Tensor, candidates: LabelSet, key_logits: &[f64]) -> Self {
        let omega = confidence_weights(key_logits, &candidates);
        Self { features, candidates, omega, views: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveOutput {
    /// Batch mean of `L_discls + β/|S| Σ_s L_c(x′_s)`.
    pub loss: f64,
    pub discls: f64,
    /// Batch mean of `1/|S| Σ_s L_c(x′_s)`, before the `β` factor.
    pub contrastive: f64,
    /// Gradient of `loss` with respect to the query parameters.
    pub grads: Vec<f64>,
    pub skipped_queries: usize,
    pub saturated: usize,
}

struct SampleTerm {
    discls: f64,
    contrastive: f64,
    grads: Vec<f64>,
    skipped: usize,
    saturated: usize,
}

fn sample_term(
    params: &BackboneParams,
    sample: &PreparedSample,
    keys: &[ContrastKey],
    cfg: &LossConfig,
    scale: f64,
) -> Result<SampleTerm> {
    let mut grads = vec![0.0; params.len()];
    let out = params.forward(&sample.features)?;
    let d = discls_loss(out.logits.values(), &sample.omega, &sample.candidates, cfg.surrogate)?;
    let d_logits: Vec<f64> = d.grad.iter().map(|g| g * scale).collect();
    params.backward(&out.cache, None, Some(&d_logits), &mut grads)?;

    let mut contrastive = 0.0;
    let mut skipped = 0;
    if cfg.beta > 0.0 && !sample.views.is_empty() {
        if keys.is_empty() {
            return Err(LossError::Contract("augmentations present but the key set is empty".into()));
        }
        let per_view = 1.0 / sample.candidates.len() as f64;
        for view in &sample.views {
            if !sample.candidates.contains(view.label) {
                return Err(LossError::Contract(format!("guiding label {} is not a candidate", view.label)));
            }
            let q = params.forward(&view.query_input)?;
            match query_contrastive(q.embedding.values(), &view.logits, view.label, keys, cfg.tau, cfg.tau2)? {
                Some(term) => {
                    contrastive += per_view * term.loss;
                    let f = cfg.beta * per_view * scale;
                    let d_emb: Vec<f64> = term.grad.iter().map(|g| g * f).collect();
                    params.backward(&q.cache, Some(&d_emb), None, &mut grads)?;
                }
                None => skipped += 1,
            }
        }
    }
    Ok(SampleTerm { discls: d.loss, contrastive, grads, skipped, saturated: d.saturated })
}

/// Batch objective. Samples are evaluated in parallel and reduced in batch
/// order, so the result does not depend on the thread count.
pub fn total_loss(
    params: &BackboneParams,
    batch: &[PreparedSample],
    keys: &[ContrastKey],
    cfg: &LossConfig,
) -> Result<ObjectiveOutput> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(LossError::Contract("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let terms = batch
        .par_iter()
        .map(|s| sample_term(params, s, keys, cfg, scale))
        .collect::<Result<Vec<_>>>()?;
    let mut out = ObjectiveOutput {
        loss: 0.0,
        discls: 0.0,
        contrastive: 0.0,
        grads: vec![0.0; params.len()],
        skipped_queries: 0,
        saturated: 0,
    };
    for t in terms {
        out.discls += t.discls * scale;
        out.contrastive += t.contrastive * scale;
        for (g, v) in out.grads.iter_mut().zip(&t.grads) {
            *g += v;
        }
        out.skipped_queries += t.skipped;
        out.saturated += t.saturated;
    }
    out.loss = out.discls + cfg.beta * out.contrastive;
    Ok(out)
}
