use super::{LossError, Result};
use crate::numkernel::{dot, log_sum_exp};

/// An entry of the key set `K`: momentum embedding, momentum logits and the
/// guiding label of the augmentation it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastKey {
    pub embedding: Vec<f64>,
    pub logits: Vec<f64>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastQuery {
    pub embedding: Vec<f64>,
    /// Key-side logits of the same augmentation, used for pair weights.
    pub logits: Vec<f64>,
    pub label: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContrastBatch {
    pub queries: Vec<ContrastQuery>,
    pub keys: Vec<ContrastKey>,
}

/// Softmax over the bucket of `z_queryᵀ z / τ₂`.
pub fn pair_weights(z_query: &[f64], bucket: &[&[f64]], tau2: f64) -> Result<Vec<f64>> {
    if bucket.is_empty() {
        return Err(LossError::Contract("pair weight over an empty positive bucket".into()));
    }
    if !(tau2 > 0.0) {
        return Err(LossError::Parameter(format!("tau2 must be > 0, got {tau2}")));
    }
    let scores: Vec<f64> = bucket.iter().map(|z| dot(z_query, z) / tau2).collect();
    let lse = log_sum_exp(scores.iter().copied());
    Ok(scores.iter().map(|s| (s - lse).exp()).collect())
}

/// Weight of bucket member `positive` for this query.
pub fn pair_weight(z_query: &[f64], positive: usize, bucket: &[&[f64]], tau2: f64) -> Result<f64> {
    if positive >= bucket.len() {
        return Err(LossError::Contract(format!("positive {positive} is not in a bucket of {}", bucket.len())));
    }
    Ok(pair_weights(z_query, bucket, tau2)?[positive])
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryTerm {
    pub loss: f64,
    /// Gradient with respect to the query embedding.
    pub grad: Vec<f64>,
}

/// `-Σ_{k⁺} w(k⁺) log s_τ(q, k⁺, K)` for one query; `None` when no key
/// shares its label. Keys and weights are constants.
pub fn query_contrastive(
    q: &[f64],
    z: &[f64],
    label: usize,
    keys: &[ContrastKey],
    tau: f64,
    tau2: f64,
) -> Result<Option<QueryTerm>> {
    if keys.is_empty() {
        return Err(LossError::Contract("key set is empty".into()));
    }
    if !(tau > 0.0) {
        return Err(LossError::Parameter(format!("tau must be > 0, got {tau}")));
    }
    let positives: Vec<usize> = (0..keys.len()).filter(|&k| keys[k].label == label).collect();
    if positives.is_empty() {
        return Ok(None);
    }
    let bucket: Vec<&[f64]> = positives.iter().map(|&k| keys[k].logits.as_slice()).collect();
    let weights = pair_weights(z, &bucket, tau2)?;

    let scores: Vec<f64> = keys.iter().map(|k| dot(q, &k.embedding) / tau).collect();
    let lse = log_sum_exp(scores.iter().copied());
    let mut loss = 0.0;
    let mut grad = vec![0.0; q.len()];
    for (&k, &w) in positives.iter().zip(&weights) {
        loss -= w * (scores[k] - lse);
        for (g, e) in grad.iter_mut().zip(&keys[k].embedding) {
            *g -= w * e / tau;
        }
    }
    // Σ w = 1, so the denominator contributes the full softmax expectation once.
    let wsum: f64 = weights.iter().sum();
    for (k, s) in keys.iter().zip(&scores) {
        let p = (s - lse).exp() * wsum;
        for (g, e) in grad.iter_mut().zip(&k.embedding) {
            *g += p * e / tau;
        }
    }
    Ok(Some(QueryTerm { loss, grad }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveOutput {
    /// Sum over the non-skipped queries.
    pub loss: f64,
    /// One gradient per query; zero for skipped queries.
    pub grads: Vec<Vec<f64>>,
    pub per_query: Vec<Option<f64>>,
    pub skipped: usize,
}

pub fn contrastive_loss(batch: &ContrastBatch, tau: f64, tau2: f64) -> Result<ContrastiveOutput> {
    let mut out = ContrastiveOutput { loss: 0.0, grads: Vec::new(), per_query: Vec::new(), skipped: 0 };
    for query in &batch.queries {
        match query_contrastive(&query.embedding, &query.logits, query.label, &batch.keys, tau, tau2)? {
            Some(term) => {
                out.loss += term.loss;
                out.per_query.push(Some(term.loss));
                out.grads.push(term.grad);
            }
            None => {
                out.skipped += 1;
                out.per_query.push(None);
                out.grads.push(vec![0.0; query.embedding.len()]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(e: &[f64], z: &[f64], label: usize) -> ContrastKey {
        ContrastKey { embedding: e.to_vec(), logits: z.to_vec(), label }
    }

    #[test]
    fn singleton_bucket_has_weight_one() {
        assert_eq!(pair_weight(&[1.0, 2.0], 0, &[&[0.3, -0.1]], 0.4).unwrap(), 1.0);
    }

    #[test]
    fn equal_products_give_uniform_weights() {
        let w = pair_weights(&[1.0, 0.0], &[&[0.5, 1.0], &[0.5, -3.0], &[0.5, 7.0]], 0.4).unwrap();
        assert!(w.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn worked_pair_weight_example() {
        // z′ᵀz⁺ ∈ {2, 0} at τ₂ = 0.4 → softmax([5, 0]).
        let w = pair_weights(&[1.0, 1.0], &[&[1.0, 1.0], &[0.0, 0.0]], 0.4).unwrap();
        assert!((w[0] - 0.99331).abs() < 1e-5 && (w[1] - 0.00669).abs() < 1e-5);
        assert!((w[0] + w[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_bucket_is_contract_error() {
        assert!(matches!(pair_weights(&[1.0], &[], 0.4), Err(LossError::Contract(_))));
    }

    #[test]
    fn single_key_gives_zero_loss() {
        let keys = [key(&[0.6, 0.8], &[1.0], 2)];
        let term = query_contrastive(&[1.0, 0.0], &[0.5], 2, &keys, 0.12, 0.4).unwrap().unwrap();
        assert!(term.loss.abs() < 1e-15);
        assert!(term.grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn symmetric_pair_gives_log_two() {
        let keys = [key(&[1.0, 0.0], &[0.0], 0), key(&[0.0, 1.0], &[0.0], 1)];
        let q = [std::f64::consts::FRAC_1_SQRT_2; 2];
        let term = query_contrastive(&q, &[0.0], 0, &keys, 0.12, 0.4).unwrap().unwrap();
        assert!((term.loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn query_without_positive_is_skipped() {
        let batch = ContrastBatch {
            queries: vec![ContrastQuery { embedding: vec![1.0, 0.0], logits: vec![0.0], label: 3 }],
            keys: vec![key(&[1.0, 0.0], &[0.0], 0)],
        };
        let out = contrastive_loss(&batch, 0.12, 0.4).unwrap();
        assert_eq!((out.skipped, out.loss), (1, 0.0));
        assert_eq!(out.per_query, vec![None]);
    }
}
