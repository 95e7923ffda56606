use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LossError, Result, Surrogate};
use crate::data::LabelSet;
use crate::numkernel::{log_sum_exp, softmax};

/// Lower clamp on probabilities entering a logarithm; the upper clamp is `1 - PROB_CLAMP`.
pub const PROB_CLAMP: f64 = 1e-12;

/// `1 / (1 + e^t)`, evaluated without overflow.
pub fn sigmoid_psi(t: f64) -> f64 {
    if t >= 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

fn normalize_within(logits: &[f64], members: impl Iterator<Item = usize>, out: &mut [f64]) {
    let members: Vec<usize> = members.collect();
    let lse = log_sum_exp(members.iter().map(|&j| logits[j]));
    for j in members {
        out[j] = (logits[j] - lse).exp();
    }
}

/// Softmax of the key-side logits taken separately over `S` and over its
/// complement, so each block sums to one.
pub fn confidence_weights(logits: &[f64], candidates: &LabelSet) -> Vec<f64> {
    assert_eq!(logits.len(), candidates.num_classes(), "logit count must match the label space");
    let mut omega = vec![0.0; logits.len()];
    normalize_within(logits, candidates.iter(), &mut omega);
    if !candidates.is_full() {
        normalize_within(logits, candidates.complement(), &mut omega);
    }
    omega
}

/// `1/|S|` on candidates and `1/|S̄|` on non-candidates.
pub fn uniform_weights(candidates: &LabelSet) -> Vec<f64> {
    let c = candidates.num_classes();
    let k = candidates.len();
    (0..c)
        .map(|j| if candidates.contains(j) { 1.0 / k as f64 } else { 1.0 / (c - k) as f64 })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisclsOutput {
    pub loss: f64,
    /// Gradient with respect to the query-side logits.
    pub grad: Vec<f64>,
    /// Probability terms that hit the clamp.
    pub saturated: usize,
}

fn check_lengths(logits: &[f64], omega: &[f64], candidates: &LabelSet) -> Result<()> {
    if logits.len() != candidates.num_classes() || omega.len() != logits.len() {
        return Err(LossError::Contract(format!(
            "{} logits, {} weights, {} classes",
            logits.len(),
            omega.len(),
            candidates.num_classes()
        )));
    }
    if candidates.is_empty() {
        return Err(LossError::Contract("candidate set is empty".into()));
    }
    Ok(())
}

/// `Σ_j ω_j ℓ(s_j, x)` with the chosen per-label surrogate.
pub fn discls_loss(logits: &[f64], omega: &[f64], candidates: &LabelSet, surrogate: Surrogate) -> Result<DisclsOutput> {
    check_lengths(logits, omega, candidates)?;
    match surrogate {
        Surrogate::Sigmoid => Ok(sigmoid_discls(logits, omega, candidates)),
        Surrogate::CrossEntropy => Ok(ce_discls(logits, omega, candidates)),
    }
}

fn sigmoid_discls(logits: &[f64], omega: &[f64], candidates: &LabelSet) -> DisclsOutput {
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (j, (&g, &w)) in logits.iter().zip(omega).enumerate() {
        let psi = sigmoid_psi(g);
        // dψ/dg = -ψ(g)ψ(-g)
        let slope = psi * sigmoid_psi(-g);
        if candidates.contains(j) {
            loss += w * psi;
            grad[j] = -w * slope;
        } else {
            loss += w * (1.0 - psi);
            grad[j] = w * slope;
        }
    }
    DisclsOutput { loss, grad, saturated: 0 }
}

fn ce_discls(logits: &[f64], omega: &[f64], candidates: &LabelSet) -> DisclsOutput {
    let c = logits.len();
    let lse = log_sum_exp(logits.iter().copied());
    let p: Vec<f64> = logits.iter().map(|g| (g - lse).exp()).collect();
    let mut loss = 0.0;
    let mut saturated = 0;
    // a[j] = p_j · ∂L/∂p_j, so that ∂L/∂g_k = a_k - p_k Σ_j a_j.
    let mut a = vec![0.0; c];
    for j in 0..c {
        let w = omega[j];
        if candidates.contains(j) {
            if p[j] < PROB_CLAMP {
                saturated += 1;
                loss -= w * PROB_CLAMP.ln();
            } else if p[j] > 1.0 - PROB_CLAMP {
                saturated += 1;
                loss -= w * (1.0 - PROB_CLAMP).ln();
            } else {
                loss -= w * p[j].ln();
                a[j] = -w;
            }
        } else {
            // 1 - p_j summed from the other classes keeps precision when p_j is near 1.
            let q: f64 = (0..c).filter(|&k| k != j).map(|k| p[k]).sum();
            if q < PROB_CLAMP {
                saturated += 1;
                loss -= w * PROB_CLAMP.ln();
            } else if q > 1.0 - PROB_CLAMP {
                saturated += 1;
                loss -= w * (1.0 - PROB_CLAMP).ln();
            } else {
                loss -= w * q.ln();
                a[j] = w * p[j] / q;
            }
        }
    }
    let total: f64 = a.iter().sum();
    let grad = (0..c).map(|k| a[k] - p[k] * total).collect();
    DisclsOutput { loss, grad, saturated }
}

/// Weighted PLL cross-entropy `-Σ_{j∈S} ω_j log p_j` used during warm-up.
pub fn weighted_pll_ce(logits: &[f64], omega: &[f64], candidates: &LabelSet) -> Result<DisclsOutput> {
    check_lengths(logits, omega, candidates)?;
    let p = softmax(logits);
    let mut loss = 0.0;
    let mut saturated = 0;
    let mut a = vec![0.0; logits.len()];
    for j in candidates.iter() {
        if p[j] < PROB_CLAMP {
            saturated += 1;
            loss -= omega[j] * PROB_CLAMP.ln();
        } else {
            loss -= omega[j] * p[j].ln();
            a[j] = -omega[j];
        }
    }
    let total: f64 = a.iter().sum();
    let grad = (0..logits.len()).map(|k| a[k] - p[k] * total).collect();
    Ok(DisclsOutput { loss, grad, saturated })
}

/// Disambiguation loss for an arbitrary binary surrogate, with the
/// non-candidate penalty written as the complement `1 - ψ(g)`.
pub fn discls_binary(logits: &[f64], omega: &[f64], candidates: &LabelSet, psi: impl Fn(f64) -> f64) -> f64 {
    logits
        .iter()
        .zip(omega)
        .enumerate()
        .map(|(j, (&g, &w))| if candidates.contains(j) { w * psi(g) } else { w * (1.0 - psi(g)) })
        .sum()
}

/// Leveraged weighted form `Σ_S w ψ(g) + β Σ_S̄ w ψ(-g)`.
pub fn lws_form(logits: &[f64], weights: &[f64], candidates: &LabelSet, beta: f64, psi: impl Fn(f64) -> f64) -> f64 {
    logits
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(j, (&g, &w))| if candidates.contains(j) { w * psi(g) } else { beta * w * psi(-g) })
        .sum()
}

pub fn lws_deviation(logits: &[f64], omega: &[f64], candidates: &LabelSet, psi: impl Fn(f64) -> f64 + Copy) -> f64 {
    (discls_binary(logits, omega, candidates, psi) - lws_form(logits, omega, candidates, 1.0, psi)).abs()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LwsCheck {
    pub trials: usize,
    pub max_deviation: f64,
}

impl LwsCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_deviation < tol
    }
}

/// Compares the two forms on `trials` random draws of query logits,
/// key logits (giving `ω`) and nonempty candidate sets.
pub fn lws_equivalence_check(trials: usize, num_classes: usize, seed: u64, psi: impl Fn(f64) -> f64 + Copy) -> LwsCheck {
    assert!(num_classes >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_deviation = 0.0f64;
    for _ in 0..trials {
        let logits: Vec<f64> = (0..num_classes).map(|_| rng.random_range(-6.0..6.0)).collect();
        let key: Vec<f64> = (0..num_classes).map(|_| rng.random_range(-6.0..6.0)).collect();
        let mut s = LabelSet::singleton(num_classes, rng.random_range(0..num_classes));
        for j in 0..num_classes {
            if rng.random_bool(0.4) {
                s.insert(j);
            }
        }
        let omega = confidence_weights(&key, &s);
        max_deviation = max_deviation.max(lws_deviation(&logits, &omega, &s, psi));
    }
    LwsCheck { trials, max_deviation }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() < tol
    }

    #[test]
    fn uniform_logits_spread_evenly() {
        let s = LabelSet::from_labels(10, [1, 4, 7]);
        let w = confidence_weights(&[0.3; 10], &s);
        for j in 0..10 {
            let expected = if s.contains(j) { 1.0 / 3.0 } else { 1.0 / 7.0 };
            assert!(close(w[j], expected, 1e-12));
        }
        assert!(uniform_weights(&s).iter().zip(&w).all(|(u, v)| close(*u, *v, 1e-12)));
    }

    #[test]
    fn full_candidate_set_is_plain_softmax() {
        let logits = [0.5, -1.0, 2.0];
        let w = confidence_weights(&logits, &LabelSet::full(3));
        assert!(w.iter().zip(softmax(&logits)).all(|(a, b)| close(*a, b, 1e-15)));
    }

    #[test]
    fn worked_confidence_example() {
        let w = confidence_weights(&[2.0, 1.0, 0.0], &LabelSet::from_labels(3, [0, 1]));
        assert!(close(w[0], 0.7311, 1e-4) && close(w[1], 0.2689, 1e-4));
        assert!(close(w[2], 1.0, 1e-15));
    }

    #[test]
    fn worked_ce_example() {
        let s = LabelSet::singleton(3, 0);
        let logits = [1.0, 0.0, -1.0];
        let omega = confidence_weights(&logits, &s);
        let out = discls_loss(&logits, &omega, &s, Surrogate::CrossEntropy).unwrap();
        let expected = -0.6652f64.ln() + 0.7311 * -(0.7553f64.ln()) + 0.2689 * -(0.9100f64.ln());
        assert!(close(out.loss, expected, 1e-3), "{} vs {expected}", out.loss);
        assert_eq!(out.saturated, 0);
    }

    #[test]
    fn ce_full_set_uniform_is_mean_cross_entropy() {
        let logits = [0.2, -0.4, 1.3, 0.0];
        let s = LabelSet::full(4);
        let out = discls_loss(&logits, &uniform_weights(&s), &s, Surrogate::CrossEntropy).unwrap();
        let p = softmax(&logits);
        let expected = p.iter().map(|v| -v.ln()).sum::<f64>() / 4.0;
        assert!(close(out.loss, expected, 1e-12));
    }

    #[test]
    fn sigmoid_surrogate_is_symmetric() {
        for t in [-30.0, -2.0, -0.1, 0.0, 0.7, 5.0, 40.0] {
            assert!(close(sigmoid_psi(t) + sigmoid_psi(-t), 1.0, 1e-15));
        }
        // Same score as candidate and as non-candidate: contributions sum to ω.
        let (cand, non) = (LabelSet::from_labels(2, [0]), LabelSet::from_labels(2, [1]));
        let w = [0.6, 0.4];
        let a = discls_loss(&[1.5, 0.0], &w, &cand, Surrogate::Sigmoid).unwrap().loss;
        let b = discls_loss(&[1.5, 0.0], &w, &non, Surrogate::Sigmoid).unwrap().loss;
        assert!(close(a + b, 1.0, 1e-15));
    }

    #[test]
    fn saturation_is_counted_not_infinite() {
        let s = LabelSet::singleton(2, 1);
        let out = discls_loss(&[60.0, -60.0], &[1.0, 1.0], &s, Surrogate::CrossEntropy).unwrap();
        assert!(out.loss.is_finite());
        assert_eq!(out.saturated, 2);
    }

    #[test]
    fn lws_full_set_reduces_to_candidate_sum() {
        let s = LabelSet::full(3);
        let logits = [0.1, -2.0, 3.0];
        let w = [0.2, 0.3, 0.5];
        let expected: f64 = logits.iter().zip(&w).map(|(g, w)| w * sigmoid_psi(*g)).sum();
        assert_eq!(discls_binary(&logits, &w, &s, sigmoid_psi), expected);
        assert_eq!(lws_form(&logits, &w, &s, 1.0, sigmoid_psi), expected);
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let s = LabelSet::singleton(3, 0);
        assert!(discls_loss(&[0.0, 1.0], &[1.0, 0.5, 0.5], &s, Surrogate::Sigmoid).is_err());
    }
}
