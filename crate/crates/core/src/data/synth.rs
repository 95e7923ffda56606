//! Instance-dependent candidate synthesis from annotator posteriors.
//!
//! For sample `i` with true label `y`, every wrong label `j` is added
//! independently with probability
//!
//! ```text
//! p'_ij    = p_ij / max_{k != y} p_ik
//! flip_ij  = min(1, p'_ij (C - 1) / sum_{k != y} p'_ik * tau_rate)
//! ```
//!
//! The true label is always a candidate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{AnnotatorPosterior, DataError, LabelSet};

/// Flip probability of every label for one posterior row; the true label's entry is 0.
pub fn flip_probabilities(row: &[f64], true_label: usize, tau_rate: f64) -> Option<Vec<f64>> {
    let c = row.len();
    let max_wrong = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != true_label)
        .map(|(_, &p)| p)
        .fold(0.0, f64::max);
    if max_wrong <= 0.0 {
        return None;
    }
    let normalized: Vec<f64> = row.iter().map(|p| p / max_wrong).collect();
    let total: f64 = normalized.iter().enumerate().filter(|&(j, _)| j != true_label).map(|(_, v)| v).sum();
    Some(
        normalized
            .iter()
            .enumerate()
            .map(|(j, &pn)| {
                if j == true_label {
                    0.0
                } else {
                    (pn * (c as f64 - 1.0) / total * tau_rate).min(1.0)
                }
            })
            .collect(),
    )
}

/// Samples one candidate set per posterior row. Each sample draws from its own
/// ChaCha stream (`seed`, stream = sample index), so results do not depend on
/// the number of worker threads.
pub fn synthesize_candidates(
    posteriors: &AnnotatorPosterior,
    true_labels: &[usize],
    tau_rate: f64,
    seed: u64,
) -> Result<Vec<LabelSet>, DataError> {
    if !(tau_rate >= 0.0 && tau_rate.is_finite()) {
        return Err(DataError::Parameter(format!("tau_rate must be a finite value >= 0, got {tau_rate}")));
    }
    if posteriors.len() != true_labels.len() {
        return Err(DataError::Parameter(format!(
            "{} posterior rows for {} labels",
            posteriors.len(),
            true_labels.len()
        )));
    }
    let c = posteriors.num_classes();
    (0..posteriors.len())
        .into_par_iter()
        .map(|i| {
            let y = true_labels[i];
            if y >= c {
                return Err(DataError::InvalidSample { row: i, message: format!("true label {y} out of range") });
            }
            let flips = flip_probabilities(posteriors.row(i), y, tau_rate)
                .ok_or(DataError::DegeneratePosterior { sample: i })?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut set = LabelSet::singleton(c, y);
            for (j, &p) in flips.iter().enumerate() {
                if j == y {
                    continue;
                }
                let u: f64 = rng.random();
                if u < p {
                    set.insert(j);
                }
            }
            Ok(set)
        })
        .collect()
}
