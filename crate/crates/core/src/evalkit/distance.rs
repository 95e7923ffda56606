use rayon::prelude::*;
use serde::Serialize;

use super::{EvalError, Result};
use crate::numkernel::euclidean;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassDistances {
    /// Smallest distance between two instances of different classes.
    pub instance: f64,
    /// Mean over class pairs of the smallest cross-pair instance distance.
    pub avg_pairwise: f64,
    /// Mean over class pairs of the distance between class means.
    pub centroid: f64,
    /// Classes in `0..num_classes` with no samples, left out of every average.
    pub excluded: Vec<usize>,
}

pub fn class_distances(embeddings: &[Vec<f64>], labels: &[usize], num_classes: usize) -> Result<ClassDistances> {
    if embeddings.len() != labels.len() {
        return Err(EvalError::Contract(format!("{} embeddings for {} labels", embeddings.len(), labels.len())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(EvalError::Contract(format!("label {y} outside {num_classes} classes")));
    }
    let dim = embeddings.first().map_or(0, Vec::len);
    if embeddings.iter().any(|e| e.len() != dim) {
        return Err(EvalError::Contract("embeddings differ in dimension".into()));
    }
    let c = num_classes;
    let mut counts = vec![0usize; c];
    let mut sums = vec![vec![0.0; dim]; c];
    for (e, &y) in embeddings.iter().zip(labels) {
        counts[y] += 1;
        sums[y].iter_mut().zip(e).for_each(|(s, v)| *s += v);
    }
    let present: Vec<usize> = (0..c).filter(|&k| counts[k] > 0).collect();
    if present.len() < 2 {
        return Err(EvalError::Contract(format!("need at least two populated classes, found {}", present.len())));
    }
    let excluded = (0..c).filter(|&k| counts[k] == 0).collect();

    // mins[a * c + b] for a < b
    let n = labels.len();
    let mins = (0..n)
        .into_par_iter()
        .fold(
            || vec![f64::INFINITY; c * c],
            |mut acc, i| {
                for j in (i + 1)..n {
                    let (a, b) = (labels[i].min(labels[j]), labels[i].max(labels[j]));
                    if a != b {
                        let d = euclidean(&embeddings[i], &embeddings[j]);
                        let slot = &mut acc[a * c + b];
                        if d < *slot {
                            *slot = d;
                        }
                    }
                }
                acc
            },
        )
        .reduce(|| vec![f64::INFINITY; c * c], |a, b| a.iter().zip(&b).map(|(x, y)| x.min(*y)).collect());

    let centroids: Vec<Vec<f64>> = (0..c)
        .map(|k| sums[k].iter().map(|s| s / counts[k].max(1) as f64).collect())
        .collect();
    let (mut pair_min_sum, mut centroid_sum, mut instance, mut pairs) = (0.0, 0.0, f64::INFINITY, 0usize);
    for (ai, &a) in present.iter().enumerate() {
        for &b in &present[ai + 1..] {
            let m = mins[a * c + b];
            pair_min_sum += m;
            instance = instance.min(m);
            centroid_sum += euclidean(&centroids[a], &centroids[b]);
            pairs += 1;
        }
    }
    Ok(ClassDistances {
        instance,
        avg_pairwise: pair_min_sum / pairs as f64,
        centroid: centroid_sum / pairs as f64,
        excluded,
    })
}
