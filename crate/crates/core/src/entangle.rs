//! Entangled-pair detection.
//!
//! Samples `i < j` are entangled at threshold `ξ` when
//! `y_i != y_j`, `{y_i, y_j} ⊆ S_i ∩ S_j` and `cos(e_i, e_j) >= ξ`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::{DataError, PLLDataset};
use crate::numkernel::cosine;

#[derive(Clone, Debug, PartialEq)]
pub struct EntangledPair {
    pub i: usize,
    pub j: usize,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntangleReport {
    /// The `ξ` used, or the ratio for top-fraction selections.
    pub threshold: f64,
    pub pair_count: usize,
    pub instance_count: usize,
}

/// Result of a top-fraction selection.
#[derive(Clone, Debug, PartialEq)]
pub struct TopFraction {
    pub pairs: Vec<EntangledPair>,
    /// Similarity of the last kept pair; `None` when no pair qualifies.
    pub effective_threshold: Option<f64>,
}

const ROW_BLOCK: usize = 64;

/// Conjuncts (a) and (b): different classes, each holding the other's label.
pub fn label_conjuncts(dataset: &PLLDataset, labels: &[usize], i: usize, j: usize) -> bool {
    let (yi, yj) = (labels[i], labels[j]);
    let (si, sj) = (&dataset.sample(i).candidates, &dataset.sample(j).candidates);
    yi != yj && si.contains(yj) && sj.contains(yi) && si.contains(yi) && sj.contains(yj)
}

fn check_inputs(embeddings: &[Vec<f64>], dataset: &PLLDataset) -> Result<Vec<usize>, DataError> {
    if embeddings.len() != dataset.len() {
        return Err(DataError::Parameter(format!(
            "{} embeddings for {} samples",
            embeddings.len(),
            dataset.len()
        )));
    }
    dataset.true_labels()
}

/// All (a)∧(b) pairs with similarity at least `min_similarity`, in
/// deterministic order: similarity descending, then `i`, then `j`.
fn scan(
    embeddings: &[Vec<f64>],
    dataset: &PLLDataset,
    labels: &[usize],
    min_similarity: f64,
) -> Vec<EntangledPair> {
    let n = embeddings.len();
    let blocks: Vec<usize> = (0..n).step_by(ROW_BLOCK).collect();
    let mut pairs: Vec<EntangledPair> = blocks
        .par_iter()
        .map(|&start| {
            let mut local = Vec::new();
            for i in start..(start + ROW_BLOCK).min(n) {
                for j in i + 1..n {
                    if !label_conjuncts(dataset, labels, i, j) {
                        continue;
                    }
                    let similarity = cosine(&embeddings[i], &embeddings[j]);
                    if similarity >= min_similarity {
                        local.push(EntangledPair { i, j, similarity });
                    }
                }
            }
            local
        })
        .flatten()
        .collect();
    sort_pairs(&mut pairs);
    pairs
}

pub fn sort_pairs(pairs: &mut [EntangledPair]) {
    pairs.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.i.cmp(&b.i))
            .then(a.j.cmp(&b.j))
    });
}

pub fn find_entangled(
    embeddings: &[Vec<f64>],
    dataset: &PLLDataset,
    xi: f64,
) -> Result<Vec<EntangledPair>, DataError> {
    if !(xi > -1.0 && xi <= 1.0) {
        return Err(DataError::Parameter(format!("similarity threshold must lie in (-1, 1], got {xi}")));
    }
    let labels = check_inputs(embeddings, dataset)?;
    Ok(scan(embeddings, dataset, &labels, xi))
}

/// Number of pairs kept out of `qualifying` for `ratio`; tolerant of
/// representation error so that e.g. `0.01 * 200` keeps 2, not 3.
pub fn kept_count(ratio: f64, qualifying: usize) -> usize {
    let raw = ratio * qualifying as f64;
    ((raw - 1e-9 * raw.max(1.0)).ceil().max(0.0) as usize).min(qualifying)
}

/// The `⌈ratio · P⌉` most similar pairs among the `P` pairs that satisfy
/// conjuncts (a) and (b).
pub fn top_fraction_pairs(
    embeddings: &[Vec<f64>],
    dataset: &PLLDataset,
    ratio: f64,
) -> Result<TopFraction, DataError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(DataError::Parameter(format!("ratio must lie in (0, 1], got {ratio}")));
    }
    let labels = check_inputs(embeddings, dataset)?;
    let mut pairs = scan(embeddings, dataset, &labels, f64::NEG_INFINITY);
    let keep = kept_count(ratio, pairs.len());
    pairs.truncate(keep);
    let effective_threshold = pairs.last().map(|p| p.similarity);
    Ok(TopFraction { pairs, effective_threshold })
}

pub fn unique_instances(pairs: &[EntangledPair]) -> BTreeSet<usize> {
    pairs.iter().flat_map(|p| [p.i, p.j]).collect()
}

pub fn report(threshold: f64, pairs: &[EntangledPair]) -> EntangleReport {
    EntangleReport {
        threshold,
        pair_count: pairs.len(),
        instance_count: unique_instances(pairs).len(),
    }
}

/// One row per report; `effective` carries the induced `ξ` of ratio rows
/// (`undefined` when no pair qualified).
pub fn reports_to_csv(rows: &[(EntangleReport, Option<Option<f64>>)]) -> String {
    let mut out = String::from("kind,value,pair_count,instance_count,effective_xi\n");
    for (r, effective) in rows {
        let (kind, eff) = match effective {
            None => ("xi", r.threshold.to_string()),
            Some(Some(xi)) => ("ratio", xi.to_string()),
            Some(None) => ("ratio", "undefined".into()),
        };
        let _ = writeln!(out, "{kind},{},{},{},{eff}", r.threshold, r.pair_count, r.instance_count);
    }
    out
}
