use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use super::{
    accuracy, class_distances, confusion, entangled_metrics, label_overlap, model_view, per_class_accuracy,
    recovered_rate, ClassDistances, EmbeddingSpace, EvalError, Result,
};
use crate::data::PLLDataset;
use crate::entangle::{find_entangled, top_fraction_pairs, unique_instances, EntangledPair};
use crate::numkernel::BackboneParams;

/// Top-level keys of [`MetricsReport::to_json`].
pub const REPORT_KEYS: &[&str] = &[
    "space",
    "samples",
    "num_classes",
    "accuracy",
    "per_class_accuracy",
    "confusion",
    "label_overlap",
    "entangled",
    "class_distances",
    "recovered_rate",
    "undefined",
    "warnings",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntangledRow {
    /// `"xi"` or `"ratio"`.
    pub setting: String,
    pub value: f64,
    pub pair_count: usize,
    pub instance_count: usize,
    pub effective_xi: Option<f64>,
    pub accuracy: Option<f64>,
    pub mean_distance: Option<f64>,
    #[serde(skip)]
    pub instances: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub space: EmbeddingSpace,
    pub samples: usize,
    pub num_classes: usize,
    pub accuracy: Option<f64>,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub confusion: Vec<Vec<usize>>,
    pub label_overlap: Vec<Vec<f64>>,
    pub entangled: Vec<EntangledRow>,
    pub class_distances: Option<ClassDistances>,
    pub recovered_rate: Option<f64>,
    /// Names of metrics that are undefined for this input.
    pub undefined: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub space: EmbeddingSpace,
    pub thresholds: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { space: EmbeddingSpace::Penultimate, thresholds: vec![0.90, 0.95, 0.99], ratios: vec![1e-3, 1e-4, 1e-5] }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

impl MetricsReport {
    /// `pair_embeddings` are the representations entangled pairs are detected
    /// in (one per sample); the raw features are used when omitted.
    /// `supervised` is a fully supervised reference model for the recovered rate.
    pub fn evaluate(
        params: &BackboneParams,
        dataset: &PLLDataset,
        pair_embeddings: Option<&[Vec<f64>]>,
        supervised: Option<&BackboneParams>,
        options: &EvalOptions,
    ) -> Result<Self> {
        let truth = dataset.true_labels()?;
        let c = dataset.num_classes();
        let view = model_view(params, dataset, options.space)?;
        let mut undefined = Vec::new();
        let mut warnings = Vec::new();

        let acc = accuracy(&view.predictions, &truth)?;
        if acc.is_none() {
            undefined.push("accuracy".to_string());
        }
        let conf = confusion(&view.predictions, &truth, c)?;
        let per_class = per_class_accuracy(&conf);

        let raw: Vec<Vec<f64>>;
        let pair_emb = match pair_embeddings {
            Some(e) => e,
            None => {
                raw = dataset.samples().iter().map(|s| s.features.values().to_vec()).collect();
                &raw
            }
        };
        let mut rows = Vec::new();
        let mut add_row = |setting: &str, value: f64, pairs: &[EntangledPair], effective: Option<f64>| -> Result<()> {
            let m = entangled_metrics(&view, &truth, pairs)?;
            if m.is_none() {
                undefined.push(format!("entangled[{setting}={value}]"));
            }
            rows.push(EntangledRow {
                setting: setting.to_string(),
                value,
                pair_count: pairs.len(),
                instance_count: m.map_or(0, |m| m.instance_count),
                effective_xi: effective,
                accuracy: m.map(|m| m.accuracy),
                mean_distance: m.map(|m| m.mean_distance),
                instances: unique_instances(pairs).into_iter().collect(),
            });
            Ok(())
        };
        for &xi in &options.thresholds {
            let pairs = find_entangled(pair_emb, dataset, xi)?;
            add_row("xi", xi, &pairs, Some(xi))?;
        }
        for &ratio in &options.ratios {
            let top = top_fraction_pairs(pair_emb, dataset, ratio)?;
            add_row("ratio", ratio, &top.pairs, top.effective_threshold)?;
        }

        let distances = match class_distances(&view.embeddings, &truth, c) {
            Ok(d) => {
                if !d.excluded.is_empty() {
                    warnings.push(format!("classes {:?} have no samples and were excluded from distances", d.excluded));
                }
                Some(d)
            }
            Err(EvalError::Contract(msg)) => {
                warnings.push(format!("class distances: {msg}"));
                undefined.push("class_distances".into());
                None
            }
            Err(e) => return Err(e),
        };

        let recovered = match supervised {
            Some(sup) => {
                let sv = model_view(sup, dataset, options.space)?;
                let all: BTreeSet<usize> = rows.iter().flat_map(|r| r.instances.iter().copied()).collect();
                let all: Vec<usize> = all.into_iter().collect();
                let r = recovered_rate(&view.predictions, &sv.predictions, &truth, &all)?;
                if r.is_none() {
                    undefined.push("recovered_rate".into());
                }
                r
            }
            None => {
                undefined.push("recovered_rate".into());
                None
            }
        };

        Ok(Self {
            space: options.space,
            samples: dataset.len(),
            num_classes: c,
            accuracy: acc,
            per_class_accuracy: per_class,
            confusion: conf,
            label_overlap: label_overlap(dataset)?,
            entangled: rows,
            class_distances: distances,
            recovered_rate: recovered,
            undefined,
            warnings,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn confusion_csv(&self) -> String {
        matrix_csv(&self.confusion, |v| v.to_string())
    }

    pub fn overlap_csv(&self) -> String {
        matrix_csv(&self.label_overlap, |v| v.to_string())
    }

    /// Accuracy then mean distance per setting.
    pub fn entangled_csv(&self) -> String {
        let mut out = String::from("setting,value,pair_count,instance_count,effective_xi,accuracy,mean_distance\n");
        for r in &self.entangled {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.setting,
                r.value,
                r.pair_count,
                r.instance_count,
                fmt_opt(r.effective_xi),
                fmt_opt(r.accuracy),
                fmt_opt(r.mean_distance)
            );
        }
        out
    }

    pub fn distances_csv(&self) -> String {
        let mut out = String::from("instance,avg_pairwise,centroid\n");
        match &self.class_distances {
            Some(d) => {
                let _ = writeln!(out, "{},{},{}", d.instance, d.avg_pairwise, d.centroid);
            }
            None => out.push_str("undefined,undefined,undefined\n"),
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "accuracy,{}", fmt_opt(self.accuracy));
        for (k, a) in self.per_class_accuracy.iter().enumerate() {
            let _ = writeln!(out, "accuracy_class_{k},{}", fmt_opt(*a));
        }
        let _ = writeln!(out, "recovered_rate,{}", fmt_opt(self.recovered_rate));
        out
    }
}

fn matrix_csv<T>(m: &[Vec<T>], cell: impl Fn(&T) -> String) -> String {
    let c = m.len();
    let mut out = String::from("true\\pred");
    (0..c).for_each(|j| {
        let _ = write!(out, ",{j}");
    });
    out.push('\n');
    for (i, row) in m.iter().enumerate() {
        let _ = write!(out, "{i}");
        row.iter().for_each(|v| {
            let _ = write!(out, ",{}", cell(v));
        });
        out.push('\n');
    }
    out
}
