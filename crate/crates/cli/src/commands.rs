use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use pllab::augment::AugmentConfig;
use pllab::data::{self, AnnotatorConfig, BenchmarkConfig, LabelSet, PLLDataset};
use pllab::entangle::{find_entangled, report, reports_to_csv, top_fraction_pairs};
use pllab::evalkit::{model_view, EmbeddingSpace, EvalOptions, MetricsReport};
use pllab::losses::{LossConfig, Surrogate};
use pllab::numkernel::{Activation, BackboneParams, Checkpoint};
use pllab::trainer::{self, history_to_csv, ModelConfig, ModelPair, TrainConfig};

use crate::{read_text, CliError, RunConfig, RunDir};

pub const CHECKPOINT: &str = "model.ckpt";

fn load_dataset(config: &RunConfig, key: &str) -> Result<PLLDataset, CliError> {
    let path = config.path(key).ok_or_else(|| CliError::Input(format!("{key} is required")))?;
    data::load_path(path).map_err(|e| CliError::Input(format!("{path}: {e}")))
}

fn load_optional(config: &RunConfig, key: &str) -> Result<Option<PLLDataset>, CliError> {
    config.path(key).map(|_| load_dataset(config, key)).transpose()
}

pub fn load_model(path: &str) -> Result<ModelPair, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(Path::new(path), e))?;
    let ck = Checkpoint::read_from(BufReader::new(file)).map_err(|e| CliError::Input(format!("{path}: {e}")))?;
    ModelPair::from_checkpoint(&ck).map_err(|e| CliError::Input(format!("{path}: {e}")))
}

fn json_text(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json");
    s.push('\n');
    s
}

pub fn synth(config: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let bench = BenchmarkConfig {
        num_classes: config.parse("classes")?,
        dim: config.parse("dim")?,
        separation: config.parse("separation")?,
        pair_distance: config.parse("pair_distance")?,
        train_size: config.parse("train_size")?,
        test_size: config.parse("test_size")?,
        tau_rate: config.parse("tau_rate")?,
        seed: config.parse("seed")?,
        annotator: AnnotatorConfig {
            hidden: config.list("annotator.hidden")?,
            epochs: config.parse("annotator.epochs")?,
            learning_rate: config.parse("annotator.learning_rate")?,
            batch_size: config.parse("annotator.batch_size")?,
            seed: 0,
        },
    };
    let (train, test) = bench.build()?;
    let clean: Vec<LabelSet> =
        train.samples().iter().map(|s| LabelSet::singleton(train.num_classes(), s.true_label.unwrap_or(0))).collect();
    let clean = train.clone().with_candidates(clean)?;
    for (name, set) in [("train.pllds", &train), ("test.pllds", &test), ("train_clean.pllds", &clean)] {
        data::save_path(set, dir.file(name))?;
    }
    let provenance = json!({
        "generator": "entangled-gaussians",
        "seed": bench.seed,
        "tau_rate": bench.tau_rate,
        "num_classes": bench.num_classes,
        "dim": bench.dim,
        "separation": bench.separation,
        "pair_distance": bench.pair_distance,
        "train_size": train.len(),
        "test_size": test.len(),
        "avg_labels": train.average_candidates(),
        "annotator": {
            "hidden": bench.annotator.hidden,
            "epochs": bench.annotator.epochs,
            "learning_rate": bench.annotator.learning_rate,
            "batch_size": bench.annotator.batch_size,
        },
    });
    dir.write("provenance.json", json_text(&provenance))
}

pub fn train_config(config: &RunConfig) -> Result<TrainConfig, CliError> {
    let conv: Vec<usize> = config.list("model.conv")?;
    let conv_filters: [usize; 2] = conv
        .try_into()
        .map_err(|_| CliError::Input("model.conv needs exactly two filter counts".into()))?;
    let cfg = TrainConfig {
        epochs: config.parse("epochs")?,
        batch_size: config.parse("batch_size")?,
        learning_rate: config.parse("learning_rate")?,
        sgd_momentum: config.parse("sgd_momentum")?,
        weight_decay: config.parse("weight_decay")?,
        warmup_epochs: config.auto_usize("warmup")?,
        refresh_period: config.auto_usize("refresh")?,
        momentum: config.parse("momentum")?,
        queue_capacity: config.parse("queue_capacity")?,
        view_noise: config.parse("view_noise")?,
        no_rl: config.flag("no_rl")?,
        no_ca: config.flag("no_ca")?,
        uniform_confidence: config.flag("uniform_confidence")?,
        seed: config.parse("seed")?,
        loss: LossConfig {
            tau: config.parse("loss.tau")?,
            tau2: config.parse("loss.tau2")?,
            beta: config.parse("loss.beta")?,
            surrogate: Surrogate::parse(config.raw("loss.surrogate")).map_err(CliError::Input)?,
        },
        augment: AugmentConfig {
            top_fraction: config.parse("augment.top_fraction")?,
            epsilon: config.parse("augment.epsilon")?,
            smoothing: config.flag("augment.smoothing")?,
        },
        model: ModelConfig {
            hidden: config.list("model.hidden")?,
            conv_filters,
            embed_dim: config.parse("model.embed_dim")?,
            activation: Activation::parse(config.raw("model.activation"))?,
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

struct Trained {
    model: ModelPair,
    summary: serde_json::Value,
}

fn train_into(cfg: &TrainConfig, train_set: &PLLDataset, test_set: Option<&PLLDataset>, dir: &RunDir, prefix: &str) -> Result<Trained, CliError> {
    let outcome = trainer::train(train_set, test_set, cfg)?;
    let variant = cfg.variant();
    let header = [
        ("variant".to_string(), variant.label().to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("epochs".to_string(), cfg.epochs.to_string()),
    ];
    let bytes = outcome.model.to_checkpoint(&header).to_bytes()?;
    dir.write(&format!("{prefix}{CHECKPOINT}"), bytes)?;
    dir.write(&format!("{prefix}history.csv"), history_to_csv(&outcome.history))?;
    let last = outcome.history.last();
    let train_acc = match last {
        Some(r) => r.train_acc,
        None => trainer::accuracy(&outcome.model.query, train_set)?,
    };
    let test_acc = match (last, test_set) {
        (Some(r), _) => r.test_acc,
        (None, Some(t)) => trainer::accuracy(&outcome.model.query, t)?,
        (None, None) => None,
    };
    let summary = json!({
        "variant": variant.label(),
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "train_accuracy": train_acc,
        "test_accuracy": test_acc,
        "final_l_discls": last.map(|r| r.l_discls),
        "final_l_c": last.map(|r| r.l_c),
        "final_total": last.map(|r| r.total),
        "skipped_queries": outcome.history.iter().map(|r| r.skipped_queries).sum::<usize>(),
        "saturated_terms": outcome.history.iter().map(|r| r.saturated).sum::<usize>(),
    });
    dir.write(&format!("{prefix}summary.json"), json_text(&summary))?;
    Ok(Trained { model: outcome.model, summary })
}

pub fn train(config: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let cfg = train_config(config)?;
    let train_set = load_dataset(config, "data.train")?;
    let test_set = load_optional(config, "data.test")?;
    train_into(&cfg, &train_set, test_set.as_ref(), dir, "")?;
    Ok(())
}

fn eval_options(config: &RunConfig) -> Result<EvalOptions, CliError> {
    let space = EmbeddingSpace::parse(config.raw("space"))
        .ok_or_else(|| CliError::Input(format!("space: expected penultimate or projection, got '{}'", config.raw("space"))))?;
    Ok(EvalOptions { space, thresholds: config.list("xi")?, ratios: config.list("ratios")? })
}

fn write_report(report: &MetricsReport, dir: &RunDir, prefix: &str) -> Result<(), CliError> {
    dir.write(&format!("{prefix}metrics.json"), format!("{}\n", report.to_json()))?;
    dir.write(&format!("{prefix}confusion.csv"), report.confusion_csv())?;
    dir.write(&format!("{prefix}overlap.csv"), report.overlap_csv())?;
    dir.write(&format!("{prefix}entangled.csv"), report.entangled_csv())?;
    dir.write(&format!("{prefix}distances.csv"), report.distances_csv())?;
    dir.write(&format!("{prefix}summary.csv"), report.summary_csv())
}

fn evaluate(config: &RunConfig, params: &BackboneParams, dataset: &PLLDataset, supervised: Option<&BackboneParams>) -> Result<MetricsReport, CliError> {
    let options = eval_options(config)?;
    let pair_embeddings = match config.raw("pairs") {
        "raw" => None,
        "model" => Some(model_view(params, dataset, options.space)?.embeddings),
        other => return Err(CliError::Input(format!("pairs: expected raw or model, got '{other}'"))),
    };
    Ok(MetricsReport::evaluate(params, dataset, pair_embeddings.as_deref(), supervised, &options)?)
}

pub fn eval(config: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let ckpt = config.path("checkpoint").ok_or_else(|| CliError::Input("checkpoint is required".into()))?;
    let model = load_model(ckpt)?;
    let dataset = load_dataset(config, "data")?;
    let supervised = config.path("supervised").map(load_model).transpose()?;
    let report = evaluate(config, &model.query, &dataset, supervised.as_ref().map(|m| &m.query))?;
    write_report(&report, dir, "")
}

fn read_embeddings(path: &str, n: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let text = read_text(Path::new(path))?;
    let rows = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::Input(format!("{path}: row {}: bad value '{v}'", i + 1))))
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    if rows.len() != n {
        return Err(CliError::Input(format!("{path}: {} embedding rows for {n} samples", rows.len())));
    }
    Ok(rows)
}

pub fn audit(config: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let dataset = load_dataset(config, "data")?;
    let embeddings = match (config.path("embeddings"), config.path("checkpoint")) {
        (Some("raw"), _) => dataset.samples().iter().map(|s| s.features.values().to_vec()).collect(),
        (Some(path), _) => read_embeddings(path, dataset.len())?,
        (None, Some(ckpt)) => {
            let model = load_model(ckpt)?;
            model_view(&model.query, &dataset, eval_options(config)?.space)?.embeddings
        }
        (None, None) => return Err(CliError::Input("audit needs embeddings (a CSV path or 'raw') or a checkpoint".into())),
    };
    let mut rows = Vec::new();
    for xi in config.list::<f64>("xi")? {
        let pairs = find_entangled(&embeddings, &dataset, xi)?;
        rows.push((report(xi, &pairs), None));
    }
    for ratio in config.list::<f64>("ratios")? {
        let top = top_fraction_pairs(&embeddings, &dataset, ratio)?;
        rows.push((report(ratio, &top.pairs), Some(top.effective_threshold)));
    }
    dir.write("entangle.csv", reports_to_csv(&rows))
}

/// `(grid name, parameter key, values)`.
pub fn sweep_grids(name: &str) -> Result<Vec<(&'static str, &'static str, Vec<f64>)>, CliError> {
    let beta_fine = ("beta_fine", "loss.beta", vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]);
    let beta = ("beta", "loss.beta", vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    let tau = ("tau", "loss.tau", vec![0.03, 0.05, 0.07, 0.09, 0.12, 0.15, 0.18]);
    let tau2 = ("tau2", "loss.tau2", vec![0.1, 0.4, 0.7]);
    Ok(match name {
        "all" => vec![beta_fine, beta, tau, tau2],
        "beta_fine" => vec![beta_fine],
        "beta" => vec![beta],
        "tau" => vec![tau],
        "tau2" => vec![tau2],
        other => return Err(CliError::Input(format!("sweep.grid: unknown grid '{other}'"))),
    })
}

pub fn sweep(config: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let base = train_config(config)?;
    let train_set = load_dataset(config, "data.train")?;
    let test_set = load_optional(config, "data.test")?;
    let eval_set = test_set.as_ref().unwrap_or(&train_set);
    match config.raw("sweep.mode") {
        "ablation" => {
            let seeds: Vec<u64> = config.list("sweep.seeds")?;
            if seeds.is_empty() {
                return Err(CliError::Input("sweep.seeds is empty".into()));
            }
            let table = trainer::ablation_suite(&train_set, test_set.as_ref(), &base, &seeds)?;
            dir.write("ablation.csv", table.to_csv())
        }
        "grid" => {
            let mut grids = sweep_grids(config.raw("sweep.grid"))?;
            let custom: Vec<f64> = config.list("sweep.values")?;
            if !custom.is_empty() {
                if grids.len() != 1 {
                    return Err(CliError::Input("sweep.values needs a single sweep.grid".into()));
                }
                grids[0].2 = custom;
            }
            let points: Vec<(&str, &str, f64)> =
                grids.iter().flat_map(|(g, k, vs)| vs.iter().map(move |&v| (*g, *k, v))).collect();
            let rows = points
                .par_iter()
                .enumerate()
                .map(|(idx, &(grid, key, value))| -> Result<String, CliError> {
                    let mut point = config.clone();
                    point.set(key, value.to_string());
                    let cfg = train_config(&point)?;
                    let prefix = format!("points/{idx:03}-{grid}-{value}/");
                    let trained = train_into(&cfg, &train_set, test_set.as_ref(), dir, &prefix)?;
                    let report = evaluate(config, &trained.model.query, eval_set, None)?;
                    write_report(&report, dir, &prefix)?;
                    let acc = report.accuracy.map_or_else(|| "undefined".to_string(), |a| a.to_string());
                    let train_acc = trained.summary["train_accuracy"].as_f64().map_or_else(|| "undefined".to_string(), |a| a.to_string());
                    Ok(format!("{grid},{key},{value},{train_acc},{acc}\n"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut csv = String::from("grid,key,value,train_accuracy,eval_accuracy\n");
            rows.iter().for_each(|r| csv.push_str(r));
            dir.write("sweep.csv", csv)
        }
        other => Err(CliError::Input(format!("sweep.mode: expected grid or ablation, got '{other}'"))),
    }
}

