use super::{train, Result, TrainConfig};
use crate::data::PLLDataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    Cad,
    WithoutCa,
    WithoutRl,
    WithoutBoth,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Cad, Variant::WithoutCa, Variant::WithoutRl, Variant::WithoutBoth];

    pub fn from_flags(no_rl: bool, no_ca: bool) -> Self {
        match (no_rl, no_ca) {
            (false, false) => Variant::Cad,
            (false, true) => Variant::WithoutCa,
            (true, false) => Variant::WithoutRl,
            (true, true) => Variant::WithoutBoth,
        }
    }

    /// `(no_rl, no_ca)`.
    pub fn flags(self) -> (bool, bool) {
        match self {
            Variant::Cad => (false, false),
            Variant::WithoutCa => (false, true),
            Variant::WithoutRl => (true, false),
            Variant::WithoutBoth => (true, true),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Cad => "CAD",
            Variant::WithoutCa => "w/o CA",
            Variant::WithoutRl => "w/o RL",
            Variant::WithoutBoth => "w/o Both",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (zero for a single run).
    pub std: f64,
}

impl AblationRow {
    pub fn from_runs(variant: Variant, accuracies: Vec<f64>) -> Self {
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let std = if accuracies.len() > 1 {
            (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { variant, accuracies, mean, std }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, variant: Variant) -> &AblationRow {
        self.rows.iter().find(|r| r.variant == variant).expect("all variants present")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,mean_acc,std_acc,runs\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.variant.label(), r.mean, r.std, r.accuracies.len()));
        }
        out
    }
}

pub fn pooled_std(a: f64, b: f64) -> f64 {
    ((a * a + b * b) / 2.0).sqrt()
}

/// Trains every variant once per seed; the reported accuracy is the final
/// test accuracy (training accuracy when no test split is given).
pub fn ablation_suite(train_set: &PLLDataset, test: Option<&PLLDataset>, base: &TrainConfig, seeds: &[u64]) -> Result<AblationTable> {
    let mut rows = Vec::new();
    for variant in Variant::ALL {
        let (no_rl, no_ca) = variant.flags();
        let mut accs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cfg = TrainConfig { no_rl, no_ca, seed, ..base.clone() };
            let outcome = train(train_set, test, &cfg)?;
            let acc = match test {
                Some(t) => super::accuracy(&outcome.model.query, t)?,
                None => super::accuracy(&outcome.model.query, train_set)?,
            };
            accs.push(acc.unwrap_or(0.0));
        }
        rows.push(AblationRow::from_runs(variant, accs));
    }
    Ok(AblationTable { rows })
}
