use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub warmup: bool,
    /// Mean classification loss over the epoch's batches (weighted PLL CE during warm-up).
    pub l_discls: f64,
    /// Mean of `1/|S| Σ_s L_c(x′_s)`; zero when the contrastive branch is idle.
    pub l_c: f64,
    pub total: f64,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub skipped_queries: usize,
    pub saturated: usize,
    pub discarded: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

pub fn history_to_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,l_discls,l_c,total,train_acc,test_acc\n");
    for r in history {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.epoch, r.l_discls, r.l_c, r.total, opt(r.train_acc), opt(r.test_acc));
    }
    out
}
