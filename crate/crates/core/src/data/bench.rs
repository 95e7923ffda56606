use super::{gen_entangled_gaussians, synthesize_candidates, train_annotator, AnnotatorConfig, DataError, GaussianSpec, PLLDataset};

/// Pairwise-entangled Gaussian classes with annotator-synthesized candidate
/// sets on the training split and clean labels on the test split.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkConfig {
    pub num_classes: usize,
    pub dim: usize,
    pub separation: f64,
    pub pair_distance: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub tau_rate: f64,
    pub seed: u64,
    pub annotator: AnnotatorConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            num_classes: 4,
            dim: 8,
            separation: 6.0,
            pair_distance: 3.0,
            train_size: 2000,
            test_size: 1000,
            tau_rate: 0.2,
            seed: 0,
            annotator: AnnotatorConfig::default(),
        }
    }
}

const TEST_SALT: u64 = 0x7E57_5EED;

impl BenchmarkConfig {
    pub fn spec(&self) -> Result<GaussianSpec, DataError> {
        GaussianSpec::benchmark(self.num_classes, self.dim, self.separation, self.pair_distance)
    }

    /// `(train, test)`.
    pub fn build(&self) -> Result<(PLLDataset, PLLDataset), DataError> {
        let spec = self.spec()?;
        let clean = gen_entangled_gaussians(&spec, self.train_size, self.seed)?;
        let test = gen_entangled_gaussians(&spec, self.test_size, self.seed ^ TEST_SALT)?;
        let annotator = train_annotator(&clean, &AnnotatorConfig { seed: self.annotator.seed ^ self.seed, ..self.annotator.clone() })?;
        let posteriors = annotator.posteriors(&clean)?;
        let labels = clean.true_labels()?;
        let sets = synthesize_candidates(&posteriors, &labels, self.tau_rate, self.seed)?;
        let mut train = clean.with_candidates(sets)?;
        train.provenance.insert("tau_rate".into(), self.tau_rate.to_string());
        train.provenance.insert("annotator_hidden".into(), format!("{:?}", self.annotator.hidden));
        train.provenance.insert("annotator_epochs".into(), self.annotator.epochs.to_string());
        Ok((train, test))
    }
}
