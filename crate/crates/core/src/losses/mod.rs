//! Training objectives: confidence weights, the disambiguation loss, the
//! weighted contrastive loss and their combination.

mod contrastive;
mod discls;
mod objective;

pub use contrastive::{contrastive_loss, pair_weight, pair_weights, query_contrastive, ContrastBatch, ContrastKey, ContrastQuery, ContrastiveOutput, QueryTerm};
pub use discls::{
    confidence_weights, discls_binary, discls_loss, lws_deviation, lws_equivalence_check, lws_form, sigmoid_psi,
    uniform_weights, weighted_pll_ce, DisclsOutput, LwsCheck, PROB_CLAMP,
};
pub use objective::{total_loss, AugmentedView, ObjectiveOutput, PreparedSample};

use crate::numkernel::KernelError;

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type Result<T> = std::result::Result<T, LossError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Surrogate {
    /// `ψ(t) = 1 / (1 + e^t)`.
    Sigmoid,
    /// `-s log p - (1 - s) log(1 - p)` on softmax probabilities.
    #[default]
    CrossEntropy,
}

impl Surrogate {
    pub fn name(self) -> &'static str {
        match self {
            Surrogate::Sigmoid => "sigmoid",
            Surrogate::CrossEntropy => "ce",
        }
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        match text {
            "sigmoid" => Ok(Surrogate::Sigmoid),
            "ce" | "cross-entropy" => Ok(Surrogate::CrossEntropy),
            other => Err(format!("unknown surrogate '{other}' (expected sigmoid or ce)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Contrastive temperature.
    pub tau: f64,
    /// Pair-weight temperature.
    pub tau2: f64,
    /// Weight of the contrastive term.
    pub beta: f64,
    pub surrogate: Surrogate,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { tau: 0.12, tau2: 0.4, beta: 1.0, surrogate: Surrogate::CrossEntropy }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(LossError::Parameter(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.tau2 > 0.0 && self.tau2.is_finite()) {
            return Err(LossError::Parameter(format!("tau2 must be > 0, got {}", self.tau2)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(LossError::Parameter(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig { tau: 0.0, ..Default::default() }.validate().is_err());
        assert!(LossConfig { tau2: -1.0, ..Default::default() }.validate().is_err());
        assert!(LossConfig { beta: -0.5, ..Default::default() }.validate().is_err());
        assert!(LossConfig { beta: 0.0, ..Default::default() }.validate().is_ok());
    }

    #[test]
    fn surrogate_names_round_trip() {
        for s in [Surrogate::Sigmoid, Surrogate::CrossEntropy] {
            assert_eq!(Surrogate::parse(s.name()).unwrap(), s);
        }
        assert!(Surrogate::parse("hinge").is_err());
    }
}
