//! Instance-dependent partial-label learning laboratory.
//!
//! Candidate-label synthesis, entanglement detection, class-specific
//! augmentation, weighted contrastive and confidence-adjusted disambiguation
//! losses, a momentum-encoder training loop, and the evaluation metrics used
//! to study disentanglement.

pub mod numkernel;
pub mod data;
pub mod entangle;
pub mod losses;
pub mod augment;
pub mod trainer;
pub mod evalkit;
