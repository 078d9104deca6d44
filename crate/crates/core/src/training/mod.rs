//! Self-supervised training: on-the-fly virtual craniectomy plus
//! salt-and-pepper noise over complete skulls, a compound Dice + BCE loss,
//! and early stopping on a validation split.
//!
//! Two target strategies:
//! * `DirectEstimation` (DE) — the target is the removed flap (empty when no
//!   cut was applied);
//! * `ReconstructSubtract` (RS) — the target is the original complete skull.
//!
//! Noise is applied to the network input only, never to targets (denoising
//! autoencoder semantics).

mod pairs;
pub use pairs::{make_training_pair, salt_pepper};

#[cfg(feature = "torch")]
mod loss;
#[cfg(feature = "torch")]
pub use loss::compound_loss;

#[cfg(feature = "torch")]
mod run;
#[cfg(feature = "torch")]
pub use run::{train, write_loss_log, EpochStats, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::craniectomy::VcConfig;
use crate::error::{Error, Result};

/// What the network learns to output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainStrategy {
    /// Predict the bone flap directly.
    DirectEstimation,
    /// Predict the complete skull; the flap comes from subtraction later.
    ReconstructSubtract,
}

impl std::fmt::Display for TrainStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainStrategy::DirectEstimation => f.write_str("DE"),
            TrainStrategy::ReconstructSubtract => f.write_str("RS"),
        }
    }
}

/// First-order optimizer selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Adam,
    Sgd { momentum: f64 },
}

/// Training hyperparameters. Defaults: compound-loss weight λ = 1, virtual
/// craniectomy probability 0.8, batch size 9, up to 350 epochs with early
/// stopping (patience 20) on a 20% validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub strategy: TrainStrategy,
    /// λ in `L = L_Dice + λ·L_BCE`.
    pub lambda_bce: f64,
    /// Probability that a training sample receives a virtual craniectomy.
    pub vc_probability: f64,
    /// Per-voxel salt-and-pepper flip probability on the input.
    pub noise_prob: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub early_stop_patience: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub rng_seed: u64,
    /// Fraction of skulls held out for validation.
    pub validation_fraction: f64,
    /// Fixed validation craniectomies drawn per validation skull.
    pub val_draws_per_skull: usize,
    /// Virtual craniectomy parameters used for pair generation.
    pub vc: VcConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: TrainStrategy::DirectEstimation,
            lambda_bce: 1.0,
            vc_probability: 0.8,
            noise_prob: 0.01,
            batch_size: 9,
            max_epochs: 350,
            early_stop_patience: 20,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            rng_seed: 0,
            validation_fraction: 0.2,
            val_draws_per_skull: 2,
            vc: VcConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("vc_probability", self.vc_probability),
            ("noise_prob", self.noise_prob),
            ("validation_fraction", self.validation_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be in [0, 1], got {p}"
                )));
            }
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        if self.early_stop_patience < 1 {
            return Err(Error::InvalidParameter(
                "early_stop_patience must be >= 1".into(),
            ));
        }
        if self.max_epochs < 1 {
            return Err(Error::InvalidParameter("max_epochs must be >= 1".into()));
        }
        if !(self.lambda_bce >= 0.0) || !self.lambda_bce.is_finite() {
            return Err(Error::InvalidParameter("lambda_bce must be >= 0".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(
                "learning_rate must be >= 0".into(),
            ));
        }
        Ok(())
    }
}
