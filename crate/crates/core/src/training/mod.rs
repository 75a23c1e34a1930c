//! Alternating critic/generator optimisation, schedules, checkpoints and logs.

mod classifier;
mod samples;
mod trainer;

pub use classifier::{
    classifier_accuracy, load_classifier, save_classifier, ClassifierTrainConfig, ClassifierTrainer,
};
pub use samples::{edit_grid, save_grid};
pub use trainer::{
    checkpoint_config, load_generator, DMetrics, EpochSummary, GMetrics, GStepTrace, StepRecord, Trainer,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{Preprocess, SplitSelection};
use crate::error::{config_err, Result};
use crate::losses::LossWeights;
use crate::networks::{ArchConfig, VariantSpec};
use crate::optim::AdamConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: u64,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiplier applied every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: u64,
    pub adam: AdamConfig,
    /// Critic updates per generator update.
    pub n_critic: u64,
    pub weights: LossWeights,
    pub variant: String,
    pub arch: ArchConfig,
    pub crop: u32,
    pub hflip: bool,
    pub split: SplitSelection,
    pub seed: u64,
    /// Write a sample grid every this many steps (0 = never).
    pub sample_every: u64,
    /// Save a checkpoint after every this many epochs (0 = only at the end).
    pub checkpoint_every: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr: 0.002,
            lr_decay: 0.1,
            lr_decay_every: 33,
            adam: AdamConfig::default(),
            n_critic: 5,
            weights: LossWeights::default(),
            variant: "M0".into(),
            arch: ArchConfig::full(),
            crop: 170,
            hflip: false,
            split: SplitSelection::TrainVal,
            seed: 0,
            sample_every: 1000,
            checkpoint_every: 1,
            output_dir: None,
        }
    }
}

impl TrainConfig {
    /// 64x64, narrow networks.
    pub fn smoke() -> Self {
        Self {
            arch: ArchConfig::smoke(),
            batch_size: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.n_critic == 0 || self.lr_decay_every == 0 {
            return Err(config_err!(
                "epochs, batch_size, n_critic and lr_decay_every must be at least 1"
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(config_err!(
                "learning rate must be positive and decay in (0, 1], got {} / {}",
                self.lr,
                self.lr_decay
            ));
        }
        self.adam.validate()?;
        self.weights.validate()?;
        self.arch.validate()?;
        self.preprocess().validate()?;
        self.variant_spec()?;
        Ok(())
    }

    pub fn variant_spec(&self) -> Result<VariantSpec> {
        VariantSpec::parse(&self.variant)
    }

    pub fn preprocess(&self) -> Preprocess {
        Preprocess {
            crop: self.crop,
            size: self.arch.image_size as u32,
        }
    }

    /// Step decay: `lr * lr_decay^floor(epoch / lr_decay_every)`.
    pub fn learning_rate(&self, epoch: u64) -> f64 {
        (0..epoch / self.lr_decay_every).fold(self.lr, |lr, _| lr * self.lr_decay)
    }

    /// Whether global step `step` (0-based) ends with a generator update.
    pub fn is_generator_step(&self, step: u64) -> bool {
        (step + 1) % self.n_critic == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_decay() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate(0), 0.002);
        assert_eq!(c.learning_rate(32), 0.002);
        assert_eq!(c.learning_rate(33), 0.0002);
        assert_eq!(c.learning_rate(65), 0.0002);
        assert_eq!(c.learning_rate(66), 0.00002);
    }

    #[test]
    fn generator_every_fifth_step() {
        let c = TrainConfig::default();
        let g: Vec<u64> = (0..12).filter(|&s| c.is_generator_step(s)).collect();
        assert_eq!(g, vec![4, 9]);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "variant": "AUC_2"}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.batch_size, 32);
        c.validate().unwrap();
        let bad = TrainConfig {
            n_critic: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
