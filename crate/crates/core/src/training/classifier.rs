use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::data::{Dataset, EpochSampler, SplitSelection};
use crate::error::{config_err, contract, Error, Result};
use crate::losses::cls_loss;
use crate::networks::{AttrClassifier, ClassifierConfig};
use crate::optim::{Adam, AdamConfig};
use crate::rng::derived_rng;

const CHECKPOINT_KIND: &str = "attribute-classifier";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierTrainConfig {
    pub epochs: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    pub split: SplitSelection,
    pub hflip: bool,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            adam: AdamConfig {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            seed: 0,
            split: SplitSelection::Train,
            hflip: false,
        }
    }
}

pub struct ClassifierTrainer {
    clf: AttrClassifier,
    columns: Vec<usize>,
    opt: Adam,
    config: ClassifierTrainConfig,
    epoch: u64,
    step: u64,
}

impl ClassifierTrainer {
    pub fn new(clf_config: ClassifierConfig, config: ClassifierTrainConfig) -> Result<Self> {
        if config.epochs == 0 || config.batch_size == 0 || !(config.lr > 0.0) {
            return Err(config_err!("classifier training needs epochs, batch size and lr > 0"));
        }
        let clf = AttrClassifier::new(clf_config, config.seed, DType::F32)?;
        let columns = clf.config().attribute_columns()?;
        Ok(Self {
            clf,
            columns,
            opt: Adam::new(config.adam)?,
            config,
            epoch: 0,
            step: 0,
        })
    }

    pub fn classifier(&self) -> &AttrClassifier {
        &self.clf
    }

    pub fn into_classifier(self) -> AttrClassifier {
        self.clf
    }

    /// One pass over the training split; returns the mean batch loss.
    pub fn train_epoch(&mut self, dataset: &Dataset) -> Result<f64> {
        if dataset.image_size() != self.clf.config().image_size {
            return Err(config_err!(
                "dataset yields {}px images, classifier expects {}px",
                dataset.image_size(),
                self.clf.config().image_size
            ));
        }
        let sampler = EpochSampler::new(
            dataset.index().select(self.config.split),
            self.config.batch_size,
            self.config.seed,
        )?;
        let mut total = 0.0;
        let batches = sampler.epoch_batches(self.epoch);
        for records in &batches {
            let mut rng = derived_rng(self.config.seed, "clf-step", self.step);
            let flips: Option<Vec<bool>> = self
                .config
                .hflip
                .then(|| records.iter().map(|_| rand::Rng::random_bool(&mut rng, 0.5)).collect());
            let x = dataset.load_images(records, flips.as_deref())?;
            let targets = target_tensor(dataset, records, &self.columns)?;
            let loss = cls_loss(&self.clf.logits(&x, true)?, &targets)?;
            let value = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    step: self.step,
                    component: "classifier".into(),
                });
            }
            let grads = loss.backward()?;
            self.opt.step(self.clf.params(), &grads, self.config.lr)?;
            total += value;
            self.step += 1;
        }
        self.epoch += 1;
        Ok(total / batches.len() as f64)
    }

    /// Train for the configured number of epochs; returns per-epoch losses.
    pub fn run(&mut self, dataset: &Dataset) -> Result<Vec<f64>> {
        let mut losses = Vec::new();
        while self.epoch < self.config.epochs {
            let loss = self.train_epoch(dataset)?;
            log::info!("classifier epoch {} loss {loss:.4}", self.epoch);
            losses.push(loss);
        }
        Ok(losses)
    }
}

fn target_tensor(dataset: &Dataset, records: &[usize], columns: &[usize]) -> Result<Tensor> {
    let data: Vec<f32> = records
        .iter()
        .flat_map(|&r| {
            let labels = dataset.index().records[r].labels;
            columns.iter().map(move |&c| if labels.get(c) { 1.0 } else { 0.0 })
        })
        .collect();
    Ok(Tensor::from_vec(data, (records.len(), columns.len()), &Device::Cpu)?)
}

/// Fraction of `records` whose thresholded prediction matches the label,
/// per classifier output.
pub fn classifier_accuracy(
    clf: &AttrClassifier,
    dataset: &Dataset,
    records: &[usize],
    batch_size: usize,
) -> Result<Vec<f64>> {
    if records.is_empty() || batch_size == 0 {
        return Err(contract!("need at least one record and a positive batch size"));
    }
    let columns = clf.config().attribute_columns()?;
    let mut correct = vec![0usize; columns.len()];
    for chunk in records.chunks(batch_size) {
        let x = dataset.load_images(chunk, None)?;
        let probs: Vec<Vec<f32>> = clf.probabilities(&x)?.to_dtype(DType::F32)?.to_vec2()?;
        for (&r, p) in chunk.iter().zip(&probs) {
            let labels = dataset.index().records[r].labels;
            for (k, &c) in columns.iter().enumerate() {
                if (p[k] > 0.5) == labels.get(c) {
                    correct[k] += 1;
                }
            }
        }
    }
    Ok(correct.iter().map(|&c| c as f64 / records.len() as f64).collect())
}

#[derive(Serialize, Deserialize)]
struct ClassifierMeta {
    kind: String,
    config: ClassifierConfig,
    seed: u64,
}

pub fn save_classifier(clf: &AttrClassifier, seed: u64, path: &Path) -> Result<()> {
    let meta = ClassifierMeta {
        kind: CHECKPOINT_KIND.into(),
        config: clf.config().clone(),
        seed,
    };
    let mut ckpt = Checkpoint::new(serde_json::to_value(meta).map_err(|e| contract!("{e}"))?);
    ckpt.insert_store("clf.", clf.params());
    save_checkpoint(&ckpt, path)
}

pub fn load_classifier(path: &Path) -> Result<AttrClassifier> {
    let ckpt = load_checkpoint(path)?;
    let meta: ClassifierMeta = serde_json::from_value(ckpt.metadata.clone())
        .map_err(|e| Error::CorruptCheckpoint(format!("not a classifier checkpoint: {e}")))?;
    if meta.kind != CHECKPOINT_KIND {
        return Err(Error::CorruptCheckpoint(format!("unexpected checkpoint kind `{}`", meta.kind)));
    }
    let clf = AttrClassifier::new(meta.config, meta.seed, DType::F32)?;
    ckpt.restore_store("clf.", clf.params())?;
    Ok(clf)
}
