use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{DType, Device, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::samples::{edit_grid, save_grid};
use super::TrainConfig;
use crate::attributes::AttributeVector;
use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::data::{Batch, Dataset, EpochSampler};
use crate::error::{config_err, contract, Error, Result};
use crate::losses::{
    adv_loss_d, adv_loss_g, cls_loss, gradient_penalty, rec_loss, total_d, total_g, DLossParts,
    GLossParts,
};
use crate::networks::{labels_tensor, Discriminator, Generator, VariantSpec};
use crate::optim::Adam;
use crate::rng::derived_rng;

const CHECKPOINT_KIND: &str = "generator-training";
const PROBE_SIZE: usize = 16;

/// Critic losses of one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DMetrics {
    pub adv_d: f64,
    pub cls_d: f64,
    /// Zero when the penalty is switched off.
    pub gp: f64,
    pub total_d: f64,
}

impl DMetrics {
    pub const NAMES: [&'static str; 4] = ["adv_d", "cls_d", "gp", "total_d"];

    pub fn values(&self) -> [f64; 4] {
        [self.adv_d, self.cls_d, self.gp, self.total_d]
    }
}

/// Generator losses of one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GMetrics {
    pub adv_g: f64,
    pub cls_g: f64,
    pub rec: f64,
    pub total_g: f64,
}

impl GMetrics {
    pub const NAMES: [&'static str; 4] = ["adv_g", "cls_g", "rec", "total_g"];

    pub fn values(&self) -> [f64; 4] {
        [self.adv_g, self.cls_g, self.rec, self.total_g]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u64,
    pub lr: f64,
    pub d: DMetrics,
    pub g: Option<GMetrics>,
}

impl StepRecord {
    /// One tab-separated metrics line; generator columns are empty on
    /// critic-only steps.
    pub fn tsv_line(&self) -> String {
        let mut cols = vec![self.step.to_string(), self.epoch.to_string(), self.lr.to_string()];
        cols.extend(self.d.values().iter().map(f64::to_string));
        match &self.g {
            Some(g) => cols.extend(g.values().iter().map(f64::to_string)),
            None => cols.extend(std::iter::repeat_n(String::new(), 4)),
        }
        cols.join("\t")
    }

    pub fn tsv_header() -> String {
        let mut cols = vec!["step", "epoch", "lr"];
        cols.extend(DMetrics::NAMES);
        cols.extend(GMetrics::NAMES);
        cols.join("\t")
    }
}

/// Labels the generator was driven with during one update.
#[derive(Clone, Debug)]
pub struct GStepTrace {
    pub step: u64,
    pub edit_labels: Vec<AttributeVector>,
    pub rec_labels: Vec<AttributeVector>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: u64,
    pub d_steps: u64,
    pub g_steps: u64,
    pub mean_total_d: f64,
    /// Mean training reconstruction loss over the epoch's generator steps.
    pub mean_rec: f64,
    /// Reconstruction loss on a fixed probe batch after the epoch.
    pub probe_rec: f64,
    pub seconds: f64,
}

#[derive(Serialize, Deserialize)]
struct TrainMeta {
    kind: String,
    config: TrainConfig,
    variant: VariantSpec,
    epoch: u64,
    batch_in_epoch: u64,
    step: u64,
    d_steps: u64,
    g_steps: u64,
    opt_g_steps: u64,
    opt_d_steps: u64,
    epochs: Vec<EpochSummary>,
}

type GHook = Box<dyn FnMut(&GStepTrace) + Send>;

/// Owns both networks, their optimisers and the schedule position.
pub struct Trainer {
    config: TrainConfig,
    variant: VariantSpec,
    gen: Generator,
    disc: Discriminator,
    opt_g: Adam,
    opt_d: Adam,
    epoch: u64,
    batch_in_epoch: u64,
    step: u64,
    d_steps: u64,
    g_steps: u64,
    history: Vec<StepRecord>,
    epochs: Vec<EpochSummary>,
    hook: Option<GHook>,
}

fn scalar(t: &Tensor, step: u64, component: &str) -> Result<f64> {
    let v = t.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if !v.is_finite() {
        return Err(Error::NonFinite {
            step,
            component: component.to_string(),
        });
    }
    Ok(v)
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let variant = config.variant_spec()?;
        let gen = Generator::new(config.arch, variant.clone(), config.seed, DType::F32)?;
        let disc = Discriminator::new(config.arch, config.seed, DType::F32)?;
        Ok(Self {
            opt_g: Adam::new(config.adam)?,
            opt_d: Adam::new(config.adam)?,
            config,
            variant,
            gen,
            disc,
            epoch: 0,
            batch_in_epoch: 0,
            step: 0,
            d_steps: 0,
            g_steps: 0,
            history: Vec::new(),
            epochs: Vec::new(),
            hook: None,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn generator(&self) -> &Generator {
        &self.gen
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.disc
    }

    /// Global step counter (one critic update per step).
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn d_steps(&self) -> u64 {
        self.d_steps
    }

    pub fn g_steps(&self) -> u64 {
        self.g_steps
    }

    /// Step records since this trainer was created or restored.
    pub fn history(&self) -> &[StepRecord] {
        &self.history
    }

    pub fn epoch_summaries(&self) -> &[EpochSummary] {
        &self.epochs
    }

    /// Observe the labels used by every generator update.
    pub fn set_generator_hook(&mut self, hook: impl FnMut(&GStepTrace) + Send + 'static) {
        self.hook = Some(Box::new(hook));
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        let s = self.config.arch.image_size;
        if batch.images.dims() != [batch.len(), 3, s, s] || batch.b.len() != batch.len() {
            return Err(contract!(
                "batch images {:?} do not match {} labels at {s}x{s}",
                batch.images.dims(),
                batch.len()
            ));
        }
        Ok(())
    }

    /// One critic update on `batch` with the generator frozen. `rng` draws the
    /// penalty's interpolation weights.
    pub fn train_step_d<R: Rng + ?Sized>(&mut self, batch: &Batch, lr: f64, rng: &mut R) -> Result<DMetrics> {
        self.check_batch(batch)?;
        let x = &batch.images;
        let a = labels_tensor(&batch.a, DType::F32)?;
        let b = labels_tensor(&batch.b, DType::F32)?;
        let fake = self.gen.generate(x, &b)?.detach();
        let (real_score, real_logits) = self.disc.forward(x)?;
        let fake_score = self.disc.adv_score(&fake)?;
        let gp = if self.config.weights.gp_enabled() {
            let mix: Vec<f32> = (0..batch.len()).map(|_| rng.random::<f32>()).collect();
            let mix = Tensor::from_vec(mix, batch.len(), &Device::Cpu)?;
            Some(gradient_penalty(|t| self.disc.adv_score(t), x, &fake, &mix)?)
        } else {
            None
        };
        let parts = DLossParts {
            adv: adv_loss_d(&real_score, &fake_score)?,
            cls: cls_loss(&real_logits, &a)?,
            gp,
        };
        let total = total_d(&parts, &self.config.weights)?;
        let metrics = DMetrics {
            adv_d: scalar(&parts.adv, self.step, "adv_d")?,
            cls_d: scalar(&parts.cls, self.step, "cls_d")?,
            gp: match &parts.gp {
                Some(gp) => scalar(gp, self.step, "gp")?,
                None => 0.0,
            },
            total_d: scalar(&total, self.step, "total_d")?,
        };
        let grads = total.backward()?;
        self.opt_d.step(self.disc.params(), &grads, lr)?;
        self.d_steps += 1;
        Ok(metrics)
    }

    /// One generator update: edit towards `b`, reconstruct with `a`.
    pub fn train_step_g(&mut self, batch: &Batch, lr: f64) -> Result<GMetrics> {
        self.check_batch(batch)?;
        let x = &batch.images;
        let a = labels_tensor(&batch.a, DType::F32)?;
        let b = labels_tensor(&batch.b, DType::F32)?;
        if let Some(hook) = &mut self.hook {
            hook(&GStepTrace {
                step: self.step,
                edit_labels: batch.b.clone(),
                rec_labels: batch.a.clone(),
            });
        }
        let enc = self.gen.encode(x)?;
        let fake = self.gen.decode(&enc, &b)?;
        let rec = self.gen.decode(&enc, &a)?;
        let (fake_score, fake_logits) = self.disc.forward(&fake)?;
        let parts = GLossParts {
            adv: adv_loss_g(&fake_score)?,
            cls: cls_loss(&fake_logits, &b)?,
            rec: rec_loss(x, &rec)?,
        };
        let total = total_g(&parts, &self.config.weights)?;
        let metrics = GMetrics {
            adv_g: scalar(&parts.adv, self.step, "adv_g")?,
            cls_g: scalar(&parts.cls, self.step, "cls_g")?,
            rec: scalar(&parts.rec, self.step, "rec")?,
            total_g: scalar(&total, self.step, "total_g")?,
        };
        let grads = total.backward()?;
        self.opt_g.step(self.gen.params(), &grads, lr)?;
        self.g_steps += 1;
        Ok(metrics)
    }

    /// Load `records`, run the scheduled updates for the current step and
    /// advance the counters. All randomness derives from (seed, step).
    pub fn train_step(&mut self, dataset: &Dataset, records: &[usize]) -> Result<StepRecord> {
        let mut rng = derived_rng(self.config.seed, "step", self.step);
        let batch = dataset.load_batch(records, &mut rng)?;
        let lr = self.config.learning_rate(self.epoch);
        let d = self.train_step_d(&batch, lr, &mut rng)?;
        let g = if self.config.is_generator_step(self.step) {
            Some(self.train_step_g(&batch, lr)?)
        } else {
            None
        };
        let record = StepRecord {
            step: self.step,
            epoch: self.epoch,
            lr,
            d,
            g,
        };
        self.step += 1;
        self.batch_in_epoch += 1;
        self.history.push(record.clone());
        Ok(record)
    }

    fn sampler(&self, dataset: &Dataset) -> Result<EpochSampler> {
        if dataset.image_size() != self.config.arch.image_size {
            return Err(config_err!(
                "dataset yields {}px images, networks expect {}px",
                dataset.image_size(),
                self.config.arch.image_size
            ));
        }
        EpochSampler::new(
            dataset.index().select(self.config.split),
            self.config.batch_size,
            self.config.seed,
        )
    }

    /// Reconstruction loss of the first training records, without gradients.
    pub fn probe_rec_loss(&self, dataset: &Dataset) -> Result<f64> {
        let records: Vec<usize> = dataset
            .index()
            .select(self.config.split)
            .into_iter()
            .take(PROBE_SIZE)
            .collect();
        let x = dataset.load_images(&records, None)?;
        let a: Vec<AttributeVector> = records.iter().map(|&r| dataset.index().records[r].labels).collect();
        let rec = self.gen.generate(&x, &labels_tensor(&a, DType::F32)?)?.detach();
        scalar(&rec_loss(&x, &rec)?, self.step, "probe_rec")
    }

    /// Train to `config.epochs`, continuing from the current position.
    pub fn run(&mut self, dataset: &Dataset) -> Result<Vec<EpochSummary>> {
        self.run_limited(dataset, None)
    }

    /// Like [`Trainer::run`] but stop after at most `max_steps` further steps.
    pub fn run_limited(&mut self, dataset: &Dataset, max_steps: Option<u64>) -> Result<Vec<EpochSummary>> {
        let sampler = self.sampler(dataset)?;
        let out = self.config.output_dir.clone();
        let mut metrics_log = match &out {
            Some(dir) => Some(open_log(&dir.join("metrics.tsv"), &StepRecord::tsv_header())?),
            None => None,
        };
        let sample_records: Vec<usize> = dataset.index().select(self.config.split).into_iter().take(4).collect();
        let start_step = self.step;
        let mut finished = Vec::new();
        while self.epoch < self.config.epochs {
            let batches = sampler.epoch_batches(self.epoch);
            let started = Instant::now();
            let first_step = self.history.len();
            while (self.batch_in_epoch as usize) < batches.len() {
                if max_steps.is_some_and(|m| self.step - start_step >= m) {
                    return Ok(finished);
                }
                let record = self.train_step(dataset, &batches[self.batch_in_epoch as usize])?;
                if let (Some(log), Some(dir)) = (&mut metrics_log, &out) {
                    writeln!(log.0, "{}", record.tsv_line()).map_err(|e| Error::io(&log.1, e))?;
                    let every = self.config.sample_every;
                    if every > 0 && self.step % every == 0 {
                        let x = dataset.load_images(&sample_records, None)?;
                        let labels: Vec<AttributeVector> =
                            sample_records.iter().map(|&r| dataset.index().records[r].labels).collect();
                        let grid = edit_grid(&self.gen, &x, &labels)?;
                        save_grid(&grid, &dir.join("samples").join(format!("step_{:08}.png", self.step)))?;
                    }
                }
            }
            let records = &self.history[first_step.min(self.history.len())..];
            let mean = |xs: Vec<f64>| if xs.is_empty() { f64::NAN } else { xs.iter().sum::<f64>() / xs.len() as f64 };
            let summary = EpochSummary {
                epoch: self.epoch,
                d_steps: records.len() as u64,
                g_steps: records.iter().filter(|r| r.g.is_some()).count() as u64,
                mean_total_d: mean(records.iter().map(|r| r.d.total_d).collect()),
                mean_rec: mean(records.iter().filter_map(|r| r.g.map(|g| g.rec)).collect()),
                probe_rec: self.probe_rec_loss(dataset)?,
                seconds: started.elapsed().as_secs_f64(),
            };
            log::info!(
                "epoch {} done: {} steps, probe L_rec {:.4}, {:.1}s",
                summary.epoch,
                summary.d_steps,
                summary.probe_rec,
                summary.seconds
            );
            self.epochs.push(summary.clone());
            finished.push(summary);
            self.epoch += 1;
            self.batch_in_epoch = 0;
            if let Some(dir) = &out {
                if let Some(log) = &mut metrics_log {
                    log.0.flush().map_err(|e| Error::io(&log.1, e))?;
                }
                self.write_epoch_log(&dir.join("epochs.tsv"))?;
                let every = self.config.checkpoint_every;
                if (every > 0 && self.epoch % every == 0) || self.epoch == self.config.epochs {
                    let ckpt = self.checkpoint()?;
                    save_checkpoint(&ckpt, &dir.join("checkpoints").join(format!("epoch_{:04}.ckpt", self.epoch)))?;
                    save_checkpoint(&ckpt, &dir.join("checkpoints").join("last.ckpt"))?;
                }
            }
        }
        Ok(finished)
    }

    fn write_epoch_log(&self, path: &Path) -> Result<()> {
        let mut text = String::from("epoch\td_steps\tg_steps\tmean_total_d\tmean_rec\tprobe_rec\tseconds\n");
        for e in &self.epochs {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.3}\n",
                e.epoch, e.d_steps, e.g_steps, e.mean_total_d, e.mean_rec, e.probe_rec, e.seconds
            ));
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Full training state: weights, optimiser moments, counters, config.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let meta = TrainMeta {
            kind: CHECKPOINT_KIND.into(),
            config: self.config.clone(),
            variant: self.variant.clone(),
            epoch: self.epoch,
            batch_in_epoch: self.batch_in_epoch,
            step: self.step,
            d_steps: self.d_steps,
            g_steps: self.g_steps,
            opt_g_steps: self.opt_g.steps(),
            opt_d_steps: self.opt_d.steps(),
            epochs: self.epochs.clone(),
        };
        let mut ckpt = Checkpoint::new(serde_json::to_value(meta).map_err(|e| contract!("{e}"))?);
        ckpt.insert_store("gen.", self.gen.params());
        ckpt.insert_store("disc.", self.disc.params());
        for (prefix, opt) in [("opt_g.", &self.opt_g), ("opt_d.", &self.opt_d)] {
            for (name, t) in opt.state_tensors() {
                ckpt.insert(format!("{prefix}{name}"), t);
            }
        }
        Ok(ckpt)
    }

    /// Rebuild a trainer from `ckpt`, continuing under `config`. The variant
    /// and architecture must match the checkpoint; other settings (epochs,
    /// output directory) may change.
    pub fn from_checkpoint(config: TrainConfig, ckpt: &Checkpoint) -> Result<Self> {
        let meta = read_meta(ckpt)?;
        let wanted = config.variant_spec()?;
        if !wanted.same_graph(&meta.variant) || config.arch != meta.config.arch {
            return Err(config_err!(
                "checkpoint holds variant {} at {:?}, config asks for {} at {:?}",
                meta.variant,
                meta.config.arch,
                wanted,
                config.arch
            ));
        }
        let mut t = Self::new(config)?;
        ckpt.restore_store("gen.", t.gen.params())?;
        ckpt.restore_store("disc.", t.disc.params())?;
        t.opt_g = Adam::from_state(t.config.adam, meta.opt_g_steps, ckpt.with_prefix("opt_g."))?;
        t.opt_d = Adam::from_state(t.config.adam, meta.opt_d_steps, ckpt.with_prefix("opt_d."))?;
        t.epoch = meta.epoch;
        t.batch_in_epoch = meta.batch_in_epoch;
        t.step = meta.step;
        t.d_steps = meta.d_steps;
        t.g_steps = meta.g_steps;
        t.epochs = meta.epochs;
        Ok(t)
    }

    pub fn resume(config: TrainConfig, path: &Path) -> Result<Self> {
        Self::from_checkpoint(config, &load_checkpoint(path)?)
    }
}

fn read_meta(ckpt: &Checkpoint) -> Result<TrainMeta> {
    let meta: TrainMeta = serde_json::from_value(ckpt.metadata.clone())
        .map_err(|e| Error::CorruptCheckpoint(format!("not a training checkpoint: {e}")))?;
    if meta.kind != CHECKPOINT_KIND {
        return Err(Error::CorruptCheckpoint(format!("unexpected checkpoint kind `{}`", meta.kind)));
    }
    Ok(meta)
}

/// The training configuration stored in a training checkpoint.
pub fn checkpoint_config(ckpt: &Checkpoint) -> Result<TrainConfig> {
    Ok(read_meta(ckpt)?.config)
}

/// The generator stored in a training checkpoint. With `expected`, a
/// checkpoint of a different graph is a configuration error.
pub fn load_generator(ckpt: &Checkpoint, expected: Option<&VariantSpec>) -> Result<Generator> {
    let meta = read_meta(ckpt)?;
    if let Some(want) = expected {
        if !want.same_graph(&meta.variant) {
            return Err(config_err!(
                "checkpoint holds variant {}, expected {}",
                meta.variant,
                want
            ));
        }
    }
    let gen = Generator::new(meta.config.arch, meta.variant, meta.config.seed, DType::F32)?;
    ckpt.restore_store("gen.", gen.params())?;
    Ok(gen)
}

fn open_log(path: &Path, header: &str) -> Result<(BufWriter<File>, PathBuf)> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let fresh = !path.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    if fresh {
        writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    }
    Ok((w, path.to_path_buf()))
}
