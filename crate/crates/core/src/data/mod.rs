//! Annotation parsing, preprocessing, batching and a synthetic face corpus.

mod index;
mod preprocess;
mod sampler;
mod source;
pub mod synthetic;

pub use index::{
    load_index, parse_index, render_index, DatasetIndex, Record, Split, SplitSelection, ATTR_FILE,
    CELEBA_ATTRIBUTE_NAMES, IMAGE_DIR, PARTITION_FILE,
};
pub use preprocess::{to_rgb_image, Preprocess, RAW_HEIGHT, RAW_WIDTH};
pub use sampler::{make_target_labels, EpochSampler};
pub use source::{DirectorySource, ImageSource, MemorySource};

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use candle_core::{Device, Tensor};
use rand::Rng;

use crate::attributes::AttributeVector;
use crate::error::{config_err, contract, Result};
use crate::rng::derived_rng;

pub const DATA_ROOT_ENV: &str = "MUGAN_DATA_ROOT";

/// Data root from an explicit setting, else from `MUGAN_DATA_ROOT`.
pub fn resolve_data_root(explicit: Option<&Path>) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.to_path_buf());
    }
    match std::env::var_os(DATA_ROOT_ENV) {
        Some(v) if !v.is_empty() => Ok(PathBuf::from(v)),
        _ => Err(config_err!(
            "no data root: pass one explicitly or set {DATA_ROOT_ENV}"
        )),
    }
}

/// Images with source labels `a` and target labels `b`.
#[derive(Clone, Debug)]
pub struct Batch {
    /// (B, 3, S, S) f32 in [-1, 1].
    pub images: Tensor,
    pub a: Vec<AttributeVector>,
    pub b: Vec<AttributeVector>,
    /// Record positions in the index.
    pub records: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// An index paired with an image source and preprocessing settings.
pub struct Dataset {
    index: DatasetIndex,
    source: Box<dyn ImageSource>,
    preprocess: Preprocess,
    hflip: bool,
    cache: Option<Mutex<HashMap<usize, Arc<Vec<f32>>>>>,
}

impl Dataset {
    pub fn new(index: DatasetIndex, source: Box<dyn ImageSource>, preprocess: Preprocess) -> Result<Self> {
        preprocess.validate()?;
        Ok(Self {
            index,
            source,
            preprocess,
            hflip: false,
            cache: None,
        })
    }

    /// Open a directory laid out like the CelebA release.
    pub fn open(root: &Path, preprocess: Preprocess) -> Result<Self> {
        let index = load_index(&root.join(ATTR_FILE), &root.join(PARTITION_FILE))?;
        Self::new(index, Box::new(DirectorySource::new(root.join(IMAGE_DIR))), preprocess)
    }

    /// Randomly mirror training images (off by default).
    pub fn with_hflip(mut self, on: bool) -> Self {
        self.hflip = on;
        self
    }

    /// Keep preprocessed images in memory after first use.
    pub fn with_cache(mut self, on: bool) -> Self {
        self.cache = on.then(|| Mutex::new(HashMap::new()));
        self
    }

    pub fn index(&self) -> &DatasetIndex {
        &self.index
    }

    pub fn preprocess(&self) -> Preprocess {
        self.preprocess
    }

    pub fn image_size(&self) -> usize {
        self.preprocess.size as usize
    }

    fn image(&self, record: usize) -> Result<Arc<Vec<f32>>> {
        let rec = self
            .index
            .records
            .get(record)
            .ok_or_else(|| contract!("record {record} out of range ({} records)", self.index.len()))?;
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.lock().unwrap().get(&record) {
                return Ok(hit.clone());
            }
        }
        let pixels = Arc::new(self.preprocess.apply(&self.source.load(&rec.filename)?)?);
        if let Some(cache) = &self.cache {
            cache.lock().unwrap().insert(record, pixels.clone());
        }
        Ok(pixels)
    }

    /// Stack preprocessed images, (B, 3, S, S); `flips[i]` mirrors image `i`.
    pub fn load_images(&self, records: &[usize], flips: Option<&[bool]>) -> Result<Tensor> {
        if records.is_empty() {
            return Err(contract!("cannot load an empty batch"));
        }
        let s = self.image_size();
        let mut data = Vec::with_capacity(records.len() * 3 * s * s);
        for (i, &r) in records.iter().enumerate() {
            let img = self.image(r)?;
            if flips.is_some_and(|f| f[i]) {
                for row in img.chunks(s) {
                    data.extend(row.iter().rev());
                }
            } else {
                data.extend_from_slice(&img);
            }
        }
        Ok(Tensor::from_vec(data, (records.len(), 3, s, s), &Device::Cpu)?)
    }

    /// Load `records` with targets permuted by `rng`.
    pub fn load_batch<R: Rng + ?Sized>(&self, records: &[usize], rng: &mut R) -> Result<Batch> {
        let flips: Option<Vec<bool>> = self
            .hflip
            .then(|| records.iter().map(|_| rng.random_bool(0.5)).collect());
        let images = self.load_images(records, flips.as_deref())?;
        let a: Vec<AttributeVector> = records.iter().map(|&r| self.index.records[r].labels).collect();
        let b = make_target_labels(&a, rng);
        Ok(Batch {
            images,
            a,
            b,
            records: records.to_vec(),
        })
    }

    /// A batch of `batch_size` distinct records from `selection`, fully
    /// determined by `seed`.
    pub fn sample_batch(&self, selection: SplitSelection, batch_size: usize, seed: u64) -> Result<Batch> {
        let sampler = EpochSampler::new(self.index.select(selection), batch_size, seed)?;
        let records = &sampler.epoch_order(0)[..batch_size];
        self.load_batch(records, &mut derived_rng(seed, "targets", 0))
    }
}
