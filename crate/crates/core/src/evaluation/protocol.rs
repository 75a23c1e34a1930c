use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use super::metrics::{psnr, ssim};
use crate::attributes::{AttributeVector, NUM_ATTRIBUTES};
use crate::data::Dataset;
use crate::error::{config_err, contract, Result};
use crate::networks::{labels_tensor, AttrClassifier, Generator};

/// Anything that maps images and target labels to edited images.
pub trait AttributeEditor {
    fn image_size(&self) -> usize;

    /// Edit each image in `x` (B, 3, S, S) towards the matching `targets` row.
    fn edit(&self, x: &Tensor, targets: &[AttributeVector]) -> Result<Tensor>;

    /// Several edits of the same images, one output per target set.
    fn edit_many(&self, x: &Tensor, target_sets: &[Vec<AttributeVector>]) -> Result<Vec<Tensor>> {
        target_sets.iter().map(|t| self.edit(x, t)).collect()
    }
}

impl AttributeEditor for Generator {
    fn image_size(&self) -> usize {
        self.arch().image_size
    }

    fn edit(&self, x: &Tensor, targets: &[AttributeVector]) -> Result<Tensor> {
        Ok(self.generate(x, &labels_tensor(targets, DType::F32)?)?.detach())
    }

    fn edit_many(&self, x: &Tensor, target_sets: &[Vec<AttributeVector>]) -> Result<Vec<Tensor>> {
        let enc = self.encode(x)?;
        target_sets
            .iter()
            .map(|t| Ok(self.decode(&enc, &labels_tensor(t, DType::F32)?)?.detach()))
            .collect()
    }
}

/// Returns its input unchanged, whatever the targets.
pub struct IdentityEditor {
    pub image_size: usize,
}

impl AttributeEditor for IdentityEditor {
    fn image_size(&self) -> usize {
        self.image_size
    }

    fn edit(&self, x: &Tensor, targets: &[AttributeVector]) -> Result<Tensor> {
        if x.dim(0)? != targets.len() {
            return Err(contract!("{} images but {} targets", x.dim(0)?, targets.len()));
        }
        Ok(x.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyResult {
    /// Success rate of flipping each attribute, in attribute order.
    pub per_attribute: Vec<f64>,
    pub mean: f64,
    pub images: usize,
}

fn check_inputs(editor: &dyn AttributeEditor, dataset: &Dataset, records: &[usize], batch: usize) -> Result<()> {
    if records.is_empty() || batch == 0 {
        return Err(contract!("evaluation needs records and a positive batch size"));
    }
    if editor.image_size() != dataset.image_size() {
        return Err(config_err!(
            "editor works at {}px but the dataset yields {}px",
            editor.image_size(),
            dataset.image_size()
        ));
    }
    Ok(())
}

/// For every image and attribute `k`, flip `k` (hair colours stay
/// exclusive), edit, classify, and count a success when the classifier's
/// bit `k` equals the target's.
pub fn attr_accuracy(
    editor: &dyn AttributeEditor,
    clf: &AttrClassifier,
    dataset: &Dataset,
    records: &[usize],
    batch_size: usize,
) -> Result<AccuracyResult> {
    check_inputs(editor, dataset, records, batch_size)?;
    if !clf.config().covers_all_attributes() {
        return Err(config_err!("accuracy needs a classifier over all {NUM_ATTRIBUTES} attributes"));
    }
    if clf.config().image_size != editor.image_size() {
        return Err(config_err!(
            "classifier expects {}px but the editor produces {}px",
            clf.config().image_size,
            editor.image_size()
        ));
    }
    let mut hits = [0usize; NUM_ATTRIBUTES];
    for chunk in records.chunks(batch_size) {
        let x = dataset.load_images(chunk, None)?;
        let source: Vec<AttributeVector> = chunk.iter().map(|&r| dataset.index().records[r].labels).collect();
        let targets: Vec<Vec<AttributeVector>> = (0..NUM_ATTRIBUTES)
            .map(|k| source.iter().map(|a| a.flipped(k)).collect())
            .collect();
        let edited = editor.edit_many(&x, &targets)?;
        for (k, (out, tgt)) in edited.iter().zip(&targets).enumerate() {
            let probs: Vec<Vec<f32>> = clf.probabilities(out)?.to_dtype(DType::F32)?.to_vec2()?;
            hits[k] += probs
                .iter()
                .zip(tgt)
                .filter(|(p, t)| (p[k] > 0.5) == t.get(k))
                .count();
        }
    }
    let per_attribute: Vec<f64> = hits.iter().map(|&h| h as f64 / records.len() as f64).collect();
    let mean = per_attribute.iter().sum::<f64>() / NUM_ATTRIBUTES as f64;
    Ok(AccuracyResult {
        per_attribute,
        mean,
        images: records.len(),
    })
}

/// Mean PSNR and SSIM of `edit(x, a)` against `x`.
pub fn eval_reconstruction(
    editor: &dyn AttributeEditor,
    dataset: &Dataset,
    records: &[usize],
    batch_size: usize,
) -> Result<(f64, f64)> {
    check_inputs(editor, dataset, records, batch_size)?;
    let (mut p, mut s) = (0.0, 0.0);
    for chunk in records.chunks(batch_size) {
        let x = dataset.load_images(chunk, None)?;
        let a: Vec<AttributeVector> = chunk.iter().map(|&r| dataset.index().records[r].labels).collect();
        let rec = editor.edit(&x, &a)?;
        for i in 0..chunk.len() {
            let (xi, ri) = (x.get(i)?, rec.get(i)?);
            p += psnr(&xi, &ri)?;
            s += ssim(&xi, &ri)?;
        }
    }
    let n = records.len() as f64;
    Ok((p / n, s / n))
}
