//! Generator, discriminator, evaluation classifier and the variant factory.

mod classifier;
mod discriminator;
mod generator;
mod variant;

pub use classifier::{AttrClassifier, ClassifierConfig};
pub use discriminator::Discriminator;
pub use generator::{EncoderStack, Generator};
pub use variant::{parse_variant_list, VariantSpec, REFERENCE_RESOLUTION, SA_MAP_SIZES};

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeVector, NUM_ATTRIBUTES};
use crate::error::{config_err, contract, Result};

/// Resolution and width of the convolutional stacks.
///
/// Level `i` (1-based) of the encoder outputs `base_width * 2^(i-1)`
/// channels at `image_size / 2^i` pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub image_size: usize,
    pub base_width: usize,
    pub depth: usize,
}

impl ArchConfig {
    /// 128x128 input, widths 64..1024, five levels.
    pub fn full() -> Self {
        Self {
            image_size: 128,
            base_width: 64,
            depth: 5,
        }
    }

    /// Reduced 64x64 profile for desk-scale runs.
    pub fn smoke() -> Self {
        Self {
            image_size: 64,
            base_width: 16,
            depth: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(config_err!("need at least two levels, got {}", self.depth));
        }
        if self.base_width == 0 || self.base_width % 8 != 0 {
            return Err(config_err!(
                "base width must be a positive multiple of 8, got {}",
                self.base_width
            ));
        }
        if !self.image_size.is_power_of_two() || self.image_size >> self.depth == 0 {
            return Err(config_err!(
                "image size {} cannot be halved {} times",
                self.image_size,
                self.depth
            ));
        }
        Ok(())
    }

    /// Channels of encoder level `level` (1..=depth); level 0 is the RGB image.
    pub fn width(&self, level: usize) -> usize {
        if level == 0 {
            3
        } else {
            self.base_width << (level - 1)
        }
    }

    /// Spatial size of level `level`.
    pub fn map_size(&self, level: usize) -> usize {
        self.image_size >> level
    }
}

/// Encode label vectors as a (B, 13) real tensor of zeros and ones.
pub fn labels_tensor(labels: &[AttributeVector], dtype: DType) -> Result<Tensor> {
    let data: Vec<f32> = labels.iter().flat_map(|l| l.to_f32()).collect();
    Ok(Tensor::from_vec(data, (labels.len(), NUM_ATTRIBUTES), &Device::Cpu)?.to_dtype(dtype)?)
}

pub(crate) fn check_image(x: &Tensor, size: usize) -> Result<usize> {
    match x.dims() {
        &[b, 3, h, w] if h == size && w == size && b > 0 => Ok(b),
        d => Err(contract!("expected images of shape (B, 3, {size}, {size}), got {d:?}")),
    }
}

/// Build a freshly initialised generator/discriminator pair for `spec`.
pub fn build_variant(
    spec: &VariantSpec,
    arch: ArchConfig,
    seed: u64,
    dtype: DType,
) -> Result<(Generator, Discriminator)> {
    let gen = Generator::new(arch, spec.clone(), seed, dtype)?;
    let disc = Discriminator::new(arch, seed, dtype)?;
    Ok((gen, disc))
}
