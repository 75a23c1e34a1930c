use candle_core::{DType, Tensor};

use super::{check_image, ArchConfig};
use crate::attributes::NUM_ATTRIBUTES;
use crate::error::Result;
use crate::layers::{enable_higher_order_grads, leaky_relu, Conv2d, InstanceNorm, Linear};
use crate::params::ParamStore;

const LEAK: f64 = 0.2;

/// Shared convolutional backbone with two linear heads: an unbounded
/// real/fake critic score and 13 attribute logits.
pub struct Discriminator {
    arch: ArchConfig,
    store: ParamStore,
    backbone: Vec<(Conv2d, InstanceNorm)>,
    adv_head: Linear,
    cls_head: Linear,
}

impl Discriminator {
    pub fn new(arch: ArchConfig, seed: u64, dtype: DType) -> Result<Self> {
        arch.validate()?;
        // the critic is trained with a gradient penalty
        enable_higher_order_grads();
        let mut store = ParamStore::new(seed, dtype);
        let mut root = store.scope("disc");
        let mut backbone = Vec::with_capacity(arch.depth);
        for level in 1..=arch.depth {
            let mut s = root.pp(&format!("conv{level}"));
            let (cin, cout) = (arch.width(level - 1), arch.width(level));
            backbone.push((
                Conv2d::new(&mut s.pp("conv"), cin, cout, 4, 2, 1, true)?,
                InstanceNorm::new(&mut s.pp("norm"), cout)?,
            ));
        }
        let s = arch.map_size(arch.depth);
        let features = arch.width(arch.depth) * s * s;
        let adv_head = Linear::new(&mut root.pp("adv"), features, 1)?;
        let cls_head = Linear::new(&mut root.pp("cls"), features, NUM_ATTRIBUTES)?;
        Ok(Self {
            arch,
            store,
            backbone,
            adv_head,
            cls_head,
        })
    }

    pub fn arch(&self) -> ArchConfig {
        self.arch
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// Flattened backbone activations, (B, features).
    pub fn backbone(&self, x: &Tensor) -> Result<Tensor> {
        check_image(x, self.arch.image_size)?;
        let mut h = x.to_dtype(self.store.dtype())?;
        for (conv, norm) in &self.backbone {
            h = leaky_relu(&norm.forward(&conv.forward(&h)?)?, LEAK)?;
        }
        Ok(h.flatten_from(1)?)
    }

    /// Critic scores (B,) and attribute logits (B, 13) from one backbone pass.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let h = self.backbone(x)?;
        let adv = self.adv_head.forward(&h)?.squeeze(1)?;
        let logits = self.cls_head.forward(&h)?;
        Ok((adv, logits))
    }

    pub fn adv_score(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.backbone(x)?;
        Ok(self.adv_head.forward(&h)?.squeeze(1)?)
    }
}
