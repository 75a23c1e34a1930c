use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use super::check_image;
use crate::attributes::{attribute_index, ATTRIBUTE_NAMES};
use crate::error::{config_err, Result};
use crate::layers::{sigmoid, BatchNorm, Conv2d, Linear};
use crate::params::{ParamStore, Scope};

/// Residual attribute classifier used only for evaluation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub image_size: usize,
    pub base_width: usize,
    /// Basic blocks per residual group; group `g` has `base_width * 2^g`
    /// channels and every group after the first starts with stride 2.
    pub groups: Vec<usize>,
    /// Attributes predicted, in output order.
    pub attributes: Vec<String>,
}

impl ClassifierConfig {
    pub fn full() -> Self {
        Self {
            image_size: 128,
            base_width: 64,
            groups: vec![3, 4, 6],
            attributes: ATTRIBUTE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn with_attributes(mut self, names: &[&str]) -> Result<Self> {
        for n in names {
            attribute_index(n)?;
        }
        self.attributes = names.iter().map(|s| s.to_string()).collect();
        Ok(self)
    }

    /// Column of each output in the 13-attribute order.
    pub fn attribute_columns(&self) -> Result<Vec<usize>> {
        self.attributes.iter().map(|n| attribute_index(n)).collect()
    }

    pub fn covers_all_attributes(&self) -> bool {
        self.attributes.len() == ATTRIBUTE_NAMES.len()
            && self.attributes.iter().zip(ATTRIBUTE_NAMES).all(|(a, b)| a == b)
    }
}

struct BasicBlock {
    conv1: Conv2d,
    bn1: BatchNorm,
    conv2: Conv2d,
    bn2: BatchNorm,
    shortcut: Option<(Conv2d, BatchNorm)>,
}

impl BasicBlock {
    fn new(s: &mut Scope, cin: usize, cout: usize, stride: usize) -> Result<Self> {
        let shortcut = if stride != 1 || cin != cout {
            Some((
                Conv2d::new(&mut s.pp("down"), cin, cout, 1, stride, 0, false)?,
                BatchNorm::new(&mut s.pp("down_bn"), cout)?,
            ))
        } else {
            None
        };
        Ok(Self {
            conv1: Conv2d::new(&mut s.pp("conv1"), cin, cout, 3, stride, 1, false)?,
            bn1: BatchNorm::new(&mut s.pp("bn1"), cout)?,
            conv2: Conv2d::new(&mut s.pp("conv2"), cout, cout, 3, 1, 1, false)?,
            bn2: BatchNorm::new(&mut s.pp("bn2"), cout)?,
            shortcut,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let h = self.bn1.forward(&self.conv1.forward(x)?, train)?.relu()?;
        let h = self.bn2.forward(&self.conv2.forward(&h)?, train)?;
        let skip = match &self.shortcut {
            Some((conv, bn)) => bn.forward(&conv.forward(x)?, train)?,
            None => x.clone(),
        };
        Ok((h + skip)?.relu()?)
    }
}

pub struct AttrClassifier {
    config: ClassifierConfig,
    store: ParamStore,
    stem: (Conv2d, BatchNorm),
    blocks: Vec<BasicBlock>,
    head: Linear,
}

impl AttrClassifier {
    pub fn new(config: ClassifierConfig, seed: u64, dtype: DType) -> Result<Self> {
        if config.attributes.is_empty() || config.groups.is_empty() || config.base_width == 0 {
            return Err(config_err!("classifier needs attributes, groups and a width"));
        }
        config.attribute_columns()?;
        let mut store = ParamStore::new(seed, dtype);
        let mut root = store.scope("clf");
        let w = config.base_width;
        let stem = (
            Conv2d::new(&mut root.pp("stem"), 3, w, 3, 1, 1, false)?,
            BatchNorm::new(&mut root.pp("stem_bn"), w)?,
        );
        let mut blocks = Vec::new();
        let mut cin = w;
        for (g, &count) in config.groups.iter().enumerate() {
            let cout = w << g;
            for i in 0..count {
                let stride = if g > 0 && i == 0 { 2 } else { 1 };
                blocks.push(BasicBlock::new(
                    &mut root.pp(&format!("group{g}.block{i}")),
                    cin,
                    cout,
                    stride,
                )?);
                cin = cout;
            }
        }
        let head = Linear::new(&mut root.pp("fc"), cin, config.attributes.len())?;
        Ok(Self {
            config,
            store,
            stem,
            blocks,
            head,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// Pre-sigmoid scores, (B, attributes).
    pub fn logits(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        check_image(x, self.config.image_size)?;
        let x = x.to_dtype(self.store.dtype())?;
        let mut h = self
            .stem
            .1
            .forward(&self.stem.0.forward(&x)?, train)?
            .relu()?;
        for block in &self.blocks {
            h = block.forward(&h, train)?;
        }
        let pooled = h.mean((2, 3))?;
        self.head.forward(&pooled)
    }

    /// Per-attribute probabilities in (0, 1).
    pub fn probabilities(&self, x: &Tensor) -> Result<Tensor> {
        sigmoid(&self.logits(x, false)?)
    }
}
