//! Attention U-Net GAN for facial attribute editing.
//!
//! The generator is a symmetric encoder-decoder whose skip connections pass
//! through additive attention gates, with optional self-attention layers. It
//! is trained as a WGAN critic/generator pair with attribute classification
//! and L1 reconstruction terms, and evaluated by attribute-manipulation
//! accuracy and reconstruction PSNR/SSIM.

pub mod attention;
pub mod attributes;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod layers;
pub mod losses;
pub mod networks;
pub mod optim;
pub mod params;
pub mod rng;
pub mod training;

pub use attention::{auc_gate, self_attention, AttentionMap, AucGate, FeatureMap, SelfAttention};
pub use attributes::{AttributeVector, ATTRIBUTE_NAMES, NUM_ATTRIBUTES};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use data::{Batch, Dataset, DatasetIndex, Preprocess, SplitSelection};
pub use error::{Error, Result};
pub use evaluation::{attr_accuracy, eval_reconstruction, psnr, render_report, ssim, EvalReport};
pub use losses::LossWeights;
pub use networks::{
    build_variant, labels_tensor, ArchConfig, AttrClassifier, ClassifierConfig, Discriminator,
    EncoderStack, Generator, VariantSpec,
};
pub use training::{TrainConfig, Trainer};
