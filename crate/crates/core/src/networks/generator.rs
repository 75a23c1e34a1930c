use std::collections::BTreeMap;

use candle_core::{DType, Tensor};

use super::{check_image, ArchConfig, VariantSpec};
use crate::attention::{AucGate, SelfAttention};
use crate::attributes::NUM_ATTRIBUTES;
use crate::error::{config_err, contract, Result};
use crate::layers::{Conv2d, ConvTranspose2d, InstanceNorm};
use crate::params::ParamStore;

struct EncoderLayer {
    conv: Conv2d,
    norm: InstanceNorm,
    attention: Option<SelfAttention>,
}

struct DecoderLayer {
    deconv: ConvTranspose2d,
    // absent on the output layer
    norm: Option<InstanceNorm>,
    attention: Option<SelfAttention>,
}

/// Per-level encoder outputs `f_e^1 .. f_e^depth`.
#[derive(Clone, Debug)]
pub struct EncoderStack {
    features: Vec<Tensor>,
}

impl EncoderStack {
    /// Output of encoder level `level` (1-based).
    pub fn level(&self, level: usize) -> &Tensor {
        &self.features[level - 1]
    }

    pub fn depth(&self) -> usize {
        self.features.len()
    }

    pub fn innermost(&self) -> &Tensor {
        self.features.last().expect("encoder stack is never empty")
    }
}

/// Encoder-decoder generator with optional attention gates on the skips and
/// self-attention after selected convolutions.
///
/// Encoder level `i` is a 4x4 stride-2 conv, instance norm and ReLU. The
/// decoder mirrors it with 4x4 stride-2 transposed convs. The target label
/// is tiled over the innermost map and concatenated to it; at each gated
/// level the gated encoder map is concatenated in front of the decoder map
/// before the next transposed conv. The last layer ends in `tanh`.
pub struct Generator {
    arch: ArchConfig,
    variant: VariantSpec,
    store: ParamStore,
    encoder: Vec<EncoderLayer>,
    // decoder[j] produces the level-j map (j = 0 is the image)
    decoder: Vec<DecoderLayer>,
    gates: BTreeMap<usize, AucGate>,
}

impl Generator {
    pub fn new(arch: ArchConfig, variant: VariantSpec, seed: u64, dtype: DType) -> Result<Self> {
        arch.validate()?;
        let top = arch.depth - 1;
        if let Some(&l) = variant.auc_levels.iter().find(|&&l| l == 0 || l > top) {
            return Err(config_err!(
                "attention gate at level {l} is outside 1..={top} for depth {}",
                arch.depth
            ));
        }
        let sa_levels = variant.sa_levels();
        if let Some(&l) = sa_levels.iter().find(|&&l| l == 0 || l > top) {
            return Err(config_err!(
                "self-attention at level {l} is outside 1..={top} for depth {}",
                arch.depth
            ));
        }

        let mut store = ParamStore::new(seed, dtype);
        let mut root = store.scope("gen");

        let mut encoder = Vec::with_capacity(arch.depth);
        for level in 1..=arch.depth {
            let mut s = root.pp(&format!("enc{level}"));
            let (cin, cout) = (arch.width(level - 1), arch.width(level));
            encoder.push(EncoderLayer {
                conv: Conv2d::new(&mut s.pp("conv"), cin, cout, 4, 2, 1, true)?,
                norm: InstanceNorm::new(&mut s.pp("norm"), cout)?,
                attention: if sa_levels.contains(&level) {
                    Some(SelfAttention::new(&mut s.pp("sa"), cout)?)
                } else {
                    None
                },
            });
        }

        let dec_width = |level: usize| -> usize {
            if level == 0 {
                3
            } else if variant.symmetric {
                arch.width(level)
            } else {
                // AttGAN-style decoder: one level wider than the mirrored encoder
                arch.width(level + 1)
            }
        };
        let mut gates = BTreeMap::new();
        for &level in &variant.auc_levels {
            let gate = AucGate::with_decoder_channels(
                &mut root.pp(&format!("auc{level}")),
                arch.width(level),
                dec_width(level),
            )?;
            gates.insert(level, gate);
        }

        let mut decoder = Vec::with_capacity(arch.depth);
        for level in 0..arch.depth {
            let input = if level + 1 == arch.depth {
                arch.width(arch.depth) + NUM_ATTRIBUTES
            } else {
                let gated = if gates.contains_key(&(level + 1)) {
                    arch.width(level + 1)
                } else {
                    0
                };
                dec_width(level + 1) + gated
            };
            let out = dec_width(level);
            let mut s = root.pp(&format!("dec{level}"));
            decoder.push(DecoderLayer {
                deconv: ConvTranspose2d::new(&mut s.pp("deconv"), input, out, 4, 2, 1)?,
                norm: if level > 0 {
                    Some(InstanceNorm::new(&mut s.pp("norm"), out)?)
                } else {
                    None
                },
                attention: if level > 0 && sa_levels.contains(&level) {
                    Some(SelfAttention::new(&mut s.pp("sa"), out)?)
                } else {
                    None
                },
            });
        }

        Ok(Self {
            arch,
            variant,
            store,
            encoder,
            decoder,
            gates,
        })
    }

    pub fn arch(&self) -> ArchConfig {
        self.arch
    }

    pub fn variant(&self) -> &VariantSpec {
        &self.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn parameter_count(&self) -> usize {
        self.store.parameter_count()
    }

    pub fn gate(&self, level: usize) -> Option<&AucGate> {
        self.gates.get(&level)
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    /// Levels of the encoder and decoder maps carrying self-attention.
    pub fn self_attention_levels(&self) -> (Vec<usize>, Vec<usize>) {
        let enc = (1..=self.arch.depth)
            .filter(|&l| self.encoder[l - 1].attention.is_some())
            .collect();
        let dec = (1..self.arch.depth)
            .filter(|&l| self.decoder[l].attention.is_some())
            .collect();
        (enc, dec)
    }

    pub fn self_attention_layers(&self) -> impl Iterator<Item = &SelfAttention> {
        self.encoder
            .iter()
            .filter_map(|l| l.attention.as_ref())
            .chain(self.decoder.iter().filter_map(|l| l.attention.as_ref()))
    }

    /// Channel count of the tensor fed to the transposed conv at `level`
    /// (`level` = depth is the label-conditioned bottleneck).
    pub fn decoder_input_channels(&self, level: usize) -> usize {
        self.decoder[level - 1].deconv_in()
    }

    pub fn encode(&self, x: &Tensor) -> Result<EncoderStack> {
        check_image(x, self.arch.image_size)?;
        let mut h = x.to_dtype(self.store.dtype())?;
        let mut features = Vec::with_capacity(self.arch.depth);
        for layer in &self.encoder {
            h = layer.norm.forward(&layer.conv.forward(&h)?)?.relu()?;
            if let Some(sa) = &layer.attention {
                h = sa.forward(&h)?.0;
            }
            features.push(h.clone());
        }
        Ok(EncoderStack { features })
    }

    /// Decode an encoder stack under target labels `labels` (B, 13).
    pub fn decode(&self, enc: &EncoderStack, labels: &Tensor) -> Result<Tensor> {
        if enc.depth() != self.arch.depth {
            return Err(config_err!(
                "encoder stack has {} levels, generator expects {}",
                enc.depth(),
                self.arch.depth
            ));
        }
        for level in 1..=self.arch.depth {
            let c = enc.level(level).dims()[1];
            if c != self.arch.width(level) {
                return Err(config_err!(
                    "encoder level {level} has {c} channels, generator expects {}",
                    self.arch.width(level)
                ));
            }
        }
        let inner = enc.innermost();
        let (b, _, s, _) = inner.dims4()?;
        if labels.dims() != [b, NUM_ATTRIBUTES] {
            return Err(contract!(
                "labels must be ({b}, {NUM_ATTRIBUTES}), got {:?}",
                labels.dims()
            ));
        }
        let tiled = labels
            .to_dtype(inner.dtype())?
            .reshape((b, NUM_ATTRIBUTES, 1, 1))?
            .broadcast_as((b, NUM_ATTRIBUTES, s, s))?;
        let mut h = Tensor::cat(&[inner, &tiled], 1)?;
        for level in (0..self.arch.depth).rev() {
            let layer = &self.decoder[level];
            h = layer.deconv.forward(&h)?;
            let Some(norm) = &layer.norm else {
                return Ok(h.tanh()?);
            };
            h = norm.forward(&h)?.relu()?;
            if let Some(sa) = &layer.attention {
                h = sa.forward(&h)?.0;
            }
            if let Some(gate) = self.gates.get(&level) {
                let (gated, _) = gate.forward(&h, enc.level(level))?;
                h = Tensor::cat(&[&gated, &h], 1)?;
            }
        }
        unreachable!("decoder always ends with the output layer")
    }

    /// Edit `x` towards labels `labels`: `decode(encode(x), labels)`.
    pub fn generate(&self, x: &Tensor, labels: &Tensor) -> Result<Tensor> {
        let enc = self.encode(x)?;
        self.decode(&enc, labels)
    }
}

impl DecoderLayer {
    fn deconv_in(&self) -> usize {
        self.deconv.in_channels()
    }
}
