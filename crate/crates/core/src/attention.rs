//! Attention blocks used by the generator.
//!
//! * [`AucGate`]: additive attention on a U-Net skip connection. Decoder
//!   features query encoder features of the same spatial size and produce one
//!   coefficient in `[0, 1]` per position, which rescales the encoder map.
//! * [`SelfAttention`]: dense content-based attention over all `N = H * W`
//!   positions with a learned residual gain.
//!
//! Both blocks are pure functions of their inputs and parameters.

use candle_core::{Tensor, Var};

use crate::error::{config_err, contract, Result};
use crate::layers::{sigmoid, softmax_last_dim, Conv1x1};
use crate::params::Scope;

/// A batched activation tensor laid out as (B, C, H, W).
#[derive(Clone, Debug)]
pub struct FeatureMap(Tensor);

impl FeatureMap {
    /// Wrap a rank-4 tensor with non-zero dimensions and finite values.
    pub fn new(tensor: Tensor) -> Result<Self> {
        let dims = tensor.dims();
        if dims.len() != 4 || dims.iter().any(|&d| d == 0) {
            return Err(contract!("feature map must be (B, C, H, W) with non-zero dims, got {dims:?}"));
        }
        let finite = tensor
            .flatten_all()?
            .to_dtype(candle_core::DType::F64)?
            .to_vec1::<f64>()?
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(contract!("feature map contains non-finite values"));
        }
        Ok(Self(tensor))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    /// (C, H, W)
    pub fn shape(&self) -> (usize, usize, usize) {
        let d = self.0.dims();
        (d[1], d[2], d[3])
    }

    /// Number of spatial positions, `W * H`.
    pub fn positions(&self) -> usize {
        let (_, h, w) = self.shape();
        h * w
    }
}

/// Attention coefficients exposed to callers.
#[derive(Clone, Debug)]
pub enum AttentionMap {
    /// Per-position gate values, (B, 1, H, W), each in `[0, 1]`.
    Spatial(Tensor),
    /// Row-stochastic affinities, (B, N, N); row `j` holds the weights that
    /// output position `j` assigns to every input position.
    Affinity(Tensor),
}

impl AttentionMap {
    pub fn tensor(&self) -> &Tensor {
        match self {
            AttentionMap::Spatial(t) | AttentionMap::Affinity(t) => t,
        }
    }
}

/// Additive attention gate for one U-Net level.
///
/// `W_q` projects decoder features and `W_k` encoder features to `C/2`
/// channels (`C` = encoder channels); `W_t` maps the rectified sum to one
/// logit per position.
pub struct AucGate {
    w_q: Conv1x1,
    w_k: Conv1x1,
    w_t: Conv1x1,
}

impl AucGate {
    /// Gate for a symmetric level where encoder and decoder share `channels`.
    pub fn new(scope: &mut Scope, channels: usize) -> Result<Self> {
        Self::with_decoder_channels(scope, channels, channels)
    }

    /// Gate whose decoder side has a different width (asymmetric decoders).
    pub fn with_decoder_channels(
        scope: &mut Scope,
        encoder_channels: usize,
        decoder_channels: usize,
    ) -> Result<Self> {
        if encoder_channels == 0 || encoder_channels % 2 != 0 {
            return Err(config_err!(
                "attention gate needs an even channel count, got {encoder_channels}"
            ));
        }
        let inner = encoder_channels / 2;
        Ok(Self {
            w_q: Conv1x1::new(&mut scope.pp("w_q"), decoder_channels, inner)?,
            w_k: Conv1x1::new(&mut scope.pp("w_k"), encoder_channels, inner)?,
            w_t: Conv1x1::new(&mut scope.pp("w_t"), inner, 1)?,
        })
    }

    pub fn encoder_channels(&self) -> usize {
        self.w_k.in_channels()
    }

    pub fn decoder_channels(&self) -> usize {
        self.w_q.in_channels()
    }

    pub fn w_q(&self) -> &Conv1x1 {
        &self.w_q
    }

    pub fn w_k(&self) -> &Conv1x1 {
        &self.w_k
    }

    pub fn w_t(&self) -> &Conv1x1 {
        &self.w_t
    }

    /// Returns the gated encoder map and the (B, 1, H, W) coefficients.
    pub fn forward(&self, decoder: &Tensor, encoder: &Tensor) -> Result<(Tensor, Tensor)> {
        let (bd, cd, hd, wd) = decoder.dims4()?;
        let (be, ce, he, we) = encoder.dims4()?;
        if (bd, hd, wd) != (be, he, we) {
            return Err(contract!(
                "decoder {:?} and encoder {:?} maps differ in batch or spatial size",
                decoder.dims(),
                encoder.dims()
            ));
        }
        if cd != self.decoder_channels() || ce != self.encoder_channels() {
            return Err(contract!(
                "gate built for decoder/encoder channels {}/{}, got {cd}/{ce}",
                self.decoder_channels(),
                self.encoder_channels()
            ));
        }
        let additive = (self.w_q.forward(decoder)? + self.w_k.forward(encoder)?)?.relu()?;
        let alpha = sigmoid(&self.w_t.forward(&additive)?)?;
        let gated = encoder.broadcast_mul(&alpha)?;
        Ok((gated, alpha))
    }
}

/// Apply an attention gate to validated feature maps.
pub fn auc_gate(
    decoder: &FeatureMap,
    encoder: &FeatureMap,
    params: &AucGate,
) -> Result<(FeatureMap, AttentionMap)> {
    let (gated, alpha) = params.forward(decoder.tensor(), encoder.tensor())?;
    Ok((FeatureMap(gated), AttentionMap::Spatial(alpha)))
}

/// Dense self-attention with residual gain `gamma` (initialised to zero).
pub struct SelfAttention {
    w_q: Conv1x1,
    w_k: Conv1x1,
    w_v: Conv1x1,
    gamma: Var,
}

impl SelfAttention {
    pub fn new(scope: &mut Scope, channels: usize) -> Result<Self> {
        if channels == 0 || channels % 8 != 0 {
            return Err(config_err!(
                "self-attention needs a channel count divisible by 8, got {channels}"
            ));
        }
        Ok(Self {
            w_q: Conv1x1::new(&mut scope.pp("w_q"), channels, channels / 8)?,
            w_k: Conv1x1::new(&mut scope.pp("w_k"), channels, channels / 8)?,
            w_v: Conv1x1::new(&mut scope.pp("w_v"), channels, channels)?,
            gamma: scope.constant("gamma", &[1], 0.0)?,
        })
    }

    pub fn channels(&self) -> usize {
        self.w_v.in_channels()
    }

    pub fn gamma(&self) -> &Var {
        &self.gamma
    }

    pub fn w_q(&self) -> &Conv1x1 {
        &self.w_q
    }

    pub fn w_k(&self) -> &Conv1x1 {
        &self.w_k
    }

    pub fn w_v(&self) -> &Conv1x1 {
        &self.w_v
    }

    /// Returns `gamma * o + x` and the (B, N, N) affinity matrix.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let (b, c, h, w) = x.dims4()?;
        if c != self.channels() {
            return Err(contract!(
                "self-attention built for {} channels, got {c}",
                self.channels()
            ));
        }
        let n = h * w;
        let flat = x.reshape((b, c, n))?;
        let q = self.w_q.forward_flat(&flat)?;
        let k = self.w_k.forward_flat(&flat)?;
        let v = self.w_v.forward_flat(&flat)?;
        // logits[j][i] = k(x_i) . q(x_j); softmax runs over i for each j
        let logits = q.transpose(1, 2)?.contiguous()?.matmul(&k)?;
        let beta = softmax_last_dim(&logits)?;
        // o[:, j] = sum_i v[:, i] * beta[j][i]
        let o = v.matmul(&beta.transpose(1, 2)?.contiguous()?)?;
        let y = o
            .broadcast_mul(&self.gamma.reshape((1, 1, 1))?)?
            .add(&flat)?
            .reshape((b, c, h, w))?;
        Ok((y, beta))
    }
}

/// Apply self-attention to a validated feature map.
pub fn self_attention(x: &FeatureMap, params: &SelfAttention) -> Result<(FeatureMap, AttentionMap)> {
    let (y, beta) = params.forward(x.tensor())?;
    Ok((FeatureMap(y), AttentionMap::Affinity(beta)))
}
