//! Thin layer wrappers over candle tensor ops.

use std::cell::Cell;
use std::sync::Once;

use candle_core::{Device, Tensor, Var, D};

use crate::error::{config_err, contract, Result};
use crate::params::{Scope, INIT_STD};

const NORM_EPS: f64 = 1e-5;

static HIGHER_ORDER: Once = Once::new();

/// Keep the autograd graph of gradients alive so that a gradient can itself
/// be differentiated (needed by the gradient penalty).
///
/// The setting is read once per thread, on that thread's first backward pass,
/// so this must run before any backward pass on threads that need it.
pub fn enable_higher_order_grads() {
    HIGHER_ORDER.call_once(|| std::env::set_var("CANDLE_GRAD_DO_NOT_DETACH", "1"));
}

thread_local! {
    static HIGHER_ORDER_OK: Cell<Option<bool>> = const { Cell::new(None) };
}

/// Fails if gradients on the current thread are detached from the graph.
pub fn ensure_higher_order_grads() -> Result<()> {
    enable_higher_order_grads();
    let ok = match HIGHER_ORDER_OK.with(Cell::get) {
        Some(ok) => ok,
        None => {
            let ok = probe_second_order()?;
            HIGHER_ORDER_OK.with(|c| c.set(Some(ok)));
            ok
        }
    };
    if ok {
        Ok(())
    } else {
        Err(config_err!(
            "second-order gradients are unavailable on this thread: \
             call enable_higher_order_grads() before the first backward pass"
        ))
    }
}

/// d2/dx2 of x^4 at 1.5 is 27; a detached chain yields 9.
fn probe_second_order() -> Result<bool> {
    let x = Var::new(&[1.5f64], &Device::Cpu)?;
    let y = x.sqr()?.sqr()?.sum_all()?;
    let grads = y.backward()?;
    let gx = match grads.get(&x) {
        Some(g) => g.sum_all()?,
        None => return Ok(false),
    };
    let second = match gx.backward()?.get(&x) {
        Some(g) => g.sum_all()?.to_scalar::<f64>()?,
        None => return Ok(false),
    };
    Ok((second - 27.0).abs() < 1e-9)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok(x.maximum(&(x * slope)?)?)
}

/// Logistic function written through `tanh` so that saturated inputs keep
/// finite gradients.
pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(((x * 0.5)?.tanh()? + 1.0)?.affine(0.5, 0.0)?)
}

/// Softmax over the last dimension, shifted by the (detached) row maximum.
pub fn softmax_last_dim(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    let sum = e.sum_keepdim(D::Minus1)?;
    Ok(e.broadcast_div(&sum)?)
}

/// 2-D convolution, weight laid out as (out, in, k, k).
pub struct Conv2d {
    weight: Var,
    bias: Option<Var>,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    pub fn new(
        scope: &mut Scope,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = scope.normal("weight", &[out_ch, in_ch, kernel, kernel], INIT_STD)?;
        let bias = if bias {
            Some(scope.constant("bias", &[out_ch], 0.0)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4()?;
        let y = if cubic(c, h, w) {
            let k = zero_channel(&self.weight, 1)?;
            zero_channel(x, 1)?.conv2d(&k, self.padding, self.stride, 1, 1)?
        } else {
            x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?
        };
        match &self.bias {
            Some(b) => Ok(y.broadcast_add(&b.reshape((1, (), 1, 1))?)?),
            None => Ok(y),
        }
    }
}

/// candle's CPU conv2d misreads contiguous (B, C, H, W) inputs with C == H == W
/// as channels-last, so such inputs get a spare zero channel.
fn cubic(c: usize, h: usize, w: usize) -> bool {
    c == h && h == w
}

fn zero_channel(t: &Tensor, dim: usize) -> Result<Tensor> {
    let mut dims = t.dims().to_vec();
    dims[dim] = 1;
    let zeros = Tensor::zeros(dims, t.dtype(), t.device())?;
    Ok(Tensor::cat(&[t, &zeros], dim)?)
}

/// Transposed convolution, weight laid out as (in, out, k, k).
pub struct ConvTranspose2d {
    weight: Var,
    bias: Option<Var>,
    stride: usize,
    padding: usize,
}

impl ConvTranspose2d {
    pub fn new(
        scope: &mut Scope,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let weight = scope.normal("weight", &[in_ch, out_ch, kernel, kernel], INIT_STD)?;
        let bias = Some(scope.constant("bias", &[out_ch], 0.0)?);
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = x.dims4()?;
        let (c, k) = (self.weight.dims()[1], self.weight.dims()[2]);
        let out = |n: usize| (n - 1) * self.stride + k - 2 * self.padding;
        let y = if cubic(c, out(h), out(w)) {
            let k = zero_channel(&self.weight, 1)?;
            x.conv_transpose2d(&k, self.padding, 0, self.stride, 1)?.narrow(1, 0, c)?
        } else {
            x.conv_transpose2d(&self.weight, self.padding, 0, self.stride, 1)?
        };
        match &self.bias {
            Some(b) => Ok(y.broadcast_add(&b.reshape((1, (), 1, 1))?)?),
            None => Ok(y),
        }
    }
}

/// Channel-wise 1x1 projection, computed as a batched matmul.
pub struct Conv1x1 {
    weight: Var,
    bias: Var,
}

impl Conv1x1 {
    pub fn new(scope: &mut Scope, in_ch: usize, out_ch: usize) -> Result<Self> {
        Ok(Self {
            weight: scope.normal("weight", &[out_ch, in_ch], INIT_STD)?,
            bias: scope.constant("bias", &[out_ch], 0.0)?,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn weight(&self) -> &Var {
        &self.weight
    }

    pub fn bias(&self) -> &Var {
        &self.bias
    }

    /// (B, C, N) -> (B, O, N)
    pub fn forward_flat(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.weight.broadcast_matmul(x)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, (), 1))?)?)
    }

    /// (B, C, H, W) -> (B, O, H, W)
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        if c != self.in_channels() {
            return Err(contract!(
                "1x1 projection expects {} channels, got {c}",
                self.in_channels()
            ));
        }
        let y = self.forward_flat(&x.reshape((b, c, h * w))?)?;
        Ok(y.reshape((b, self.out_channels(), h, w))?)
    }
}

pub struct Linear {
    weight: Var,
    bias: Var,
}

impl Linear {
    pub fn new(scope: &mut Scope, in_dim: usize, out_dim: usize) -> Result<Self> {
        Ok(Self {
            weight: scope.normal("weight", &[out_dim, in_dim], INIT_STD)?,
            bias: scope.constant("bias", &[out_dim], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }
}

/// Per-sample, per-channel normalization with a learned affine transform.
pub struct InstanceNorm {
    weight: Var,
    bias: Var,
}

impl InstanceNorm {
    pub fn new(scope: &mut Scope, channels: usize) -> Result<Self> {
        Ok(Self {
            weight: scope.constant("weight", &[channels], 1.0)?,
            bias: scope.constant("bias", &[channels], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim((2, 3))?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim((2, 3))?;
        let normed = centered.broadcast_div(&(var + NORM_EPS)?.sqrt()?)?;
        let w = self.weight.reshape((1, (), 1, 1))?;
        let b = self.bias.reshape((1, (), 1, 1))?;
        Ok(normed.broadcast_mul(&w)?.broadcast_add(&b)?)
    }
}

/// Batch normalization with running statistics (momentum 0.1).
pub struct BatchNorm {
    weight: Var,
    bias: Var,
    running_mean: Var,
    running_var: Var,
}

impl BatchNorm {
    const MOMENTUM: f64 = 0.1;

    pub fn new(scope: &mut Scope, channels: usize) -> Result<Self> {
        Ok(Self {
            weight: scope.constant("weight", &[channels], 1.0)?,
            bias: scope.constant("bias", &[channels], 0.0)?,
            running_mean: scope.buffer("running_mean", &[channels], 0.0)?,
            running_var: scope.buffer("running_var", &[channels], 1.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (b, _, h, w) = x.dims4()?;
        let (mean, var) = if train {
            let mean = x.mean_keepdim((0, 2, 3))?;
            let var = x.broadcast_sub(&mean)?.sqr()?.mean_keepdim((0, 2, 3))?;
            let n = (b * h * w) as f64;
            let unbiased = if n > 1.0 {
                (var.detach() * (n / (n - 1.0)))?
            } else {
                var.detach()
            };
            let m = Self::MOMENTUM;
            let rm = ((self.running_mean.as_tensor() * (1.0 - m))? + (mean.detach().flatten_all()? * m)?)?;
            let rv = ((self.running_var.as_tensor() * (1.0 - m))? + (unbiased.flatten_all()? * m)?)?;
            self.running_mean.set(&rm)?;
            self.running_var.set(&rv)?;
            (mean, var)
        } else {
            (
                self.running_mean.reshape((1, (), 1, 1))?,
                self.running_var.reshape((1, (), 1, 1))?,
            )
        };
        let normed = x
            .broadcast_sub(&mean)?
            .broadcast_div(&(var + NORM_EPS)?.sqrt()?)?;
        let wt = self.weight.reshape((1, (), 1, 1))?;
        let bs = self.bias.reshape((1, (), 1, 1))?;
        Ok(normed.broadcast_mul(&wt)?.broadcast_add(&bs)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use candle_core::DType;

    #[test]
    fn stride_two_convs_halve_and_double() {
        let mut store = ParamStore::new(1, DType::F32);
        let mut s = store.scope("t");
        let conv = Conv2d::new(&mut s.pp("c"), 3, 8, 4, 2, 1, true).unwrap();
        let deconv = ConvTranspose2d::new(&mut s.pp("d"), 8, 3, 4, 2, 1).unwrap();
        let x = Tensor::zeros((2, 3, 16, 16), DType::F32, &Device::Cpu).unwrap();
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.dims(), &[2, 8, 8, 8]);
        assert_eq!(deconv.forward(&y).unwrap().dims(), &[2, 3, 16, 16]);
    }

    /// Direct (B, C, H, W) convolution, weight (out, in, k, k).
    fn naive_conv(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
        let (b, c, h, w) = x.dims4().unwrap();
        let (o, _, kh, kw) = k.dims4().unwrap();
        let xv: Vec<f64> = x.flatten_all().unwrap().to_vec1().unwrap();
        let kv: Vec<f64> = k.flatten_all().unwrap().to_vec1().unwrap();
        let (ho, wo) = ((h + 2 * pad - kh) / stride + 1, (w + 2 * pad - kw) / stride + 1);
        let mut out = vec![0.0; b * o * ho * wo];
        for n in 0..b {
            for f in 0..o {
                for i in 0..ho {
                    for j in 0..wo {
                        let mut acc = 0.0;
                        for ch in 0..c {
                            for u in 0..kh {
                                for v in 0..kw {
                                    let y = (i * stride + u) as isize - pad as isize;
                                    let z = (j * stride + v) as isize - pad as isize;
                                    if y >= 0 && z >= 0 && (y as usize) < h && (z as usize) < w {
                                        acc += xv[((n * c + ch) * h + y as usize) * w + z as usize]
                                            * kv[((f * c + ch) * kh + u) * kw + v];
                                    }
                                }
                            }
                        }
                        out[((n * o + f) * ho + i) * wo + j] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn convs_on_cubic_maps_match_direct_loops() {
        let mut store = ParamStore::new(2, DType::F64);
        let mut s = store.scope("t");
        let conv = Conv2d::new(&mut s.pp("c"), 8, 16, 4, 2, 1, false).unwrap();
        let x = Tensor::randn(0f64, 1.0, (2, 8, 8, 8), &Device::Cpu).unwrap();
        let got: Vec<f64> = conv.forward(&x).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        let want = naive_conv(&x, &conv.weight, 2, 1);
        assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-9));

        // the input gradient of a transposed conv is a plain conv
        let deconv = ConvTranspose2d::new(&mut s.pp("d"), 16, 8, 4, 2, 1).unwrap();
        let z = Var::from_tensor(&Tensor::randn(0f64, 1.0, (2, 16, 4, 4), &Device::Cpu).unwrap()).unwrap();
        let r = Tensor::randn(0f64, 1.0, (2, 8, 8, 8), &Device::Cpu).unwrap();
        let loss = (deconv.forward(&z).unwrap() * &r).unwrap().sum_all().unwrap();
        let g: Vec<f64> = loss.backward().unwrap().get(&z).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        let want = naive_conv(&r, &deconv.weight, 2, 1);
        assert!(g.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn sigmoid_saturates_without_nan() {
        let x = Tensor::new(&[-200f32, -20.0, 0.0, 20.0, 200.0], &Device::Cpu).unwrap();
        let y: Vec<f32> = sigmoid(&x).unwrap().to_vec1().unwrap();
        assert_eq!(y[2], 0.5);
        assert!(y[0] >= 0.0 && y[0] < 1e-8);
        assert!(y[4] <= 1.0 && y[4] > 1.0 - 1e-6);
    }

    #[test]
    fn instance_norm_zero_mean_unit_var() {
        let mut store = ParamStore::new(1, DType::F64);
        let norm = InstanceNorm::new(&mut store.scope("n"), 2).unwrap();
        let x = Tensor::randn(3.0f64, 2.0, (2, 2, 5, 5), &Device::Cpu).unwrap();
        let y = norm.forward(&x).unwrap();
        let m: Vec<f64> = y.mean_keepdim((2, 3)).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-10));
    }
}
