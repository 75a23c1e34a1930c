//! Shared inputs for the criterion benches.

use candle_core::{DType, Device, Tensor};
use mugan_core::{labels_tensor, AttributeVector};

/// A deterministic (B, C, H, W) batch in [-1, 1].
pub fn feature_batch(b: usize, c: usize, h: usize, w: usize) -> Tensor {
    let n = b * c * h * w;
    let v: Vec<f32> = (0..n).map(|i| ((i * 7919 % 2000) as f32 / 1000.0) - 1.0).collect();
    Tensor::from_vec(v, (b, c, h, w), &Device::Cpu).unwrap()
}

/// Alternating attribute rows.
pub fn label_batch(b: usize) -> Tensor {
    let rows: Vec<AttributeVector> = (0..b)
        .map(|r| AttributeVector(std::array::from_fn(|i| (i + r) % 2 == 0)))
        .collect();
    labels_tensor(&rows, DType::F32).unwrap()
}
