use candle_core::{DType, Tensor};

use crate::error::{contract, Result};

/// Reported in place of +inf for identical images.
pub const PSNR_IDENTICAL_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

const PEAK: f64 = 255.0;

/// `[-1, 1]` to `[0, 255]`.
pub fn to_255(v: f64) -> f64 {
    (v + 1.0) * 127.5
}

/// PSNR in dB between two equally sized buffers already in `[0, 255]`.
pub fn psnr_255(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(contract!("PSNR inputs differ in size ({} vs {})", x.len(), y.len()));
    }
    let mse = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_IDENTICAL_DB);
    }
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable 'valid' filtering of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM of one `h x w` plane pair in `[0, 255]`.
fn ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let mx = filter_valid(x, h, w, &taps);
    let my = filter_valid(y, h, w, &taps);
    let exx = filter_valid(&prod(x, x), h, w, &taps);
    let eyy = filter_valid(&prod(y, y), h, w, &taps);
    let exy = filter_valid(&prod(x, y), h, w, &taps);
    let n = mx.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ux, uy) = (mx[i], my[i]);
        let vx = exx[i] - ux * ux;
        let vy = eyy[i] - uy * uy;
        let cxy = exy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    total / n as f64
}

/// SSIM of two CHW images in `[0, 255]`: per-channel mean over valid
/// Gaussian windows, averaged across channels.
pub fn ssim_255(x: &[f64], y: &[f64], (c, h, w): (usize, usize, usize)) -> Result<f64> {
    if x.len() != c * h * w || y.len() != x.len() || c == 0 {
        return Err(contract!(
            "SSIM inputs must both hold {c}x{h}x{w} values, got {} and {}",
            x.len(),
            y.len()
        ));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(contract!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"));
    }
    let plane = h * w;
    let sum: f64 = (0..c)
        .map(|ch| ssim_plane(&x[ch * plane..(ch + 1) * plane], &y[ch * plane..(ch + 1) * plane], h, w))
        .sum();
    Ok(sum / c as f64)
}

fn image_255(t: &Tensor) -> Result<(Vec<f64>, (usize, usize, usize))> {
    let dims = t.dims3()?;
    let v: Vec<f64> = t.detach().to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
    Ok((v.into_iter().map(to_255).collect(), dims))
}

/// PSNR of two (C, H, W) images in `[-1, 1]`.
pub fn psnr(x: &Tensor, y: &Tensor) -> Result<f64> {
    if x.dims() != y.dims() {
        return Err(contract!("PSNR shapes differ: {:?} vs {:?}", x.dims(), y.dims()));
    }
    psnr_255(&image_255(x)?.0, &image_255(y)?.0)
}

/// SSIM of two (C, H, W) images in `[-1, 1]`.
pub fn ssim(x: &Tensor, y: &Tensor) -> Result<f64> {
    if x.dims() != y.dims() {
        return Err(contract!("SSIM shapes differ: {:?} vs {:?}", x.dims(), y.dims()));
    }
    let (a, dims) = image_255(x)?;
    ssim_255(&a, &image_255(y)?.0, dims)
}
