use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, contract, Result};

pub const RAW_WIDTH: u32 = 178;
pub const RAW_HEIGHT: u32 = 218;

/// Center crop followed by a bilinear resize to `size`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocess {
    pub crop: u32,
    pub size: u32,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self { crop: 170, size: 128 }
    }
}

impl Preprocess {
    pub fn with_size(size: u32) -> Self {
        Self {
            size,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop == 0 || self.crop > RAW_WIDTH || self.size == 0 {
            return Err(config_err!(
                "crop must be in 1..={RAW_WIDTH} and size positive (crop {}, size {})",
                self.crop,
                self.size
            ));
        }
        Ok(())
    }

    /// Top-left corner of the crop window.
    pub fn crop_origin(&self) -> (u32, u32) {
        ((RAW_WIDTH - self.crop) / 2, (RAW_HEIGHT - self.crop) / 2)
    }

    /// Preprocess into CHW floats in [-1, 1].
    pub fn apply(&self, raw: &RgbImage) -> Result<Vec<f32>> {
        self.validate()?;
        if raw.dimensions() != (RAW_WIDTH, RAW_HEIGHT) {
            return Err(contract!(
                "expected a {RAW_WIDTH}x{RAW_HEIGHT} image, got {}x{}",
                raw.width(),
                raw.height()
            ));
        }
        let (x0, y0) = self.crop_origin();
        let n = self.size as usize;
        let taps = resize_taps(self.crop, self.size);
        let mut out = vec![0f32; 3 * n * n];
        for (oy, &(ya, yb, wy)) in taps.iter().enumerate() {
            for (ox, &(xa, xb, wx)) in taps.iter().enumerate() {
                let px = |x: u32, y: u32| raw.get_pixel(x0 + x, y0 + y).0;
                let (p00, p01, p10, p11) = (px(xa, ya), px(xb, ya), px(xa, yb), px(xb, yb));
                for c in 0..3 {
                    let top = p00[c] as f32 * (1.0 - wx) + p01[c] as f32 * wx;
                    let bottom = p10[c] as f32 * (1.0 - wx) + p11[c] as f32 * wx;
                    let v = top * (1.0 - wy) + bottom * wy;
                    out[c * n * n + oy * n + ox] = v / 127.5 - 1.0;
                }
            }
        }
        Ok(out)
    }
}

/// For each output coordinate: the two source taps and the weight of the
/// second, using half-pixel centers and edge clamping.
fn resize_taps(src: u32, dst: u32) -> Vec<(u32, u32, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let a = s.floor() as u32;
            let b = (a + 1).min(src - 1);
            (a, b, (s - a as f64) as f32)
        })
        .collect()
}

/// Map a [-1, 1] CHW buffer back to an RGB image, clamping and rounding.
pub fn to_rgb_image(chw: &[f32], size: u32) -> Result<RgbImage> {
    let n = size as usize;
    if chw.len() != 3 * n * n {
        return Err(contract!("expected {} values for a {size}x{size} image, got {}", 3 * n * n, chw.len()));
    }
    Ok(RgbImage::from_fn(size, size, |x, y| {
        let i = y as usize * n + x as usize;
        image::Rgb([0, 1, 2].map(|c| ((chw[c * n * n + i] + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8))
    }))
}
