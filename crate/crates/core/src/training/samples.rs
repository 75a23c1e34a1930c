use std::path::Path;

use candle_core::{DType, Tensor};
use image::RgbImage;

use crate::attributes::{AttributeVector, NUM_ATTRIBUTES};
use crate::data::to_rgb_image;
use crate::error::{contract, Error, Result};
use crate::networks::{labels_tensor, Generator};

/// One row per input image: the input, its reconstruction, then the 13
/// single-attribute flips in attribute order.
pub fn edit_grid(gen: &Generator, images: &Tensor, labels: &[AttributeVector]) -> Result<RgbImage> {
    let (b, _, s, _) = images.dims4()?;
    if labels.len() != b {
        return Err(contract!("{b} images but {} label vectors", labels.len()));
    }
    let cols = NUM_ATTRIBUTES + 2;
    let mut grid = RgbImage::new((cols * s) as u32, (b * s) as u32);
    let enc = gen.encode(images)?;
    let mut columns = vec![images.to_dtype(DType::F32)?];
    columns.push(gen.decode(&enc, &labels_tensor(labels, DType::F32)?)?);
    for k in 0..NUM_ATTRIBUTES {
        let flipped: Vec<AttributeVector> = labels.iter().map(|l| l.flipped(k)).collect();
        columns.push(gen.decode(&enc, &labels_tensor(&flipped, DType::F32)?)?);
    }
    for (c, col) in columns.iter().enumerate() {
        let col = col.detach().to_dtype(DType::F32)?;
        for row in 0..b {
            let pixels: Vec<f32> = col.get(row)?.flatten_all()?.to_vec1()?;
            let tile = to_rgb_image(&pixels, s as u32)?;
            image::imageops::replace(&mut grid, &tile, (c * s) as i64, (row * s) as i64);
        }
    }
    Ok(grid)
}

pub fn save_grid(grid: &RgbImage, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    grid.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}
