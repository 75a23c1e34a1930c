use std::collections::HashMap;
use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::error::{Error, Result};

/// Where raw 178x218 images come from.
pub trait ImageSource: Send + Sync {
    fn load(&self, filename: &str) -> Result<RgbImage>;
}

/// Image files in one directory, decoded on demand.
pub struct DirectorySource {
    dir: PathBuf,
}

impl DirectorySource {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl ImageSource for DirectorySource {
    fn load(&self, filename: &str) -> Result<RgbImage> {
        let path = self.dir.join(filename);
        let img = image::open(&path).map_err(|source| match source {
            image::ImageError::IoError(e) => Error::io(&path, e),
            source => Error::Image {
                path: path.clone(),
                source,
            },
        })?;
        Ok(img.to_rgb8())
    }
}

/// Images held in memory, keyed by filename.
#[derive(Default)]
pub struct MemorySource {
    images: HashMap<String, RgbImage>,
}

impl MemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, filename: impl Into<String>, image: RgbImage) {
        self.images.insert(filename.into(), image);
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

impl ImageSource for MemorySource {
    fn load(&self, filename: &str) -> Result<RgbImage> {
        self.images.get(filename).cloned().ok_or_else(|| {
            Error::io(
                filename,
                std::io::Error::new(std::io::ErrorKind::NotFound, "not in memory source"),
            )
        })
    }
}
