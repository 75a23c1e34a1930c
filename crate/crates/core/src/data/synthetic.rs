//! Procedurally drawn 178x218 "faces" whose appearance follows their labels.
//!
//! Every one of the 13 attributes has a visible cue (hair colour, a bare
//! scalp, a fringe, eyebrow thickness, glasses, jaw and hair length, an open
//! mouth, a moustache, a beard, skin tone, wrinkles), so small classifiers
//! and generators can be trained on the corpus in minutes.

use std::io::BufWriter;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::{Rgb, RgbImage};
use rand::Rng;

use super::index::{render_index, Record, Split, ATTR_FILE, IMAGE_DIR, PARTITION_FILE};
use super::preprocess::{Preprocess, RAW_HEIGHT, RAW_WIDTH};
use super::source::MemorySource;
use super::{DatasetIndex, Dataset};
use crate::attributes::{AttributeVector, NUM_ATTRIBUTES};
use crate::error::{config_err, Error, Result};
use crate::rng::derived_rng;

const BALD: usize = 0;
const BANGS: usize = 1;
const BLACK: usize = 2;
const BLOND: usize = 3;
const BROWN: usize = 4;
const BUSHY: usize = 5;
const GLASSES: usize = 6;
const MALE: usize = 7;
const MOUTH_OPEN: usize = 8;
const MUSTACHE: usize = 9;
const NO_BEARD: usize = 10;
const PALE: usize = 11;
const YOUNG: usize = 12;

#[derive(Clone, Debug)]
pub struct SyntheticConfig {
    pub count: usize,
    pub seed: u64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl SyntheticConfig {
    pub fn new(count: usize, seed: u64) -> Self {
        Self {
            count,
            seed,
            val_fraction: 0.1,
            test_fraction: 0.1,
        }
    }

    fn split_of(&self, i: usize) -> Split {
        let train_end = ((1.0 - self.val_fraction - self.test_fraction) * self.count as f64).round() as usize;
        let val_end = ((1.0 - self.test_fraction) * self.count as f64).round() as usize;
        if i < train_end {
            Split::Train
        } else if i < val_end {
            Split::Val
        } else {
            Split::Test
        }
    }
}

pub struct SyntheticFace {
    pub record: Record,
    pub image: RgbImage,
}

/// Draw a label vector with loosely realistic correlations.
pub fn sample_attributes<R: Rng + ?Sized>(rng: &mut R) -> AttributeVector {
    let mut a = [false; NUM_ATTRIBUTES];
    let male = rng.random_bool(0.42);
    let young = rng.random_bool(0.75);
    a[MALE] = male;
    a[YOUNG] = young;
    a[BALD] = male && rng.random_bool(if young { 0.05 } else { 0.25 });
    if !a[BALD] {
        let u: f64 = rng.random();
        let blond = if male { 0.06 } else { 0.3 };
        if u < 0.3 {
            a[BLACK] = true;
        } else if u < 0.3 + blond {
            a[BLOND] = true;
        } else if u < 0.55 + blond {
            a[BROWN] = true;
        }
        a[BANGS] = rng.random_bool(0.18);
    }
    a[BUSHY] = rng.random_bool(if male { 0.3 } else { 0.1 });
    a[GLASSES] = rng.random_bool(0.3);
    a[MOUTH_OPEN] = rng.random_bool(0.48);
    let beard = male && rng.random_bool(0.35);
    a[NO_BEARD] = !beard;
    a[MUSTACHE] = male && rng.random_bool(if beard { 0.6 } else { 0.08 });
    a[PALE] = rng.random_bool(0.1);
    AttributeVector(a)
}

struct Canvas {
    px: Vec<[f32; 3]>,
}

impl Canvas {
    const W: usize = RAW_WIDTH as usize;
    const H: usize = RAW_HEIGHT as usize;

    fn gradient(top: [f32; 3], bottom: [f32; 3]) -> Self {
        let mut px = Vec::with_capacity(Self::W * Self::H);
        for y in 0..Self::H {
            let t = y as f32 / (Self::H - 1) as f32;
            let c = mix(top, bottom, t);
            px.extend(std::iter::repeat_n(c, Self::W));
        }
        Self { px }
    }

    /// Blend `color` over the box `[x0, x1) x [y0, y1)` with per-pixel coverage.
    fn paint(&mut self, bbox: (f32, f32, f32, f32), color: [f32; 3], cover: impl Fn(f32, f32) -> f32) {
        let x0 = bbox.0.floor().max(0.0) as usize;
        let y0 = bbox.1.floor().max(0.0) as usize;
        let x1 = (bbox.2.ceil().max(0.0) as usize).min(Self::W);
        let y1 = (bbox.3.ceil().max(0.0) as usize).min(Self::H);
        for y in y0..y1 {
            for x in x0..x1 {
                let a = cover(x as f32 + 0.5, y as f32 + 0.5).clamp(0.0, 1.0);
                if a > 0.0 {
                    let p = &mut self.px[y * Self::W + x];
                    *p = mix(*p, color, a);
                }
            }
        }
    }

    fn ellipse(&mut self, c: (f32, f32), r: (f32, f32), color: [f32; 3], alpha: f32) {
        self.ellipse_masked(c, r, color, alpha, |_, _| 1.0);
    }

    fn ellipse_masked(
        &mut self,
        (cx, cy): (f32, f32),
        (rx, ry): (f32, f32),
        color: [f32; 3],
        alpha: f32,
        mask: impl Fn(f32, f32) -> f32,
    ) {
        let bbox = (cx - rx - 2.0, cy - ry - 2.0, cx + rx + 2.0, cy + ry + 2.0);
        self.paint(bbox, color, |x, y| {
            alpha * edge(ellipse_distance(x - cx, y - cy, rx, ry)) * mask(x, y)
        });
    }

    fn ring(&mut self, (cx, cy): (f32, f32), (rx, ry): (f32, f32), width: f32, color: [f32; 3]) {
        let bbox = (cx - rx - width - 2.0, cy - ry - width - 2.0, cx + rx + width + 2.0, cy + ry + width + 2.0);
        self.paint(bbox, color, |x, y| {
            edge(ellipse_distance(x - cx, y - cy, rx, ry).abs() - width / 2.0)
        });
    }

    fn rect(&mut self, (x0, y0, x1, y1): (f32, f32, f32, f32), color: [f32; 3], alpha: f32) {
        self.paint((x0 - 2.0, y0 - 2.0, x1 + 2.0, y1 + 2.0), color, |x, y| {
            let d = (x0 - x).max(x - x1).max(y0 - y).max(y - y1);
            alpha * edge(d)
        });
    }

    fn into_image(self, gain: f32) -> RgbImage {
        RgbImage::from_fn(RAW_WIDTH, RAW_HEIGHT, |x, y| {
            let p = self.px[y as usize * Self::W + x as usize];
            Rgb(p.map(|v| (v * gain).round().clamp(0.0, 255.0) as u8))
        })
    }
}

/// Approximate signed distance in pixels to an axis-aligned ellipse.
fn ellipse_distance(dx: f32, dy: f32, rx: f32, ry: f32) -> f32 {
    let d = ((dx / rx).powi(2) + (dy / ry).powi(2)).sqrt();
    (d - 1.0) * rx.min(ry)
}

/// Antialiased coverage from a signed distance.
fn edge(d: f32) -> f32 {
    (0.5 - d / 1.5).clamp(0.0, 1.0)
}

fn mix(a: [f32; 3], b: [f32; 3], t: f32) -> [f32; 3] {
    [0, 1, 2].map(|i| a[i] + (b[i] - a[i]) * t)
}

fn scale(c: [f32; 3], k: f32) -> [f32; 3] {
    c.map(|v| v * k)
}

fn jitter<R: Rng + ?Sized>(rng: &mut R, c: [f32; 3], amount: f32) -> [f32; 3] {
    c.map(|v| v + rng.random_range(-amount..=amount))
}

/// Render one face for `labels`; `rng` controls pose, palette and lighting.
pub fn render_face<R: Rng + ?Sized>(labels: &AttributeVector, rng: &mut R) -> RgbImage {
    let on = |k: usize| labels.get(k);
    let male = on(MALE);

    let bg_top = jitter(rng, [120.0, 140.0, 165.0], 45.0);
    let bg_bottom = jitter(rng, [90.0, 100.0, 110.0], 35.0);
    let mut cv = Canvas::gradient(bg_top, bg_bottom);

    let cx = 89.0 + rng.random_range(-4.0..=4.0);
    let cy = 114.0 + rng.random_range(-4.0..=4.0);
    let skin = if on(PALE) {
        jitter(rng, [242.0, 222.0, 212.0], 6.0)
    } else {
        let tones = [[224.0, 172.0, 140.0], [198.0, 138.0, 102.0], [165.0, 112.0, 82.0], [214.0, 160.0, 120.0]];
        let tone = tones[rng.random_range(0..tones.len())];
        jitter(rng, tone, 8.0)
    };
    let mut hair = if on(BLACK) {
        [34.0, 28.0, 26.0]
    } else if on(BLOND) {
        [228.0, 198.0, 128.0]
    } else if on(BROWN) {
        [118.0, 76.0, 44.0]
    } else if rng.random_bool(0.5) {
        [165.0, 162.0, 158.0]
    } else {
        [150.0, 62.0, 38.0]
    };
    hair = jitter(rng, hair, 6.0);
    let old = !on(YOUNG);
    if old {
        hair = mix(hair, [180.0, 178.0, 175.0], 0.25);
    }
    let facial_hair = if on(BLOND) { [170.0, 130.0, 70.0] } else { scale(hair, 0.75) };
    let brow = mix(facial_hair, [30.0, 25.0, 22.0], 0.5);
    let clothes = jitter(rng, [80.0, 80.0, 90.0], 60.0);

    let (face_rx, face_ry) = if male { (43.0, 54.0) } else { (38.0, 52.0) };
    let long_hair = !male && !on(BALD);

    if long_hair {
        cv.ellipse((cx, cy - 8.0), (face_rx + 18.0, face_ry + 22.0), hair, 1.0);
        cv.rect((cx - face_rx - 18.0, cy, cx + face_rx + 18.0, cy + 78.0), hair, 1.0);
    }
    cv.rect((cx - 15.0, cy + 30.0, cx + 15.0, 218.0), scale(skin, 0.88), 1.0);
    cv.ellipse((cx, cy + 112.0), (80.0, 46.0), clothes, 1.0);

    cv.ellipse((cx, cy), (face_rx, face_ry), skin, 1.0);
    if male {
        // squarer jaw
        cv.ellipse((cx, cy + 22.0), (face_rx - 2.0, 34.0), skin, 1.0);
    }

    let crown = (cx, cy - face_ry + 20.0);
    let above_brow = |_: f32, y: f32| edge(y - (cy - 30.0));
    if on(BALD) {
        cv.ellipse_masked(crown, (face_rx + 1.0, 34.0), scale(skin, 1.04), 1.0, above_brow);
        cv.ellipse((cx - 10.0, cy - face_ry + 4.0), (12.0, 6.0), [255.0, 250.0, 245.0], 0.35);
        // fringe of hair around the ears
        cv.ellipse_masked((cx, cy - 12.0), (face_rx + 4.0, 22.0), hair, 1.0, |x, _| edge((face_rx - 8.0) - (x - cx).abs()));
    } else {
        let ry = if male { 36.0 } else { 40.0 };
        cv.ellipse_masked(crown, (face_rx + 5.0, ry), hair, 1.0, above_brow);
    }
    if on(BANGS) {
        cv.ellipse_masked((cx, cy - 34.0), (face_rx - 2.0, 16.0), hair, 1.0, |_, y| edge(y - (cy - 23.0)));
    }

    let eye_y = cy - 6.0;
    let brow_y = cy - 17.0;
    for side in [-1.0f32, 1.0] {
        let ex = cx + side * 16.0;
        if on(BUSHY) {
            cv.ellipse((ex, brow_y), (11.0, 3.8), brow, 1.0);
        } else {
            cv.ellipse((ex, brow_y), (9.0, 1.6), brow, 0.9);
        }
        cv.ellipse((ex, eye_y), (7.0, 3.8), [240.0, 240.0, 236.0], 1.0);
        cv.ellipse((ex, eye_y), (3.0, 3.0), [45.0, 35.0, 30.0], 1.0);
    }
    cv.ellipse((cx, cy + 10.0), (4.5, 9.0), scale(skin, 0.78), 0.45);

    let mouth_y = cy + 28.0;
    if !on(NO_BEARD) {
        cv.ellipse_masked((cx, cy + 30.0), (face_rx - 3.0, 28.0), facial_hair, 0.9, |_, y| edge((cy + 14.0) - y));
    }
    if on(MUSTACHE) {
        cv.ellipse((cx, mouth_y - 7.0), (14.0, 3.6), facial_hair, 1.0);
    }
    if on(MOUTH_OPEN) {
        cv.ellipse((cx, mouth_y + 1.0), (11.0, 6.5), [70.0, 22.0, 28.0], 1.0);
        cv.rect((cx - 7.0, mouth_y - 4.5, cx + 7.0, mouth_y - 2.5), [235.0, 232.0, 225.0], 0.9);
    } else {
        cv.ellipse((cx, mouth_y), (12.0, 2.2), [150.0, 62.0, 62.0], 1.0);
    }
    if old {
        for dy in [-31.0, -26.0] {
            cv.ellipse_masked((cx, cy + dy), (18.0, 1.0), scale(skin, 0.7), 0.8, |_, _| 1.0);
        }
        for side in [-1.0f32, 1.0] {
            cv.rect((cx + side * 12.0 - 0.6, cy + 14.0, cx + side * 12.0 + 0.6, cy + 24.0), scale(skin, 0.7), 0.7);
        }
    }
    if on(GLASSES) {
        let frame = [22.0, 22.0, 26.0];
        for side in [-1.0f32, 1.0] {
            cv.ring((cx + side * 16.0, eye_y), (11.5, 8.5), 2.4, frame);
            let x_out = cx + side * 27.5;
            let x_edge = cx + side * face_rx;
            cv.rect((x_out.min(x_edge), eye_y - 3.0, x_out.max(x_edge), eye_y - 1.4), frame, 1.0);
        }
        cv.rect((cx - 5.0, eye_y - 2.0, cx + 5.0, eye_y - 0.4), frame, 1.0);
    }

    cv.into_image(rng.random_range(0.92..=1.08))
}

/// Generate `config.count` labelled faces named `000001.jpg`, `000002.jpg`, ...
/// Splits are contiguous: train, then validation, then test.
pub fn generate(config: &SyntheticConfig) -> Result<Vec<SyntheticFace>> {
    let fractions_ok = (0.0..1.0).contains(&config.val_fraction)
        && (0.0..1.0).contains(&config.test_fraction)
        && config.val_fraction + config.test_fraction < 1.0;
    if config.count == 0 || !fractions_ok {
        return Err(config_err!(
            "synthetic corpus needs a positive count and split fractions summing below 1"
        ));
    }
    Ok((0..config.count)
        .map(|i| {
            let mut rng = derived_rng(config.seed, "synthetic", i as u64);
            let labels = sample_attributes(&mut rng);
            let image = render_face(&labels, &mut rng);
            SyntheticFace {
                record: Record {
                    filename: format!("{:06}.jpg", i + 1),
                    labels,
                    split: config.split_of(i),
                },
                image,
            }
        })
        .collect())
}

/// Write annotation, partition and JPEG files in the CelebA release layout.
pub fn write_celeba_layout(root: &Path, faces: &[SyntheticFace]) -> Result<()> {
    let img_dir = root.join(IMAGE_DIR);
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    for face in faces {
        let path = img_dir.join(&face.record.filename);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        JpegEncoder::new_with_quality(BufWriter::new(file), 95)
            .encode_image(&face.image)
            .map_err(|source| Error::Image { path: path.clone(), source })?;
    }
    let records: Vec<Record> = faces.iter().map(|f| f.record.clone()).collect();
    let (attrs, parts) = render_index(&records);
    for (name, text) in [(ATTR_FILE, attrs), (PARTITION_FILE, parts)] {
        let path = root.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// An in-memory dataset over generated faces, skipping JPEG round trips.
pub fn memory_dataset(faces: Vec<SyntheticFace>, preprocess: Preprocess) -> Result<Dataset> {
    let mut source = MemorySource::new();
    let mut records = Vec::with_capacity(faces.len());
    for f in faces {
        source.insert(f.record.filename.clone(), f.image);
        records.push(f.record);
    }
    Dataset::new(DatasetIndex { records }, Box::new(source), preprocess)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_respect_exclusivity() {
        let mut rng = derived_rng(1, "t", 0);
        for _ in 0..500 {
            let a = sample_attributes(&mut rng);
            let colours = [BLACK, BLOND, BROWN].iter().filter(|&&k| a.get(k)).count();
            assert!(colours <= 1);
            assert!(!(a.get(BALD) && colours > 0));
            if !a.get(MALE) {
                assert!(a.get(NO_BEARD) && !a.get(MUSTACHE) && !a.get(BALD));
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_split() {
        let cfg = SyntheticConfig::new(20, 9);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.len(), 20);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.record, y.record);
            assert_eq!(x.image, y.image);
        }
        let splits: Vec<Split> = a.iter().map(|f| f.record.split).collect();
        assert_eq!(splits.iter().filter(|&&s| s == Split::Train).count(), 16);
        assert_eq!(splits[16..18], [Split::Val, Split::Val]);
        assert_eq!(splits[18..], [Split::Test, Split::Test]);
    }

    #[test]
    fn glasses_change_the_eye_region() {
        let mut plain = AttributeVector::default();
        plain.set(YOUNG, true);
        plain.set(NO_BEARD, true);
        let with = plain.flipped(GLASSES);
        let p = render_face(&plain, &mut derived_rng(3, "t", 0));
        let g = render_face(&with, &mut derived_rng(3, "t", 0));
        let diff: u32 = p
            .pixels()
            .zip(g.pixels())
            .map(|(a, b)| (a.0[0] as i32 - b.0[0] as i32).unsigned_abs())
            .sum();
        assert!(diff > 10_000, "{diff}");
    }
}
