//! Frame perturbations: random pixel masking, random shape masking,
//! feature (union) masking and isolation masking. Every masker blackens
//! pixels to `(0, 0, 0)` and leaves all other pixels byte-identical.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub type Rgb = [u8; 3];
pub const BLACK: Rgb = [0, 0, 0];

/// Default upper bound on the area of one random shape, as a fraction of the frame.
pub const DEFAULT_MAX_SHAPE_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageFrame {
    width: u32,
    height: u32,
    pixels: Vec<Rgb>,
}

impl ImageFrame {
    pub fn new(width: u32, height: u32, pixels: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame(
                "width and height must be positive".into(),
            ));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(Error::InvalidFrame(format!(
                "{} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, color: Rgb) -> Result<Self> {
        Self::new(width, height, vec![color; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> Rgb {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn count_black(&self) -> usize {
        self.pixels.iter().filter(|p| **p == BLACK).count()
    }

    pub fn from_png_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| image_err(origin, e))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        Self::new(w, h, pixels)
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_png_bytes(&bytes, path)
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let flat: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        let img = image::RgbImage::from_raw(self.width, self.height, flat)
            .expect("pixel buffer matches dimensions");
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| image_err(Path::new("<memory>"), e))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_png_bytes()?).map_err(|e| Error::io(path, e))
    }
}

/// Binary mask aligned with a frame; `true` marks the named region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl SegmentationMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame(
                "mask width and height must be positive".into(),
            ));
        }
        if bits.len() != width as usize * height as usize {
            return Err(Error::InvalidFrame(format!(
                "{} mask bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Result<Self> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Result<Self> {
        let bits = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, bits)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    fn check_matches(&self, frame: &ImageFrame) -> Result<()> {
        if self.width != frame.width || self.height != frame.height {
            return Err(Error::MaskDimensions {
                mask_w: self.width,
                mask_h: self.height,
                frame_w: frame.width,
                frame_h: frame.height,
            });
        }
        Ok(())
    }

    /// Reads an 8-bit grayscale PNG: values >= 128 become 1.
    pub fn from_png_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| image_err(origin, e))?
            .to_luma8();
        let (w, h) = img.dimensions();
        Self::new(w, h, img.pixels().map(|p| p.0[0] >= 128).collect())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_png_bytes(&bytes, path)
    }

    /// Writes 0/255 grayscale.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let raw = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let img = image::GrayImage::from_raw(self.width, self.height, raw)
            .expect("mask buffer matches dimensions");
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| image_err(Path::new("<memory>"), e))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_png_bytes()?).map_err(|e| Error::io(path, e))
    }
}

fn image_err(path: &Path, e: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    RandomPixel,
    RandomShape,
    Feature,
    Isolation,
}

/// Declarative description of one perturbation, recorded in reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub strategy: MaskStrategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mask_refs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_shape_fraction: Option<f64>,
}

impl MaskSpec {
    pub fn random(strategy: MaskStrategy, fraction: f64, seed: u64) -> Self {
        Self {
            strategy,
            fraction: Some(fraction),
            mask_refs: Vec::new(),
            seed: Some(seed),
            max_shape_fraction: (strategy == MaskStrategy::RandomShape)
                .then_some(DEFAULT_MAX_SHAPE_FRACTION),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.strategy {
            MaskStrategy::RandomPixel | MaskStrategy::RandomShape => {
                let p = self
                    .fraction
                    .ok_or_else(|| Error::Config("random masking needs a fraction".into()))?;
                check_fraction(p)?;
                if self.seed.is_none() {
                    return Err(Error::Config("random masking needs a seed".into()));
                }
                if let Some(s) = self.max_shape_fraction {
                    if !(s > 0.0 && s <= 1.0) {
                        return Err(Error::Config(format!(
                            "max_shape_fraction must lie in (0, 1], got {s}"
                        )));
                    }
                }
            }
            MaskStrategy::Feature | MaskStrategy::Isolation => {
                if self.mask_refs.is_empty() {
                    return Err(Error::Config(
                        "feature and isolation masking need at least one mask reference".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn check_fraction(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidFraction(p));
    }
    Ok(())
}

/// Blackens exactly `floor(p * W * H)` distinct pixels, chosen by a partial
/// Fisher-Yates shuffle of pixel positions.
pub fn mask_random_pixels(frame: &ImageFrame, p: f64, seed: u64) -> Result<ImageFrame> {
    check_fraction(p)?;
    let total = frame.len();
    let count = (p * total as f64).floor() as usize;
    let mut out = frame.clone();
    if count == 0 {
        return Ok(out);
    }
    let mut rng = rng::seeded(seed);
    let mut positions: Vec<usize> = (0..total).collect();
    for i in 0..count.min(total) {
        let j = rng.gen_range(i..total);
        positions.swap(i, j);
        out.pixels[positions[i]] = BLACK;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeMaskConfig {
    /// Upper bound on one shape's area as a fraction of the frame. Shapes are
    /// never smaller than one pixel, so on frames with fewer than
    /// `1 / max_shape_fraction` pixels a single shape can exceed the bound.
    pub max_shape_fraction: f64,
}

impl Default for ShapeMaskConfig {
    fn default() -> Self {
        Self {
            max_shape_fraction: DEFAULT_MAX_SHAPE_FRACTION,
        }
    }
}

/// Paints random black rectangles and filled circles, one at a time, until
/// the black-pixel fraction first reaches `p`. Returns the frame and the
/// achieved black fraction.
pub fn mask_random_shapes(
    frame: &ImageFrame,
    p: f64,
    seed: u64,
    cfg: &ShapeMaskConfig,
) -> Result<(ImageFrame, f64)> {
    check_fraction(p)?;
    if !(cfg.max_shape_fraction > 0.0 && cfg.max_shape_fraction <= 1.0) {
        return Err(Error::InvalidFraction(cfg.max_shape_fraction));
    }
    let mut out = frame.clone();
    if p == 0.0 {
        return Ok((out, 0.0));
    }
    let total = frame.len();
    let (w, h) = (frame.width as i64, frame.height as i64);
    let max_area = ((cfg.max_shape_fraction * total as f64).floor() as usize).max(1);
    let mut black = out.count_black();
    let mut rng = rng::seeded(seed);

    while (black as f64) / (total as f64) < p {
        let area = rng.gen_range(1..=max_area);
        let cx = rng.gen_range(0..w);
        let cy = rng.gen_range(0..h);
        let is_rect: bool = rng.gen();
        let mut paint = |x: i64, y: i64| {
            if (0..w).contains(&x) && (0..h).contains(&y) {
                let px = &mut out.pixels[(y * w + x) as usize];
                if *px != BLACK {
                    *px = BLACK;
                    black += 1;
                }
            }
        };
        if is_rect {
            let aspect: f64 = rng.gen_range(0.5..=2.0);
            let rw = ((area as f64 * aspect).sqrt().floor() as i64).clamp(1, w);
            let rh = ((area as i64) / rw).clamp(1, h);
            let (x0, y0) = (cx - rw / 2, cy - rh / 2);
            for y in y0..y0 + rh {
                for x in x0..x0 + rw {
                    paint(x, y);
                }
            }
        } else {
            let r = disc_radius_for_area(area);
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx * dx + dy * dy <= r * r {
                        paint(cx + dx, cy + dy);
                    }
                }
            }
        }
    }
    Ok((out, black as f64 / total as f64))
}

/// Lattice points in a disc of integer radius `r`.
fn disc_pixel_count(r: i64) -> usize {
    (-r..=r)
        .map(|dy| (-r..=r).filter(|dx| dx * dx + dy * dy <= r * r).count())
        .sum()
}

/// Largest integer radius whose lattice disc fits within `area` pixels.
fn disc_radius_for_area(area: usize) -> i64 {
    let mut r = (area as f64 / std::f64::consts::PI).sqrt().ceil() as i64;
    while r > 0 && disc_pixel_count(r) > area {
        r -= 1;
    }
    r
}

/// Blackens every pixel covered by any of `masks` (union).
pub fn apply_feature_mask(frame: &ImageFrame, masks: &[SegmentationMask]) -> Result<ImageFrame> {
    if masks.is_empty() {
        return Err(Error::EmptyMasks);
    }
    for m in masks {
        m.check_matches(frame)?;
    }
    let mut out = frame.clone();
    for (i, px) in out.pixels.iter_mut().enumerate() {
        if masks.iter().any(|m| m.bits[i]) {
            *px = BLACK;
        }
    }
    Ok(out)
}

/// Keeps pixels where `keep` is set and blackens the rest.
pub fn apply_isolation_mask(frame: &ImageFrame, keep: &SegmentationMask) -> Result<ImageFrame> {
    keep.check_matches(frame)?;
    let mut out = frame.clone();
    for (px, &k) in out.pixels.iter_mut().zip(&keep.bits) {
        if !k {
            *px = BLACK;
        }
    }
    Ok(out)
}

pub fn black_fraction(frame: &ImageFrame) -> f64 {
    frame.count_black() as f64 / frame.len() as f64
}
