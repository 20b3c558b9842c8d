//! Grayscale ingestion, ink binarization, text-region cropping and box
//! downscaling of scanned forms.

use std::path::Path;

use image::{DynamicImage, ImageFormat};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported or corrupt image: {0}")]
    Format(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("form contains no ink pixels")]
    EmptyForm,
}

pub type Result<T> = std::result::Result<T, ImagingError>;

/// 8-bit luminance image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || width * height != pixels.len() {
            return Err(ImagingError::Shape(format!(
                "{width}×{height} image with {} pixels",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Copy of the `w×h` window whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<GrayImage> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(ImagingError::Shape(format!(
                "crop {w}×{h} at ({x},{y}) outside {}×{}",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(w * h);
        for row in y..y + h {
            pixels.extend_from_slice(&self.pixels[row * self.width + x..][..w]);
        }
        Ok(GrayImage {
            width: w,
            height: h,
            pixels,
        })
    }

    /// Lossless PNG encoding.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .ok_or_else(|| ImagingError::Shape("pixel buffer size".into()))?;
        let mut out = std::io::Cursor::new(Vec::new());
        DynamicImage::ImageLuma8(buf)
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| ImagingError::Format(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.to_png()?;
        std::fs::write(path, bytes).map_err(|source| ImagingError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Ink mask: `true` marks an ink pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width * height != bits.len() {
            return Err(ImagingError::Shape(format!(
                "{width}×{height} mask with {} bits",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_ink(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn ink_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Smallest rectangle `(x, y, w, h)` containing every ink pixel.
    pub fn ink_bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_ink(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != usize::MAX).then(|| (x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }
}

/// Rec. 601 luma, rounded to the nearest integer.
pub fn rec601_luma(r: u8, g: u8, b: u8) -> u8 {
    // Integer weights scaled by 1000 keep the rounding exact.
    let v = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((v + 500) / 1000) as u8
}

fn to_gray(img: DynamicImage) -> Result<GrayImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| rec601_luma(p.0[0], p.0[1], p.0[2]))
            .collect(),
    };
    GrayImage::new(w, h, pixels)
}

/// Decodes PNG or JPEG bytes into luminance.
pub fn decode_form_image(bytes: &[u8]) -> Result<GrayImage> {
    let format = image::guess_format(bytes).map_err(|e| ImagingError::Format(e.to_string()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(ImagingError::Format(format!("{format:?} is not supported")));
    }
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| ImagingError::Format(e.to_string()))?;
    to_gray(img)
}

pub fn load_form_image(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|source| ImagingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_form_image(&bytes)
}

/// Global Otsu threshold: the smallest `t` in `1..=255` maximizing the
/// between-class variance of `{v < t}` vs `{v >= t}`. `None` for images
/// where no split yields two non-empty classes.
pub fn otsu_threshold(img: &GrayImage) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &p in &img.pixels {
        hist[p as usize] += 1;
    }
    let total: u64 = hist.iter().sum();
    let sum: u64 = hist.iter().enumerate().map(|(v, &n)| v as u64 * n).sum();

    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best: Option<(f64, u8)> = None;
    for t in 1..=255usize {
        n0 += hist[t - 1];
        s0 += (t as u64 - 1) * hist[t - 1];
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // (n0·S − N·S0)² / (n0·n1) is proportional to the between-class
        // variance and depends only on integer quantities that are invariant
        // under a uniform brightness shift.
        let diff = n0 as i128 * sum as i128 - total as i128 * s0 as i128;
        let score = (diff as f64) * (diff as f64) / (n0 as f64 * n1 as f64);
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, t as u8));
        }
    }
    best.map(|(_, t)| t)
}

/// Ink mask from a global Otsu threshold; pixels strictly below the
/// threshold are ink. Constant images have no ink.
pub fn binarize(img: &GrayImage) -> BinaryImage {
    let bits = match otsu_threshold(img) {
        Some(t) => img.pixels.iter().map(|&p| p < t).collect(),
        None => vec![false; img.pixels.len()],
    };
    BinaryImage {
        width: img.width,
        height: img.height,
        bits,
    }
}

/// Crop to the ink bounding box grown by `margin` on every side, clipped to
/// the page.
pub fn extract_text_region(img: &GrayImage, margin: usize) -> Result<GrayImage> {
    let mask = binarize(img);
    let (x, y, w, h) = mask.ink_bbox().ok_or(ImagingError::EmptyForm)?;
    let x0 = x.saturating_sub(margin);
    let y0 = y.saturating_sub(margin);
    let x1 = (x + w + margin).min(img.width);
    let y1 = (y + h + margin).min(img.height);
    img.crop(x0, y0, x1 - x0, y1 - y0)
}

/// Box-average downscaling by an integer factor; each output pixel is the
/// rounded (half up) mean of its `factor×factor` source block.
pub fn downscale(img: &GrayImage, factor: usize) -> Result<GrayImage> {
    if factor == 0 || !img.width.is_multiple_of(factor) || !img.height.is_multiple_of(factor) {
        return Err(ImagingError::Shape(format!(
            "{}×{} is not divisible by factor {factor}",
            img.width, img.height
        )));
    }
    let (ow, oh) = (img.width / factor, img.height / factor);
    let n = (factor * factor) as u32;
    let mut pixels = Vec::with_capacity(ow * oh);
    for by in 0..oh {
        for bx in 0..ow {
            let mut sum = 0u32;
            for y in by * factor..(by + 1) * factor {
                sum += img.pixels[y * img.width + bx * factor..][..factor]
                    .iter()
                    .map(|&p| p as u32)
                    .sum::<u32>();
            }
            pixels.push(((sum + n / 2) / n) as u8);
        }
    }
    GrayImage::new(ow, oh, pixels)
}
