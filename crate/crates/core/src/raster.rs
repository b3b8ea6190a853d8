//! Line images: loading, binarization and per-column ink profiles.
//!
//! Everything here assumes dark ink on a light background. Inverted sources
//! should go through [`GrayRaster::inverted`] before binarizing.

use std::path::Path;

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Threshold used when Otsu's method has nothing to separate.
pub const OTSU_FALLBACK_THRESHOLD: u8 = 128;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image file not found: {0}")]
    NotFound(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("image has a zero dimension ({width}x{height})")]
    ZeroDimension { width: u32, height: u32 },
    #[error("pixel buffer length {len} does not match {width}x{height}")]
    BufferMismatch { width: usize, height: usize, len: usize },
    #[error("invalid band fractions: top={top}, bottom={bottom}")]
    InvalidBand { top: f64, bottom: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// 8-bit luminance image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroDimension {
                width: width as u32,
                height: height as u32,
            });
        }
        if pixels.len() != width * height {
            return Err(RasterError::BufferMismatch {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
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

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Photometric inversion, for light-on-dark sources.
    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| 255 - p).collect(),
        }
    }
}

/// Binarized raster; `true` is ink.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryRaster {
    width: usize,
    height: usize,
    ink: Vec<bool>,
}

impl BinaryRaster {
    pub fn new(width: usize, height: usize, ink: Vec<bool>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroDimension {
                width: width as u32,
                height: height as u32,
            });
        }
        if ink.len() != width * height {
            return Err(RasterError::BufferMismatch {
                width,
                height,
                len: ink.len(),
            });
        }
        Ok(Self { width, height, ink })
    }

    /// All-background raster.
    pub fn blank(width: usize, height: usize) -> Result<Self, RasterError> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> bool,
    ) -> Result<Self, RasterError> {
        let mut ink = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                ink.push(f(x, y));
            }
        }
        Self::new(width, height, ink)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn ink(&self) -> &[bool] {
        &self.ink
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.ink[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.ink[y * self.width + x] = value;
    }

    pub fn ink_count(&self) -> usize {
        self.ink.iter().filter(|&&b| b).count()
    }

    /// Copy of the half-open region `[x0, x1) × [y0, y1)`.
    ///
    /// Panics if the region is empty or not inside the raster.
    pub fn crop(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryRaster {
        assert!(x0 < x1 && x1 <= self.width && y0 < y1 && y1 <= self.height);
        let mut ink = Vec::with_capacity((x1 - x0) * (y1 - y0));
        for y in y0..y1 {
            ink.extend_from_slice(&self.ink[y * self.width + x0..y * self.width + x1]);
        }
        BinaryRaster {
            width: x1 - x0,
            height: y1 - y0,
            ink,
        }
    }

    /// Renders ink as 0 and background as 255.
    pub fn to_gray(&self) -> GrayRaster {
        GrayRaster {
            width: self.width,
            height: self.height,
            pixels: self.ink.iter().map(|&b| if b { 0 } else { 255 }).collect(),
        }
    }

    /// Pads `left` background columns on the left.
    pub fn shifted_right(&self, left: usize) -> BinaryRaster {
        BinaryRaster::from_fn(self.width + left, self.height, |x, y| {
            x >= left && self.get(x - left, y)
        })
        .expect("non-zero dimensions")
    }
}

/// Threshold selection for [`binarize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method", content = "threshold")]
pub enum Threshold {
    Otsu,
    Fixed(u8),
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Otsu
    }
}

/// Inclusive row range over which column ink is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowBand {
    pub top: usize,
    pub bottom: usize,
}

impl RowBand {
    /// Rows `[floor(top_frac·H), ceil(bottom_frac·H) − 1]`.
    pub fn from_fractions(height: usize, top_frac: f64, bottom_frac: f64) -> Result<Self, RasterError> {
        let valid = top_frac.is_finite()
            && bottom_frac.is_finite()
            && (0.0..1.0).contains(&top_frac)
            && bottom_frac > 0.0
            && bottom_frac <= 1.0
            && top_frac < bottom_frac;
        if !valid || height == 0 {
            return Err(RasterError::InvalidBand {
                top: top_frac,
                bottom: bottom_frac,
            });
        }
        let h = height as f64;
        let top = (top_frac * h).floor() as usize;
        let bottom = ((bottom_frac * h).ceil() as usize).saturating_sub(1).min(height - 1);
        Ok(RowBand {
            top: top.min(bottom),
            bottom,
        })
    }

    pub fn full(height: usize) -> Self {
        RowBand {
            top: 0,
            bottom: height - 1,
        }
    }

    pub fn contains(&self, row: usize) -> bool {
        row >= self.top && row <= self.bottom
    }

    pub fn len(&self) -> usize {
        self.bottom - self.top + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Per-column ink counts restricted to a row band.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnProfile {
    pub band: RowBand,
    pub counts: Vec<usize>,
}

/// Reads a PNG line image as luminance.
///
/// RGB is converted with `round(0.299R + 0.587G + 0.114B)`; alpha is
/// composited over white first.
pub fn load_line_image(path: &Path) -> Result<GrayRaster, RasterError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(RasterError::NotFound(path.display().to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    decode_png(&bytes)
}

pub fn decode_png(bytes: &[u8]) -> Result<GrayRaster, RasterError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| RasterError::UnsupportedFormat(e.to_string()))?;
    let (width, height) = (img.width(), img.height());
    if width == 0 || height == 0 {
        return Err(RasterError::ZeroDimension { width, height });
    }
    let pixels: Vec<u8> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(buf) => buf
            .pixels()
            .map(|p| over_white(p.0[0], p.0[1]))
            .collect(),
        DynamicImage::ImageRgb8(buf) => buf
            .pixels()
            .map(|p| luminance(p.0[0], p.0[1], p.0[2]))
            .collect(),
        DynamicImage::ImageRgba8(buf) => buf
            .pixels()
            .map(|p| {
                let a = p.0[3];
                luminance(
                    over_white(p.0[0], a),
                    over_white(p.0[1], a),
                    over_white(p.0[2], a),
                )
            })
            .collect(),
        other => {
            return Err(RasterError::UnsupportedFormat(format!(
                "{:?} (only 8-bit gray, RGB and RGBA PNGs are accepted)",
                other.color()
            )))
        }
    };
    GrayRaster::new(width as usize, height as usize, pixels)
}

/// Encodes a gray raster as an 8-bit grayscale PNG.
pub fn encode_png(img: &GrayRaster) -> Vec<u8> {
    let mut out = Vec::new();
    let encoder = image::codecs::png::PngEncoder::new(&mut out);
    image::ImageEncoder::write_image(
        encoder,
        &img.pixels,
        img.width as u32,
        img.height as u32,
        image::ExtendedColorType::L8,
    )
    .expect("in-memory PNG encoding cannot fail");
    out
}

/// `round(0.299·R + 0.587·G + 0.114·B)`, computed in integers so halves
/// round up exactly.
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

fn over_white(c: u8, alpha: u8) -> u8 {
    let (c, a) = (c as u32, alpha as u32);
    ((c * a + 255 * (255 - a) + 127) / 255) as u8
}

/// Otsu threshold: the `t` maximizing between-class variance when class 0 is
/// `{v < t}` and class 1 is `{v >= t}`. Ties go to the smallest `t`.
///
/// Returns `None` when fewer than two gray levels are present.
pub fn otsu_threshold(img: &GrayRaster) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &p in &img.pixels {
        hist[p as usize] += 1;
    }
    let total = img.pixels.len() as f64;
    let total_sum: f64 = hist.iter().enumerate().map(|(v, &n)| v as f64 * n as f64).sum();

    let mut best: Option<(u8, f64)> = None;
    let mut w0 = 0.0;
    let mut s0 = 0.0;
    for t in 1..256usize {
        w0 += hist[t - 1] as f64;
        s0 += (t - 1) as f64 * hist[t - 1] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = s0 / w0;
        let m1 = (total_sum - s0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if best.map_or(true, |(_, v)| between > v) {
            best = Some((t as u8, between));
        }
    }
    best.map(|(t, _)| t)
}

/// `ink(x, y) = luminance(x, y) < threshold`.
pub fn binarize(img: &GrayRaster, method: Threshold) -> BinaryRaster {
    let threshold = resolve_threshold(img, method);
    BinaryRaster {
        width: img.width,
        height: img.height,
        ink: img.pixels.iter().map(|&p| p < threshold).collect(),
    }
}

/// The concrete threshold [`binarize`] will use for `method`.
pub fn resolve_threshold(img: &GrayRaster, method: Threshold) -> u8 {
    match method {
        Threshold::Fixed(t) => t,
        Threshold::Otsu => otsu_threshold(img).unwrap_or_else(|| {
            log::warn!(
                "uniform image; otsu falling back to fixed threshold {}",
                OTSU_FALLBACK_THRESHOLD
            );
            OTSU_FALLBACK_THRESHOLD
        }),
    }
}

pub fn column_profile(
    r: &BinaryRaster,
    band_top_frac: f64,
    band_bottom_frac: f64,
) -> Result<ColumnProfile, RasterError> {
    let band = RowBand::from_fractions(r.height, band_top_frac, band_bottom_frac)?;
    Ok(column_profile_in(r, band))
}

pub fn column_profile_in(r: &BinaryRaster, band: RowBand) -> ColumnProfile {
    let mut counts = vec![0usize; r.width];
    for y in band.top..=band.bottom {
        let row = &r.ink[y * r.width..(y + 1) * r.width];
        for (c, &b) in counts.iter_mut().zip(row) {
            *c += b as usize;
        }
    }
    ColumnProfile { band, counts }
}

/// Hex SHA-256 of arbitrary bytes; used for raster and build provenance.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
