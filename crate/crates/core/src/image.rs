//! Image I/O, center cropping and the four color codings applied to
//! stylized images before review.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use image::{ImageFormat, ImageReader};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 8-bit RGB image, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        Self::new(width, height, rgb.repeat(width * height))
    }

    /// Replicates a single-channel buffer into RGB.
    pub fn from_gray(width: usize, height: usize, gray: &[u8]) -> Result<Self> {
        let pixels = gray.iter().flat_map(|&v| [v, v, v]).collect();
        Self::new(width, height, pixels)
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

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// Decodes a PNG or JPEG file. Grayscale (and gray+alpha) inputs are
/// replicated to three channels; alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::file(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::file(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Jpeg) => {}
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported image format {other:?}",
                path.display()
            )))
        }
    }
    let decoded = reader
        .decode()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    RgbImage::new(w as usize, h as usize, rgb.into_raw())
}

/// Decodes PNG/JPEG bytes held in memory.
pub fn decode_image(bytes: &[u8]) -> Result<RgbImage> {
    let decoded = image::load_from_memory(bytes).map_err(|e| Error::Format(e.to_string()))?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    RgbImage::new(w as usize, h as usize, rgb.into_raw())
}

pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    image::write_buffer_with_format(
        &mut out,
        &image.pixels,
        image.width as u32,
        image.height as u32,
        image::ExtendedColorType::Rgb8,
        ImageFormat::Png,
    )
    .map_err(|e| Error::Format(e.to_string()))?;
    Ok(out.into_inner())
}

/// Writes a PNG, whatever the extension of `path`.
pub fn save_image(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(image)?;
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

/// The `size × size` window whose top-left corner is
/// `(⌊(w − size)/2⌋, ⌊(h − size)/2⌋)`.
pub fn center_crop(image: &RgbImage, size: usize) -> Result<RgbImage> {
    if size == 0 || size > image.width.min(image.height) {
        return Err(Error::invalid(format!(
            "crop size {size} does not fit a {}x{} image",
            image.width, image.height
        )));
    }
    let x0 = (image.width - size) / 2;
    let y0 = (image.height - size) / 2;
    let mut pixels = Vec::with_capacity(size * size * 3);
    for y in y0..y0 + size {
        let start = (y * image.width + x0) * 3;
        pixels.extend_from_slice(&image.pixels[start..start + size * 3]);
    }
    RgbImage::new(size, size, pixels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorMode {
    Gray,
    Green,
    Red,
    Intact,
}

impl ColorMode {
    pub const ALL: [ColorMode; 4] = [
        ColorMode::Gray,
        ColorMode::Green,
        ColorMode::Red,
        ColorMode::Intact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ColorMode::Gray => "gray",
            ColorMode::Green => "green",
            ColorMode::Red => "red",
            ColorMode::Intact => "intact",
        }
    }
}

impl fmt::Display for ColorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ColorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ColorMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown color mode {s:?}")))
    }
}

/// Unweighted channel mean, rounded half-up. The fraction of a sum over three
/// is never exactly one half, so `(sum + 1) / 3` is the rounded mean.
#[inline]
pub fn gray_level(rgb: [u8; 3]) -> u8 {
    let sum = rgb[0] as u16 + rgb[1] as u16 + rgb[2] as u16;
    ((sum + 1) / 3) as u8
}

pub fn colorize(image: &RgbImage, mode: ColorMode) -> RgbImage {
    if mode == ColorMode::Intact {
        return image.clone();
    }
    let pixels = image
        .pixels
        .chunks_exact(3)
        .flat_map(|p| {
            let v = gray_level([p[0], p[1], p[2]]);
            match mode {
                ColorMode::Gray => [v, v, v],
                ColorMode::Green => [0, v, 0],
                ColorMode::Red => [v, 0, 0],
                ColorMode::Intact => unreachable!(),
            }
        })
        .collect();
    RgbImage {
        width: image.width,
        height: image.height,
        pixels,
    }
}

/// Assigns one of the four modes to each of `n` images so that group sizes
/// differ by at most one, in an order fixed by `seed`.
pub fn partition_modes(n: usize, seed: u64) -> Vec<ColorMode> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut modes: Vec<ColorMode> = (0..n)
        .map(|i| ColorMode::ALL[i % ColorMode::ALL.len()])
        .collect();
    modes.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    modes
}
