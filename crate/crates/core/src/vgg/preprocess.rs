use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::tensor::Tensor;

/// ImageNet RGB channel means on the 0-255 scale.
pub const DEFAULT_CHANNEL_MEANS: [f32; 3] = [123.68, 116.779, 103.939];

/// Per-channel mean subtraction on 0-255 RGB pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub channel_means: [f32; 3],
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            channel_means: DEFAULT_CHANNEL_MEANS,
        }
    }
}

impl PreprocessConfig {
    pub fn new(channel_means: [f32; 3]) -> Result<Self> {
        if channel_means.iter().any(|m| !(0.0..=255.0).contains(m)) {
            return Err(Error::invalid(format!(
                "channel means {channel_means:?} must lie in [0, 255]"
            )));
        }
        Ok(Self { channel_means })
    }

    /// `(3, H, W)` tensor of `pixel − mean` per channel.
    pub fn preprocess(&self, image: &RgbImage) -> Tensor {
        let (w, h) = (image.width(), image.height());
        let plane = w * h;
        let mut data = vec![0.0f32; 3 * plane];
        for (i, px) in image.pixels().chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + i] = px[c] as f32 - self.channel_means[c];
            }
        }
        Tensor::new([3, h, w], data).expect("3·H·W values")
    }

    /// Adds the means back, rounds to nearest and clamps to 0-255.
    pub fn deprocess(&self, tensor: &Tensor) -> Result<RgbImage> {
        let (c, h, w) = tensor.chw()?;
        if c != 3 {
            return Err(Error::invalid(format!("expected 3 channels, got {c}")));
        }
        let plane = h * w;
        let data = tensor.data();
        let mut pixels = Vec::with_capacity(3 * plane);
        for i in 0..plane {
            for ch in 0..3 {
                let v = (data[ch * plane + i] + self.channel_means[ch]).round();
                pixels.push(v.clamp(0.0, 255.0) as u8);
            }
        }
        RgbImage::new(w, h, pixels)
    }

    /// Per-channel `(lower, upper)` bounds of preprocessed pixel values.
    pub fn pixel_bounds(&self) -> [(f32, f32); 3] {
        self.channel_means.map(|m| (-m, 255.0 - m))
    }
}
