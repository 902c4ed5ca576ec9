//! Style transfer by direct pixel optimization.
//!
//! The target image is optimized so that its `conv4_2` features match the
//! content (CLE) image and the Gram matrices of its `relu1_1` … `relu5_1`
//! features match the style (H&E) image:
//!
//! ```text
//! total = ½·Σ(C_content − C_target)² + alpha · Σ_i w_i · Σ(S_style^i − S_target^i)²
//! ```
//!
//! With `style_normalization` on (the default) each style term is scaled by
//! `1/(4·N_i²·M_i²)`; see [`loss`] for the exact form used when content and
//! style images differ in size.

mod loss;
mod run;

use serde::{Deserialize, Serialize};

pub use loss::{
    content_representation, style_representation, total_loss_and_gradient, ContentRepresentation,
    LossBreakdown, StyleRepresentation,
};
pub use run::{run_style_transfer, RunMetadata, StyleTransferOutput, TraceEntry};

use crate::error::{Error, Result};
use crate::tensor::PoolMode;
use crate::vgg::{PreprocessConfig, CONTENT_TAP, STYLE_TAPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Start from a copy of the content image.
    #[default]
    Content,
    /// Start from seeded uniform noise over 0-255.
    Noise,
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "content" => Ok(InitMode::Content),
            "noise" => Ok(InitMode::Noise),
            other => Err(Error::invalid(format!("unknown init mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleTransferConfig {
    /// Weight of the style term relative to the content term.
    pub alpha: f64,
    /// One weight per style tap.
    pub layer_weights: Vec<f64>,
    /// L-BFGS outer iterations.
    pub iterations: usize,
    pub content_tap: String,
    pub style_taps: Vec<String>,
    pub init_mode: InitMode,
    pub pooling: PoolMode,
    pub style_normalization: bool,
    pub seed: u64,
    pub preprocess: PreprocessConfig,
    pub history_size: usize,
}

impl Default for StyleTransferConfig {
    fn default() -> Self {
        Self {
            alpha: 100.0,
            layer_weights: vec![0.2; STYLE_TAPS.len()],
            iterations: 1600,
            content_tap: CONTENT_TAP.to_string(),
            style_taps: STYLE_TAPS.iter().map(|t| t.to_string()).collect(),
            init_mode: InitMode::Content,
            pooling: PoolMode::Max,
            style_normalization: true,
            seed: 0,
            preprocess: PreprocessConfig::default(),
            history_size: 10,
        }
    }
}

impl StyleTransferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if self.layer_weights.len() != self.style_taps.len() {
            return Err(Error::invalid(format!(
                "{} layer weights for {} style taps",
                self.layer_weights.len(),
                self.style_taps.len()
            )));
        }
        if self.layer_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("layer weights must be finite"));
        }
        if self.history_size == 0 {
            return Err(Error::invalid("history size must be at least 1"));
        }
        PreprocessConfig::new(self.preprocess.channel_means)?;
        Ok(())
    }
}
