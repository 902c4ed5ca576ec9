use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{
    content_representation, style_representation, total_loss_and_gradient, ContentRepresentation,
    LossBreakdown, StyleRepresentation,
};
use super::{InitMode, StyleTransferConfig};
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::lbfgs::{minimize, Bounds, LbfgsConfig, Objective, StopReason};
use crate::tensor::Tensor;
use crate::vgg::{NetworkWeights, VggNetwork};

/// One accepted L-BFGS iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub loss: LossBreakdown,
    pub gradient_norm: f64,
    pub step: f64,
    pub evaluations: usize,
}

/// Everything needed to reproduce and audit a run; written as the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config: StyleTransferConfig,
    /// CRC32 of the serialized weights, lowercase hex.
    pub weights_checksum: String,
    pub content_size: [usize; 2],
    pub style_size: [usize; 2],
    pub iterations_run: usize,
    pub evaluations: usize,
    pub stop_reason: StopReason,
    pub warning: bool,
    pub initial_loss: LossBreakdown,
    pub final_loss: LossBreakdown,
    pub wall_time_seconds: f64,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone)]
pub struct StyleTransferOutput {
    pub image: RgbImage,
    /// Optimized preprocessed pixels before rounding.
    pub pixels: Tensor,
    pub metadata: RunMetadata,
}

struct StyleObjective<'a> {
    network: VggNetwork<'a>,
    content: &'a ContentRepresentation,
    style: &'a StyleRepresentation,
    config: &'a StyleTransferConfig,
    dims: Vec<usize>,
    /// Breakdowns of evaluations since the last accepted iterate, keyed by
    /// the bits of their total.
    pending: Vec<(u64, LossBreakdown)>,
    accepted: Vec<LossBreakdown>,
}

impl Objective for StyleObjective<'_> {
    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let pixels = Tensor::new(self.dims.clone(), x.iter().map(|&v| v as f32).collect())?;
        let (loss, g) = total_loss_and_gradient(
            &self.network,
            &pixels,
            self.content,
            self.style,
            self.config,
        )?;
        for (dst, &src) in grad.iter_mut().zip(g.data()) {
            *dst = src as f64;
        }
        let total = loss.total;
        self.pending.push((total.to_bits(), loss));
        Ok(total)
    }

    fn accepted(&mut self, iteration: usize, _x: &[f64], value: f64) {
        let found = self
            .pending
            .iter()
            .rposition(|(bits, _)| *bits == value.to_bits())
            .expect("accepted value was evaluated");
        let loss = self.pending.swap_remove(found).1;
        self.pending.clear();
        if iteration.is_multiple_of(50) {
            log::info!(
                "iteration {iteration}: total {:.6e} content {:.6e}",
                loss.total,
                loss.content_loss
            );
        }
        self.accepted.push(loss);
    }
}

fn initial_pixels(content: &Tensor, config: &StyleTransferConfig) -> Vec<f64> {
    match config.init_mode {
        InitMode::Content => content.data().iter().map(|&v| v as f64).collect(),
        InitMode::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let plane = content.len() / 3;
            (0..content.len())
                .map(|i| {
                    let mean = config.preprocess.channel_means[i / plane] as f64;
                    rng.gen_range(0.0..=255.0) - mean
                })
                .collect()
        }
    }
}

fn pixel_box(dims: &[usize], config: &StyleTransferConfig) -> Result<Bounds> {
    let plane = dims[1] * dims[2];
    let (mut lower, mut upper) = (Vec::with_capacity(3 * plane), Vec::with_capacity(3 * plane));
    for (lo, hi) in config.preprocess.pixel_bounds() {
        lower.extend(std::iter::repeat_n(lo as f64, plane));
        upper.extend(std::iter::repeat_n(hi as f64, plane));
    }
    Bounds::new(lower, upper)
}

/// Optimizes a new image whose content matches `content` and whose style
/// matches `style`. The output has the content image's size.
pub fn run_style_transfer(
    weights: &NetworkWeights,
    content: &RgbImage,
    style: &RgbImage,
    config: &StyleTransferConfig,
) -> Result<StyleTransferOutput> {
    config.validate()?;
    let started = Instant::now();
    let network = VggNetwork::new(weights, config.pooling);
    let content_pixels = config.preprocess.preprocess(content);
    let style_pixels = config.preprocess.preprocess(style);
    let content_rep = content_representation(&network, &content_pixels, config)?;
    let style_rep = style_representation(&network, &style_pixels, config)?;

    let dims = content_pixels.dims().to_vec();
    let lbfgs = LbfgsConfig {
        history_size: config.history_size,
        max_iterations: config.iterations,
        bounds: Some(pixel_box(&dims, config)?),
        ..LbfgsConfig::default()
    };
    let mut objective = StyleObjective {
        network,
        content: &content_rep,
        style: &style_rep,
        config,
        dims: dims.clone(),
        pending: Vec::new(),
        accepted: Vec::new(),
    };
    let x0 = initial_pixels(&content_pixels, config);
    let result = minimize(&mut objective, &x0, &lbfgs)?;
    if objective.accepted.len() != result.trace.len() {
        return Err(Error::Numeric(
            "optimizer trace does not match accepted iterates".into(),
        ));
    }

    let trace: Vec<TraceEntry> = result
        .trace
        .iter()
        .zip(objective.accepted)
        .map(|(rec, loss)| TraceEntry {
            iteration: rec.iteration,
            loss,
            gradient_norm: rec.gradient_norm,
            step: rec.step,
            evaluations: rec.evaluations,
        })
        .collect();
    if result.warning() {
        log::warn!(
            "line search failed after {} iterations; returning the best iterate",
            result.iterations
        );
    }

    let pixels = Tensor::new(dims, result.x.iter().map(|&v| v as f32).collect())?;
    let image = config.preprocess.deprocess(&pixels)?;
    let metadata = RunMetadata {
        config: config.clone(),
        weights_checksum: format!("{:08x}", weights.checksum()),
        content_size: [content.width(), content.height()],
        style_size: [style.width(), style.height()],
        iterations_run: result.iterations,
        evaluations: result.evaluations,
        stop_reason: result.stop,
        warning: result.warning(),
        initial_loss: trace[0].loss.clone(),
        final_loss: trace[trace.len() - 1].loss.clone(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        trace,
    };
    Ok(StyleTransferOutput {
        image,
        pixels,
        metadata,
    })
}
