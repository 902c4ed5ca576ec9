//! Content/style representations and the combined loss.
//!
//! Style term for tap `i` with `N` channels, where `A` (style image, `M_A`
//! positions) and `G` (target, `M_G` positions) are its Gram matrices:
//!
//! - normalization off: `E_i = Σ (A − G)²`
//! - normalization on:  `E_i = Σ (A/M_A − G/M_G)² / (4N²)`
//!
//! When both images have the same size this is `Σ(A − G)² / (4N²M²)`.
//! Dividing each Gram by its own spatial size keeps the comparison
//! meaningful when the style image is a different size.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StyleTransferConfig;
use crate::error::{Error, Result};
use crate::tensor::{gram_backward, gram_matrix, GramMatrix, Tensor};
use crate::vgg::VggNetwork;

#[derive(Debug, Clone, PartialEq)]
pub struct ContentRepresentation {
    pub tap: String,
    pub features: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StyleRepresentation {
    pub taps: Vec<String>,
    /// One Gram matrix per tap, in tap order.
    pub grams: Vec<GramMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub content_loss: f64,
    /// Unweighted `E_i` per style tap.
    pub style_loss_per_layer: Vec<f64>,
    /// `content_loss + alpha · Σ w_i · E_i`.
    pub total: f64,
}

impl LossBreakdown {
    fn assemble(
        content_loss: f64,
        style_loss_per_layer: Vec<f64>,
        config: &StyleTransferConfig,
    ) -> Self {
        let weighted: f64 = style_loss_per_layer
            .iter()
            .zip(&config.layer_weights)
            .map(|(e, w)| w * e)
            .sum();
        Self {
            total: content_loss + config.alpha * weighted,
            content_loss,
            style_loss_per_layer,
        }
    }

    /// `alpha · Σ w_i · E_i`.
    pub fn style_contribution(&self, config: &StyleTransferConfig) -> f64 {
        let weighted: f64 = self
            .style_loss_per_layer
            .iter()
            .zip(&config.layer_weights)
            .map(|(e, w)| w * e)
            .sum();
        config.alpha * weighted
    }
}

pub fn content_representation(
    network: &VggNetwork<'_>,
    image: &Tensor,
    config: &StyleTransferConfig,
) -> Result<ContentRepresentation> {
    let mut out = network.forward_with_taps(image, &[&config.content_tap])?;
    let features = out
        .taps
        .remove(&config.content_tap)
        .expect("requested tap is returned");
    Ok(ContentRepresentation {
        tap: config.content_tap.clone(),
        features,
    })
}

pub fn style_representation(
    network: &VggNetwork<'_>,
    image: &Tensor,
    config: &StyleTransferConfig,
) -> Result<StyleRepresentation> {
    let out = network.forward_with_taps(image, &config.style_taps)?;
    let grams = config
        .style_taps
        .iter()
        .map(|tap| gram_matrix(&out.taps[tap]))
        .collect::<Result<_>>()?;
    Ok(StyleRepresentation {
        taps: config.style_taps.clone(),
        grams,
    })
}

/// Style term for one tap and `dE/dG` (row-major, exactly symmetric).
fn style_term(reference: &GramMatrix, target: &GramMatrix, normalize: bool) -> (f64, Vec<f64>) {
    let n = target.n_channels as f64;
    let (scale_a, scale_g, outer) = if normalize {
        (
            1.0 / reference.m_spatial as f64,
            1.0 / target.m_spatial as f64,
            1.0 / (4.0 * n * n),
        )
    } else {
        (1.0, 1.0, 1.0)
    };
    let mut loss = 0.0;
    let grad = reference
        .values
        .iter()
        .zip(&target.values)
        .map(|(&a, &g)| {
            let diff = a as f64 * scale_a - g as f64 * scale_g;
            loss += diff * diff;
            -2.0 * outer * diff * scale_g
        })
        .collect();
    (outer * loss, grad)
}

/// Loss breakdown at `target_pixels` (preprocessed) and its gradient with
/// respect to those pixels.
pub fn total_loss_and_gradient(
    network: &VggNetwork<'_>,
    target_pixels: &Tensor,
    content_ref: &ContentRepresentation,
    style_ref: &StyleRepresentation,
    config: &StyleTransferConfig,
) -> Result<(LossBreakdown, Tensor)> {
    if style_ref.grams.len() != config.style_taps.len() || style_ref.taps != config.style_taps {
        return Err(Error::invalid(
            "style representation taps do not match the configuration",
        ));
    }
    if content_ref.tap != config.content_tap {
        return Err(Error::invalid(
            "content representation tap does not match the configuration",
        ));
    }
    let mut taps: Vec<&str> = config.style_taps.iter().map(String::as_str).collect();
    taps.push(&config.content_tap);
    let out = network.forward_with_taps(target_pixels, &taps)?;

    let mut tap_grads: BTreeMap<String, Tensor> = BTreeMap::new();
    let mut add_grad = |tap: &str, g: Tensor| -> Result<()> {
        match tap_grads.get_mut(tap) {
            Some(acc) => acc.add_assign(&g),
            None => {
                tap_grads.insert(tap.to_string(), g);
                Ok(())
            }
        }
    };

    let target_content = &out.taps[&config.content_tap];
    if target_content.dims() != content_ref.features.dims() {
        return Err(Error::invalid(format!(
            "target features {:?} do not match content features {:?}; \
             target and content images must have the same size",
            target_content.dims(),
            content_ref.features.dims()
        )));
    }
    let mut content_loss = 0.0f64;
    let content_grad: Vec<f32> = target_content
        .data()
        .iter()
        .zip(content_ref.features.data())
        .map(|(&t, &c)| {
            let d = t - c;
            content_loss += d as f64 * d as f64;
            d
        })
        .collect();
    content_loss *= 0.5;
    add_grad(
        &config.content_tap,
        Tensor::new(target_content.dims().to_vec(), content_grad)?,
    )?;

    let mut style_losses = Vec::with_capacity(config.style_taps.len());
    for ((tap, reference), &weight) in config
        .style_taps
        .iter()
        .zip(&style_ref.grams)
        .zip(&config.layer_weights)
    {
        let features = &out.taps[tap];
        let gram = gram_matrix(features)?;
        if gram.n_channels != reference.n_channels {
            return Err(Error::invalid(format!(
                "{tap}: style Gram has {} channels, target has {}",
                reference.n_channels, gram.n_channels
            )));
        }
        let (loss, d_gram) = style_term(reference, &gram, config.style_normalization);
        style_losses.push(loss);
        let scale = config.alpha * weight;
        let upstream: Vec<f32> = d_gram.iter().map(|&g| (scale * g) as f32).collect();
        add_grad(tap, gram_backward(features, &upstream)?)?;
    }

    let breakdown = LossBreakdown::assemble(content_loss, style_losses, config);
    if !breakdown.total.is_finite() {
        return Err(Error::Numeric("loss is not finite".into()));
    }
    let grad = network.backward_from_taps(&tap_grads, &out.cache)?;
    grad.ensure_finite("loss gradient")?;
    Ok((breakdown, grad))
}
